mod common;

use std::sync::Arc;

use common::{model, polytope, smooth_field};
use gsoliton::toricfield::{cubic_sample, Grid, Model, PotentialField, ReferenceKind};
use gsoliton::Error;
use proptest::prelude::*;

#[test]
fn grid_rejects_bad_parameters() {
    assert!(matches!(Grid::new(2, 6.0, 96), Err(Error::InvalidGrid(_))));
    assert!(matches!(Grid::new(2, 6.0, 15), Err(Error::InvalidGrid(_))));
    assert!(matches!(Grid::new(2, 0.0, 33), Err(Error::InvalidGrid(_))));
    assert!(matches!(Grid::new(3, 6.0, 33), Err(Error::InvalidGrid(_))));
    let g = Grid::new(2, 6.0, 97).unwrap();
    assert_eq!(g.len(), 97 * 97);
    assert!((g.h - 0.125).abs() < 1e-15);
    assert_eq!(g.point(g.index(48, 48)), [0.0, 0.0]);
}

#[test]
fn quadrature_integrates_the_box() {
    for (n, r, npts) in [(1, 8.0, 257), (2, 6.0, 33)] {
        let g = Grid::new(n, r, npts).unwrap();
        let total: f64 = g.quadrature_weights().iter().sum();
        assert!((total - (2.0 * r).powi(n as i32)).abs() < 1e-11);
    }
}

#[test]
fn reflection_folds_ghost_indices() {
    let g = Grid::new(1, 4.0, 17).unwrap();
    assert_eq!(g.reflect(-1), 1);
    assert_eq!(g.reflect(-2), 2);
    assert_eq!(g.reflect(17), 15);
    assert_eq!(g.reflect(5), 5);
}

#[test]
fn reference_mass_approaches_the_polytope_volume() {
    // Outside the box the reference measure decays like e^{-R}.
    let mut prev = f64::INFINITY;
    for r in [4.0, 6.0, 9.0] {
        let m = model("p2", r, 49);
        let gap = (m.volume - m.polytope_volume).abs() / m.polytope_volume;
        assert!(gap < prev, "R = {r}: {gap}");
        assert!(gap < 3.0 * m.tail0.max(1e-6), "R = {r}: gap {gap}, tail {}", m.tail0);
        prev = gap;
    }
    assert!(prev < 1e-3);
}

#[test]
fn reference_ricci_potential_is_normalized() {
    for name in ["p1", "p2", "bl1p2"] {
        let m = model(name, 6.0, 49);
        let s: f64 = (0..m.grid.len()).map(|k| m.quad[k] * (m.rho0[k].exp() - 1.0) * m.det0[k]).sum();
        assert!(s.abs() < 1e-12 * m.volume, "{name}: {s}");
        // The zero field reproduces rho_0.
        let f = PotentialField::zero(m.clone());
        let geo = f.geometry(1e-3).unwrap();
        let rp = f.ricci_potential(&geo);
        for k in 0..m.grid.len() {
            assert!((rp.rho[k] - m.rho0[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn vertex_reference_is_available() {
    let p = polytope("bl1p2");
    let m = Model::new(p.clone(), Grid::new(2, 6.0, 33).unwrap(), ReferenceKind::Vertices).unwrap();
    assert!(m.det0.iter().all(|d| *d > 0.0));
    assert!(m.grad0.iter().all(|y| p.contains(y, 1e-12)));
}

/// Moments of the pushforward of the discrete MA measure under the gradient,
/// against the Lebesgue moments of P.
fn moment_error(f: &PotentialField) -> f64 {
    let m = f.model();
    let geo = f.geometry(1e-3).unwrap();
    let p = &m.polytope;
    let b = p.barycenter();
    let cov = p.affine_moments().covariance();
    let (mut m1, mut m2) = ([0.0; 2], [0.0; 3]);
    for k in 0..m.grid.len() {
        let wgt = m.quad[k] * geo.det[k] / m.polytope_volume;
        let y = geo.grad[k];
        m1[0] += wgt * y[0];
        m1[1] += wgt * y[1];
        m2[0] += wgt * (y[0] - b[0]) * (y[0] - b[0]);
        m2[1] += wgt * (y[0] - b[0]) * (y[1] - b[1]);
        m2[2] += wgt * (y[1] - b[1]) * (y[1] - b[1]);
    }
    let errs = [m1[0] - b[0], m1[1] - b[1], m2[0] - cov[0], m2[1] - cov[1], m2[2] - cov[3]];
    errs.iter().fold(0.0f64, |a, e| a.max(e.abs()))
}

#[test]
fn gradient_image_matches_polytope_moments() {
    let coarse = moment_error(&smooth_field(&model("bl1p2", 10.0, 65), 0.6, 1.5));
    let fine = moment_error(&smooth_field(&model("bl1p2", 10.0, 129), 0.6, 1.5));
    assert!(fine <= 1e-3, "{fine}");
    assert!(fine < 0.75 * coarse, "coarse {coarse}, fine {fine}");
}

#[test]
fn concave_field_fails_the_convexity_guard() {
    let m = model("p2", 6.0, 33);
    let f = PotentialField::from_fn(m.clone(), |x| -0.8 * (x[0] * x[0] + x[1] * x[1]));
    match f.geometry(1e-3) {
        Err(Error::Convexity { eig, x, .. }) => {
            assert!(eig < 1e-3);
            assert_eq!(x.len(), 2);
        }
        other => panic!("expected a convexity error, got {other:?}"),
    }
    assert!(matches!(
        PotentialField::from_values(m, vec![0.0; 3]),
        Err(Error::InvalidGrid(_))
    ));
}

#[test]
fn tight_truncation_tolerance_is_reported() {
    let m = model("p2", 4.0, 33);
    let f = PotentialField::zero(m);
    let geo = f.geometry(1e-3).unwrap();
    assert!(matches!(f.ricci_potential_checked(&geo, 1e-9), Err(Error::Truncation { .. })));
    assert!(f.ricci_potential_checked(&geo, 1.0).is_ok());
}

#[test]
fn compensated_accumulation_keeps_small_increments() {
    let m = model("p1", 4.0, 17);
    let mut f = PotentialField::zero(m.clone());
    f.add_constant(1.0);
    let tiny = vec![1e-17; m.grid.len()];
    for _ in 0..1000 {
        f.add_scaled(&tiny, 1.0);
    }
    // Plain summation would stay at 1.0: each increment is below half an ulp.
    let naive = (0..1000).fold(1.0f64, |a, _| a + 1e-17);
    assert_eq!(naive, 1.0);
    let (hi, lo) = f.parts();
    assert!(((hi[0] - 1.0) + lo[0] - 1e-14).abs() < 1e-22, "{} {}", hi[0], lo[0]);
}

#[test]
fn cubic_interpolation_is_exact_for_cubics() {
    let m = model("p2", 3.0, 33);
    let cubic = |x: &[f64; 2]| 0.3 * x[0].powi(3) - x[0] * x[1] * x[1] + 2.0 * x[1] - 0.5;
    let vals: Vec<f64> = (0..m.grid.len()).map(|k| cubic(&m.grid.point(k))).collect();
    for x in [[0.123, -0.77], [1.9, 2.2], [-2.1, 0.01]] {
        assert!((cubic_sample(&m.grid, &vals, &x) - cubic(&x)).abs() < 1e-11, "{x:?}");
    }
}

#[test]
fn resampling_keeps_common_nodes() {
    let fine = model("bl1p2", 6.0, 65);
    let coarse = model("bl1p2", 6.0, 33);
    let f = smooth_field(&fine, 0.6, 1.5);
    let g = f.resample(coarse.clone());
    for i in 0..33 {
        for j in 0..33 {
            let kc = coarse.grid.index(i, j);
            let kf = fine.grid.index(2 * i, 2 * j);
            assert!((g.phi(kc) - f.phi(kf)).abs() < 1e-13);
        }
    }
}

#[test]
fn translation_moves_the_potential() {
    let m = model("p1", 8.0, 257);
    let f = PotentialField::zero(m.clone());
    let same = f.translate(&[1.0, 0.0], 0.0).unwrap();
    assert_eq!(same.values(), f.values());
    let s = 0.5;
    let moved = f.translate(&[1.0, 0.0], s).unwrap();
    // w(x + s) of the reference, checked away from the box faces.
    for k in 0..m.grid.len() {
        let x = m.grid.point(k);
        if x[0].abs() < 6.0 {
            let want = m.reference.value(&[x[0] + s, 0.0]);
            assert!((m.w0[k] + moved.phi(k) - want).abs() < 1e-12, "x = {}", x[0]);
        }
    }
    assert!(matches!(f.translate(&[1.0, 0.0], 2.5), Err(Error::TranslationRange { .. })));
}

fn box_point(model: &Arc<Model>, u: f64, v: f64) -> [f64; 2] {
    [u * model.grid.r, v * model.grid.r]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn reference_derivatives_match_differences(u in -0.9f64..0.9, v in -0.9f64..0.9, which in 0usize..3) {
        let name = ["p2", "bl1p2", "bl2p2"][which];
        let m = model(name, 6.0, 17);
        let x = box_point(&m, u, v);
        let (w, grad, hess) = m.reference.eval(&x);
        prop_assert!((w - m.reference.value(&x)).abs() < 1e-12);
        let h = 1e-5;
        for a in 0..2 {
            let (mut xp, mut xm) = (x, x);
            xp[a] += h;
            xm[a] -= h;
            let fd = (m.reference.value(&xp) - m.reference.value(&xm)) / (2.0 * h);
            prop_assert!((fd - grad[a]).abs() < 1e-8);
            let (_, gp, _) = m.reference.eval(&xp);
            let (_, gm, _) = m.reference.eval(&xm);
            let col = [(gp[0] - gm[0]) / (2.0 * h), (gp[1] - gm[1]) / (2.0 * h)];
            let exact = hess.apply(&[if a == 0 { 1.0 } else { 0.0 }, if a == 1 { 1.0 } else { 0.0 }], 2);
            prop_assert!((col[0] - exact[0]).abs() < 1e-7 && (col[1] - exact[1]).abs() < 1e-7);
        }
        prop_assert!(hess.det(2) > 0.0);
        prop_assert!(m.polytope.contains(&grad, 1e-12));
    }

    #[test]
    fn smooth_fields_are_convex(a in 0.0f64..0.9, b in 1.0f64..1.1, which in 0usize..3) {
        let name = ["p1", "p2", "bl1p2"][which];
        let m = model(name, 6.0, 33);
        let f = smooth_field(&m, a, b);
        let geo = f.geometry(1e-3);
        prop_assert!(geo.is_ok(), "{:?}", geo.err());
        let geo = geo.unwrap();
        prop_assert!(geo.moment_violation < 1e-9);
    }
}

mod common;

use common::{model, polytope, smooth_field};
use gsoliton::extremal::{continuum_extremal, extremal_field, mabuchi_constant};
use gsoliton::run::parse_weight;
use gsoliton::toricfield::PotentialField;
use gsoliton::weights::WeightFunction;

/// Continuum extremal data from polygon moments: the affine `l` with
/// `int_P l = 0` and `int_P y (1 - l) = 0`, i.e. `l = <eta, y - b>` with
/// `Cov eta = b`.
fn moment_eta(vertices: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let (mut area, mut m1, mut m2) = (0.0, [0.0; 2], [0.0; 3]);
    for i in 1..vertices.len() - 1 {
        let (a, b, c) = (vertices[0], vertices[i], vertices[i + 1]);
        let t = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]));
        area += t;
        let s = |k: usize| a[k] + b[k] + c[k];
        let pp = |k: usize, l: usize| a[k] * a[l] + b[k] * b[l] + c[k] * c[l];
        for k in 0..2 {
            m1[k] += t * s(k) / 3.0;
        }
        m2[0] += t / 12.0 * (pp(0, 0) + s(0) * s(0));
        m2[1] += t / 12.0 * (pp(0, 1) + s(0) * s(1));
        m2[2] += t / 12.0 * (pp(1, 1) + s(1) * s(1));
    }
    let b = [m1[0] / area, m1[1] / area];
    let c = [m2[0] / area - b[0] * b[0], m2[1] / area - b[0] * b[1], m2[2] / area - b[1] * b[1]];
    let det = c[0] * c[2] - c[1] * c[1];
    ([(c[2] * b[0] - c[1] * b[1]) / det, (c[0] * b[1] - c[1] * b[0]) / det], b)
}

#[test]
fn symmetric_polytopes_have_no_extremal_field() {
    for name in ["p1", "p2", "p1xp1", "bl3p2"] {
        let ex = continuum_extremal(&polytope(name));
        assert!(ex.eta.iter().all(|e| e.abs() < 1e-14), "{name}");
        assert!(ex.m_x.abs() < 1e-14, "{name}");
    }
}

#[test]
fn blow_up_extremal_field_matches_moments() {
    let p = polytope("bl1p2");
    let (eta, b) = moment_eta(&p.vertices_f64());
    let ex = continuum_extremal(&p);
    assert!((ex.eta[0] - eta[0]).abs() < 1e-12 && (ex.eta[1] - eta[1]).abs() < 1e-12, "{:?}", ex.eta);
    assert!((eta[0] - 6.0 / 11.0).abs() < 1e-12);
    // l at the vertices and its supremum.
    let l: Vec<f64> = p.vertices_f64().iter().map(|v| eta[0] * (v[0] - b[0]) + eta[1] * (v[1] - b[1])).collect();
    for (got, want) in ex.vertex_values.iter().zip(&l) {
        assert!((got - want).abs() < 1e-12);
    }
    let sup = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!((ex.m_x - sup).abs() < 1e-12);
    assert!((ex.m_x - 5.0 / 11.0).abs() < 1e-12 && ex.m_x < 1.0);
}

#[test]
fn mabuchi_constant_of_known_weights() {
    assert_eq!(mabuchi_constant(&WeightFunction::make_constant(polytope("p2"))), 0.0);
    let p1 = polytope("p1");
    let q = WeightFunction::make_quadratic(p1, 1.0, [0.0, 0.0], [[-0.3, 0.0], [0.0, 0.0]]).unwrap();
    assert!((mabuchi_constant(&q) - 2.0 / 9.0).abs() < 1e-12);
    let p = polytope("bl1p2");
    let g = parse_weight(&p, "mabuchi").unwrap();
    assert!((mabuchi_constant(&g) - continuum_extremal(&p).m_x).abs() < 1e-12);
}

#[test]
fn discrete_projection_is_near_the_continuum() {
    let p = polytope("bl1p2");
    let m = model("bl1p2", 10.0, 129);
    let f = PotentialField::zero(m);
    let geo = f.geometry(1e-3).unwrap();
    let ex = extremal_field(&f, &geo).unwrap();
    let cont = continuum_extremal(&p);
    for k in 0..2 {
        assert!((ex.eta[k] - cont.eta[k]).abs() < 2e-3, "{:?} vs {:?}", ex.eta, cont.eta);
    }
    assert!(ex.m_x > 0.0 && ex.m_x < 1.0);
}

#[test]
fn discrete_projection_vanishes_by_symmetry() {
    let m = model("p2", 6.0, 65);
    let f = smooth_field(&m, 0.6, 1.5);
    let geo = f.geometry(1e-3).unwrap();
    let ex = extremal_field(&f, &geo).unwrap();
    // The square box is symmetric under the swap of the coordinates only, so
    // the two components agree; each is a quadrature defect.
    assert!((ex.eta[0] - ex.eta[1]).abs() < 1e-12);
    assert!(ex.eta[0].abs() < 2e-2, "{:?}", ex.eta);
}

mod common;

use common::{model, polytope, smooth_field};
use gsoliton::energies::{energy_e, energy_e_mixed, entropy, full_report, l_functional, mabuchi_m, EnergyReport};
use gsoliton::run::parse_weight;
use gsoliton::toricfield::PotentialField;
use gsoliton::weights::WeightFunction;
use proptest::prelude::*;

fn report(f: &PotentialField, g: &WeightFunction) -> EnergyReport {
    let geo = f.geometry(1e-3).unwrap();
    full_report(f, &geo, g).unwrap()
}

#[test]
fn zero_field_has_zero_energies() {
    for name in ["p1", "bl1p2"] {
        let m = model(name, 6.0, 33);
        let g = parse_weight(&polytope(name), if name == "p1" { "ke" } else { "mabuchi" }).unwrap();
        let e = report(&PotentialField::zero(m), &g);
        for v in [e.e, e.e_g, e.i_g, e.j_g, e.l, e.d, e.d_g, e.ent, e.m, e.m_g, e.e_mixed, e.l_alt] {
            assert!(v.abs() < 1e-12, "{name}: {e:?}");
        }
        assert!((e.mass - 1.0).abs() < 1e-13);
    }
}

#[test]
fn constant_field_shifts_e_and_l() {
    let m = model("bl1p2", 6.0, 33);
    let g = parse_weight(&polytope("bl1p2"), "mabuchi").unwrap();
    let mut f = PotentialField::zero(m);
    f.add_constant(0.7);
    let e = report(&f, &g);
    // MA_g(0) has the discrete weighted mass, which is 1 only up to quadrature.
    assert!((e.e - 0.7).abs() < 1e-12 && (e.e_g - 0.7 * e.mass_g).abs() < 1e-12);
    assert!((e.mass_g - 1.0).abs() < 1e-2);
    assert!((e.l - 0.7).abs() < 1e-12 && (e.l_alt - 0.7).abs() < 1e-12);
    assert!(e.i_g.abs() < 1e-12 && e.j_g.abs() < 1e-12 && e.d.abs() < 1e-12);
    assert!(e.m.abs() < 1e-12);
}

#[test]
fn standalone_functionals_match_the_report() {
    let m = model("bl1p2", 6.0, 33);
    let g = WeightFunction::make_constant(polytope("bl1p2"));
    let f = smooth_field(&m, 0.6, 1.5);
    let geo = f.geometry(1e-3).unwrap();
    let e = full_report(&f, &geo, &g).unwrap();
    assert_eq!(energy_e(&f, &geo).unwrap().0, e.e);
    assert_eq!(energy_e_mixed(&f, &geo), e.e_mixed);
    assert!((l_functional(&f).0 - e.l).abs() < 1e-14);
    assert!((entropy(&f, &geo) - e.ent).abs() < 1e-14);
    assert!((mabuchi_m(&f, &geo).unwrap() - e.m).abs() < 1e-12);
}

#[test]
fn segment_mass_is_exact_and_the_ricci_identity_holds() {
    // Second differences telescope on the segment, so MA(phi) keeps mass 1 and
    // the identity M - D = -int rho MA + int rho_0 MA(0) holds to rounding.
    let m = model("p1", 8.0, 129);
    let g = WeightFunction::make_constant(polytope("p1"));
    let e = report(&smooth_field(&m, 0.9, 1.0), &g);
    assert!((e.mass - 1.0).abs() < 1e-13);
    assert!(e.md_identity_gap().abs() < 1e-12, "{}", e.md_identity_gap());
}

/// Closed form of the discrete identity defect: with a measure of mass `m`
/// and the Ricci normalization on that measure,
/// `(M_g - D_g) - (-int rho MA + int rho_0 MA(0)) = -L (1 - m) + m log m`.
#[test]
fn planar_identity_defect_is_the_mass_defect() {
    let g = parse_weight(&polytope("bl1p2"), "mabuchi").unwrap();
    for (a, b) in [(0.6, 1.5), (0.9, 1.0)] {
        let e = report(&smooth_field(&model("bl1p2", 6.0, 65), a, b), &g);
        let predicted = -e.l * (1.0 - e.mass) + e.mass * e.mass.ln();
        assert!((e.md_identity_gap() - predicted).abs() < 1e-12, "{} vs {predicted}", e.md_identity_gap());
        assert!((e.mass - 1.0).abs() > 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn closed_relations_and_mixed_route(a in 0.0f64..0.9, b in 1.0f64..1.1, which in 0usize..3) {
        let name = ["p1", "p2", "bl1p2"][which];
        let p = polytope(name);
        let g = if name == "bl1p2" { parse_weight(&p, "mabuchi").unwrap() } else { WeightFunction::make_constant(p) };
        let e = report(&smooth_field(&model(name, 6.0, 33), a, b), &g);
        prop_assert!((e.d - (e.l - e.e)).abs() < 1e-12);
        prop_assert!((e.d_g - (e.l - e.e_g)).abs() < 1e-12);
        prop_assert!(((e.m_g - e.m) - (e.e - e.e_g)).abs() < 1e-12);
        prop_assert!((e.i_minus_j - (e.i_g - e.j_g)).abs() < 1e-12);
        prop_assert!((e.e - e.e_mixed).abs() <= 1e-6 * e.e.abs().max(1e-12));
        prop_assert!((e.l - e.l_alt).abs() < 1e-10);
        prop_assert!(e.err_e < 1e-10);
    }

    /// Adding a constant on the segment moves E and L by the constant and
    /// leaves D, I, J and M unchanged.
    #[test]
    fn segment_constant_shift(a in 0.0f64..0.9, c in -2.0f64..2.0) {
        let m = model("p1", 8.0, 65);
        let g = WeightFunction::make_constant(polytope("p1"));
        let f = smooth_field(&m, a, 1.0);
        let mut shifted = f.clone();
        shifted.add_constant(c);
        let (e0, e1) = (report(&f, &g), report(&shifted, &g));
        prop_assert!((e1.e - e0.e - c).abs() < 1e-12);
        prop_assert!((e1.l - e0.l - c).abs() < 1e-12);
        prop_assert!((e1.d - e0.d).abs() < 1e-12);
        prop_assert!((e1.i_g - e0.i_g).abs() < 1e-12 && (e1.j_g - e0.j_g).abs() < 1e-12);
        prop_assert!((e1.m - e0.m).abs() < 1e-12);
    }
}

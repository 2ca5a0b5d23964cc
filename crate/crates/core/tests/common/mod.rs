#![allow(dead_code)]

use std::sync::Arc;

use gsoliton::polytope::{catalog_example, Polytope};
use gsoliton::toricfield::{Grid, Model, PotentialField, ReferenceKind};

pub fn polytope(name: &str) -> Arc<Polytope> {
    Arc::new(catalog_example(name).expect("catalog example"))
}

pub fn model(name: &str, r: f64, npts: usize) -> Arc<Model> {
    let p = polytope(name);
    Model::new(p.clone(), Grid::new(p.dim(), r, npts).expect("grid"), ReferenceKind::LatticePoints).expect("model")
}

/// Convex field compatible with the reflecting boundary: the total potential
/// is `h(w_0)` with `h(s) = s + a e^{-b s}`, convex and increasing when
/// `0 <= a` and `a b < 1`.
pub fn smooth_field(model: &Arc<Model>, a: f64, b: f64) -> PotentialField {
    assert!(a >= 0.0 && a * b < 1.0);
    let phi = model.w0.iter().map(|w| a * (-b * w).exp()).collect();
    PotentialField::from_values(model.clone(), phi).expect("field")
}

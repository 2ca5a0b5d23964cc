//! Reflexive lattice polytopes in dimension 1 and 2.
//!
//! A polytope is stored through its facets `{y : <y, v_i> >= offset_i}` and its
//! vertices. Moments are computed exactly in rational arithmetic.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Q = BigRational;

fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

fn qf(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Names accepted by [`catalog_example`].
pub const CATALOG: [&str; 6] = ["p1", "p2", "p1xp1", "bl1p2", "bl2p2", "bl3p2"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Facet {
    /// Inward normal (primitive integer vector for lattice polytopes).
    pub normal: Vec<i64>,
    pub offset: Q,
}

/// Exact moments `int_P 1`, `int_P y_a`, `int_P y_a y_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub volume: Q,
    pub first: Vec<Q>,
    /// Row-major `n x n`.
    pub second: Vec<Q>,
}

impl Moments {
    pub fn barycenter(&self) -> Vec<Q> {
        self.first.iter().map(|m| m / &self.volume).collect()
    }

    /// Covariance of the uniform measure on P, as floats.
    pub fn covariance(&self) -> Vec<f64> {
        let n = self.first.len();
        let b = self.barycenter();
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for c in 0..n {
                let v = &self.second[a * n + c] / &self.volume - &b[a] * &b[c];
                out[a * n + c] = qf(&v);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Polytope {
    name: String,
    dim: usize,
    /// Counter-clockwise in dimension 2; `[min, max]` in dimension 1.
    vertices: Vec<Vec<Q>>,
    facets: Vec<Facet>,
    moments: Moments,
}

/// Serializable float summary used in reports and records.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PolytopeSummary {
    pub name: String,
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub normals: Vec<Vec<i64>>,
    pub volume: f64,
    pub barycenter: Vec<f64>,
    pub hash: String,
}

pub fn catalog_example(name: &str) -> Result<Polytope> {
    let normals: Vec<Vec<i64>> = match name {
        "p1" => vec![vec![1], vec![-1]],
        "p2" => vec![vec![1, 0], vec![0, 1], vec![-1, -1]],
        "p1xp1" => vec![vec![1, 0], vec![0, 1], vec![-1, 0], vec![0, -1]],
        "bl1p2" => vec![vec![1, 0], vec![1, 1], vec![0, 1], vec![-1, -1]],
        "bl2p2" => vec![vec![1, 0], vec![1, 1], vec![0, 1], vec![-1, 0], vec![-1, -1]],
        "bl3p2" => vec![
            vec![1, 0],
            vec![1, 1],
            vec![0, 1],
            vec![-1, 0],
            vec![-1, -1],
            vec![0, -1],
        ],
        other => return Err(Error::UnknownExample(other.to_string())),
    };
    let mut p = Polytope::from_fan(&normals)?;
    p.name = name.to_string();
    Ok(p)
}

fn cross(o: &[Q], a: &[Q], b: &[Q]) -> Q {
    (&a[0] - &o[0]) * (&b[1] - &o[1]) - (&a[1] - &o[1]) * (&b[0] - &o[0])
}

fn dot_iq(v: &[i64], y: &[Q]) -> Q {
    v.iter().zip(y).map(|(a, b)| q(*a) * b).fold(Q::zero(), |s, x| s + x)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Polytope {
    /// Polytope `{y : <y, v> >= -1 for all rays v}` of a complete fan.
    pub fn from_fan(normals: &[Vec<i64>]) -> Result<Self> {
        let dim = normals.first().map(|v| v.len()).unwrap_or(0);
        let facets: Vec<Facet> = normals
            .iter()
            .map(|v| Facet {
                normal: v.clone(),
                offset: q(-1),
            })
            .collect();
        Self::from_facets(dim, facets)
    }

    /// Builds the polytope from its facet inequalities, computing the vertices.
    pub fn from_facets(dim: usize, facets: Vec<Facet>) -> Result<Self> {
        let vertices = match dim {
            1 => {
                let mut lo: Option<Q> = None;
                let mut hi: Option<Q> = None;
                for f in &facets {
                    let v = f.normal[0];
                    if v == 0 {
                        return Err(Error::InvalidPolytope(vec!["zero facet normal".into()]));
                    }
                    let bound = &f.offset / q(v);
                    if v > 0 {
                        lo = Some(match lo {
                            Some(l) if l > bound => l,
                            _ => bound,
                        });
                    } else {
                        hi = Some(match hi {
                            Some(h) if h < bound => h,
                            _ => bound,
                        });
                    }
                }
                match (lo, hi) {
                    (Some(l), Some(h)) if l < h => vec![vec![l], vec![h]],
                    _ => return Err(Error::InvalidPolytope(vec!["unbounded or empty interval".into()])),
                }
            }
            2 => vertices_2d(&facets)?,
            _ => return Err(Error::InvalidPolytope(vec![format!("unsupported dimension {dim}")])),
        };
        let moments = compute_moments(dim, &vertices);
        Ok(Self {
            name: "custom".into(),
            dim,
            vertices,
            facets,
            moments,
        })
    }

    /// Builds a polygon/interval from its vertices (any order); facet normals are
    /// primitive integer vectors when the vertices are lattice points.
    pub fn from_vertices(dim: usize, mut vertices: Vec<Vec<Q>>) -> Result<Self> {
        let facets = match dim {
            1 => {
                vertices.sort();
                vertices.dedup();
                if vertices.len() != 2 {
                    return Err(Error::InvalidPolytope(vec!["an interval needs two distinct endpoints".into()]));
                }
                let (a, b) = (vertices[0][0].clone(), vertices[1][0].clone());
                vec![
                    Facet { normal: vec![1], offset: a },
                    Facet { normal: vec![-1], offset: -b },
                ]
            }
            2 => {
                vertices = convex_hull(vertices);
                if vertices.len() < 3 {
                    return Err(Error::InvalidPolytope(vec!["degenerate polygon".into()]));
                }
                let k = vertices.len();
                (0..k)
                    .map(|i| {
                        let a = &vertices[i];
                        let b = &vertices[(i + 1) % k];
                        // Inward normal of a counter-clockwise edge a -> b.
                        let d = [&b[0] - &a[0], &b[1] - &a[1]];
                        let den = d[0].denom() * d[1].denom();
                        let nx = (-(&d[1]) * Q::from_integer(den.clone())).to_integer();
                        let ny = (&d[0] * Q::from_integer(den)).to_integer();
                        let nx = nx.to_i64().unwrap_or(0);
                        let ny = ny.to_i64().unwrap_or(0);
                        let g = gcd(nx, ny).max(1);
                        let normal = vec![nx / g, ny / g];
                        let offset = dot_iq(&normal, a);
                        Facet { normal, offset }
                    })
                    .collect()
            }
            _ => return Err(Error::InvalidPolytope(vec![format!("unsupported dimension {dim}")])),
        };
        let moments = compute_moments(dim, &vertices);
        Ok(Self {
            name: "custom".into(),
            dim,
            vertices,
            facets,
            moments,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vec<Q>] {
        &self.vertices
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn vertices_f64(&self) -> Vec<[f64; 2]> {
        self.vertices
            .iter()
            .map(|v| {
                let mut p = [0.0; 2];
                for (k, c) in v.iter().enumerate() {
                    p[k] = qf(c);
                }
                p
            })
            .collect()
    }

    pub fn affine_moments(&self) -> &Moments {
        &self.moments
    }

    pub fn volume(&self) -> f64 {
        qf(&self.moments.volume)
    }

    pub fn volume_exact(&self) -> &Q {
        &self.moments.volume
    }

    pub fn barycenter_exact(&self) -> Vec<Q> {
        self.moments.barycenter()
    }

    pub fn barycenter(&self) -> [f64; 2] {
        let mut b = [0.0; 2];
        for (k, c) in self.moments.barycenter().iter().enumerate() {
            b[k] = qf(c);
        }
        b
    }

    pub fn support_function(&self, x: &[f64]) -> f64 {
        self.vertices_f64()
            .iter()
            .map(|v| (0..self.dim).map(|k| v[k] * x[k]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest violation of the facet inequalities at `y` (0 inside P).
    pub fn facet_violation(&self, y: &[f64]) -> f64 {
        self.facets
            .iter()
            .map(|f| {
                let lhs: f64 = f.normal.iter().zip(y).map(|(v, c)| *v as f64 * c).sum();
                (qf(&f.offset) - lhs).max(0.0)
            })
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.facet_violation(y) <= tol
    }

    /// All integer points of P.
    pub fn lattice_points(&self) -> Vec<[i64; 2]> {
        let vs = self.vertices_f64();
        let lo: Vec<i64> = (0..self.dim)
            .map(|k| vs.iter().map(|v| v[k]).fold(f64::INFINITY, f64::min).floor() as i64)
            .collect();
        let hi: Vec<i64> = (0..self.dim)
            .map(|k| vs.iter().map(|v| v[k]).fold(f64::NEG_INFINITY, f64::max).ceil() as i64)
            .collect();
        let inside = |p: &[i64]| {
            self.facets.iter().all(|f| {
                let lhs: i64 = f.normal.iter().zip(p).map(|(a, b)| a * b).sum();
                q(lhs) >= f.offset
            })
        };
        let mut out = Vec::new();
        if self.dim == 1 {
            for a in lo[0]..=hi[0] {
                if inside(&[a]) {
                    out.push([a, 0]);
                }
            }
        } else {
            for a in lo[0]..=hi[0] {
                for b in lo[1]..=hi[1] {
                    if inside(&[a, b]) {
                        out.push([a, b]);
                    }
                }
            }
        }
        out
    }

    /// Checks every structural invariant; the list holds one line per failure.
    pub fn validate_reflexive(&self) -> (bool, Vec<String>) {
        let mut diag = Vec::new();
        let n = self.dim;
        if n != 1 && n != 2 {
            diag.push(format!("dimension {n} not supported"));
            return (false, diag);
        }
        for (i, f) in self.facets.iter().enumerate() {
            if f.normal.len() != n {
                diag.push(format!("facet {i}: normal has wrong length"));
                continue;
            }
            let g = f.normal.iter().fold(0, |g, a| gcd(g, *a));
            if g != 1 {
                diag.push(format!("facet {i}: normal {:?} is not primitive", f.normal));
            }
            if f.offset != q(-1) {
                diag.push(format!("facet {i}: offset {} != -1 (not reflexive)", f.offset));
            }
            if f.offset >= Q::zero() {
                diag.push(format!("facet {i}: origin not strictly inside"));
            }
        }
        if !self.moments.volume.is_positive() {
            diag.push("volume is not positive".into());
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if v.iter().any(|c| !c.is_integer()) {
                diag.push(format!("vertex {i} is not a lattice point"));
            }
            let tight = self.facets.iter().filter(|f| dot_iq(&f.normal, v) == f.offset).count();
            if self.facets.iter().any(|f| dot_iq(&f.normal, v) < f.offset) {
                diag.push(format!("vertex {i} violates a facet inequality"));
            }
            if tight < n {
                diag.push(format!("vertex {i} is not an extreme point"));
            }
        }
        // Every facet must be supported by a full edge (n vertices on it).
        for (i, f) in self.facets.iter().enumerate() {
            let on = self.vertices.iter().filter(|v| dot_iq(&f.normal, v) == f.offset).count();
            if on < n {
                diag.push(format!("facet {i} is redundant"));
            }
        }
        let b = self.moments.barycenter();
        if self.moments.volume.is_positive()
            && self.facets.iter().any(|f| dot_iq(&f.normal, &b) <= f.offset)
        {
            diag.push("barycenter not interior".into());
        }
        (diag.is_empty(), diag)
    }

    /// Fails with the diagnostic list unless the polytope is reflexive.
    pub fn validated(self) -> Result<Self> {
        let (ok, diag) = self.validate_reflexive();
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidPolytope(diag))
        }
    }

    pub fn summary(&self) -> PolytopeSummary {
        PolytopeSummary {
            name: self.name.clone(),
            dim: self.dim,
            vertices: self
                .vertices
                .iter()
                .map(|v| v.iter().map(qf).collect())
                .collect(),
            normals: self.facets.iter().map(|f| f.normal.clone()).collect(),
            volume: self.volume(),
            barycenter: self.barycenter()[..self.dim].to_vec(),
            hash: self.hash(),
        }
    }

    /// Text record: `dimension`, `vertex` and `facet` lines; `#` starts a comment.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# polytope v1");
        let _ = writeln!(s, "name {}", self.name);
        let _ = writeln!(s, "dimension {}", self.dim);
        for v in &self.vertices {
            let coords: Vec<String> = v.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "vertex {}", coords.join(" "));
        }
        for f in &self.facets {
            let coords: Vec<String> = f.normal.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "facet {} {}", coords.join(" "), f.offset);
        }
        s
    }

    /// Parses [`Polytope::to_text`] output and validates it. Vertex lines are
    /// optional; when present they must agree with the facet intersection.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut dim = None;
        let mut name = None;
        let mut verts: Vec<Vec<Q>> = Vec::new();
        let mut facets = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::PolytopeParse { line: ln + 1, msg };
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or_default();
            let rest: Vec<&str> = it.collect();
            match key {
                "name" => name = rest.first().map(|s| s.to_string()),
                "dimension" => {
                    let d: usize = rest
                        .first()
                        .ok_or_else(|| perr("missing dimension".into()))?
                        .parse()
                        .map_err(|e| perr(format!("{e}")))?;
                    dim = Some(d);
                }
                "vertex" => {
                    let v: std::result::Result<Vec<Q>, _> = rest.iter().map(|s| s.parse::<Q>()).collect();
                    verts.push(v.map_err(|e| perr(format!("{e}")))?);
                }
                "facet" => {
                    if rest.len() < 2 {
                        return Err(perr("facet needs a normal and an offset".into()));
                    }
                    let (nrm, off) = rest.split_at(rest.len() - 1);
                    let normal: std::result::Result<Vec<i64>, _> = nrm.iter().map(|s| s.parse::<i64>()).collect();
                    let offset = off[0].parse::<Q>().map_err(|e| perr(format!("{e}")))?;
                    facets.push(Facet {
                        normal: normal.map_err(|e| perr(format!("{e}")))?,
                        offset,
                    });
                }
                other => return Err(perr(format!("unknown key `{other}`"))),
            }
        }
        let dim = dim.ok_or(Error::PolytopeParse {
            line: 0,
            msg: "missing dimension line".into(),
        })?;
        if verts.iter().any(|v| v.len() != dim) || facets.iter().any(|f| f.normal.len() != dim) {
            return Err(Error::PolytopeParse {
                line: 0,
                msg: "coordinate count does not match dimension".into(),
            });
        }
        let p = if facets.is_empty() {
            Self::from_vertices(dim, verts)?
        } else {
            let p = Self::from_facets(dim, facets)?;
            if !verts.is_empty() {
                let mut a = verts.clone();
                let mut b = p.vertices.clone();
                a.sort();
                b.sort();
                if a != b {
                    return Err(Error::InvalidPolytope(vec![
                        "listed vertices are not the extreme points of the facet intersection".into(),
                    ]));
                }
            }
            p
        };
        let p = match name {
            Some(n) => p.with_name(&n),
            None => p,
        };
        p.validated()
    }

    /// Short content hash of the canonical text form.
    pub fn hash(&self) -> String {
        let text = self.to_text();
        // FNV-1a, 64 bit: stable across platforms and toolchains.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

fn vertices_2d(facets: &[Facet]) -> Result<Vec<Vec<Q>>> {
    let mut pts: Vec<Vec<Q>> = Vec::new();
    for i in 0..facets.len() {
        for j in i + 1..facets.len() {
            let (a, b) = (&facets[i].normal, &facets[j].normal);
            let det = a[0] * b[1] - a[1] * b[0];
            if det == 0 {
                continue;
            }
            let (ca, cb) = (&facets[i].offset, &facets[j].offset);
            let det = q(det);
            let y0 = (ca * q(b[1]) - cb * q(a[1])) / &det;
            let y1 = (cb * q(a[0]) - ca * q(b[0])) / &det;
            let y = vec![y0, y1];
            if facets.iter().all(|f| dot_iq(&f.normal, &y) >= f.offset) && !pts.contains(&y) {
                pts.push(y);
            }
        }
    }
    let hull = convex_hull(pts);
    if hull.len() < 3 {
        return Err(Error::InvalidPolytope(vec!["facet intersection is empty, unbounded or degenerate".into()]));
    }
    Ok(hull)
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
fn convex_hull(mut pts: Vec<Vec<Q>>) -> Vec<Vec<Q>> {
    pts.sort();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Vec<Q>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && !cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p).is_positive() {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<Vec<Q>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && !cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p).is_positive() {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn compute_moments(dim: usize, vertices: &[Vec<Q>]) -> Moments {
    if dim == 1 {
        let (a, b) = (&vertices[0][0], &vertices[1][0]);
        let a2 = a * a;
        let b2 = b * b;
        return Moments {
            volume: b - a,
            first: vec![(&b2 - &a2) / q(2)],
            second: vec![(&b2 * b - &a2 * a) / q(3)],
        };
    }
    let mut vol = Q::zero();
    let mut first = vec![Q::zero(), Q::zero()];
    let mut second = vec![Q::zero(); 4];
    let k = vertices.len();
    let p0 = &vertices[0];
    // Fan triangulation from the first vertex; exact simplex formulas
    // int_T y = A s / 3 and int_T y y^T = A (sum p p^T + s s^T) / 12.
    for i in 1..k - 1 {
        let (p1, p2) = (&vertices[i], &vertices[i + 1]);
        let area = cross(p0, p1, p2) / q(2);
        let tri = [p0, p1, p2];
        let s: Vec<Q> = (0..2).map(|c| tri.iter().fold(Q::zero(), |acc, p| acc + &p[c])).collect();
        for c in 0..2 {
            first[c] += &area * &s[c] / q(3);
        }
        for a in 0..2 {
            for b in 0..2 {
                let pp = tri.iter().fold(Q::zero(), |acc, p| acc + &p[a] * &p[b]);
                second[a * 2 + b] += &area * (pp + &s[a] * &s[b]) / q(12);
            }
        }
        vol += area;
    }
    Moments {
        volume: vol,
        first,
        second,
    }
}

impl Moments {
    pub fn volume_f64(&self) -> f64 {
        qf(&self.volume)
    }
}

/// Exact rational `num / den`.
pub fn rational(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

//! The odd N-cycle qutrit realization and its noncontextual bounds.
//!
//! The `a` vectors sit on a cone around the handle axis `(0, 0, 1)`, each
//! orthogonal to its cyclic neighbours. `b_i` completes `{a_i, a_{i+1}}` to
//! an orthonormal basis, so every context `{a_i, b_i, a_{i+1}}` is a
//! complete three-outcome projective measurement.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fmt::format_sig;

pub type Vec3 = Vector3<f64>;

const VECTOR_TOL: f64 = 1e-12;

/// Smallest cycle length with a quantum violation.
pub const MIN_QUANTUM_N: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    n: usize,
    a: Vec<Vec3>,
    b: Vec<Vec3>,
    handle: Vec3,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self, i: usize) -> &Vec3 {
        &self.a[i % self.n]
    }

    pub fn b(&self, i: usize) -> &Vec3 {
        &self.b[i % self.n]
    }

    pub fn a_vectors(&self) -> &[Vec3] {
        &self.a
    }

    pub fn b_vectors(&self) -> &[Vec3] {
        &self.b
    }

    /// The symmetric state `(0, 0, 1)`.
    pub fn handle(&self) -> &Vec3 {
        &self.handle
    }

    /// Checks every structural invariant of the realization.
    pub fn validate(&self) -> Result<()> {
        check_cycle_length(self.n)?;
        if self.a.len() != self.n || self.b.len() != self.n {
            return Err(Error::InvariantBreach(format!(
                "expected {} a and b vectors, got {} and {}",
                self.n,
                self.a.len(),
                self.b.len()
            )));
        }
        if ((self.handle - Vec3::z()).norm()) > VECTOR_TOL {
            return Err(Error::InvariantBreach("handle must be (0,0,1)".into()));
        }
        for i in 0..self.n {
            let (ai, bi, an) = (self.a(i), self.b(i), self.a(i + 1));
            for (name, v) in [("a", ai), ("b", bi)] {
                if (v.norm() - 1.0).abs() > VECTOR_TOL {
                    return Err(Error::InvariantBreach(format!("|{name}_{i}| = {}", v.norm())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvariantBreach(format!("{name}_{i} is not finite")));
                }
            }
            let overlaps = [ai.dot(an), bi.dot(ai), bi.dot(an)];
            if let Some(o) = overlaps.iter().find(|o| o.abs() > VECTOR_TOL) {
                return Err(Error::InvariantBreach(format!(
                    "context {i} is not orthonormal (overlap {o:e})"
                )));
            }
        }
        Ok(())
    }

    /// JSON form `{"n": .., "a": [[x,y,z],..], "b": [[x,y,z],..]}` with
    /// 17 significant digits per component.
    pub fn to_json(&self) -> String {
        let list = |vs: &[Vec3]| {
            let rows: Vec<String> = vs
                .iter()
                .map(|v| {
                    let c: Vec<String> = v.iter().map(|x| format_sig(*x, 17)).collect();
                    format!("[{}]", c.join(","))
                })
                .collect();
            format!("[{}]", rows.join(","))
        };
        format!("{{\"n\":{},\"a\":{},\"b\":{}}}", self.n, list(&self.a), list(&self.b))
    }

    /// Parses the JSON form and re-validates it.
    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            a: Vec<[f64; 3]>,
            b: Vec<[f64; 3]>,
        }
        let raw: Raw =
            serde_json::from_str(s).map_err(|e| Error::InvalidConfig(format!("scenario json: {e}")))?;
        let sc = Scenario {
            n: raw.n,
            a: raw.a.iter().map(|v| Vec3::from(*v)).collect(),
            b: raw.b.iter().map(|v| Vec3::from(*v)).collect(),
            handle: Vec3::z(),
        };
        sc.validate()?;
        Ok(sc)
    }
}

fn check_cycle_length(n: usize) -> Result<()> {
    if n.is_multiple_of(2) {
        return Err(Error::UnsupportedScenario(format!("N = {n} is even")));
    }
    if n < MIN_QUANTUM_N {
        return Err(Error::UnsupportedScenario(format!(
            "N = {n} has no quantum violation; need odd N >= {MIN_QUANTUM_N}"
        )));
    }
    Ok(())
}

/// `a_i = K (cos(i pi (N-1)/N), sin(i pi (N-1)/N), sqrt(cos(pi/N)))` with
/// `K = 1/sqrt(1 + cos(pi/N))`.
fn a_vector(n: usize, i: usize) -> Vec3 {
    let nf = n as f64;
    let c = (PI / nf).cos();
    let k = 1.0 / (1.0 + c).sqrt();
    let angle = i as f64 * PI * (nf - 1.0) / nf;
    Vec3::new(k * angle.cos(), k * angle.sin(), k * c.sqrt())
}

/// Unit normal of `span{u, v}`, oriented so the third component is positive
/// (or, if it vanishes, the first nonzero component).
fn oriented_normal(u: &Vec3, v: &Vec3) -> Vec3 {
    let w = u.cross(v).normalize();
    let flip = if w.z != 0.0 { w.z < 0.0 } else { w.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0) };
    if flip {
        -w
    } else {
        w
    }
}

pub fn build_scenario(n: usize) -> Result<Scenario> {
    check_cycle_length(n)?;
    let a: Vec<Vec3> = (0..n).map(|i| a_vector(n, i)).collect();
    let b = (0..n).map(|i| oriented_normal(&a[i], &a[(i + 1) % n])).collect();
    let sc = Scenario { n, a, b, handle: Vec3::z() };
    sc.validate()?;
    Ok(sc)
}

/// Noncontextual bounds, all obtained by exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassicalBounds {
    pub n: usize,
    /// Max of `sum_i <a_i>` over deterministic hypergraph assignments.
    pub alpha_bound: u32,
    /// Min of `sum_i <b_i>` over the same assignments.
    pub beta_bound: u32,
    /// Min of `sum_i o_i o_{i+1}` over all `±1` assignments.
    pub correlator_bound: i32,
}

/// Enumerates all `±1` assignments for the correlator and all exactly-one
/// hypergraph assignments for `alpha`/`beta`.
///
/// An exactly-one assignment is fixed by its `a` part: `b_i = 1 - a_i - a_{i+1}`
/// must land in `{0, 1}`, so walking the `2^N` `a` patterns visits every
/// admissible assignment of the `2N` vertices exactly once.
pub fn enumerate_classical_bounds(n: usize) -> Result<ClassicalBounds> {
    if n.is_multiple_of(2) || n < 3 {
        return Err(Error::UnsupportedScenario(format!("classical enumeration needs odd N >= 3, got {n}")));
    }
    if n > 31 {
        return Err(Error::UnsupportedScenario(format!("N = {n} too large to enumerate")));
    }
    let full: u32 = (1u32 << n) - 1;
    let rotate = |m: u32| ((m >> 1) | ((m & 1) << (n - 1))) & full;

    let mut correlator = i32::MAX;
    let mut alpha = 0u32;
    let mut beta = u32::MAX;
    for mask in 0..=full {
        // o_i = +1 where the bit is clear; o_i o_{i+1} = -1 where neighbours differ.
        let disagree = (mask ^ rotate(mask)).count_ones() as i32;
        correlator = correlator.min(n as i32 - 2 * disagree);

        // a_i and a_{i+1} both true would put two true vertices in hyperedge i.
        if mask & rotate(mask) != 0 {
            continue;
        }
        let a_true = mask.count_ones();
        let b_true = n as u32 - 2 * a_true;
        alpha = alpha.max(a_true);
        beta = beta.min(b_true);
    }
    Ok(ClassicalBounds { n, alpha_bound: alpha, beta_bound: beta, correlator_bound: correlator })
}

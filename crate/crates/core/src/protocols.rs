//! Measurement protocols, the `alpha`/`beta` functionals and violation verdicts.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Rotation3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{Channel, Mat3, Projector};
use crate::scenario::{Scenario, Vec3};

/// Analytic values closer than this to a bound do not count as violations.
pub const VIOLATION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolId {
    /// Complete context measurement `{a_i, b_i, a_{i+1}}`.
    Full,
    /// Dichotomic `{a_i, not a_i}`.
    #[serde(rename = "a")]
    AOnly,
    /// Dichotomic `{b_i, not b_i}`.
    #[serde(rename = "b")]
    BOnly,
}

pub const ALL_PROTOCOLS: [ProtocolId; 3] = [ProtocolId::Full, ProtocolId::AOnly, ProtocolId::BOnly];

impl ProtocolId {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolId::Full => "full",
            ProtocolId::AOnly => "a",
            ProtocolId::BOnly => "b",
        }
    }

    pub fn outcome_count(self) -> usize {
        match self {
            ProtocolId::Full => 3,
            ProtocolId::AOnly | ProtocolId::BOnly => 2,
        }
    }

    /// Rejects `(AOnly, Beta)` and `(BOnly, Alpha)`.
    pub fn check_pairing(self, ineq: InequalityId) -> Result<()> {
        match (self, ineq) {
            (ProtocolId::Full, _)
            | (ProtocolId::AOnly, InequalityId::Alpha)
            | (ProtocolId::BOnly, InequalityId::Beta) => Ok(()),
            _ => Err(Error::PairingError { protocol: self.name().into(), ineq: ineq.name().into() }),
        }
    }

    /// Weight of each outcome (in measurement-set order) in the functional.
    pub fn outcome_weights(self, ineq: InequalityId) -> Result<Vec<f64>> {
        self.check_pairing(ineq)?;
        Ok(match (self, ineq) {
            (ProtocolId::Full, InequalityId::Alpha) => vec![0.5, 0.0, 0.5],
            (ProtocolId::Full, InequalityId::Beta) => vec![0.0, 1.0, 0.0],
            _ => vec![1.0, 0.0],
        })
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "1" => Ok(ProtocolId::Full),
            "a" | "aonly" | "2" => Ok(ProtocolId::AOnly),
            "b" | "bonly" | "3" => Ok(ProtocolId::BOnly),
            _ => Err(Error::InvalidConfig(format!("unknown protocol '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InequalityId {
    /// `sum_i p(a_i) <= (N-1)/2`.
    Alpha,
    /// `sum_i p(b_i) >= 1`.
    Beta,
}

impl InequalityId {
    pub fn name(self) -> &'static str {
        match self {
            InequalityId::Alpha => "alpha",
            InequalityId::Beta => "beta",
        }
    }

    pub fn bound(self, n: usize) -> f64 {
        match self {
            InequalityId::Alpha => (n as f64 - 1.0) / 2.0,
            InequalityId::Beta => 1.0,
        }
    }

    /// Signed distance past the bound; positive means violation.
    pub fn margin(self, value: f64, n: usize) -> f64 {
        match self {
            InequalityId::Alpha => value - self.bound(n),
            InequalityId::Beta => self.bound(n) - value,
        }
    }
}

impl fmt::Display for InequalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InequalityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alpha" | "a" => Ok(InequalityId::Alpha),
            "beta" | "b" => Ok(InequalityId::Beta),
            _ => Err(Error::InvalidConfig(format!("unknown inequality '{s}'"))),
        }
    }
}

/// Projectors of measurement `i`, in outcome order.
pub fn measurement_set(sc: &Scenario, protocol: ProtocolId, i: usize) -> Result<Channel> {
    if i >= sc.n() {
        return Err(Error::IndexOutOfRange { index: i, n: sc.n() });
    }
    let kraus = match protocol {
        ProtocolId::Full => {
            vec![Projector::rank_one(sc.a(i)), Projector::rank_one(sc.b(i)), Projector::rank_one(sc.a(i + 1))]
        }
        ProtocolId::AOnly => vec![Projector::rank_one(sc.a(i)), Projector::complement_of(sc.a(i))],
        ProtocolId::BOnly => vec![Projector::rank_one(sc.b(i)), Projector::complement_of(sc.b(i))],
    };
    Channel::new(kraus)
}

/// `sum_i |a_i><a_i|` or `sum_i |b_i><b_i|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalOperator {
    ineq: InequalityId,
    op: Mat3,
}

impl FunctionalOperator {
    pub fn ineq(&self) -> InequalityId {
        self.ineq
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.op
    }

    /// `(lambda_0, lambda_1)`: the doubly degenerate eigenvalue of the plane
    /// orthogonal to the handle, and the handle eigenvalue.
    pub fn sector_eigenvalues(&self) -> Result<(f64, f64)> {
        let eig = SymmetricEigen::new(self.op);
        let handle = Vec3::z();
        let mut plane = Vec::with_capacity(2);
        let mut axis = None;
        for (k, v) in eig.eigenvectors.column_iter().enumerate() {
            if v.dot(&handle).abs() > 0.5 {
                axis = Some(eig.eigenvalues[k]);
            } else {
                plane.push(eig.eigenvalues[k]);
            }
        }
        match (axis, plane.as_slice()) {
            (Some(l1), [p, q]) if (p - q).abs() <= 1e-10 => Ok(((p + q) / 2.0, l1)),
            _ => Err(Error::SymmetryBreach(format!(
                "{} operator lacks the 2+1 block spectrum: {:?}",
                self.ineq,
                eig.eigenvalues.as_slice()
            ))),
        }
    }

    /// Largest entrywise change under conjugation by the C_Nv generators.
    pub fn symmetry_defect(&self, n: usize) -> f64 {
        let (rot, refl) = c_nv_generators(n);
        let r = (rot * self.op * rot.transpose() - self.op).abs().max();
        let s = (refl * self.op * refl.transpose() - self.op).abs().max();
        r.max(s)
    }
}

/// Rotation by `2 pi / N` about the handle axis and the reflection `y -> -y`
/// that fixes `a_0`.
pub fn c_nv_generators(n: usize) -> (Mat3, Mat3) {
    let rot = Rotation3::from_axis_angle(&Vec3::z_axis(), 2.0 * std::f64::consts::PI / n as f64);
    let refl = Mat3::from_diagonal(&Vec3::new(1.0, -1.0, 1.0));
    (*rot.matrix(), refl)
}

pub fn functional_operator(sc: &Scenario, ineq: InequalityId) -> FunctionalOperator {
    let vs = match ineq {
        InequalityId::Alpha => sc.a_vectors(),
        InequalityId::Beta => sc.b_vectors(),
    };
    let op = vs.iter().map(|v| v * v.transpose()).sum();
    FunctionalOperator { ineq, op }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub violates: bool,
    pub margin: f64,
}

pub fn evaluate(value: f64, ineq: InequalityId, n: usize) -> Verdict {
    let margin = ineq.margin(value, n);
    Verdict { violates: margin > VIOLATION_EPS, margin }
}

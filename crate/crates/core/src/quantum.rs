//! Real qutrit state algebra: Born rule, Lüders updates and projective channels.

use nalgebra::{Matrix3, SMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::protocols::{measurement_set, ProtocolId};
use crate::scenario::{Scenario, Vec3};

pub type Mat3 = Matrix3<f64>;

const SYM_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const PROB_TOL: f64 = 1e-10;
const BRANCH_FLOOR: f64 = 1e-12;

/// Real symmetric, unit-trace, positive-semidefinite 3x3 state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix(Mat3);

impl DensityMatrix {
    pub fn new(m: Mat3) -> Result<Self> {
        check_state(&m)?;
        Ok(Self(m))
    }

    /// `|v><v|` for a nonzero `v` (normalized here).
    pub fn pure(v: &Vec3) -> Result<Self> {
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvariantBreach("pure state from a zero vector".into()));
        }
        let u = v / norm;
        Ok(Self(u * u.transpose()))
    }

    pub fn maximally_mixed() -> Self {
        Self(Mat3::identity() / 3.0)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `tr(op * rho)`.
    pub fn expectation(&self, op: &Mat3) -> f64 {
        op.component_mul(&self.0).sum()
    }

    pub(crate) fn from_raw(m: Mat3) -> Self {
        Self(symmetrize(&m))
    }
}

fn symmetrize(m: &Mat3) -> Mat3 {
    (m + m.transpose()) * 0.5
}

fn check_state(m: &Mat3) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvariantBreach("non-finite state entry".into()));
    }
    let asym = (m - m.transpose()).abs().max();
    if asym > SYM_TOL {
        return Err(Error::InvariantBreach(format!("state asymmetry {asym:e}")));
    }
    if (m.trace() - 1.0).abs() > TRACE_TOL {
        return Err(Error::InvariantBreach(format!("state trace {}", m.trace())));
    }
    let min_eig = SymmetricEigen::new(symmetrize(m)).eigenvalues.min();
    if min_eig < -PSD_TOL {
        return Err(Error::InvariantBreach(format!("negative eigenvalue {min_eig:e}")));
    }
    Ok(())
}

/// Orthogonal projector of rank 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projector {
    p: Mat3,
    rank: u8,
}

impl Projector {
    pub fn new(p: Mat3, rank: u8) -> Result<Self> {
        if !(1..=2).contains(&rank) {
            return Err(Error::InvariantBreach(format!("projector rank {rank}")));
        }
        let idem = (p * p - p).abs().max();
        let asym = (p - p.transpose()).abs().max();
        if idem > SYM_TOL || asym > SYM_TOL || (p.trace() - rank as f64).abs() > SYM_TOL {
            return Err(Error::InvariantBreach(format!(
                "not a rank-{rank} projector (idempotency {idem:e}, asymmetry {asym:e})"
            )));
        }
        Ok(Self { p, rank })
    }

    /// `|v><v|` for a unit vector.
    pub fn rank_one(v: &Vec3) -> Self {
        Self { p: v * v.transpose(), rank: 1 }
    }

    /// `I - |v><v|` for a unit vector.
    pub fn complement_of(v: &Vec3) -> Self {
        Self { p: Mat3::identity() - v * v.transpose(), rank: 2 }
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.p
    }

    pub fn rank(&self) -> u8 {
        self.rank
    }
}

/// Complete projective measurement, used as a Kraus list.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    kraus: Vec<Projector>,
}

impl Channel {
    pub fn new(kraus: Vec<Projector>) -> Result<Self> {
        let total: Mat3 = kraus.iter().map(|p| p.p).sum();
        let err = (total - Mat3::identity()).abs().max();
        if kraus.is_empty() || err > SYM_TOL {
            return Err(Error::InvariantBreach(format!("incomplete measurement (error {err:e})")));
        }
        Ok(Self { kraus })
    }

    pub fn projectors(&self) -> &[Projector] {
        &self.kraus
    }

    pub fn len(&self) -> usize {
        self.kraus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kraus.is_empty()
    }

    fn apply_raw(&self, m: &Mat3) -> Mat3 {
        self.kraus.iter().map(|k| k.p * m * k.p).sum()
    }
}

/// `tr(P rho)`, clamped into `[0, 1]` when roundoff pushes it just outside.
pub fn born_probability(state: &DensityMatrix, proj: &Projector) -> Result<f64> {
    let p = state.expectation(&proj.p);
    if !(-PROB_TOL..=1.0 + PROB_TOL).contains(&p) {
        return Err(Error::InvariantBreach(format!("Born probability {p}")));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// `P rho P / tr(P rho P)`.
pub fn luders_update(state: &DensityMatrix, proj: &Projector) -> Result<DensityMatrix> {
    let p = born_probability(state, proj)?;
    if p <= BRANCH_FLOOR {
        return Err(Error::ZeroProbabilityBranch(p));
    }
    let out = proj.p * state.0 * proj.p;
    Ok(DensityMatrix::from_raw(out / out.trace()))
}

/// Non-selective update `sum_P P rho P`.
pub fn apply_channel(state: &DensityMatrix, ch: &Channel) -> DensityMatrix {
    DensityMatrix::from_raw(ch.apply_raw(&state.0))
}

/// Uniform mixture of a protocol's N measurements:
/// `rho -> (1/N) sum_i sum_P P rho P`.
///
/// Every Kraus operator is a self-adjoint projector, so the map is its own
/// Heisenberg-picture adjoint.
#[derive(Debug, Clone)]
pub struct AverageChannel {
    protocol: ProtocolId,
    channels: Vec<Channel>,
}

impl AverageChannel {
    pub fn protocol(&self) -> ProtocolId {
        self.protocol
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn apply(&self, state: &DensityMatrix) -> DensityMatrix {
        DensityMatrix::from_raw(self.apply_matrix(&state.0))
    }

    /// The map on arbitrary (not necessarily normalized) symmetric matrices.
    pub fn apply_matrix(&self, m: &Mat3) -> Mat3 {
        let n = self.channels.len() as f64;
        self.channels.iter().map(|c| c.apply_raw(m)).sum::<Mat3>() / n
    }

    /// Heisenberg picture: `tr(F Lambda(rho)) = tr(adjoint(F) rho)`.
    pub fn adjoint(&self, observable: &Mat3) -> Mat3 {
        self.apply_matrix(observable)
    }

    /// `Lambda^k(rho)`.
    pub fn iterate(&self, state: &DensityMatrix, k: usize) -> DensityMatrix {
        let mut m = state.0;
        for _ in 0..k {
            m = symmetrize(&self.apply_matrix(&m));
        }
        DensityMatrix(m)
    }

    /// 9x9 matrix acting on column-major vectorized 3x3 matrices.
    pub fn superoperator(&self) -> SMatrix<f64, 9, 9> {
        let mut s = SMatrix::<f64, 9, 9>::zeros();
        for col in 0..9 {
            let mut e = Mat3::zeros();
            e[col] = 1.0;
            let img = self.apply_matrix(&e);
            for row in 0..9 {
                s[(row, col)] = img[row];
            }
        }
        s
    }
}

pub fn average_protocol_channel(sc: &Scenario, protocol: ProtocolId) -> AverageChannel {
    let channels =
        (0..sc.n()).map(|i| measurement_set(sc, protocol, i).expect("index within range")).collect();
    AverageChannel { protocol, channels }
}

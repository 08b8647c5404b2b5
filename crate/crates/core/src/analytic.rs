//! Exact per-player values of the sequential game.
//!
//! Three routes produce the value seen by player `k`:
//! - protocol 1: the aggregated outcome vector `sum_i P_i` evolves under the
//!   bistochastic matrix `M_N`, fully fixed by the single scalar `t_N`;
//! - protocols 2/3: the value obeys an affine recurrence whose slope and
//!   offset come from the Heisenberg image of the functional operator;
//! - any protocol: `tr(F Lambda^{k-1}(rho))` by direct channel iteration.
//!
//! All three converge geometrically to `N/3`, the value on the maximally
//! mixed state.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::protocols::{
    evaluate, functional_operator, measurement_set, InequalityId, ProtocolId, VIOLATION_EPS,
};
use crate::quantum::{average_protocol_channel, born_probability, AverageChannel, DensityMatrix, Mat3};
use crate::scenario::{build_scenario, Scenario, Vec3};

/// Longest sequence scanned when deciding a `K_max`.
pub const KMAX_CAP: usize = 10_000;

const STRUCTURE_TOL: f64 = 1e-10;
const SETTLED_TOL: f64 = 1e-12;

/// `N/3`, the common limit of every sequence.
pub fn asymptote(n: usize) -> f64 {
    n as f64 / 3.0
}

/// Outcome probabilities of one context, or their sum over all contexts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbVector3(Vector3<f64>);

impl ProbVector3 {
    pub fn new(p: [f64; 3]) -> Result<Self> {
        if p.iter().any(|x| !x.is_finite() || *x < -STRUCTURE_TOL) {
            return Err(Error::InvariantBreach(format!("negative probability in {p:?}")));
        }
        Ok(Self(Vector3::from(p)))
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.sum()
    }

    pub fn dot(&self, w: &[f64; 3]) -> f64 {
        self.0.dot(&Vector3::from(*w))
    }
}

/// `sum_i P_i` over the N contexts of protocol 1 on `state`.
pub fn aggregate_probabilities(sc: &Scenario, state: &DensityMatrix) -> Result<ProbVector3> {
    let mut total = Vector3::<f64>::zeros();
    for i in 0..sc.n() {
        let ctx = measurement_set(sc, ProtocolId::Full, i)?;
        for (slot, proj) in ctx.projectors().iter().enumerate() {
            total[slot] += born_probability(state, proj)?;
        }
    }
    if (total.sum() - sc.n() as f64).abs() > STRUCTURE_TOL {
        return Err(Error::InvariantBreach(format!(
            "aggregate probabilities sum to {} instead of {}",
            total.sum(),
            sc.n()
        )));
    }
    Ok(ProbVector3(total))
}

/// `t_N = (1/N) sum_i <a_0, a_i>^2`.
pub fn t_coefficient(n: usize) -> Result<f64> {
    let sc = build_scenario(n)?;
    Ok(t_from_scenario(&sc))
}

fn t_from_scenario(sc: &Scenario) -> f64 {
    let a0 = sc.a(0);
    sc.a_vectors().iter().map(|v| a0.dot(v).powi(2)).sum::<f64>() / sc.n() as f64
}

/// Protocol-1 values also obey an affine map, with `(slope, offset) =
/// (6 t_N - 2, N (1 - 2 t_N))` for either inequality.
pub fn protocol1_affine(n: usize) -> Result<(f64, f64)> {
    let t = t_coefficient(n)?;
    Ok((6.0 * t - 2.0, n as f64 * (1.0 - 2.0 * t)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovMatrix {
    t: f64,
    m: Mat3,
}

impl MarkovMatrix {
    /// `[[t, 1-2t, t], [1-2t, 4t-1, 1-2t], [t, 1-2t, t]]`.
    pub fn from_t(t: f64) -> Self {
        let u = 1.0 - 2.0 * t;
        let m = Mat3::new(t, u, t, u, 4.0 * t - 1.0, u, t, u, t);
        Self { t, m }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.m
    }

    pub fn apply(&self, p: &ProbVector3) -> ProbVector3 {
        ProbVector3(self.m * p.0)
    }

    /// Largest deviation of a row or column sum from 1.
    pub fn bistochastic_defect(&self) -> f64 {
        let rows = (0..3).map(|r| (self.m.row(r).sum() - 1.0).abs());
        let cols = (0..3).map(|c| (self.m.column(c).sum() - 1.0).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

/// `(1/N) sum_{i_k} M_{i_k, i_{k-1}}` assembled from squared overlaps between
/// the outcome vectors of context `i_{k-1} = 0` (columns) and every context
/// `i_k` (rows).
pub fn markov_from_overlaps(sc: &Scenario) -> Mat3 {
    let context = |i: usize| [*sc.a(i), *sc.b(i), *sc.a(i + 1)];
    let previous = context(0);
    let mut m = Mat3::zeros();
    for i in 0..sc.n() {
        for (r, o) in context(i).iter().enumerate() {
            for (c, p) in previous.iter().enumerate() {
                m[(r, c)] += o.dot(p).powi(2);
            }
        }
    }
    m / sc.n() as f64
}

/// Builds `M_N` from `t_N` and checks it against the overlap construction.
pub fn markov_matrix(n: usize) -> Result<MarkovMatrix> {
    let sc = build_scenario(n)?;
    markov_for(&sc)
}

fn markov_for(sc: &Scenario) -> Result<MarkovMatrix> {
    let mm = MarkovMatrix::from_t(t_from_scenario(sc));
    let gap = (markov_from_overlaps(sc) - mm.m).abs().max();
    if gap > STRUCTURE_TOL {
        return Err(Error::SymmetryBreach(format!(
            "t-pattern and overlap construction of M_{} differ by {gap:e}",
            sc.n()
        )));
    }
    Ok(mm)
}

/// How a sequence is (re)generated; lets `K_max` scans run past the
/// requested length.
#[derive(Debug, Clone)]
enum Generator {
    Markov { m: Mat3, first: Vector3<f64>, weights: Vector3<f64> },
    Affine { slope: f64, offset: f64, first: f64 },
    Channel { lambda: AverageChannel, op: Mat3, state: Mat3 },
}

impl Generator {
    fn stream(&self) -> ValueStream<'_> {
        let cursor = match self {
            Generator::Markov { first, .. } => Cursor::Vector(*first),
            Generator::Affine { first, .. } => Cursor::Scalar(*first),
            Generator::Channel { state, .. } => Cursor::Matrix(*state),
        };
        ValueStream { gen: self, cursor }
    }
}

enum Cursor {
    Vector(Vector3<f64>),
    Scalar(f64),
    Matrix(Mat3),
}

struct ValueStream<'a> {
    gen: &'a Generator,
    cursor: Cursor,
}

impl Iterator for ValueStream<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let value = match (self.gen, &mut self.cursor) {
            (Generator::Markov { m, weights, .. }, Cursor::Vector(p)) => {
                let v = weights.dot(p);
                *p = m * *p;
                v
            }
            (Generator::Affine { slope, offset, .. }, Cursor::Scalar(x)) => {
                let v = *x;
                *x = slope * *x + offset;
                v
            }
            (Generator::Channel { lambda, op, .. }, Cursor::Matrix(rho)) => {
                let v = op.component_mul(rho).sum();
                *rho = lambda.apply_matrix(rho);
                v
            }
            _ => unreachable!("cursor always matches its generator"),
        };
        Some(value)
    }
}

/// Per-player values `k = 1..=K` with verdicts and both `K_max` variants.
#[derive(Debug, Clone)]
pub struct SequenceResult {
    pub n: usize,
    pub protocol: ProtocolId,
    pub ineq: InequalityId,
    /// `values[k-1]` is the value for player `k`.
    pub values: Vec<f64>,
    pub verdicts: Vec<bool>,
    /// Largest `k` whose own value violates (fixed order).
    pub kmax_fixed: usize,
    /// Largest `K` whose running mean violates (uniformly random order).
    pub kmax_uniform: usize,
    pub asymptote: f64,
    generator: Generator,
}

impl SequenceResult {
    fn build(
        n: usize,
        protocol: ProtocolId,
        ineq: InequalityId,
        k_max: usize,
        generator: Generator,
    ) -> Result<Self> {
        if k_max == 0 {
            return Err(Error::InvalidConfig("k_max must be at least 1".into()));
        }
        let values: Vec<f64> = generator.stream().take(k_max).collect();
        let verdicts = values.iter().map(|v| evaluate(*v, ineq, n).violates).collect();
        let mut seq = SequenceResult {
            n,
            protocol,
            ineq,
            values,
            verdicts,
            kmax_fixed: 0,
            kmax_uniform: 0,
            asymptote: asymptote(n),
            generator,
        };
        seq.kmax_fixed = scan_kmax(&seq, false)?;
        seq.kmax_uniform = scan_kmax(&seq, true)?;
        Ok(seq)
    }

    /// Values for players `1..=len`, regenerated past the stored length if needed.
    pub fn extended_values(&self, len: usize) -> Vec<f64> {
        self.generator.stream().take(len).collect()
    }

    /// Running means `(1/K) sum_{k<=K} values[k]` for `K = 1..=len`.
    pub fn running_means(&self, len: usize) -> Vec<f64> {
        let mut sum = 0.0;
        self.generator
            .stream()
            .take(len)
            .enumerate()
            .map(|(i, v)| {
                sum += v;
                sum / (i + 1) as f64
            })
            .collect()
    }
}

/// Largest index whose value (or running mean) violates. Stops once the
/// statistic is non-violating and the geometric envelope
/// `|v_j - N/3| <= |v_k - N/3|` keeps every later value on the safe side.
fn scan_kmax(seq: &SequenceResult, averaged: bool) -> Result<usize> {
    let (n, ineq) = (seq.n, seq.ineq);
    let limit = asymptote(n);
    let toward_violation = match ineq {
        InequalityId::Alpha => 1.0,
        InequalityId::Beta => -1.0,
    };
    let mut last = 0;
    let mut sum = 0.0;
    for (idx, v) in seq.generator.stream().take(KMAX_CAP).enumerate() {
        let k = idx + 1;
        sum += v;
        let stat = if averaged { sum / k as f64 } else { v };
        if evaluate(stat, ineq, n).violates {
            last = k;
            continue;
        }
        let spread = (v - limit).abs();
        let worst_future = ineq.margin(limit + toward_violation * spread, n);
        if spread <= SETTLED_TOL || worst_future <= VIOLATION_EPS {
            return Ok(last);
        }
    }
    Err(Error::NoConvergence(KMAX_CAP))
}

/// Largest environment size whose position-averaged value still violates.
pub fn kmax_uniform(seq: &SequenceResult) -> Result<usize> {
    scan_kmax(seq, true)
}

/// Largest player index whose own value still violates.
pub fn kmax_fixed(seq: &SequenceResult) -> Result<usize> {
    scan_kmax(seq, false)
}

fn outcome_weights(ineq: InequalityId) -> Vector3<f64> {
    match ineq {
        InequalityId::Alpha => Vector3::new(0.5, 0.0, 0.5),
        InequalityId::Beta => Vector3::new(0.0, 1.0, 0.0),
    }
}

/// Protocol 1 via `sum_i P_{i_k} = M_N^{k-1} sum_i P_{i_1}`.
pub fn protocol1_sequence(
    sc: &Scenario,
    ineq: InequalityId,
    initial: &DensityMatrix,
    k_max: usize,
) -> Result<SequenceResult> {
    let mm = markov_for(sc)?;
    let first = aggregate_probabilities(sc, initial)?;
    let gen = Generator::Markov { m: mm.m, first: first.0, weights: outcome_weights(ineq) };
    SequenceResult::build(sc.n(), ProtocolId::Full, ineq, k_max, gen)
}

/// Affine map `value_k = slope * value_{k-1} + offset` of protocols 2 and 3,
/// together with the Schur-sector eigenvalues of the functional operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecurrenceCoeffs {
    pub protocol: ProtocolId,
    pub ineq: InequalityId,
    pub slope: f64,
    pub offset: f64,
    /// Doubly degenerate eigenvalue (plane orthogonal to the handle).
    pub lambda0: f64,
    /// Handle-axis eigenvalue.
    pub lambda1: f64,
}

impl RecurrenceCoeffs {
    pub fn fixed_point(&self) -> f64 {
        self.offset / (1.0 - self.slope)
    }
}

/// Closed forms `z = (2 l0^2 + l1^2)/N`, `u = N + z - 2(l0 + l1)`,
/// slope `(z + u)/N` and offset `2 l0 l1 / N`.
pub fn closed_form_recurrence(n: usize, lambda0: f64, lambda1: f64) -> (f64, f64) {
    let nf = n as f64;
    let z = (2.0 * lambda0 * lambda0 + lambda1 * lambda1) / nf;
    let u = nf + z - 2.0 * (lambda0 + lambda1);
    ((z + u) / nf, 2.0 * lambda0 * lambda1 / nf)
}

/// Reads slope and offset off `Lambda^dagger(F) = slope F + offset I`,
/// sector by sector, then checks the residual and the closed forms.
pub fn extract_recurrence(
    sc: &Scenario,
    protocol: ProtocolId,
    ineq: InequalityId,
) -> Result<RecurrenceCoeffs> {
    match (protocol, ineq) {
        (ProtocolId::AOnly, InequalityId::Alpha) | (ProtocolId::BOnly, InequalityId::Beta) => {}
        _ => return Err(Error::PairingError { protocol: protocol.name().into(), ineq: ineq.name().into() }),
    }
    let f = functional_operator(sc, ineq);
    let (lambda0, lambda1) = f.sector_eigenvalues()?;
    let lambda = average_protocol_channel(sc, protocol);
    let image = lambda.adjoint(f.matrix());

    let axis = Vec3::z();
    let plane = Vec3::x();
    let g1 = axis.dot(&(image * axis));
    let g0 = plane.dot(&(image * plane));
    let slope = (g0 - g1) / (lambda0 - lambda1);
    let offset = g0 - slope * lambda0;

    let residual = (image - f.matrix() * slope - Mat3::identity() * offset).abs().max();
    if residual > STRUCTURE_TOL {
        return Err(Error::DecompositionFailure { residual });
    }
    let (cf_slope, cf_offset) = closed_form_recurrence(sc.n(), lambda0, lambda1);
    if (cf_slope - slope).abs() > STRUCTURE_TOL || (cf_offset - offset).abs() > STRUCTURE_TOL {
        return Err(Error::InvariantBreach(format!(
            "closed-form recurrence ({cf_slope}, {cf_offset}) disagrees with channel ({slope}, {offset})"
        )));
    }
    Ok(RecurrenceCoeffs { protocol, ineq, slope, offset, lambda0, lambda1 })
}

pub fn recurrence_sequence(
    sc: &Scenario,
    protocol: ProtocolId,
    ineq: InequalityId,
    initial: &DensityMatrix,
    k_max: usize,
) -> Result<SequenceResult> {
    let rc = extract_recurrence(sc, protocol, ineq)?;
    let first = initial.expectation(functional_operator(sc, ineq).matrix());
    let gen = Generator::Affine { slope: rc.slope, offset: rc.offset, first };
    SequenceResult::build(sc.n(), protocol, ineq, k_max, gen)
}

/// `tr(F Lambda^{k-1}(rho))` by iterating the averaged channel.
pub fn channel_sequence(
    sc: &Scenario,
    protocol: ProtocolId,
    ineq: InequalityId,
    initial: &DensityMatrix,
    k_max: usize,
) -> Result<SequenceResult> {
    protocol.check_pairing(ineq)?;
    let gen = Generator::Channel {
        lambda: average_protocol_channel(sc, protocol),
        op: *functional_operator(sc, ineq).matrix(),
        state: *initial.matrix(),
    };
    SequenceResult::build(sc.n(), protocol, ineq, k_max, gen)
}

/// Markov route for protocol 1, recurrence route for protocols 2/3.
pub fn sequence(
    sc: &Scenario,
    protocol: ProtocolId,
    ineq: InequalityId,
    initial: &DensityMatrix,
    k_max: usize,
) -> Result<SequenceResult> {
    match protocol {
        ProtocolId::Full => protocol1_sequence(sc, ineq, initial, k_max),
        _ => recurrence_sequence(sc, protocol, ineq, initial, k_max),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KmaxTriple {
    pub full: usize,
    pub a: usize,
    pub b: usize,
}

/// One `K_max` row: fixed order and uniformly random order, each for
/// protocol 1 (max over both inequalities), `(a, alpha)` and `(b, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Table1Row {
    pub n: usize,
    pub fixed: KmaxTriple,
    pub uniform: KmaxTriple,
    /// Protocol-1 `(fixed, uniform)` for alpha and beta separately.
    #[serde(skip)]
    pub full_by_ineq: [(usize, usize); 2],
}

impl Table1Row {
    pub fn columns(&self) -> [usize; 6] {
        [self.fixed.full, self.fixed.a, self.fixed.b, self.uniform.full, self.uniform.a, self.uniform.b]
    }

    /// True when the alpha and beta protocol-1 columns disagree.
    pub fn full_columns_disagree(&self) -> bool {
        self.full_by_ineq[0] != self.full_by_ineq[1]
    }
}

pub fn table1_row(n: usize) -> Result<Table1Row> {
    let sc = build_scenario(n)?;
    let handle = DensityMatrix::pure(sc.handle())?;
    let full_alpha = protocol1_sequence(&sc, InequalityId::Alpha, &handle, 1)?;
    let full_beta = protocol1_sequence(&sc, InequalityId::Beta, &handle, 1)?;
    let a = recurrence_sequence(&sc, ProtocolId::AOnly, InequalityId::Alpha, &handle, 1)?;
    let b = recurrence_sequence(&sc, ProtocolId::BOnly, InequalityId::Beta, &handle, 1)?;
    Ok(Table1Row {
        n,
        fixed: KmaxTriple {
            full: full_alpha.kmax_fixed.max(full_beta.kmax_fixed),
            a: a.kmax_fixed,
            b: b.kmax_fixed,
        },
        uniform: KmaxTriple {
            full: full_alpha.kmax_uniform.max(full_beta.kmax_uniform),
            a: a.kmax_uniform,
            b: b.kmax_uniform,
        },
        full_by_ineq: [
            (full_alpha.kmax_fixed, full_alpha.kmax_uniform),
            (full_beta.kmax_fixed, full_beta.kmax_uniform),
        ],
    })
}

pub fn table1(n_list: &[usize]) -> Result<Vec<Table1Row>> {
    n_list.par_iter().map(|&n| table1_row(n)).collect()
}

/// Players compared in [`optimal_initial_state_check`].
pub const OPTIMALITY_DEPTH: usize = 30;
const OPTIMALITY_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalityReport {
    pub pass: bool,
    pub trials: usize,
    /// Smallest advantage of the handle state over any trial state at any `k`
    /// (negative means a trial state did better).
    pub worst_margin: f64,
    pub worst_trial: usize,
    pub worst_k: usize,
}

/// Uniformly random pure state: three standard normals, normalized.
pub fn random_pure_state<R: rand::Rng + ?Sized>(rng: &mut R) -> DensityMatrix {
    loop {
        let v = Vec3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng));
        if v.norm() > 1e-9 {
            return DensityMatrix::pure(&v).expect("nonzero vector");
        }
    }
}

/// Checks that the handle state is at least as good as `trials` random pure
/// states for every player `k <= 30`.
pub fn optimal_initial_state_check(
    sc: &Scenario,
    protocol: ProtocolId,
    ineq: InequalityId,
    trials: usize,
    seed: u64,
) -> Result<OptimalityReport> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<DensityMatrix> = (0..trials).map(|_| random_pure_state(&mut rng)).collect();
    compare_against_handle(sc, protocol, ineq, &states)
}

/// [`optimal_initial_state_check`] over caller-supplied trial states.
pub fn compare_against_handle(
    sc: &Scenario,
    protocol: ProtocolId,
    ineq: InequalityId,
    states: &[DensityMatrix],
) -> Result<OptimalityReport> {
    let handle = DensityMatrix::pure(sc.handle())?;
    let reference = sequence(sc, protocol, ineq, &handle, OPTIMALITY_DEPTH)?.values;
    let mut report = OptimalityReport {
        pass: true,
        trials: states.len(),
        worst_margin: f64::INFINITY,
        worst_trial: 0,
        worst_k: 0,
    };
    for (t, state) in states.iter().enumerate() {
        let values = sequence(sc, protocol, ineq, state, OPTIMALITY_DEPTH)?.values;
        for (k, (h, v)) in reference.iter().zip(&values).enumerate() {
            let advantage = match ineq {
                InequalityId::Alpha => h - v,
                InequalityId::Beta => v - h,
            };
            if advantage < report.worst_margin {
                report.worst_margin = advantage;
                report.worst_trial = t;
                report.worst_k = k + 1;
            }
        }
    }
    report.pass = report.worst_margin >= -OPTIMALITY_SLACK;
    Ok(report)
}

//! Stochastic play of the sequential game.
//!
//! Each run prepares the initial state and lets `K` players measure it in
//! turn; every player picks one of the N measurements uniformly, an outcome
//! is sampled from the Born rule and the state collapses by the Lüders rule.
//! Runs only touch their own RNG streams, so tallies are integer counts that
//! merge by addition and do not depend on how runs are split across workers.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analytic::sequence;
use crate::error::{Error, Result};
use crate::protocols::{measurement_set, InequalityId, ProtocolId};
use crate::quantum::{born_probability, luders_update, Channel, DensityMatrix};
use crate::scenario::{build_scenario, Scenario};

/// Minimum number of runs accepted by [`estimate_sequence`].
pub const MIN_RUNS: u64 = 100;
/// Comparisons pass when every `|z|` stays below this.
pub const Z_THRESHOLD: f64 = 4.0;

pub const RNG_FAMILY: &str = "ChaCha8Rng (rand_chacha 0.9), seeded with seed_from_u64(seed)";
pub const STREAM_DERIVATION: &str =
    "stream_id = splitmix64(splitmix64(run_index) ^ slot); slot 0 draws the ordering, slot j draws the player at position j";

const RUNS_PER_CHUNK: u64 = 2048;
const OUTCOME_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    /// Player `k` always measures `k`-th.
    #[serde(rename = "fixed")]
    FixedOrder,
    /// A fresh uniform permutation of the players every run.
    #[serde(rename = "random")]
    RandomPermutation,
}

impl fmt::Display for Ordering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ordering::FixedOrder => "fixed",
            Ordering::RandomPermutation => "random",
        })
    }
}

impl FromStr for Ordering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" | "fixed-order" => Ok(Ordering::FixedOrder),
            "random" | "random-permutation" | "uniform" => Ok(Ordering::RandomPermutation),
            _ => Err(Error::InvalidConfig(format!("unknown ordering '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameConfig {
    pub n: usize,
    pub protocol: ProtocolId,
    pub ineq: InequalityId,
    /// Number of players `K`.
    pub players: usize,
    /// Number of runs `R`.
    pub runs: u64,
    pub seed: u64,
    pub ordering: Ordering,
    /// `None` means the handle state.
    pub initial_state: Option<DensityMatrix>,
}

impl GameConfig {
    pub fn new(
        n: usize,
        protocol: ProtocolId,
        ineq: InequalityId,
        players: usize,
        runs: u64,
        seed: u64,
    ) -> Self {
        Self { n, protocol, ineq, players, runs, seed, ordering: Ordering::FixedOrder, initial_state: None }
    }

    pub fn with_ordering(mut self, ordering: Ordering) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn with_initial_state(mut self, state: DensityMatrix) -> Self {
        self.initial_state = Some(state);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.players == 0 {
            return Err(Error::InvalidConfig("players must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        self.protocol.check_pairing(self.ineq)?;
        build_scenario(self.n).map(|_| ())
    }

    fn echo(&self) -> Value {
        let initial = match &self.initial_state {
            None => json!("handle"),
            Some(rho) => {
                let m = rho.matrix();
                json!((0..3).map(|r| (0..3).map(|c| m[(r, c)]).collect::<Vec<_>>()).collect::<Vec<_>>())
            }
        };
        json!({
            "n": self.n,
            "protocol": self.protocol,
            "ineq": self.ineq,
            "players": self.players,
            "runs": self.runs,
            "seed": self.seed,
            "ordering": self.ordering,
            "initial_state": initial,
        })
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// One independent ChaCha stream under a shared seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn for_slot(seed: u64, run_index: u64, slot: u64) -> Self {
        Self { seed, stream_id: splitmix64(splitmix64(run_index) ^ slot) }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PlayerRecord {
    /// 1-based time slot at which this player measured.
    pub position: usize,
    pub choice: usize,
    /// Index into the measurement set (`0` is `a_i` / `b_i`).
    pub outcome: usize,
}

/// One run; `players[p]` belongs to player `p + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunRecord {
    pub run_index: u64,
    pub players: Vec<PlayerRecord>,
}

/// A validated configuration with its measurement sets precomputed.
#[derive(Debug, Clone)]
pub struct Game {
    cfg: GameConfig,
    scenario: Scenario,
    sets: Vec<Channel>,
    initial: DensityMatrix,
    weights: Vec<f64>,
}

impl Game {
    pub fn new(cfg: &GameConfig) -> Result<Self> {
        cfg.validate()?;
        let scenario = build_scenario(cfg.n)?;
        let sets =
            (0..cfg.n).map(|i| measurement_set(&scenario, cfg.protocol, i)).collect::<Result<Vec<_>>>()?;
        let initial = match cfg.initial_state {
            Some(rho) => rho,
            None => DensityMatrix::pure(scenario.handle())?,
        };
        let weights = cfg.protocol.outcome_weights(cfg.ineq)?;
        Ok(Self { cfg: cfg.clone(), scenario, sets, initial, weights })
    }

    pub fn config(&self) -> &GameConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn simulate_run(&self, run_index: u64) -> Result<RunRecord> {
        let k = self.cfg.players;
        let mut turn_order: Vec<usize> = (0..k).collect();
        if self.cfg.ordering == Ordering::RandomPermutation {
            let mut rng = RngStream::for_slot(self.cfg.seed, run_index, 0).rng();
            turn_order.shuffle(&mut rng);
        }
        let mut state = self.initial;
        let mut players = vec![PlayerRecord { position: 0, choice: 0, outcome: 0 }; k];
        for (slot, &player) in turn_order.iter().enumerate() {
            let position = slot + 1;
            let mut rng = RngStream::for_slot(self.cfg.seed, run_index, position as u64).rng();
            let choice = rng.random_range(0..self.cfg.n);
            let set = &self.sets[choice];
            let outcome = sample_outcome(&state, set, rng.random::<f64>())?;
            state = luders_update(&state, &set.projectors()[outcome])?;
            players[player] = PlayerRecord { position, choice, outcome };
        }
        Ok(RunRecord { run_index, players })
    }

    fn tally_range(&self, runs: std::ops::Range<u64>) -> Result<Tally> {
        let mut tally = Tally::new(self.cfg.players, self.cfg.n, self.cfg.protocol.outcome_count());
        for r in runs {
            tally.record(&self.simulate_run(r)?);
        }
        Ok(tally)
    }

    /// Tallies over all runs, chunked across the rayon pool.
    pub fn tally(&self) -> Result<Tally> {
        let runs = self.cfg.runs;
        let chunks = runs.div_ceil(RUNS_PER_CHUNK);
        (0..chunks)
            .into_par_iter()
            .map(|c| self.tally_range(c * RUNS_PER_CHUNK..((c + 1) * RUNS_PER_CHUNK).min(runs)))
            .try_reduce(
                || Tally::new(self.cfg.players, self.cfg.n, self.cfg.protocol.outcome_count()),
                |a, b| Ok(a.merge(&b)),
            )
    }

    /// Tallies with runs split into `workers` contiguous ranges, one OS thread each.
    pub fn tally_partitioned(&self, workers: usize) -> Result<Tally> {
        let workers = workers.max(1) as u64;
        let runs = self.cfg.runs;
        let bounds: Vec<(u64, u64)> =
            (0..workers).map(|w| (runs * w / workers, runs * (w + 1) / workers)).collect();
        let parts: Vec<Result<Tally>> = std::thread::scope(|s| {
            let handles: Vec<_> =
                bounds.iter().map(|&(lo, hi)| s.spawn(move || self.tally_range(lo..hi))).collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        let mut total = Tally::new(self.cfg.players, self.cfg.n, self.cfg.protocol.outcome_count());
        for part in parts {
            total = total.merge(&part?);
        }
        Ok(total)
    }

    pub fn estimate(&self, tally: &Tally) -> SimulationEstimate {
        let runs = tally.runs;
        let nf = self.cfg.n as f64;
        let positions = (0..self.cfg.players)
            .map(|p| {
                let (mean, se) = jackknife_mean(tally, p, &self.weights);
                PositionEstimate { k: p + 1, estimate: nf * mean, stderr: nf * se }
            })
            .collect();
        SimulationEstimate { positions, counts: tally.clone(), runs_used: runs }
    }
}

/// Inverse CDF over the ordered projector list; outcomes below the
/// probability floor are never selected.
fn sample_outcome(state: &DensityMatrix, set: &Channel, u: f64) -> Result<usize> {
    let mut cumulative = 0.0;
    let mut last_possible = None;
    for (o, proj) in set.projectors().iter().enumerate() {
        let p = born_probability(state, proj)?;
        if p <= OUTCOME_FLOOR {
            continue;
        }
        cumulative += p;
        last_possible = Some(o);
        if u < cumulative {
            return Ok(o);
        }
    }
    last_possible.ok_or_else(|| Error::InvariantBreach("measurement with no possible outcome".into()))
}

/// `counts[player][choice][outcome]` across a set of runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub players: usize,
    pub choices: usize,
    pub outcomes: usize,
    pub runs: u64,
    counts: Vec<u64>,
}

impl Tally {
    pub fn new(players: usize, choices: usize, outcomes: usize) -> Self {
        Self { players, choices, outcomes, runs: 0, counts: vec![0; players * choices * outcomes] }
    }

    fn index(&self, player: usize, choice: usize, outcome: usize) -> usize {
        (player * self.choices + choice) * self.outcomes + outcome
    }

    pub fn count(&self, player: usize, choice: usize, outcome: usize) -> u64 {
        self.counts[self.index(player, choice, outcome)]
    }

    pub fn record(&mut self, run: &RunRecord) {
        for (p, rec) in run.players.iter().enumerate() {
            let i = self.index(p, rec.choice, rec.outcome);
            self.counts[i] += 1;
        }
        self.runs += 1;
    }

    pub fn merge(mut self, other: &Tally) -> Tally {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.runs += other.runs;
        self
    }

    /// `[player][choice][outcome]` nesting for serialization.
    pub fn nested(&self) -> Vec<Vec<Vec<u64>>> {
        (0..self.players)
            .map(|p| {
                (0..self.choices).map(|c| (0..self.outcomes).map(|o| self.count(p, c, o)).collect()).collect()
            })
            .collect()
    }
}

/// Mean of the per-run indicator contraction for one player and its
/// leave-one-out jackknife standard error, grouped by tally cell.
fn jackknife_mean(tally: &Tally, player: usize, weights: &[f64]) -> (f64, f64) {
    let r = tally.runs as f64;
    let mut sum = 0.0;
    for c in 0..tally.choices {
        for (o, w) in weights.iter().enumerate() {
            sum += *w * tally.count(player, c, o) as f64;
        }
    }
    let mean = sum / r;
    if tally.runs < 2 {
        return (mean, f64::NAN);
    }
    // theta_(i) = (S - x_i)/(R - 1); their average is the full-sample mean.
    let mut ss = 0.0;
    for c in 0..tally.choices {
        for (o, w) in weights.iter().enumerate() {
            let loo = (sum - w) / (r - 1.0);
            ss += tally.count(player, c, o) as f64 * (loo - mean).powi(2);
        }
    }
    (mean, ((r - 1.0) / r * ss).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PositionEstimate {
    /// Player index (equal to the measuring position in fixed order).
    pub k: usize,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationEstimate {
    pub positions: Vec<PositionEstimate>,
    pub counts: Tally,
    pub runs_used: u64,
}

impl SimulationEstimate {
    /// Average of the per-player estimates.
    pub fn pooled(&self) -> f64 {
        self.positions.iter().map(|p| p.estimate).sum::<f64>() / self.positions.len() as f64
    }

    /// `{"config", "rng", "positions", "counts"}` plus an optional comparison.
    pub fn to_json(&self, cfg: &GameConfig, comparison: Option<&ComparisonReport>) -> Value {
        let outcome_labels: &[&str] = match cfg.protocol {
            ProtocolId::Full => &["a_i", "b_i", "a_i+1"],
            ProtocolId::AOnly => &["a_i", "not a_i"],
            ProtocolId::BOnly => &["b_i", "not b_i"],
        };
        let mut out = json!({
            "config": cfg.echo(),
            "rng": {
                "family": RNG_FAMILY,
                "seed": cfg.seed,
                "stream_derivation": STREAM_DERIVATION,
            },
            "positions": self.positions,
            "counts": {
                "layout": "player -> choice -> outcome",
                "outcomes": outcome_labels,
                "runs": self.runs_used,
                "tallies": self.counts.nested(),
            },
        });
        if let Some(cmp) = comparison {
            out["comparison"] = json!(cmp);
            out["pass"] = json!(cmp.pass);
        }
        out
    }
}

/// Runs every configured run and estimates each player's value.
pub fn estimate_sequence(cfg: &GameConfig) -> Result<SimulationEstimate> {
    let game = checked_game(cfg)?;
    let tally = game.tally()?;
    Ok(game.estimate(&tally))
}

/// [`estimate_sequence`] with runs split over `workers` threads.
pub fn estimate_sequence_partitioned(cfg: &GameConfig, workers: usize) -> Result<SimulationEstimate> {
    let game = checked_game(cfg)?;
    let tally = game.tally_partitioned(workers)?;
    Ok(game.estimate(&tally))
}

fn checked_game(cfg: &GameConfig) -> Result<Game> {
    if cfg.runs < MIN_RUNS {
        return Err(Error::InsufficientRuns { runs: cfg.runs, floor: MIN_RUNS });
    }
    Game::new(cfg)
}

pub fn simulate_run(cfg: &GameConfig, run_index: u64) -> Result<RunRecord> {
    Game::new(cfg)?.simulate_run(run_index)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub k: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub analytic: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub max_abs_z: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Exact target per player: `values[k]` in fixed order, and the running
/// mean over all `K` positions under a random permutation.
pub fn analytic_targets(cfg: &GameConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let sc = build_scenario(cfg.n)?;
    let initial = match cfg.initial_state {
        Some(rho) => rho,
        None => DensityMatrix::pure(sc.handle())?,
    };
    let values = sequence(&sc, cfg.protocol, cfg.ineq, &initial, cfg.players)?.values;
    Ok(match cfg.ordering {
        Ordering::FixedOrder => values,
        Ordering::RandomPermutation => {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            vec![mean; values.len()]
        }
    })
}

/// z-scores of the estimates against `targets`; passes when all `|z| < 4`.
pub fn compare_estimate(est: &SimulationEstimate, targets: &[f64]) -> ComparisonReport {
    let rows: Vec<ComparisonRow> = est
        .positions
        .iter()
        .zip(targets)
        .map(|(p, &analytic)| {
            let diff = p.estimate - analytic;
            let z = if p.stderr > 0.0 {
                diff / p.stderr
            } else if diff.abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY.copysign(diff)
            };
            ComparisonRow { k: p.k, estimate: p.estimate, stderr: p.stderr, analytic, z }
        })
        .collect();
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    let pass = rows.len() == targets.len() && rows.iter().all(|r| r.z.abs() < Z_THRESHOLD);
    ComparisonReport { rows, max_abs_z, threshold: Z_THRESHOLD, pass }
}

pub fn compare_to_analytic(cfg: &GameConfig) -> Result<(SimulationEstimate, ComparisonReport)> {
    let est = estimate_sequence(cfg)?;
    let targets = analytic_targets(cfg)?;
    let report = compare_estimate(&est, &targets);
    Ok((est, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn run_is_deterministic() {
        let cfg = GameConfig::new(5, ProtocolId::Full, InequalityId::Alpha, 2, 1000, 1);
        let a = simulate_run(&cfg, 0).unwrap();
        let b = simulate_run(&cfg, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.players.len(), 2);
        assert_eq!(a.players[0].position, 1);
        assert!(a.players.iter().all(|p| p.choice < 5 && p.outcome < 3));
    }

    #[test]
    fn random_order_assigns_every_position_once() {
        let cfg = GameConfig::new(7, ProtocolId::BOnly, InequalityId::Beta, 6, 1000, 9)
            .with_ordering(Ordering::RandomPermutation);
        let game = Game::new(&cfg).unwrap();
        let mut seen_non_identity = false;
        for r in 0..50 {
            let run = game.simulate_run(r).unwrap();
            let mut pos: Vec<usize> = run.players.iter().map(|p| p.position).collect();
            seen_non_identity |= pos != (1..=6).collect::<Vec<_>>();
            pos.sort();
            assert_eq!(pos, (1..=6).collect::<Vec<_>>());
        }
        assert!(seen_non_identity);
    }

    #[test]
    fn streams_differ_by_slot_and_run() {
        let a = RngStream::for_slot(1, 0, 1);
        let b = RngStream::for_slot(1, 0, 2);
        let c = RngStream::for_slot(1, 1, 1);
        assert_ne!(a.stream_id, b.stream_id);
        assert_ne!(a.stream_id, c.stream_id);
        let x: u64 = a.rng().random();
        let y: u64 = a.rng().random();
        assert_eq!(x, y);
    }

    #[test]
    fn sampling_respects_zero_probability_outcomes() {
        let sc = build_scenario(5).unwrap();
        let set = measurement_set(&sc, ProtocolId::Full, 0).unwrap();
        let rho = DensityMatrix::pure(sc.a(0)).unwrap();
        for u in [0.0, 0.5, 0.999_999_999] {
            assert_eq!(sample_outcome(&rho, &set, u).unwrap(), 0);
        }
    }

    #[test]
    fn jackknife_matches_sample_formula() {
        let mut t = Tally::new(1, 2, 2);
        t.counts = vec![30, 10, 45, 15];
        t.runs = 100;
        let (mean, se) = jackknife_mean(&t, 0, &[1.0, 0.0]);
        assert_abs_diff_eq!(mean, 0.75, epsilon = 1e-15);
        let s2 = (75.0 * 0.25f64.powi(2) + 25.0 * 0.75f64.powi(2)) / 99.0;
        assert_abs_diff_eq!(se, (s2 / 100.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn config_errors() {
        let cfg = GameConfig::new(5, ProtocolId::AOnly, InequalityId::Beta, 2, 1000, 1);
        assert!(matches!(estimate_sequence(&cfg), Err(Error::PairingError { .. })));
        let cfg = GameConfig::new(5, ProtocolId::BOnly, InequalityId::Beta, 2, 10, 1);
        assert!(matches!(estimate_sequence(&cfg), Err(Error::InsufficientRuns { runs: 10, .. })));
        let cfg = GameConfig::new(6, ProtocolId::BOnly, InequalityId::Beta, 2, 1000, 1);
        assert!(matches!(estimate_sequence(&cfg), Err(Error::UnsupportedScenario(_))));
        let cfg = GameConfig::new(5, ProtocolId::BOnly, InequalityId::Beta, 0, 1000, 1);
        assert!(matches!(estimate_sequence(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn perturbed_targets_fail() {
        let cfg = GameConfig::new(5, ProtocolId::BOnly, InequalityId::Beta, 3, 20_000, 5);
        let (est, report) = compare_to_analytic(&cfg).unwrap();
        assert!(report.pass, "{report:?}");
        let shifted: Vec<f64> = analytic_targets(&cfg).unwrap().iter().map(|v| v + 0.05).collect();
        assert!(!compare_estimate(&est, &shifted).pass);
    }

    #[test]
    fn ordering_parsing() {
        assert_eq!("random".parse::<Ordering>().unwrap(), Ordering::RandomPermutation);
        assert_eq!("fixed".parse::<Ordering>().unwrap(), Ordering::FixedOrder);
        assert!("sideways".parse::<Ordering>().is_err());
    }
}

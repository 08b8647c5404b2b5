//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails.

use std::io::Write;
use std::time::Instant;

use ncycle_core::analytic::{
    channel_sequence, extract_recurrence, markov_from_overlaps, markov_matrix, optimal_initial_state_check,
    protocol1_affine, protocol1_sequence, random_pure_state, recurrence_sequence, t_coefficient,
};
use ncycle_core::montecarlo::{
    compare_to_analytic, estimate_sequence, estimate_sequence_partitioned, GameConfig,
};
use ncycle_core::protocols::{functional_operator, ALL_PROTOCOLS};
use ncycle_core::quantum::{average_protocol_channel, DensityMatrix, Mat3};
use ncycle_core::scenario::enumerate_classical_bounds;
use ncycle_core::{build_scenario, InequalityId, ProtocolId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const PAIRINGS: [(ProtocolId, InequalityId); 4] = [
    (ProtocolId::Full, InequalityId::Alpha),
    (ProtocolId::Full, InequalityId::Beta),
    (ProtocolId::AOnly, InequalityId::Alpha),
    (ProtocolId::BOnly, InequalityId::Beta),
];

fn odd_n(lo: usize, hi: usize) -> impl Iterator<Item = usize> {
    (lo..=hi).step_by(2)
}

fn handle(n: usize) -> DensityMatrix {
    DensityMatrix::pure(build_scenario(n).unwrap().handle()).unwrap()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn exact_values(
    n: usize,
    protocol: ProtocolId,
    ineq: InequalityId,
    rho: &DensityMatrix,
    k: usize,
) -> Vec<f64> {
    let sc = build_scenario(n).unwrap();
    match protocol {
        ProtocolId::Full => protocol1_sequence(&sc, ineq, rho, k).unwrap().values,
        _ => recurrence_sequence(&sc, protocol, ineq, rho, k).unwrap().values,
    }
}

fn table_reproduction() -> Outcome {
    #[rustfmt::skip]
    let expected: [[usize; 7]; 8] = [
        [5, 1, 1, 2, 1, 2, 4],
        [7, 1, 1, 3, 1, 1, 6],
        [9, 1, 1, 4, 1, 1, 8],
        [11, 1, 1, 5, 1, 1, 9],
        [13, 1, 1, 5, 1, 1, 11],
        [15, 1, 1, 6, 1, 1, 12],
        [17, 1, 1, 7, 1, 1, 14],
        [19, 1, 1, 8, 1, 1, 16],
    ];
    let start = Instant::now();
    let text = ncycle_cli::render(["ncycle", "table1", "--n-min", "5", "--n-max", "19"])
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let rows: Vec<Vec<usize>> =
        text.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    if rows.len() != expected.len() {
        return Err(format!("{} rows", rows.len()));
    }
    let names = ["n", "fixed_full", "fixed_a", "fixed_b", "uniform_full", "uniform_a", "uniform_b"];
    let mismatches: Vec<String> = rows
        .iter()
        .zip(&expected)
        .flat_map(|(got, want)| {
            (1..7)
                .filter(|&c| got[c] != want[c])
                .map(|c| format!("N={} {}: got {}, expected {}", want[0], names[c], got[c], want[c]))
                .collect::<Vec<_>>()
        })
        .collect();
    if mismatches.is_empty() && elapsed < 5.0 {
        Ok(format!("48/48 cells match in {elapsed:.2}s"))
    } else {
        Err(format!("{}/48 cells match ({}) in {elapsed:.2}s", 48 - mismatches.len(), mismatches.join("; ")))
    }
}

fn protocol1_dies_at_second_player() -> Outcome {
    for n in odd_n(5, 19) {
        let sc = build_scenario(n).unwrap();
        for ineq in [InequalityId::Alpha, InequalityId::Beta] {
            let seq = protocol1_sequence(&sc, ineq, &handle(n), 50).unwrap();
            if !seq.verdicts[0] || seq.verdicts[1..].iter().any(|&v| v) {
                return Err(format!("N={n} {ineq}: verdicts {:?}", &seq.verdicts[..5]));
            }
        }
    }
    Ok("k=1 violates, k=2..50 do not, N=5..19, both inequalities".into())
}

fn asymptotes() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for n in odd_n(5, 19) {
        let sc = build_scenario(n).unwrap();
        let lim = n as f64 / 3.0;
        for (protocol, ineq) in PAIRINGS {
            let h = handle(n);
            let mut routes = vec![
                ("exact", exact_values(n, protocol, ineq, &h, 200)[199]),
                ("channel", channel_sequence(&sc, protocol, ineq, &h, 200).unwrap().values[199]),
            ];
            if protocol == ProtocolId::Full {
                let (slope, offset) = protocol1_affine(n).unwrap();
                let first = protocol1_sequence(&sc, ineq, &h, 1).unwrap().values[0];
                let v200 = (1..200).fold(first, |v, _| slope * v + offset);
                routes.push(("affine", v200));
            }
            for (route, v) in routes {
                let err = (v - lim).abs();
                worst = worst.max(err);
                if err >= 1e-8 {
                    failures.push(format!("N={n} {protocol}/{ineq} {route}: |v_200 - N/3| = {err:.3e}"));
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if failures.is_empty() && elapsed < 2.0 {
        Ok(format!("max |v_200 - N/3| = {worst:.2e} in {elapsed:.2}s"))
    } else {
        Err(format!("{} route(s) off, in {elapsed:.2}s: {}", failures.len(), failures.join("; ")))
    }
}

fn three_way_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for n in odd_n(5, 19) {
        let sc = build_scenario(n).unwrap();
        let mut states = vec![handle(n)];
        states.extend((0..20).map(|_| random_pure_state(&mut rng)));
        for (protocol, ineq) in PAIRINGS {
            for rho in &states {
                let exact = exact_values(n, protocol, ineq, rho, 50);
                let direct = channel_sequence(&sc, protocol, ineq, rho, 50).unwrap().values;
                let mut gap = max_gap(&exact, &direct);
                if protocol == ProtocolId::Full {
                    let (slope, offset) = protocol1_affine(n).unwrap();
                    let affine: Vec<f64> =
                        std::iter::successors(Some(exact[0]), |v| Some(slope * v + offset))
                            .take(50)
                            .collect();
                    gap = gap.max(max_gap(&affine, &exact)).max(max_gap(&affine, &direct));
                }
                worst = worst.max(gap);
                if gap >= 1e-10 {
                    return Err(format!("N={n} {protocol}/{ineq}: gap {gap:.3e}"));
                }
            }
        }
    }
    Ok(format!("max pairwise gap {worst:.2e} over 21 states, k <= 50"))
}

fn recurrence_identity() -> Outcome {
    let mut worst_b: f64 = 0.0;
    let mut worst_fp: f64 = 0.0;
    for n in odd_n(5, 19) {
        let sc = build_scenario(n).unwrap();
        let nf = n as f64;
        let rb = extract_recurrence(&sc, ProtocolId::BOnly, InequalityId::Beta).map_err(|e| e.to_string())?;
        let ra =
            extract_recurrence(&sc, ProtocolId::AOnly, InequalityId::Alpha).map_err(|e| e.to_string())?;
        let gap = (rb.slope - (1.0 - 3.0 * rb.offset / nf)).abs();
        worst_b = worst_b.max(gap);
        for rc in [ra, rb] {
            worst_fp = worst_fp.max((rc.fixed_point() - nf / 3.0).abs());
        }
    }
    if worst_b < 1e-12 && worst_fp < 1e-10 {
        Ok(format!("slope identity {worst_b:.1e}, fixed point {worst_fp:.1e}"))
    } else {
        Err(format!("slope identity {worst_b:.3e}, fixed point {worst_fp:.3e}"))
    }
}

fn classical_bounds() -> Outcome {
    let start = Instant::now();
    for n in odd_n(5, 15) {
        let cb = enumerate_classical_bounds(n).map_err(|e| e.to_string())?;
        let want = ((n as u32 - 1) / 2, 1, 2 - n as i32);
        if (cb.alpha_bound, cb.beta_bound, cb.correlator_bound) != want {
            return Err(format!("N={n}: got {cb:?}, expected {want:?}"));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed < 60.0 {
        Ok(format!("N=5..15 in {elapsed:.2}s"))
    } else {
        Err(format!("enumeration took {elapsed:.1}s"))
    }
}

fn quantum_maxima() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in odd_n(5, 19) {
        let sc = build_scenario(n).unwrap();
        let got = handle(n).expectation(functional_operator(&sc, InequalityId::Alpha).matrix());
        let c = (std::f64::consts::PI / n as f64).cos();
        worst = worst.max((got - n as f64 * c / (1.0 + c)).abs());
    }
    let sc = build_scenario(5).unwrap();
    let kcbs = handle(5).expectation(functional_operator(&sc, InequalityId::Alpha).matrix());
    worst = worst.max((kcbs - 5f64.sqrt()).abs());
    if worst < 1e-12 {
        Ok(format!("max deviation {worst:.1e}"))
    } else {
        Err(format!("max deviation {worst:.3e}"))
    }
}

fn markov_structure() -> Outcome {
    for n in odd_n(5, 19) {
        let sc = build_scenario(n).unwrap();
        let t = t_coefficient(n).map_err(|e| e.to_string())?;
        let mm = markov_matrix(n).map_err(|e| e.to_string())?;
        let from_overlaps = markov_from_overlaps(&sc);
        let gap = (from_overlaps - mm.matrix()).abs().max();
        if gap >= 1e-12 {
            return Err(format!("N={n}: overlap vs patterned gap {gap:.3e}"));
        }
        if from_overlaps.iter().any(|&x| x <= 0.0) {
            return Err(format!("N={n}: non-positive entry"));
        }
        // M u = u for the uniform u is the row-sum condition.
        let m = mm.matrix();
        if (0..3).any(|r| ((0..3).map(|c| m[(r, c)]).sum::<f64>() - 1.0).abs() >= 1e-12) {
            return Err(format!("N={n}: uniform vector not fixed"));
        }
        if !(t > 1.0 / 3.0 && t < 0.5) {
            return Err(format!("N={n}: t = {t}"));
        }
    }
    Ok("overlap form equals t-pattern, positive, bistochastic, t in (1/3, 1/2)".into())
}

fn channel_fixed_point() -> Outcome {
    let target = Mat3::identity() / 3.0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for n in [5, 9, 15] {
        let sc = build_scenario(n).unwrap();
        for protocol in ALL_PROTOCOLS {
            let lambda = average_protocol_channel(&sc, protocol);
            let mut case_worst: f64 = 0.0;
            for _ in 0..50 {
                let rho = random_pure_state(&mut rng);
                let gap = (lambda.iterate(&rho, 500).matrix() - target).abs().max();
                case_worst = case_worst.max(gap);
            }
            worst = worst.max(case_worst);
            if case_worst >= 1e-8 {
                failures.push(format!("N={n} {protocol}: max entry error {case_worst:.3e} at k=500"));
            }
        }
    }
    if failures.is_empty() {
        Ok(format!("max entry error {worst:.2e} at k=500"))
    } else {
        Err(failures.join("; "))
    }
}

fn monte_carlo() -> Outcome {
    let configs = [
        GameConfig::new(5, ProtocolId::BOnly, InequalityId::Beta, 4, 100_000, 2024),
        GameConfig::new(9, ProtocolId::Full, InequalityId::Alpha, 3, 100_000, 2024),
        GameConfig::new(7, ProtocolId::AOnly, InequalityId::Alpha, 3, 100_000, 2024),
    ];
    let mut notes = Vec::new();
    for cfg in &configs {
        let label = format!("N={} {}/{}", cfg.n, cfg.protocol, cfg.ineq);
        let start = Instant::now();
        let (est, report) = compare_to_analytic(cfg).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed().as_secs_f64();
        if !report.pass {
            return Err(format!("{label}: max |z| = {:.2}", report.max_abs_z));
        }
        if elapsed >= 60.0 {
            return Err(format!("{label}: {elapsed:.1}s"));
        }
        let bytes = est.to_json(cfg, Some(&report)).to_string();
        let again = estimate_sequence(cfg).map_err(|e| e.to_string())?;
        let rerun = again.to_json(cfg, Some(&report)).to_string();
        if rerun != bytes {
            return Err(format!("{label}: rerun differs"));
        }
        for workers in [1, 2, 8] {
            let split = estimate_sequence_partitioned(cfg, workers).map_err(|e| e.to_string())?;
            let split_bytes = split.to_json(cfg, Some(&report)).to_string();
            if split_bytes != bytes {
                return Err(format!("{label}: {workers}-worker split differs"));
            }
        }
        notes.push(format!("{label} |z| <= {:.2} ({elapsed:.1}s)", report.max_abs_z));
    }
    Ok(format!("{}; reruns and 1/2/8-worker splits byte-identical", notes.join(", ")))
}

fn handle_is_optimal() -> Outcome {
    let mut worst = f64::INFINITY;
    for n in [5, 7, 9] {
        let sc = build_scenario(n).unwrap();
        for (protocol, ineq) in
            [(ProtocolId::AOnly, InequalityId::Alpha), (ProtocolId::BOnly, InequalityId::Beta)]
        {
            let r = optimal_initial_state_check(&sc, protocol, ineq, 200, 11 + n as u64)
                .map_err(|e| e.to_string())?;
            worst = worst.min(r.worst_margin);
            if !r.pass {
                return Err(format!(
                    "N={n} {protocol}/{ineq}: trial {} beats the handle at k={} by {:.3e}",
                    r.worst_trial, r.worst_k, -r.worst_margin
                ));
            }
        }
    }
    Ok(format!("smallest handle advantage {worst:.2e} over 200 states, k <= 30"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("table reproduction", table_reproduction),
        ("protocol-1 death at k=2", protocol1_dies_at_second_player),
        ("asymptotes", asymptotes),
        ("three-way oracle equivalence", three_way_equivalence),
        ("recurrence identity", recurrence_identity),
        ("classical bounds by enumeration", classical_bounds),
        ("quantum maxima", quantum_maxima),
        ("Markov structure", markov_structure),
        ("channel fixed point", channel_fixed_point),
        ("Monte Carlo agreement", monte_carlo),
        ("optimal initial state", handle_is_optimal),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (tag, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        writeln!(out, "{tag} {:>2}. {name}: {detail}", i + 1).unwrap();
        out.flush().unwrap();
    }
    writeln!(out, "acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len()).unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}

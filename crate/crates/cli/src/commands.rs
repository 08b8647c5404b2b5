use ncycle_core::analytic::{
    asymptote as limit_value, extract_recurrence, protocol1_affine, sequence as value_sequence,
    t_coefficient, table1 as kmax_table,
};
use ncycle_core::montecarlo::{compare_to_analytic, estimate_sequence, GameConfig};
use ncycle_core::protocols::functional_operator;
use ncycle_core::quantum::DensityMatrix;
use ncycle_core::scenario::{enumerate_classical_bounds, MIN_QUANTUM_N};
use ncycle_core::{build_scenario, InequalityId, ProtocolId};

use crate::output::{Cell, Document};
use crate::CliError;

const PAIRINGS: [(ProtocolId, InequalityId); 4] = [
    (ProtocolId::Full, InequalityId::Alpha),
    (ProtocolId::Full, InequalityId::Beta),
    (ProtocolId::AOnly, InequalityId::Alpha),
    (ProtocolId::BOnly, InequalityId::Beta),
];

/// Even endpoints move inward to the enclosed odd range.
pub fn odd_range(n_min: usize, n_max: usize) -> Result<Vec<usize>, CliError> {
    let lo = n_min | 1;
    let hi = if n_max.is_multiple_of(2) { n_max.checked_sub(1) } else { Some(n_max) };
    match hi {
        Some(hi) if lo <= hi => Ok((lo..=hi).step_by(2).collect()),
        _ => Err(CliError::Usage(format!("no odd N in [{n_min}, {n_max}]"))),
    }
}

pub fn table1(n_min: usize, n_max: usize) -> Result<Document, CliError> {
    let ns = odd_range(n_min, n_max)?;
    if ns[0] < MIN_QUANTUM_N {
        return Err(CliError::Usage(format!("table1 needs N >= {MIN_QUANTUM_N}, got {}", ns[0])));
    }
    let rows = kmax_table(&ns)?;
    let mut doc = Document::new(vec![
        "n",
        "fixed_full",
        "fixed_a",
        "fixed_b",
        "uniform_full",
        "uniform_a",
        "uniform_b",
    ]);
    let mut json = Vec::with_capacity(rows.len());
    for row in &rows {
        if row.full_columns_disagree() {
            eprintln!(
                "warning: N = {}: protocol-1 alpha/beta columns differ {:?}; reporting the maximum",
                row.n, row.full_by_ineq
            );
        }
        let mut cells = vec![Cell::from(row.n)];
        cells.extend(row.columns().iter().map(|&c| Cell::from(c)));
        doc.push(cells);
        json.push(serde_json::to_value(row).map_err(|e| CliError::Internal(e.to_string()))?);
    }
    Ok(doc.with_json(json))
}

pub fn sequence(n: usize, protocol: ProtocolId, ineq: InequalityId, k: usize) -> Result<Document, CliError> {
    protocol.check_pairing(ineq)?;
    if k == 0 {
        return Err(CliError::Usage("k must be at least 1".into()));
    }
    let sc = build_scenario(n)?;
    let handle = DensityMatrix::pure(sc.handle())?;
    let seq = value_sequence(&sc, protocol, ineq, &handle, k)?;
    let mut doc = Document::new(vec!["k", "value", "violates", "bound", "asymptote"]);
    let bound = ineq.bound(n);
    for (i, (&v, &violates)) in seq.values.iter().zip(&seq.verdicts).enumerate() {
        doc.push(vec![(i + 1).into(), v.into(), violates.into(), bound.into(), seq.asymptote.into()]);
    }
    Ok(doc)
}

pub fn simulate(cfg: &GameConfig, compare: bool) -> Result<Document, CliError> {
    let (est, report) = if compare {
        let (est, report) = compare_to_analytic(cfg)?;
        (est, Some(report))
    } else {
        (estimate_sequence(cfg)?, None)
    };
    let header = if compare {
        vec!["k", "estimate", "stderr", "analytic", "z"]
    } else {
        vec!["k", "estimate", "stderr"]
    };
    let mut doc = Document::new(header);
    match &report {
        Some(r) => {
            for row in &r.rows {
                doc.push(vec![
                    row.k.into(),
                    row.estimate.into(),
                    row.stderr.into(),
                    row.analytic.into(),
                    row.z.into(),
                ]);
            }
        }
        None => {
            for p in &est.positions {
                doc.push(vec![p.k.into(), p.estimate.into(), p.stderr.into()]);
            }
        }
    }
    Ok(doc.with_json(vec![est.to_json(cfg, report.as_ref())]))
}

pub fn bounds(n: usize) -> Result<Document, CliError> {
    let cb = enumerate_classical_bounds(n)?;
    let (alpha_max, beta_min) = if n >= MIN_QUANTUM_N {
        let sc = build_scenario(n)?;
        let handle = DensityMatrix::pure(sc.handle())?;
        let a = handle.expectation(functional_operator(&sc, InequalityId::Alpha).matrix());
        let b = handle.expectation(functional_operator(&sc, InequalityId::Beta).matrix());
        (Cell::from(a), Cell::from(b))
    } else {
        (Cell::from("n/a"), Cell::from("n/a"))
    };
    let mut doc = Document::new(vec![
        "n",
        "alpha_bound",
        "beta_bound",
        "correlator_bound",
        "quantum_alpha_max",
        "quantum_beta_min",
    ]);
    doc.push(vec![
        n.into(),
        Cell::Int(cb.alpha_bound.into()),
        Cell::Int(cb.beta_bound.into()),
        Cell::Int(cb.correlator_bound.into()),
        alpha_max,
        beta_min,
    ]);
    Ok(doc)
}

pub fn asymptote(n: usize) -> Result<Document, CliError> {
    let sc = build_scenario(n)?;
    let mut doc = Document::new(vec![
        "protocol",
        "ineq",
        "asymptote",
        "slope",
        "offset",
        "fixed_point",
        "t",
        "lambda0",
        "lambda1",
    ]);
    let limit = limit_value(n);
    for (protocol, ineq) in PAIRINGS {
        let (l0, l1) = functional_operator(&sc, ineq).sector_eigenvalues()?;
        let (slope, offset, t) = match protocol {
            ProtocolId::Full => {
                let (slope, offset) = protocol1_affine(n)?;
                (slope, offset, Cell::from(t_coefficient(n)?))
            }
            _ => {
                let rc = extract_recurrence(&sc, protocol, ineq)?;
                (rc.slope, rc.offset, Cell::Empty)
            }
        };
        doc.push(vec![
            protocol.name().into(),
            ineq.name().into(),
            limit.into(),
            slope.into(),
            offset.into(),
            (offset / (1.0 - slope)).into(),
            t,
            l0.into(),
            l1.into(),
        ]);
    }
    Ok(doc)
}

use std::collections::BTreeMap;
use std::path::PathBuf;

use fh_gauss_core::dynamics::{verify_dynamics, DynamicsContext, DynamicsGroup, ALL_GROUPS};
use fh_gauss_core::identities::{
    identity_tolerance, iterate_difference_system, iteration_deviation, verify_p_expression, verify_section3, AuxQuantities,
    IterationSeed, ResidualReport,
};
use fh_gauss_core::ladder::{default_points, verify_ladder};
use fh_gauss_core::numeric::{fmt_real, rel_diff};
use fh_gauss_core::orthopoly::{build_system, OrthoSystem, DIRECT_DET_MAX};
use fh_gauss_core::{Error, WeightSpec};
use rayon::prelude::*;
use rug::Float;
use serde::Serialize;

use crate::config::{RunConfig, Suite};
use crate::output::{write_artifact, Table};
use crate::CliError;

/// Significant digits of every real written to an artifact.
pub const DIGITS: usize = 25;

/// What a command wrote, and whether its checks passed.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub path: PathBuf,
    pub passed: bool,
    pub failures: Vec<String>,
}

impl Outcome {
    /// `Ok` when every check passed, otherwise a verification error.
    pub fn into_result(self) -> Result<PathBuf, CliError> {
        if self.passed {
            Ok(self.path)
        } else {
            Err(CliError::Verification(self.failures.join("; ")))
        }
    }
}

fn positions(spec: &WeightSpec) -> Vec<String> {
    (0..spec.len()).map(|j| fmt_real(spec.position(j), DIGITS)).collect()
}

fn grid_warnings(cfg: &RunConfig, grid: &[WeightSpec]) -> Vec<String> {
    let mut w: Vec<String> = grid.first().map(|s| s.warnings()).unwrap_or_default();
    if cfg.sweep.is_none() {
        w.push("no sweep given; single-point run".into());
    }
    w
}

fn column_names(n: usize, fixed: &[&str], per_j: &[&str]) -> Vec<String> {
    let mut cols: Vec<String> = vec!["point".into()];
    cols.extend((0..n).map(|j| format!("t_{j}")));
    cols.extend(fixed.iter().map(|s| s.to_string()));
    for name in per_j {
        cols.extend((0..n).map(|j| format!("{name}_{j}")));
    }
    cols
}

fn point_rows(point: usize, spec: &WeightSpec, n_max: usize) -> Result<Vec<Vec<String>>, CliError> {
    let sys = build_system(spec, n_max)?;
    let aux = AuxQuantities::from_system(&sys)?;
    let ts = positions(spec);
    let f = |x: &Float| fmt_real(x, DIGITS);
    let mut rows = Vec::new();
    for n in 0..=n_max {
        let mut row = vec![point.to_string()];
        row.extend(ts.iter().cloned());
        row.push(n.to_string());
        row.push(f(sys.h(n)));
        row.push(f(sys.alpha(n)));
        row.push(f(sys.beta(n)));
        row.push(f(sys.p_coeff(n)));
        row.push(f(&sys.hankel_det(n)?));
        row.push(f(&fh_gauss_core::dynamics::compute_sigma(&sys, n)));
        row.extend(aux.big_row(n).iter().map(f));
        row.extend(aux.small_row(n).iter().map(f));
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Serialize)]
struct PointCount {
    points: usize,
    rows: usize,
}

/// Tables of `h_n, alpha_n, beta_n, p(n), D_n, sigma_n, R_{n,j}, r_{n,j}`
/// for `0 <= n <= n_max` at every grid point.
pub fn cmd_compute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.grid()?;
    let per_point: Vec<Vec<Vec<String>>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, spec)| point_rows(i, spec, cfg.n_max))
        .collect::<Result<_, _>>()?;
    let table = Table {
        columns: column_names(cfg.ts.len(), &["n", "h", "alpha", "beta", "p", "D", "sigma"], &["R", "r"]),
        rows: per_point.into_iter().flatten().collect(),
    };
    let summary = PointCount { points: grid.len(), rows: table.rows.len() };
    let path = write_artifact(cfg, "compute", &table, &table, &summary, &grid_warnings(cfg, &grid))?;
    Ok(Outcome { path, passed: true, failures: Vec::new() })
}

fn orthopoly_reports(sys: &OrthoSystem) -> Result<Vec<ResidualReport>, CliError> {
    let p = sys.prec();
    let tol = identity_tolerance(sys.spec());
    let n_max = sys.n_max();
    let mut out = Vec::new();
    for b in 1..=n_max {
        for a in b.saturating_sub(2)..b {
            let res = sys.orthogonality_residual(a, b)?;
            out.push(ResidualReport::new("orthogonality", "int P_a P_b w / sqrt(h_a h_b) = 0", &res, tol).with_j(a).with_k(b));
        }
    }
    let x = Float::with_val(p, 0.37);
    let y = Float::with_val(p, -1.21);
    for n in 1..=n_max {
        let res = sys.christoffel_darboux_residual(n, &x, &y);
        out.push(
            ResidualReport::new(
                "christoffel_darboux",
                "sum_{k<n} P_k(x) P_k(y) / h_k = [P_n(x) P_{n-1}(y) - P_n(y) P_{n-1}(x)] / (h_{n-1} (x - y))",
                &res,
                tol,
            )
            .with_n(n),
        );
        let res = rel_diff(sys.p_coeff(n), &sys.p_from_alpha_sum(n), &Float::with_val(p, 1));
        out.push(ResidualReport::new("p_from_alpha", "p(n) = -sum_{j<n} alpha_j", &res, tol).with_n(n));
    }
    for n in 1..=n_max.min(DIRECT_DET_MAX) {
        let direct = sys.moment_determinant(n)?;
        let res = rel_diff(&sys.ln_hankel_det(n).exp(), &direct, &Float::new(p));
        out.push(ResidualReport::new("hankel_vs_norms", "det(mu_{i+j})_{i,j<n} = prod_{k<n} h_k", &res, tol).with_n(n));
    }
    Ok(out)
}

fn identities_reports(sys: &OrthoSystem, aux: &AuxQuantities, warnings: &mut Vec<String>) -> Result<Vec<ResidualReport>, CliError> {
    let mut out = Vec::new();
    for n in 0..sys.n_max() {
        out.extend(verify_section3(sys, aux, n)?);
        match verify_p_expression(sys, aux, n) {
            Ok(r) => out.push(r),
            Err(Error::DegenerateR { n, j }) => warnings.push(format!("p_from_aux skipped at n = {n}: R[{n},{j}] vanishes")),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

fn dynamics_reports(cfg: &RunConfig, spec: &WeightSpec, warnings: &mut Vec<String>) -> Result<Vec<ResidualReport>, CliError> {
    let ctx = DynamicsContext::new(spec, cfg.n_max)?;
    let groups: Vec<DynamicsGroup> = if (0..spec.len()).any(|j| spec.exponent(j).is_zero()) {
        warnings.push("a zero exponent makes R vanish; Riccati, PDE and sigma checks skipped".into());
        vec![DynamicsGroup::Lemma41, DynamicsGroup::CrossPartials, DynamicsGroup::Toda]
    } else {
        ALL_GROUPS.to_vec()
    };
    let mut out = Vec::new();
    for n in 1..cfg.n_max {
        for g in &groups {
            match verify_dynamics(&ctx, n, cfg.step, cfg.richardson, true, &[*g]) {
                Ok(r) => out.extend(r),
                Err(e @ (Error::DegenerateR { .. } | Error::DegenerateDenominator { .. })) => {
                    warnings.push(format!("{g:?} skipped at n = {n}: {e}"))
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(out)
}

fn verify_point(cfg: &RunConfig, spec: &WeightSpec) -> Result<(Vec<ResidualReport>, Vec<String>), CliError> {
    let mut warnings = Vec::new();
    let sys = build_system(spec, cfg.n_max)?;
    let aux = AuxQuantities::from_system(&sys)?;
    let mut reports = Vec::new();
    if cfg.suite.includes(Suite::Orthopoly) {
        reports.extend(orthopoly_reports(&sys)?);
    }
    if cfg.suite.includes(Suite::Ladder) {
        reports.extend(verify_ladder(&sys, &aux, &default_points(spec.prec()), cfg.n_max - 1)?);
    }
    if cfg.suite.includes(Suite::Identities) {
        reports.extend(identities_reports(&sys, &aux, &mut warnings)?);
    }
    if cfg.suite.includes(Suite::Dynamics) {
        reports.extend(dynamics_reports(cfg, spec, &mut warnings)?);
    }
    if let Some(t) = cfg.verify_tol {
        reports = reports.into_iter().map(|r| r.retolerance(t)).collect();
    }
    Ok((reports, warnings))
}

#[derive(Serialize)]
struct PointReport {
    point: usize,
    #[serde(flatten)]
    report: ResidualReport,
}

#[derive(Serialize)]
struct Reports {
    reports: Vec<PointReport>,
}

#[derive(Serialize)]
struct VerifySummary {
    total: usize,
    passed: usize,
    failed: usize,
    max_residual: BTreeMap<String, f64>,
    failures: Vec<String>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn describe(r: &PointReport) -> String {
    let mut s = format!("point {} {}", r.point, r.report.identity);
    for (k, v) in [("n", r.report.n), ("j", r.report.j), ("k", r.report.k)] {
        if let Some(v) = v {
            s.push_str(&format!(" {k}={v}"));
        }
    }
    if let Some(z) = &r.report.z {
        s.push_str(&format!(" z={z}"));
    }
    s.push_str(&format!(": residual {:e} > {:e}", r.report.residual, r.report.tolerance));
    if let Some(o) = r.report.order {
        s.push_str(&format!(" (order {o:.3})"));
    }
    s
}

/// Runs the selected suites at every grid point.
pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.grid()?;
    let results: Vec<(Vec<ResidualReport>, Vec<String>)> =
        grid.par_iter().map(|spec| verify_point(cfg, spec)).collect::<Result<_, _>>()?;
    let mut warnings = grid_warnings(cfg, &grid);
    let mut reports = Vec::new();
    for (point, (rs, ws)) in results.into_iter().enumerate() {
        warnings.extend(ws.into_iter().map(|w| format!("point {point}: {w}")));
        reports.extend(rs.into_iter().map(|report| PointReport { point, report }));
    }
    let mut max_residual: BTreeMap<String, f64> = BTreeMap::new();
    for r in &reports {
        let e = max_residual.entry(r.report.identity.clone()).or_insert(0.0);
        *e = e.max(r.report.residual);
    }
    let failures: Vec<String> = reports.iter().filter(|r| !r.report.pass).map(describe).collect();
    let summary = VerifySummary {
        total: reports.len(),
        passed: reports.len() - failures.len(),
        failed: failures.len(),
        max_residual,
        failures: failures.clone(),
    };
    let table = Table {
        columns: ["point", "identity", "n", "j", "k", "z", "step", "order", "residual", "tolerance", "pass", "note", "anchor"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows: reports
            .iter()
            .map(|r| {
                let q = &r.report;
                vec![
                    r.point.to_string(),
                    q.identity.clone(),
                    opt(&q.n),
                    opt(&q.j),
                    opt(&q.k),
                    opt(&q.z),
                    q.step.map(|h| format!("{h:e}")).unwrap_or_default(),
                    q.order.map(|o| format!("{o:.4}")).unwrap_or_default(),
                    format!("{:e}", q.residual),
                    format!("{:e}", q.tolerance),
                    q.pass.to_string(),
                    opt(&q.note),
                    q.anchor.clone(),
                ]
            })
            .collect(),
    };
    let path = write_artifact(cfg, "verify", &Reports { reports }, &table, &summary, &warnings)?;
    Ok(Outcome { path, passed: failures.is_empty(), failures })
}

#[derive(Serialize, Clone)]
struct IterationRow {
    point: usize,
    n: usize,
    deviation_big: f64,
    deviation_small: f64,
    pass: bool,
}

#[derive(Serialize)]
struct IterationRows {
    rows: Vec<IterationRow>,
}

#[derive(Serialize)]
struct IterationSummary {
    bound: f64,
    max_deviation: f64,
    breakdowns: Vec<String>,
}

/// Iterates the difference system from the quadrature `R_{0,.}`, `R_{1,.}`
/// and tabulates its relative deviation from the quadrature values.
pub fn cmd_iterate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let grid = cfg.grid()?;
    let per_point: Vec<(Vec<IterationRow>, Option<String>)> = grid
        .par_iter()
        .enumerate()
        .map(|(point, spec)| {
            let sys = build_system(spec, cfg.n_max)?;
            let quad = AuxQuantities::from_system(&sys)?;
            let outcome = iterate_difference_system(spec, cfg.n_max, &IterationSeed::from_aux(&quad, true));
            let rows = iteration_deviation(&outcome.aux, &quad)
                .into_iter()
                .enumerate()
                .map(|(n, (db, ds))| IterationRow {
                    point,
                    n,
                    deviation_big: db,
                    deviation_small: ds,
                    pass: db <= cfg.iterate_bound && ds <= cfg.iterate_bound,
                })
                .collect();
            Ok((rows, outcome.breakdown.map(|e| format!("point {point}: {e}"))))
        })
        .collect::<Result<_, CliError>>()?;
    let mut rows = Vec::new();
    let mut breakdowns = Vec::new();
    for (r, b) in per_point {
        rows.extend(r);
        breakdowns.extend(b);
    }
    let max_deviation = rows.iter().map(|r| r.deviation_big.max(r.deviation_small)).fold(0.0, f64::max);
    let mut failures: Vec<String> = rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("point {} n={}: deviation {:e} / {:e}", r.point, r.n, r.deviation_big, r.deviation_small))
        .collect();
    failures.extend(breakdowns.iter().cloned());
    let table = Table {
        columns: ["point", "n", "deviation_R", "deviation_r", "pass"].iter().map(|s| s.to_string()).collect(),
        rows: rows
            .iter()
            .map(|r| {
                vec![r.point.to_string(), r.n.to_string(), format!("{:e}", r.deviation_big), format!("{:e}", r.deviation_small), r.pass.to_string()]
            })
            .collect(),
    };
    let summary = IterationSummary { bound: cfg.iterate_bound, max_deviation, breakdowns };
    let path = write_artifact(cfg, "iterate", &IterationRows { rows }, &table, &summary, &grid_warnings(cfg, &grid))?;
    Ok(Outcome { path, passed: failures.is_empty(), failures })
}

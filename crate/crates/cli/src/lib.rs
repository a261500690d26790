//! Command implementations behind the `ocn-rgp` binary.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use ocn_core::analysis::inf_norm;
use ocn_core::rgp::TraceRow;
use ocn_core::runner::{run_scenario, RunReport, ScenarioRun};
use ocn_core::scenario::{load_scenario, Mode, ResolvedScenario, Scenario, TopologyReport};

/// Tolerance of the compare-mode identity check.
pub const COMPARE_TOL: f64 = 1e-12;

pub fn resolve_file(path: &Path, seed: Option<u64>) -> Result<ResolvedScenario> {
    let (mut scenario, base) = load_scenario(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(seed) = seed {
        scenario = scenario.with_seed(seed);
    }
    scenario.resolve(&base).with_context(|| format!("resolving {}", path.display()))
}

pub fn cmd_report_topology(path: &Path) -> Result<TopologyReport> {
    Ok(resolve_file(path, None)?.topology_report()?)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run: ScenarioRun,
    pub converged: bool,
}

/// Runs a scenario and writes trace.csv, report.json and
/// scenario.resolved.json into `out_dir`.
pub fn cmd_run(path: &Path, out_dir: &Path, seed: Option<u64>, mode: Option<Mode>) -> Result<RunSummary> {
    let res = resolve_file(path, seed)?;
    let mode = mode.unwrap_or(res.scenario.mode);
    let run = run_scenario(&res, mode)?;
    write_artifacts(out_dir, &res, &run)?;
    Ok(RunSummary {
        converged: run.outcome.converged(),
        run,
    })
}

/// Runs both engines and fails unless their traces agree.
pub fn cmd_compare(path: &Path, out_dir: &Path) -> Result<RunSummary> {
    let summary = cmd_run(path, out_dir, None, Some(Mode::Compare))?;
    let cmp = summary.run.report.compare.expect("compare mode fills the summary");
    if !cmp.within(COMPARE_TOL) {
        bail!(
            "engines disagree: state deviation {:e}, eta deviation {:e}, same status {}, same length {}",
            cmp.max_state_deviation,
            cmp.max_eta_deviation,
            cmp.same_status,
            cmp.same_length
        );
    }
    Ok(summary)
}

#[derive(Serialize)]
struct ResolvedFile<'a> {
    scenario: &'a Scenario,
    junctions: usize,
    channels: usize,
    channel_list: Vec<[usize; 2]>,
    eta_lower: f64,
    omega: f64,
    raw_init: Option<&'a [f64]>,
    x0: &'a [f64],
    x0_inf: f64,
}

fn write_artifacts(out_dir: &Path, res: &ResolvedScenario, run: &ScenarioRun) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_trace_csv(&out_dir.join("trace.csv"), &run.outcome.trace)?;
    write_json(&out_dir.join("report.json"), &run.report)?;
    let x0 = &run.outcome.trace[0].x;
    let resolved = ResolvedFile {
        scenario: &res.scenario,
        junctions: res.junctions.junction_count(),
        channels: res.n(),
        channel_list: res.junctions.channels().iter().map(|&(a, b)| [a + 1, b + 1]).collect(),
        eta_lower: res.params().eta_lower,
        omega: res.params().omega,
        raw_init: res.raw_init.as_deref(),
        x0,
        x0_inf: inf_norm(x0),
    };
    write_json(&out_dir.join("scenario.resolved.json"), &resolved)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trace_header(n: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    h.extend((1..=n).map(|i| format!("x_{i}")));
    h.extend(
        ["eta", "W", "x_inf", "c_D_min", "c_U_min", "delta_x_star", "mcp_messages"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let n = trace.first().map_or(0, |r| r.x.len());
    w.write_record(trace_header(n))?;
    for row in trace {
        let mut rec = vec![row.k.to_string()];
        rec.extend(row.x.iter().map(|&v| fmt_f64(v)));
        rec.push(row.eta.map(fmt_f64).unwrap_or_default());
        rec.extend([row.w, row.x_inf, row.c_down_min, row.c_up_min, row.delta_x_star].map(fmt_f64));
        rec.push(row.mcp_messages.map(|m| m.to_string()).unwrap_or_default());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses trace.csv back into (k, x, eta) rows.
pub fn read_trace_csv(path: &Path) -> Result<Vec<(usize, Vec<f64>, Option<f64>)>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let n = r.headers()?.iter().filter(|h| h.starts_with("x_") && *h != "x_inf").count();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let k = rec[0].parse()?;
        let x = (1..=n).map(|i| rec[i].parse::<f64>()).collect::<Result<Vec<_>, _>>()?;
        let eta = match &rec[n + 1] {
            "" => None,
            s => Some(s.parse()?),
        };
        out.push((k, x, eta));
    }
    Ok(out)
}

pub fn summary_line(report: &RunReport) -> String {
    let status = match report.convergence.k_bar() {
        Some(k) => format!("converged at k_bar = {k}"),
        None => format!("not converged after {} steps", report.convergence.steps),
    };
    format!(
        "{}: {status}; final W = {:.3e}; constraint violations = {}",
        report.name.as_deref().unwrap_or("scenario"),
        report.convergence.final_w,
        report.convergence.constraint_violations.len()
    )
}

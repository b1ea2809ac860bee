//! Scenario grid runner and report tables.
//!
//! Seed streams, with `derive_seed` from the core crate:
//!
//! * original solution: `derive_seed(master, 0)`
//! * scenario at position `s` of the grid: `base = derive_seed(master, s + 1)`
//! * replica `r` of that scenario: perturbation `derive_seed(base, 4r)`,
//!   reference solve `derive_seed(base, 4r + 1)`, edge-fixing solve
//!   `derive_seed(base, 4r + 2)`
//! * dataset shuffle `derive_seed(base, u64::MAX)`, network initialization
//!   `derive_seed(base, u64::MAX - 1)`, batch sampling
//!   `derive_seed(base, u64::MAX - 2)`

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use rayon::prelude::*;
use reopt_core::edgefix::{self, predict_edges, FixedGraph, SolveConfig};
use reopt_core::features::{build_dataset, make_labels, similarity, Observation, Split, SplitRatios};
use reopt_core::instance::{perturb, synthetic, DemandDistribution};
use reopt_core::rng::derive_seed;
use reopt_core::{classifier, confusion_metrics, Confusion, gap, Forced, Instance, Modified, Network, Scenario, Solution, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::formats::{self, ModelDoc, ModelMeta};

pub const ALL_SCENARIOS: [&str; 9] = ["10S", "10M", "10L", "20S", "20M", "20L", "30S", "30M", "30L"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioGrid {
    /// Scenario labels such as `20M`.
    pub scenarios: Vec<String>,
    /// Replicas per scenario, held-out ones included.
    pub replicas: usize,
    /// Trailing replicas kept out of the dataset and used for edge fixing.
    pub held_out: usize,
    /// Split of the learning replicas.
    pub split: SplitRatios,
    /// Demand distribution that selects `delta_d`.
    pub distribution: DemandDistribution,
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        ScenarioGrid {
            scenarios: ALL_SCENARIOS.iter().map(|s| s.to_string()).collect(),
            replicas: 20,
            held_out: 5,
            split: SplitRatios::default(),
            distribution: DemandDistribution::Range1To100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub k: usize,
    pub budget: u64,
    /// Reduced problems with at most this many visit units are solved
    /// exactly.
    pub exact_max_units: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            k: 3,
            budget: 2_000,
            exact_max_units: 8,
        }
    }
}

impl SolverSettings {
    pub fn with_seed(&self, seed: u64) -> SolveConfig {
        SolveConfig {
            k: self.k,
            budget: self.budget,
            seed,
            exact_max_units: self.exact_max_units,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: ScenarioGrid,
    pub solver: SolverSettings,
    pub train: TrainConfig,
}

/// Table columns of one modified instance. Counts are stored as reals so
/// aggregate rows share the type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RowMetrics {
    pub sm_cost: f64,
    pub similarity: f64,
    pub tnr: f64,
    pub tpr: f64,
    pub accuracy: f64,
    pub fix_cost: f64,
    pub fix_time_s: f64,
    /// Wall time of the reference solve of the same instance.
    pub ref_time_s: f64,
    pub gap: f64,
    pub fixed_count: f64,
    pub repaired_count: f64,
    pub nodes_before: f64,
    pub nodes_after: f64,
    /// Visit units of the reduced problem.
    pub units: f64,
}

impl RowMetrics {
    fn fields(&self) -> [f64; 14] {
        [
            self.sm_cost,
            self.similarity,
            self.tnr,
            self.tpr,
            self.accuracy,
            self.fix_cost,
            self.fix_time_s,
            self.ref_time_s,
            self.gap,
            self.fixed_count,
            self.repaired_count,
            self.nodes_before,
            self.nodes_after,
            self.units,
        ]
    }

    fn from_fields(f: [f64; 14]) -> Self {
        RowMetrics {
            sm_cost: f[0],
            similarity: f[1],
            tnr: f[2],
            tpr: f[3],
            accuracy: f[4],
            fix_cost: f[5],
            fix_time_s: f[6],
            ref_time_s: f[7],
            gap: f[8],
            fixed_count: f[9],
            repaired_count: f[10],
            nodes_before: f[11],
            nodes_after: f[12],
            units: f[13],
        }
    }

    /// Column-wise arithmetic mean; `None` for no rows.
    pub fn mean<'a>(rows: impl IntoIterator<Item = &'a RowMetrics>) -> Option<RowMetrics> {
        let mut sum = [0.0; 14];
        let mut count = 0usize;
        for r in rows {
            for (s, v) in sum.iter_mut().zip(r.fields()) {
                *s += v;
            }
            count += 1;
        }
        (count > 0).then(|| RowMetrics::from_fields(sum.map(|s| s / count as f64)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    /// `<instance>_<scenario>_<replica>`.
    pub instance: String,
    pub replica: usize,
    pub metrics: Option<RowMetrics>,
    pub confusion: Option<Confusion>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub train_samples: usize,
    pub val_samples: usize,
    pub test_samples: usize,
    pub best_epoch: usize,
    /// Mean similarity over the learning replicas.
    pub similarity: f64,
    /// Rates on the dataset's test split, when it is not empty.
    pub test_tnr: Option<f64>,
    pub test_tpr: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Instance ids of the replicas the dataset was built from.
    pub sources: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub delta_d: u32,
    pub model: Option<ModelSummary>,
    /// Mean of the successful held-out rows.
    pub aggregate: Option<RowMetrics>,
    /// Confusion counts pooled over the successful held-out rows.
    pub pooled: Option<Confusion>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub instance: String,
    pub master_seed: u64,
    pub original_cost: f64,
    pub scenarios: Vec<ScenarioSummary>,
    pub rows: Vec<ReportRow>,
}

impl RunReport {
    pub fn empty(instance: &str, master_seed: u64) -> Self {
        RunReport {
            instance: instance.to_string(),
            master_seed,
            original_cost: 0.0,
            scenarios: Vec::new(),
            rows: Vec::new(),
        }
    }

    /// Whether no held-out row was used to build its scenario's dataset.
    pub fn leakage_free(&self) -> bool {
        self.scenarios.iter().all(|s| {
            let Some(m) = &s.model else { return true };
            self.rows
                .iter()
                .filter(|r| r.scenario == s.scenario)
                .all(|r| !m.sources.contains(&r.instance))
        })
    }

    /// Copy with every wall-clock field zeroed.
    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        for row in &mut r.rows {
            if let Some(m) = &mut row.metrics {
                m.fix_time_s = 0.0;
                m.ref_time_s = 0.0;
            }
        }
        for s in &mut r.scenarios {
            if let Some(m) = &mut s.aggregate {
                m.fix_time_s = 0.0;
                m.ref_time_s = 0.0;
            }
        }
        r
    }
}

/// Random instance whose demands match the grid's distribution: `[1, 10]`
/// for the small-demand tags, `[1, 100]` otherwise.
pub fn synthetic_for(grid: &ScenarioGrid, n: usize, seed: u64) -> Instance {
    let max_demand = match grid.distribution {
        DemandDistribution::Range1To10 | DemandDistribution::Range5To10 => 10,
        _ => 100,
    };
    synthetic(format!("S-n{}", n + 1), n, max_demand, 6, seed)
}

/// Reference solve: exact when small, otherwise best of `k`.
pub fn reference_solve(inst: &Instance, cfg: &SolveConfig) -> Result<Solution> {
    Ok(edgefix::solve(inst, &Forced::none(), cfg)?)
}

struct Replica {
    modified: Modified,
    solution: Solution,
    time_s: f64,
}

struct Trained {
    net: Network,
    doc: ModelDoc,
    summary: ModelSummary,
}

/// Runs every scenario of the grid on `original`.
///
/// A failing held-out row or scenario is recorded in the report instead of
/// aborting the run. When `out_dir` is given, the original solution and one
/// model per scenario are written there.
pub fn run_grid(original: &Instance, cfg: &RunConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    let grid = &cfg.grid;
    if grid.held_out > grid.replicas {
        bail!("held_out ({}) exceeds replicas ({})", grid.held_out, grid.replicas);
    }
    let scenarios = grid
        .scenarios
        .iter()
        .map(|label| Scenario::parse_label(label).map_err(|e| anyhow!(e)))
        .collect::<Result<Vec<_>>>()?;
    let master = cfg.seed;
    let so = reference_solve(original, &cfg.solver.with_seed(derive_seed(master, 0)))?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir.join("models"))?;
        std::fs::write(dir.join("original.sol"), formats::write_solution_text(&so))?;
    }

    let results: Vec<(ScenarioSummary, Vec<ReportRow>, Option<ModelDoc>)> = scenarios
        .par_iter()
        .enumerate()
        .map(|(s, &(nc, class))| {
            let base = derive_seed(master, s as u64 + 1);
            let label = &grid.scenarios[s];
            let delta_d = grid.distribution.delta(class);
            run_scenario(original, &so, cfg, label, nc, class, delta_d, base)
        })
        .collect();

    let mut report = RunReport {
        instance: original.name().to_string(),
        master_seed: master,
        original_cost: so.cost,
        scenarios: Vec::new(),
        rows: Vec::new(),
    };
    for (summary, rows, doc) in results {
        if let (Some(dir), Some(doc)) = (out_dir, doc) {
            formats::write_json(&dir.join("models").join(format!("{}.json", summary.scenario)), &doc)?;
        }
        report.scenarios.push(summary);
        report.rows.extend(rows);
    }
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn run_scenario(
    original: &Instance,
    so: &Solution,
    cfg: &RunConfig,
    label: &str,
    nc: u32,
    class: reopt_core::IntervalClass,
    delta_d: u32,
    base: u64,
) -> (ScenarioSummary, Vec<ReportRow>, Option<ModelDoc>) {
    let grid = &cfg.grid;
    let name = |r: usize| format!("{}_{}_{}", original.name(), label, r);
    let replicas: Vec<Result<Replica, String>> = (0..grid.replicas)
        .into_par_iter()
        .map(|r| {
            let scn = Scenario::new(nc, class, delta_d, derive_seed(base, 4 * r as u64)).map_err(|e| e.to_string())?;
            let modified = perturb(original, &scn);
            let solve_cfg = cfg.solver.with_seed(derive_seed(base, 4 * r as u64 + 1));
            let start = Instant::now();
            let solution = reference_solve(&modified.instance, &solve_cfg).map_err(|e| e.to_string())?;
            let time_s = start.elapsed().as_secs_f64();
            Ok(Replica {
                modified,
                solution,
                time_s,
            })
        })
        .collect();

    let learn = grid.replicas - grid.held_out;
    let held_out: Vec<String> = (learn..grid.replicas).map(name).collect();
    let trained = train_model(original, so, &replicas[..learn], cfg, base, &name, &held_out);
    let mut summary = ScenarioSummary {
        scenario: label.to_string(),
        delta_d,
        model: None,
        aggregate: None,
        pooled: None,
        error: None,
    };
    let (net, doc) = match trained {
        Ok(t) => {
            summary.model = Some(t.summary);
            (Some(t.net), Some(t.doc))
        }
        Err(e) => {
            summary.error = Some(e);
            (None, None)
        }
    };

    let rows: Vec<ReportRow> = (learn..grid.replicas)
        .into_par_iter()
        .map(|r| {
            let outcome = match (&replicas[r], &net, &doc) {
                (Err(e), _, _) => Err(e.clone()),
                (_, None, _) | (_, _, None) => Err("no model for this scenario".to_string()),
                (Ok(rep), Some(net), Some(doc)) => {
                    let fix_cfg = cfg.solver.with_seed(derive_seed(base, 4 * r as u64 + 2));
                    evaluate_replica(original, so, rep, net, doc, &fix_cfg)
                }
            };
            let (metrics, confusion, error) = match outcome {
                Ok((m, c)) => (Some(m), Some(c), None),
                Err(e) => (None, None, Some(e)),
            };
            ReportRow {
                scenario: label.to_string(),
                instance: name(r),
                replica: r,
                metrics,
                confusion,
                error,
            }
        })
        .collect();
    summary.aggregate = RowMetrics::mean(rows.iter().filter_map(|r| r.metrics.as_ref()));
    summary.pooled = pool(rows.iter().filter_map(|r| r.confusion.as_ref()));
    (summary, rows, doc)
}

fn train_model(
    original: &Instance,
    so: &Solution,
    replicas: &[Result<Replica, String>],
    cfg: &RunConfig,
    base: u64,
    name: &dyn Fn(usize) -> String,
    held_out: &[String],
) -> Result<Trained, String> {
    let ok: Vec<(usize, &Replica)> = replicas
        .iter()
        .enumerate()
        .filter_map(|(r, rep)| rep.as_ref().ok().map(|rep| (r, rep)))
        .collect();
    if ok.is_empty() {
        return Err("no learning replicas".to_string());
    }
    let observations: Vec<Observation<'_>> = ok
        .iter()
        .map(|(_, rep)| Observation {
            original,
            original_solution: so,
            modified: &rep.modified,
            modified_solution: &rep.solution,
        })
        .collect();
    let ids: Vec<String> = ok.iter().map(|(r, _)| name(*r)).collect();
    let data = build_dataset(&observations, cfg.grid.split, derive_seed(base, u64::MAX)).map_err(|e| e.to_string())?;
    if let Some(id) = ids.iter().find(|id| held_out.contains(id)) {
        return Err(format!("held-out replica {id} in the dataset"));
    }

    let train = data.examples(Split::Train);
    let val = data.examples(Split::Val);
    let test = data.examples(Split::Test);
    let mut tcfg = cfg.train.clone();
    tcfg.seed = derive_seed(base, u64::MAX - 2);
    let init = Network::init(derive_seed(base, u64::MAX - 1));
    let (net, history) = classifier::train(init, &train, &val, &tcfg).map_err(|e| e.to_string())?;

    let (test_tnr, test_tpr, test_accuracy) = if test.is_empty() {
        (None, None, None)
    } else {
        let preds: Vec<u8> = (0..test.len()).map(|k| net.predict(test.row(k))).collect();
        let c = confusion_metrics(&test.y, &preds).map_err(|e| e.to_string())?;
        (Some(c.tnr), Some(c.tpr), Some(c.balanced_accuracy))
    };
    let sims: f64 = ok.iter().map(|(_, rep)| similarity(so, &rep.solution)).sum();
    let summary = ModelSummary {
        train_samples: train.len(),
        val_samples: val.len(),
        test_samples: test.len(),
        best_epoch: history.best_epoch,
        similarity: sims / ok.len() as f64,
        test_tnr,
        test_tpr,
        test_accuracy,
        sources: ids,
    };
    let doc = ModelDoc::new(
        &net,
        &data.scaler,
        ModelMeta {
            train_config: tcfg,
            history: Some(history),
            note: format!("trained on {} replicas", ok.len()),
        },
    );
    Ok(Trained { net, doc, summary })
}

/// Classification rates and edge-fixing result on one held-out replica.
fn evaluate_replica(
    original: &Instance,
    so: &Solution,
    rep: &Replica,
    net: &Network,
    doc: &ModelDoc,
    fix_cfg: &SolveConfig,
) -> Result<(RowMetrics, Confusion), String> {
    let preds = predict_edges(net, &doc.scaler, original, so, &rep.modified).map_err(|e| e.to_string())?;
    let labels = make_labels(so, &rep.solution);
    let y: Vec<u8> = preds.iter().map(|p| labels[&p.key]).collect();
    let yhat: Vec<u8> = preds.iter().map(|p| p.fixed).collect();
    let conf = confusion_metrics(&y, &yhat).map_err(|e| e.to_string())?;
    let graph = FixedGraph::from_predictions(&preds).map_err(|e| e.to_string())?;

    let start = Instant::now();
    let out = edgefix::fix_and_solve(&rep.modified.instance, &graph, fix_cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();

    let d = &out.diagnostics;
    let metrics = RowMetrics {
        sm_cost: rep.solution.cost,
        similarity: similarity(so, &rep.solution),
        tnr: conf.tnr,
        tpr: conf.tpr,
        accuracy: conf.balanced_accuracy,
        fix_cost: out.solution.cost,
        fix_time_s: elapsed,
        ref_time_s: rep.time_s,
        gap: gap(out.solution.cost, rep.solution.cost).map_err(|e| e.to_string())?,
        fixed_count: d.fixed_count as f64,
        repaired_count: d.repaired_count as f64,
        nodes_before: d.nodes_before as f64,
        nodes_after: d.nodes_after as f64,
        units: d.units as f64,
    };
    Ok((metrics, conf))
}

/// Rates recomputed from summed confusion counts.
pub fn pool<'a>(items: impl IntoIterator<Item = &'a Confusion>) -> Option<Confusion> {
    let mut labels = Vec::new();
    let mut preds = Vec::new();
    for c in items {
        for (count, y, p) in [(c.tn, 0, 0), (c.fp, 0, 1), (c.fn_, 1, 0), (c.tp, 1, 1)] {
            labels.extend(std::iter::repeat_n(y, count));
            preds.extend(std::iter::repeat_n(p, count));
        }
    }
    if labels.is_empty() {
        return None;
    }
    confusion_metrics(&labels, &preds).ok()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// Column order of the report table, with `time_s` only when
/// `timing` is set.
pub fn report_columns(timing: bool) -> Vec<&'static str> {
    let mut cols = vec!["scenario", "instance", "sm_cost", "similarity", "tnr", "tpr", "accuracy", "fix_cost"];
    if timing {
        cols.push("time_s");
    }
    cols.extend(["gap_pct", "status"]);
    cols
}

fn fmt_cost(c: f64) -> String {
    if c.fract() == 0.0 {
        format!("{c:.0}")
    } else {
        format!("{c:.2}")
    }
}

fn cells(scenario: &str, instance: &str, m: Option<&RowMetrics>, status: &str, timing: bool) -> Vec<String> {
    let mut out = vec![scenario.to_string(), instance.to_string()];
    match m {
        Some(m) => {
            out.push(fmt_cost(m.sm_cost));
            out.extend([m.similarity, m.tnr, m.tpr, m.accuracy].map(|v| format!("{v:.4}")));
            out.push(fmt_cost(m.fix_cost));
            if timing {
                out.push(format!("{:.3}", m.fix_time_s));
            }
            out.push(format!("{:.2}", 100.0 * m.gap));
        }
        None => out.extend(std::iter::repeat_n(String::new(), if timing { 8 } else { 7 })),
    }
    out.push(status.to_string());
    out
}

fn table(report: &RunReport, timing: bool) -> Vec<Vec<String>> {
    let mut lines = Vec::new();
    for s in &report.scenarios {
        for row in report.rows.iter().filter(|r| r.scenario == s.scenario) {
            let status = row.error.as_deref().unwrap_or("ok");
            lines.push(cells(&row.scenario, &row.instance, row.metrics.as_ref(), status, timing));
        }
        let status = s.error.as_deref().unwrap_or("ok");
        if s.aggregate.is_some() || s.error.is_some() {
            lines.push(cells(&s.scenario, "mean", s.aggregate.as_ref(), status, timing));
        }
    }
    lines
}

/// Renders member rows followed by one mean row per scenario.
pub fn render_report(report: &RunReport, format: ReportFormat, timing: bool) -> String {
    let cols = report_columns(timing);
    let lines = table(report, timing);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&cols).expect("in-memory write");
            for l in &lines {
                w.write_record(l).expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
        }
        ReportFormat::Markdown => {
            let mut s = String::new();
            writeln!(s, "| {} |", cols.join(" | ")).unwrap();
            writeln!(s, "|{}", "---|".repeat(cols.len())).unwrap();
            for l in &lines {
                let escaped: Vec<String> = l.iter().map(|c| c.replace('|', "\\|")).collect();
                writeln!(s, "| {} |", escaped.join(" | ")).unwrap();
            }
            s
        }
    }
}

/// Markdown summary of the learned models, one line per scenario.
pub fn render_models(report: &RunReport) -> String {
    let mut s = String::from("| scenario | delta_d | similarity | train | val | test | best_epoch | test_tnr | test_tpr | test_accuracy | status |\n|---|---|---|---|---|---|---|---|---|---|---|\n");
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
    for sc in &report.scenarios {
        let status = sc.error.as_deref().unwrap_or("ok");
        match &sc.model {
            Some(m) => writeln!(
                s,
                "| {} | {} | {:.4} | {} | {} | {} | {} | {} | {} | {} | {} |",
                sc.scenario,
                sc.delta_d,
                m.similarity,
                m.train_samples,
                m.val_samples,
                m.test_samples,
                m.best_epoch,
                opt(m.test_tnr),
                opt(m.test_tpr),
                opt(m.test_accuracy),
                status
            )
            .unwrap(),
            None => writeln!(s, "| {} | {} |  |  |  |  |  |  |  |  | {} |", sc.scenario, sc.delta_d, status).unwrap(),
        }
    }
    s
}

/// Writes `report.csv`, `report.md`, `models.md` and `report.json`.
pub fn write_report(dir: &Path, report: &RunReport, timing: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let stored = if timing { report.clone() } else { report.without_timing() };
    std::fs::write(dir.join("report.csv"), render_report(&stored, ReportFormat::Csv, timing))?;
    std::fs::write(dir.join("report.md"), render_report(&stored, ReportFormat::Markdown, timing))?;
    std::fs::write(dir.join("models.md"), render_models(&stored))?;
    formats::write_json(&dir.join("report.json"), &stored)
}

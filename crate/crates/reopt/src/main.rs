use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use reopt::cvrplib::{parse_instance, write_instance};
use reopt::formats::{
    self, read_examples, read_json, write_dataset, write_json, ChangedDoc, DiagnosticsDoc, ModelDoc, ModelMeta,
    ScenarioSpec, SolutionDoc,
};
use reopt::harness::{self, reference_solve, ReportFormat, RunConfig};
use reopt_core::edgefix::{fix_and_solve, predict_edges, FixedGraph};
use reopt_core::features::{build_dataset, make_labels, similarity, Observation};
use reopt_core::instance::perturb;
use reopt_core::rng::derive_seed;
use reopt_core::{classifier, confusion_metrics, gap, Instance, Modified, Network, Solution};
use serde_json::json;

/// Learning-guided reoptimization for the capacitated vehicle routing problem.
#[derive(Parser)]
#[command(name = "reopt", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Ruin-and-recreate iterations per restart.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Restarts per solve.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// JSON run configuration (grid, solver, train).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Redraw the demands of a share of the clients.
    Perturb {
        #[arg(long)]
        instance: PathBuf,
        /// Scenario JSON `{nc, class, delta_d?, seed, distribution?}`.
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Solve an instance.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        /// Use the exact solver (at most 10 clients).
        #[arg(long)]
        exact: bool,
    },
    /// Build a labeled edge dataset from perturbed replicas.
    Dataset {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 20)]
        replicas: usize,
    },
    /// Train a classifier on a dataset directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Override the number of epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Fix predicted edges and re-solve a modified instance.
    Fix {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        original_solution: PathBuf,
        #[arg(long)]
        modified: PathBuf,
        /// Changed-client sidecar (default: `<modified>.changed.json`).
        #[arg(long)]
        changed: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
    },
    /// Classification rates of a model on one modified instance.
    Evaluate {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        original_solution: PathBuf,
        #[arg(long)]
        modified: PathBuf,
        #[arg(long)]
        changed: Option<PathBuf>,
        #[arg(long)]
        modified_solution: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Also run edge fixing and report the gap.
        #[arg(long)]
        fix: bool,
    },
    /// Run a scenario grid and write report tables.
    Grid {
        #[arg(long, conflicts_with = "synthetic")]
        instance: Option<PathBuf>,
        /// Generate a random instance with this many clients instead.
        #[arg(long)]
        synthetic: Option<usize>,
        /// Include wall-clock times (makes the report non-reproducible).
        #[arg(long)]
        timing: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string().trim() }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("{}", json!({ "error": chain[0], "causes": &chain[1..] }));
            ExitCode::FAILURE
        }
    }
}

fn load_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_instance(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_solution(inst: &Instance, path: &Path) -> Result<Solution> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let doc: SolutionDoc = serde_json::from_str(&text)?;
        Ok(Solution::from_client_routes(inst, doc.routes))
    } else {
        formats::parse_solution_text(inst, &text).with_context(|| format!("parsing {}", path.display()))
    }
}

fn save_solution(path: &Path, sol: &Solution) -> Result<()> {
    if path.extension().is_some_and(|e| e == "json") {
        write_json(path, &SolutionDoc::new(sol))
    } else {
        fs::write(path, formats::write_solution_text(sol)).with_context(|| format!("writing {}", path.display()))
    }
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("changed.json")
}

fn load_modified(path: &Path, changed: Option<&Path>) -> Result<Modified> {
    let instance = load_instance(path)?;
    let side = changed.map(Path::to_path_buf).unwrap_or_else(|| sidecar(path));
    let doc: ChangedDoc = read_json(&side)?;
    if doc.changed.iter().any(|&c| c == 0 || c > instance.n()) {
        bail!("{}: changed client outside 1..={}", side.display(), instance.n());
    }
    let mut changed = doc.changed;
    changed.sort_unstable();
    changed.dedup();
    Ok(Modified { instance, changed })
}

fn load_model(path: &Path) -> Result<(Network, ModelDoc)> {
    let doc: ModelDoc = read_json(path)?;
    Ok((doc.network()?, doc))
}

fn run_config(common: &Common) -> Result<RunConfig> {
    let mut cfg: RunConfig = match &common.config {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(b) = common.budget {
        cfg.solver.budget = b;
    }
    if let Some(k) = common.k {
        cfg.solver.k = k;
    }
    Ok(cfg)
}

fn require_out(common: &Common) -> Result<&Path> {
    common.out.as_deref().context("--out is required")
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let cfg = run_config(&cli.common)?;
    let common = &cli.common;
    match cli.cmd {
        Command::Perturb { instance, scenario } => {
            let inst = load_instance(&instance)?;
            let mut spec: ScenarioSpec = read_json(&scenario)?;
            if let Some(s) = common.seed {
                spec.seed = s;
            }
            let scn = spec.resolve()?;
            let m = perturb(&inst, &scn);
            let out = require_out(common)?;
            fs::write(out, write_instance(&m.instance))?;
            write_json(&sidecar(out), &ChangedDoc { scenario: scn, changed: m.changed.clone() })?;
            println!("{}", json!({ "changed": m.changed, "delta_d": scn.delta_d }));
        }
        Command::Solve { instance, exact } => {
            let inst = load_instance(&instance)?;
            let start = Instant::now();
            let sol = if exact {
                reopt_core::solver::brute_force_optimal(&inst, &Default::default())?
            } else {
                reopt_core::solver::best_of_k(&inst, &Default::default(), cfg.solver.k, cfg.solver.budget, cfg.seed)?
            };
            let time_ms = start.elapsed().as_secs_f64() * 1e3;
            match &common.out {
                Some(out) => save_solution(out, &sol)?,
                None => print!("{}", formats::write_solution_text(&sol)),
            }
            eprintln!("{}", json!({ "cost": sol.cost, "routes": sol.routes.len(), "time_ms": time_ms }));
        }
        Command::Dataset { instance, scenario, replicas } => {
            let inst = load_instance(&instance)?;
            let spec: ScenarioSpec = read_json(&scenario)?;
            let base = spec.resolve()?;
            let so = reference_solve(&inst, &cfg.solver.with_seed(derive_seed(cfg.seed, 0)))?;
            let solved: Vec<(Modified, Solution)> = (0..replicas)
                .map(|r| {
                    let mut scn = base;
                    scn.seed = derive_seed(cfg.seed, 4 * r as u64 + 4);
                    let m = perturb(&inst, &scn);
                    let s = reference_solve(&m.instance, &cfg.solver.with_seed(derive_seed(cfg.seed, 4 * r as u64 + 5)))?;
                    Ok((m, s))
                })
                .collect::<Result<_>>()?;
            let obs: Vec<Observation<'_>> = solved
                .iter()
                .map(|(m, s)| Observation { original: &inst, original_solution: &so, modified: m, modified_solution: s })
                .collect();
            let data = build_dataset(&obs, cfg.grid.split, derive_seed(cfg.seed, 1))?;
            let ids: Vec<String> = (0..replicas).map(|r| format!("{}_{}_{}", inst.name(), base, r)).collect();
            let out = require_out(common)?;
            write_dataset(out, &data, &ids)?;
            save_solution(&out.join("original.sol"), &so)?;
            println!("{}", json!({ "samples": data.samples.len(), "warnings": data.warnings }));
        }
        Command::Train { data, epochs } => {
            let train = read_examples(&data.join("train.csv"))?;
            let val = read_examples(&data.join("val.csv"))?;
            let scaler = read_json(&data.join("scaler.json"))?;
            let mut tcfg = cfg.train.clone();
            tcfg.seed = derive_seed(cfg.seed, 1);
            if let Some(e) = epochs {
                tcfg.epochs = e;
            }
            let (net, history) = classifier::train(Network::init(cfg.seed), &train, &val, &tcfg)?;
            let best = history.best_epoch;
            let doc = ModelDoc::new(&net, &scaler, ModelMeta { train_config: tcfg, history: Some(history), note: String::new() });
            write_json(require_out(common)?, &doc)?;
            println!(
                "{}",
                json!({ "best_epoch": best, "val_balanced_accuracy": classifier::balanced_accuracy(&net, &val) })
            );
        }
        Command::Fix { original, original_solution, modified, changed, model } => {
            let po = load_instance(&original)?;
            let so = load_solution(&po, &original_solution)?;
            let pm = load_modified(&modified, changed.as_deref())?;
            let (net, doc) = load_model(&model)?;
            let preds = predict_edges(&net, &doc.scaler, &po, &so, &pm)?;
            let graph = FixedGraph::from_predictions(&preds)?;
            let start = Instant::now();
            let out = fix_and_solve(&pm.instance, &graph, &cfg.solver.with_seed(cfg.seed))?;
            let time_ms = start.elapsed().as_secs_f64() * 1e3;
            if let Some(path) = &common.out {
                save_solution(path, &out.solution)?;
            }
            println!("{}", serde_json::to_string(&DiagnosticsDoc::new(&out.diagnostics, time_ms))?);
        }
        Command::Evaluate { original, original_solution, modified, changed, modified_solution, model, fix } => {
            let po = load_instance(&original)?;
            let so = load_solution(&po, &original_solution)?;
            let pm = load_modified(&modified, changed.as_deref())?;
            let sm = load_solution(&pm.instance, &modified_solution)?;
            let (net, doc) = load_model(&model)?;
            let preds = predict_edges(&net, &doc.scaler, &po, &so, &pm)?;
            let labels = make_labels(&so, &sm);
            let y: Vec<u8> = preds.iter().map(|p| labels[&p.key]).collect();
            let yhat: Vec<u8> = preds.iter().map(|p| p.fixed).collect();
            let c = confusion_metrics(&y, &yhat)?;
            let mut report = json!({ "similarity": similarity(&so, &sm), "confusion": c });
            if fix {
                let graph = FixedGraph::from_predictions(&preds)?;
                let start = Instant::now();
                let out = fix_and_solve(&pm.instance, &graph, &cfg.solver.with_seed(cfg.seed))?;
                let time_ms = start.elapsed().as_secs_f64() * 1e3;
                report["fix"] = serde_json::to_value(DiagnosticsDoc::new(&out.diagnostics, time_ms))?;
                report["gap"] = json!(gap(out.solution.cost, sm.cost)?);
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Grid { instance, synthetic: n, timing } => {
            let inst = match (instance, n) {
                (Some(p), _) => load_instance(&p)?,
                (None, Some(n)) => harness::synthetic_for(&cfg.grid, n, derive_seed(cfg.seed, u64::MAX)),
                (None, None) => bail!("grid needs --instance or --synthetic"),
            };
            let out = common.out.as_deref();
            let report = harness::run_grid(&inst, &cfg, out)?;
            if let Some(dir) = out {
                harness::write_report(dir, &report, timing)?;
                write_json(&dir.join("config.json"), &cfg)?;
            }
            let shown = if timing { report } else { report.without_timing() };
            print!("{}", harness::render_report(&shown, ReportFormat::Markdown, timing));
        }
    }
    Ok(())
}

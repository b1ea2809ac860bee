//! Text and JSON artifacts: solutions, scenarios, datasets, models and
//! per-solve diagnostics.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use reopt_core::classifier::{Examples, Layer, TrainHistory};
use reopt_core::features::{Split, FEATURE_NAMES};
use reopt_core::instance::DemandDistribution;
use reopt_core::{
    Dataset, FixDiagnostics, Instance, IntervalClass, Network, Scenario, Segment, Solution,
    TrainConfig, N_FEATURES,
};
use serde::{Deserialize, Serialize};

fn fmt_cost(c: f64) -> String {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        format!("{}", c as i64)
    } else {
        format!("{c}")
    }
}

/// CVRPLIB solution text: one `Route #k: …` line per route, then `Cost c`.
pub fn write_solution_text(sol: &Solution) -> String {
    let mut s = String::new();
    for (k, r) in sol.client_routes().iter().enumerate() {
        let ids: Vec<String> = r.iter().map(usize::to_string).collect();
        writeln!(s, "Route #{}: {}", k + 1, ids.join(" ")).unwrap();
    }
    writeln!(s, "Cost {}", fmt_cost(sol.cost)).unwrap();
    s
}

/// Reads solution text; the cost is recomputed on `inst` and must match a
/// `Cost` line when one is present.
pub fn parse_solution_text(inst: &Instance, text: &str) -> Result<Solution> {
    let mut routes = Vec::new();
    let mut stated = None;
    for (k, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix("Route #") {
            let (_, ids) = rest
                .split_once(':')
                .with_context(|| format!("line {}: missing ':' in route", k + 1))?;
            let route = ids
                .split_whitespace()
                .map(|v| v.parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .with_context(|| format!("line {}: bad client id", k + 1))?;
            routes.push(route);
        } else if let Some(c) = t.strip_prefix("Cost") {
            stated = Some(
                c.trim()
                    .parse::<f64>()
                    .with_context(|| format!("line {}: bad cost", k + 1))?,
            );
        } else {
            bail!("line {}: unexpected {t:?}", k + 1);
        }
    }
    let sol = Solution::from_client_routes(inst, routes);
    sol.check(inst, &Default::default())?;
    if let Some(c) = stated {
        if (c - sol.cost).abs() > 1e-6 * sol.cost.abs().max(1.0) {
            bail!("stated cost {c} differs from recomputed cost {}", sol.cost);
        }
    }
    Ok(sol)
}

/// JSON form of a solution that keeps the visit structure and the client
/// path behind every segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub cost: f64,
    /// Routes in client ids with segments expanded.
    pub routes: Vec<Vec<usize>>,
    pub segments: Vec<Segment>,
    pub visits: Vec<reopt_core::Route>,
}

impl SolutionDoc {
    pub fn new(sol: &Solution) -> Self {
        SolutionDoc {
            cost: sol.cost,
            routes: sol.client_routes(),
            segments: sol.segments.clone(),
            visits: sol.routes.clone(),
        }
    }

    pub fn into_solution(self) -> Solution {
        Solution {
            routes: self.visits,
            segments: self.segments,
            cost: self.cost,
        }
    }
}

/// Scenario document `{nc, class, delta_d?, seed}`. Without `delta_d` the
/// value is looked up from `distribution`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub nc: u32,
    pub class: IntervalClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_d: Option<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DemandDistribution>,
}

impl ScenarioSpec {
    pub fn resolve(&self) -> Result<Scenario> {
        let delta = match (self.delta_d, self.distribution) {
            (Some(d), _) => d,
            (None, Some(tag)) => tag.delta(self.class),
            (None, None) => bail!("scenario needs delta_d or a demand distribution"),
        };
        Ok(Scenario::new(self.nc, self.class, delta, self.seed)?)
    }
}

/// Sidecar of a perturbed instance listing the redrawn clients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangedDoc {
    pub scenario: Scenario,
    pub changed: Vec<usize>,
}

fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    h.extend(["label", "instance_id", "i", "j"].map(String::from));
    h
}

/// Writes `train.csv`, `val.csv`, `test.csv` and `scaler.json` into `dir`.
/// `instance_ids[k]` names observation `k`.
pub fn write_dataset(dir: &Path, data: &Dataset, instance_ids: &[String]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for split in [Split::Train, Split::Val, Split::Test] {
        let path = dir.join(format!("{}.csv", split.name()));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(csv_header())?;
        for s in data.samples_in(split) {
            let mut rec: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
            rec.push(s.label.to_string());
            rec.push(instance_ids[s.source].clone());
            rec.push(s.key.i().to_string());
            rec.push(s.key.j().to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    write_json(&dir.join("scaler.json"), &data.scaler)
}

/// Reads one split file back as examples.
pub fn read_examples(path: &Path) -> Result<Examples> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    if r.headers()?.iter().collect::<Vec<_>>() != csv_header() {
        bail!("{}: unexpected header", path.display());
    }
    let mut ex = Examples::new(N_FEATURES);
    for rec in r.records() {
        let rec = rec?;
        let row = (0..N_FEATURES)
            .map(|f| rec[f].parse::<f64>())
            .collect::<Result<Vec<_>, _>>()?;
        ex.push(&row, rec[N_FEATURES].parse()?);
    }
    Ok(ex)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub train_config: TrainConfig,
    pub history: Option<TrainHistory>,
    #[serde(default)]
    pub note: String,
}

/// Serialized classifier with the scaler its inputs were fitted with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub architecture: Vec<usize>,
    pub layers: Vec<Layer>,
    pub scaler: reopt_core::features::Scaler,
    pub metadata: ModelMeta,
}

impl ModelDoc {
    pub fn new(net: &Network, scaler: &reopt_core::features::Scaler, metadata: ModelMeta) -> Self {
        ModelDoc {
            architecture: net.architecture(),
            layers: net.layers.clone(),
            scaler: scaler.clone(),
            metadata,
        }
    }

    pub fn network(&self) -> Result<Network> {
        let net = Network {
            layers: self.layers.clone(),
        };
        if net.architecture() != self.architecture {
            bail!("layer shapes do not match the declared architecture");
        }
        for l in &net.layers {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                bail!("layer parameter counts do not match its shape");
            }
        }
        if !net.is_finite() {
            bail!("model has non-finite parameters");
        }
        Ok(net)
    }
}

/// One record per edge-fixing solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsDoc {
    pub fixed_count: usize,
    pub repaired_count: usize,
    pub nodes_before: usize,
    pub nodes_after: usize,
    pub cost: f64,
    pub time_ms: f64,
    pub seed: u64,
}

impl DiagnosticsDoc {
    pub fn new(d: &FixDiagnostics, time_ms: f64) -> Self {
        DiagnosticsDoc {
            fixed_count: d.fixed_count,
            repaired_count: d.repaired_count,
            nodes_before: d.nodes_before,
            nodes_after: d.nodes_after,
            cost: d.cost,
            time_ms,
            seed: d.seed,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

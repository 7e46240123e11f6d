//! Scenario suite orchestration: sampling every scenario, persisting the
//! sample sets and writing the comparison reports.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! suite.json                 manifest (reference, scenarios, budget, seed)
//! report.csv                 area comparison against the reference scenario
//! table1.csv                 observed-flow deltas against the reference scenario
//! <scenario>/samples.csv     one row per power-flow attempt
//! <scenario>/base.csv        the initial operating point
//! <scenario>/observed.csv    measured flows of the initial state
//! <scenario>/observed_delta.csv
//! <scenario>/hull_vertices.csv
//! <scenario>/hull_summary.csv
//! <scenario>/multiset.csv
//! <scenario>/scatter.svg
//! <scenario>/failed.txt      only when the scenario could not run
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{area_difference, bin_samples, feasible_hull, polygon_area, HullResult, Point};
use crate::error::{Error, Result};
use crate::grid::{apply_scenario, load_network, load_scenario, BranchId, Network, Scenario};
use crate::observability::{
    build_mask, compare_observed, comparison_csv_rows, format_percent, observe, ObservabilityMask, ObservedRecord,
    ObservedState, RecordDelta, COMPARISON_HEADER,
};
use crate::powerflow::{solve_pf, SolverOptions};
use crate::sampler::{
    identify_capabilities, load_fsp_config, read_samples_csv, write_samples_csv, ConstraintLimits, Evaluator,
    FlexSample, FspConfig,
};

pub const REPORT_HEADER: [&str; 9] = [
    "scenario",
    "hull_area_mw_mvar",
    "area_diff_percent",
    "n_feasible",
    "n_infeasible",
    "n_nonconverged",
    "max_observed_dP_percent",
    "max_observed_dQ_percent",
    "status",
];

/// Suite configuration. Input paths are relative to the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network_path: PathBuf,
    pub fsp_config_path: PathBuf,
    pub scenario_paths: Vec<PathBuf>,
    /// Scenario the others are compared against; always run.
    #[serde(default = "default_reference")]
    pub reference_scenario: String,
    pub budget: usize,
    pub seed: u64,
    #[serde(default)]
    pub limits: ConstraintLimits,
    #[serde(default = "default_mask_length")]
    pub mask_min_length_km: f64,
    #[serde(default = "default_k")]
    pub k_decimals: u32,
    pub output_dir: PathBuf,
}

fn default_reference() -> String {
    "unaltered".to_string()
}

fn default_mask_length() -> f64 {
    2.5
}

fn default_k() -> u32 {
    2
}

impl RunConfig {
    /// Reads a config file and resolves its input paths against the file's
    /// directory. `output_dir` stays relative to the working directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.network_path = dir.join(&cfg.network_path);
        cfg.fsp_config_path = dir.join(&cfg.fsp_config_path);
        for p in &mut cfg.scenario_paths {
            *p = dir.join(&*p);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for p in std::iter::once(&self.network_path)
            .chain(std::iter::once(&self.fsp_config_path))
            .chain(&self.scenario_paths)
        {
            if !p.is_file() {
                return Err(Error::Validation(format!("{} does not exist", p.display())));
            }
        }
        if !(self.mask_min_length_km > 0.0) {
            return Err(Error::Validation("mask_min_length_km must be positive".into()));
        }
        self.limits.validate()
    }
}

/// Command-line overrides of a [`RunConfig`].
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub budget: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    /// Scenario names to run; empty runs all. The reference always runs.
    pub scenarios: Vec<String>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    reference: String,
    scenarios: Vec<String>,
    budget: usize,
    seed: u64,
    k_decimals: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioStatus {
    Ok,
    Failed(String),
}

impl ScenarioStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, ScenarioStatus::Ok)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub scenario: String,
    pub hull_area: Option<f64>,
    pub area_diff_percent: Option<f64>,
    pub n_feasible: usize,
    pub n_infeasible: usize,
    pub n_nonconverged: usize,
    pub max_observed_dp_percent: Option<f64>,
    pub max_observed_dq_percent: Option<f64>,
    pub observed: Vec<RecordDelta>,
    pub status: ScenarioStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub output_dir: PathBuf,
    pub reference: String,
    pub rows: Vec<ReportRow>,
}

impl SuiteReport {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.status.is_ok())
    }

    pub fn row(&self, scenario: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.scenario == scenario)
    }
}

/// Scenario key: the file stem, lower-cased.
pub fn scenario_key(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().to_lowercase())
        .unwrap_or_default()
}

/// Runs every selected scenario and writes all artifacts. Scenario failures
/// are recorded in the report; only configuration and I/O errors abort.
pub fn run_suite(cfg: &RunConfig, opts: &RunOptions) -> Result<SuiteReport> {
    let budget = opts.budget.unwrap_or(cfg.budget);
    let seed = opts.seed.unwrap_or(cfg.seed);
    let out_dir = opts.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());

    let base = load_network(&cfg.network_path)?;
    let fsp_cfg = load_fsp_config(&cfg.fsp_config_path)?;
    let mask = build_mask(&base, cfg.mask_min_length_km)?;

    let mut all = Vec::new();
    for p in &cfg.scenario_paths {
        all.push((scenario_key(p), load_scenario(p)?));
    }
    let keys: BTreeSet<&str> = all.iter().map(|(k, _)| k.as_str()).collect();
    if keys.len() != all.len() {
        return Err(Error::Validation("scenario file names must be unique".into()));
    }
    let reference = cfg.reference_scenario.to_lowercase();
    if !keys.contains(reference.as_str()) {
        return Err(Error::Validation(format!(
            "reference scenario `{reference}` is not configured"
        )));
    }
    let wanted: BTreeSet<String> = opts.scenarios.iter().map(|s| s.to_lowercase()).collect();
    if let Some(bad) = wanted.iter().find(|w| !keys.contains(w.as_str())) {
        let known: Vec<&str> = keys.iter().copied().collect();
        return Err(Error::Validation(format!(
            "unknown scenario `{bad}`, expected one of {}",
            known.join(", ")
        )));
    }
    let selected: Vec<(String, Scenario)> = all
        .into_iter()
        .filter(|(k, _)| wanted.is_empty() || *k == reference || wanted.contains(k))
        .collect();

    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let manifest = Manifest {
        reference: reference.clone(),
        scenarios: selected.iter().map(|(k, _)| k.clone()).collect(),
        budget,
        seed,
        k_decimals: cfg.k_decimals,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&out_dir.join("suite.json"), &text)?;

    let job = SuiteJob {
        base: &base,
        fsp_cfg: &fsp_cfg,
        limits: &cfg.limits,
        mask: &mask,
        budget,
        seed,
        k: cfg.k_decimals,
        out_dir: &out_dir,
    };
    let run_all = || -> Result<()> {
        selected
            .par_iter()
            .map(|(key, sc)| {
                eprintln!("[{key}] sampling {budget} actions");
                let status = job.run_scenario(key, sc)?;
                if let ScenarioStatus::Failed(reason) = &status {
                    eprintln!("[{key}] failed: {reason}");
                }
                Ok(())
            })
            .collect()
    };
    match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Setup(e.to_string()))?
            .install(run_all)?,
        None => run_all()?,
    }
    build_report(&out_dir)
}

struct SuiteJob<'a> {
    base: &'a Network,
    fsp_cfg: &'a FspConfig,
    limits: &'a ConstraintLimits,
    mask: &'a ObservabilityMask,
    budget: usize,
    seed: u64,
    k: u32,
    out_dir: &'a Path,
}

impl SuiteJob<'_> {
    fn run_scenario(&self, key: &str, sc: &Scenario) -> Result<ScenarioStatus> {
        let dir = self.out_dir.join(key);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

        let prepared = apply_scenario(self.base, sc).and_then(|net| {
            net.ensure_connected()?;
            let fsps = identify_capabilities(&net, self.fsp_cfg)?;
            let eval = Evaluator::new(&net, &fsps, self.limits)?;
            let initial = eval.initial_point();
            if !initial.converged() {
                return Err(Error::Setup("base case power flow did not converge".into()));
            }
            let sol = solve_pf(&net, SolverOptions::default())?;
            let observed = observe(&sol, self.mask)?;
            Ok((fsps, eval, initial, observed))
        });
        let (fsps, eval, initial, observed) = match prepared {
            Ok(p) => p,
            Err(e) => {
                let reason = e.to_string();
                write_file(&dir.join("failed.txt"), &format!("{reason}\n"))?;
                return Ok(ScenarioStatus::Failed(reason));
            }
        };

        let samples = eval.run(self.budget, self.seed);
        let hull = feasible_hull(&samples);

        write_samples(&dir.join("samples.csv"), &fsps, &samples)?;
        write_samples(&dir.join("base.csv"), &fsps, std::slice::from_ref(&initial))?;
        write_file(&dir.join("observed.csv"), &observed_csv(&observed))?;
        write_file(&dir.join("hull_vertices.csv"), &hull.to_csv())?;
        write_file(&dir.join("multiset.csv"), &bin_samples(&samples, self.k).to_csv())?;
        write_file(
            &dir.join("scatter.svg"),
            &render_scatter(&samples, Some(initial.y), &hull),
        )?;
        Ok(ScenarioStatus::Ok)
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_samples(path: &Path, fsps: &[crate::sampler::Fsp], samples: &[FlexSample]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_samples_csv(std::io::BufWriter::new(f), fsps, samples)
}

pub fn read_samples_file(path: &Path) -> Result<Vec<FlexSample>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(read_samples_csv(std::io::BufReader::new(f))?.1)
}

fn observed_csv(state: &ObservedState) -> String {
    let mut s = String::from("record,branch,p_mw,q_mvar\n");
    for r in &state.records {
        let branch = r.branch.map(|b| b.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{branch},{},{}", r.label, r.p_mw, r.q_mvar);
    }
    s
}

fn read_observed(path: &Path) -> Result<ObservedState> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let mut records = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::parse(path.display().to_string(), e))?;
        let num = |i: usize| {
            rec.get(i)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| Error::parse(path.display().to_string(), e))
        };
        let branch = match rec.get(1).unwrap_or("") {
            "" => None,
            b => Some(BranchId(
                b.parse().map_err(|e| Error::parse(path.display().to_string(), e))?,
            )),
        };
        records.push(ObservedRecord {
            label: rec.get(0).unwrap_or("").to_string(),
            branch,
            p_mw: num(2)?,
            q_mvar: num(3)?,
        });
    }
    Ok(ObservedState { records })
}

/// Reads hull vertices written by [`HullResult::to_csv`].
pub fn read_hull_file(path: &Path) -> Result<HullResult> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let mut vertices = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::parse(path.display().to_string(), e))?;
        let num = |i: usize| {
            rec.get(i)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| Error::parse(path.display().to_string(), e))
        };
        vertices.push((num(1)?, num(2)?));
    }
    let area = polygon_area(&vertices);
    Ok(HullResult { vertices, area })
}

struct Loaded {
    key: String,
    status: ScenarioStatus,
    hull: Option<HullResult>,
    counts: (usize, usize, usize),
    observed: Option<ObservedState>,
}

fn load_scenario_outputs(dir: &Path, key: &str) -> Result<Loaded> {
    let sdir = dir.join(key);
    let failed = sdir.join("failed.txt");
    if failed.is_file() {
        let reason = fs::read_to_string(&failed).map_err(|e| Error::io(&failed, e))?;
        return Ok(Loaded {
            key: key.to_string(),
            status: ScenarioStatus::Failed(reason.trim().to_string()),
            hull: None,
            counts: (0, 0, 0),
            observed: None,
        });
    }
    let samples = read_samples_file(&sdir.join("samples.csv"))?;
    let feasible = samples.iter().filter(|s| s.feasible).count();
    let nonconverged = samples.iter().filter(|s| !s.converged()).count();
    Ok(Loaded {
        key: key.to_string(),
        status: ScenarioStatus::Ok,
        hull: Some(read_hull_file(&sdir.join("hull_vertices.csv"))?),
        counts: (feasible, samples.len() - feasible - nonconverged, nonconverged),
        observed: Some(read_observed(&sdir.join("observed.csv"))?),
    })
}

fn max_abs(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    values
        .flatten()
        .map(f64::abs)
        .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
}

/// Rebuilds `report.csv`, `table1.csv` and the per-scenario summaries from
/// the files of a previous run.
pub fn build_report(out_dir: &Path) -> Result<SuiteReport> {
    let mpath = out_dir.join("suite.json");
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::parse(mpath.display().to_string(), e))?;

    let loaded = manifest
        .scenarios
        .iter()
        .map(|k| load_scenario_outputs(out_dir, k))
        .collect::<Result<Vec<_>>>()?;
    let reference = loaded
        .iter()
        .find(|l| l.key == manifest.reference)
        .ok_or_else(|| Error::Integrity(format!("reference `{}` missing from run", manifest.reference)))?;
    let ref_area = reference.hull.as_ref().map(|h| h.area);
    let ref_observed = reference.observed.clone();

    let mut rows = Vec::new();
    let mut table1 = String::from(COMPARISON_HEADER);
    for l in &loaded {
        let area = l.hull.as_ref().map(|h| h.area);
        let diff = match (area, ref_area) {
            (Some(a), Some(r)) => area_difference(a, r).ok(),
            _ => None,
        };
        let observed = match (&l.observed, &ref_observed) {
            (Some(o), Some(r)) => compare_observed(r, o)?,
            _ => Vec::new(),
        };
        if l.status.is_ok() {
            let sdir = out_dir.join(&l.key);
            let summary = format!(
                "scenario,area,area_diff_percent\n{},{},{}\n",
                l.key,
                fmt_opt(area, 6),
                format_percent(diff)
            );
            write_file(&sdir.join("hull_summary.csv"), &summary)?;
            let rows_csv = comparison_csv_rows(&l.key, &observed);
            write_file(
                &sdir.join("observed_delta.csv"),
                &format!("{COMPARISON_HEADER}{rows_csv}"),
            )?;
            if l.key != manifest.reference {
                table1.push_str(&rows_csv);
            }
        }
        rows.push(ReportRow {
            scenario: l.key.clone(),
            hull_area: area,
            area_diff_percent: diff,
            n_feasible: l.counts.0,
            n_infeasible: l.counts.1,
            n_nonconverged: l.counts.2,
            max_observed_dp_percent: max_abs(observed.iter().map(|d| d.dp_percent)),
            max_observed_dq_percent: max_abs(observed.iter().map(|d| d.dq_percent)),
            observed,
            status: l.status.clone(),
        });
    }
    write_file(&out_dir.join("table1.csv"), &table1)?;
    write_report_csv(&out_dir.join("report.csv"), &rows)?;
    Ok(SuiteReport {
        output_dir: out_dir.to_path_buf(),
        reference: manifest.reference,
        rows,
    })
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| format!("{x:.decimals$}")).unwrap_or_default()
}

fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path.display().to_string(), e))?;
    let err = |e: csv::Error| Error::parse(path.display().to_string(), e);
    w.write_record(REPORT_HEADER).map_err(err)?;
    for r in rows {
        let ok = r.status.is_ok();
        let pct = |v: Option<f64>| if ok { format_percent(v) } else { String::new() };
        let status = match &r.status {
            ScenarioStatus::Ok => "ok".to_string(),
            ScenarioStatus::Failed(reason) => format!("failed: {reason}"),
        };
        w.write_record([
            r.scenario.clone(),
            fmt_opt(r.hull_area, 6),
            pct(r.area_diff_percent),
            r.n_feasible.to_string(),
            r.n_infeasible.to_string(),
            r.n_nonconverged.to_string(),
            pct(r.max_observed_dp_percent),
            pct(r.max_observed_dq_percent),
            status,
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const SVG_W: f64 = 720.0;
const SVG_H: f64 = 540.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;

fn nice_step(span: f64) -> f64 {
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    if span <= 1e-9 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo - 0.05 * span, hi + 0.05 * span)
    }
}

/// PQ scatter of the samples: feasible and infeasible markers, the initial
/// point and the feasible hull. Markers falling on the same half pixel are
/// drawn once, which keeps large runs to a manageable file size.
pub fn render_scatter(samples: &[FlexSample], initial: Option<Point>, hull: &HullResult) -> String {
    let pts: Vec<(Point, bool)> = samples
        .iter()
        .filter(|s| s.y.0.is_finite() && s.y.1.is_finite())
        .map(|s| (s.y, s.feasible))
        .collect();
    let all = pts
        .iter()
        .map(|(p, _)| *p)
        .chain(initial.filter(|p| p.0.is_finite() && p.1.is_finite()));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (x0, x1) = padded(x0, x1);
    let (y0, y1) = padded(y0, y1);
    let pw = SVG_W - MARGIN_L - MARGIN_R;
    let ph = SVG_H - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );

    let step = nice_step(x1 - x0);
    let mut t = (x0 / step).ceil() * step;
    while t <= x1 {
        let x = sx(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_T + ph,
            MARGIN_T + ph + 5.0,
            MARGIN_T + ph + 18.0,
            tick_label(t, step)
        );
        t += step;
    }
    let step = nice_step(y1 - y0);
    let mut t = (y0 / step).ceil() * step;
    while t <= y1 {
        let y = sy(t);
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{MARGIN_L}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_L - 5.0,
            MARGIN_L - 8.0,
            y + 4.0,
            tick_label(t, step)
        );
        t += step;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">P [MW]</text>"#,
        MARGIN_L + pw / 2.0,
        SVG_H - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">Q [MVAr]</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0
    );

    for (feasible, color) in [(false, "#d62728"), (true, "#1f77b4")] {
        let mut seen = BTreeSet::new();
        let _ = writeln!(s, r#"<g fill="{color}" fill-opacity="0.5">"#);
        for (p, _) in pts.iter().filter(|(_, f)| *f == feasible) {
            let (x, y) = (sx(p.0), sy(p.1));
            if seen.insert(((x * 2.0).round() as i64, (y * 2.0).round() as i64)) {
                let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="1.5"/>"#);
            }
        }
        let _ = writeln!(s, "</g>");
    }

    if hull.vertices.len() >= 2 {
        let path: Vec<String> = hull
            .vertices
            .iter()
            .map(|v| format!("{:.1},{:.1}", sx(v.0), sy(v.1)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#,
            path.join(" ")
        );
    }
    if let Some((px, py)) = initial.filter(|p| p.0.is_finite() && p.1.is_finite()) {
        let (x, y) = (sx(px), sy(py));
        let _ = writeln!(
            s,
            r#"<path d="M{:.1},{:.1}L{:.1},{:.1}M{:.1},{:.1}L{:.1},{:.1}" stroke="black" stroke-width="2.5"/>"#,
            x - 6.0,
            y - 6.0,
            x + 6.0,
            y + 6.0,
            x - 6.0,
            y + 6.0,
            x + 6.0,
            y - 6.0
        );
    }

    let lx = MARGIN_L + 10.0;
    let ly = MARGIN_T + 16.0;
    let _ = writeln!(
        s,
        r##"<circle cx="{lx}" cy="{ly}" r="3" fill="#1f77b4"/><text x="{}" y="{}">feasible</text>"##,
        lx + 8.0,
        ly + 4.0
    );
    let _ = writeln!(
        s,
        r##"<circle cx="{lx}" cy="{}" r="3" fill="#d62728"/><text x="{}" y="{}">infeasible</text>"##,
        ly + 16.0,
        lx + 8.0,
        ly + 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{lx}" y="{}" text-anchor="middle" font-weight="bold">x</text><text x="{}" y="{}">initial point</text>"#,
        ly + 36.0,
        lx + 8.0,
        ly + 36.0
    );
    s.push_str("</svg>\n");
    s
}

fn tick_label(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.decimals$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// Hull of the feasible rows of a samples file.
pub fn hull_of_file(samples_csv: &Path) -> Result<(Vec<FlexSample>, HullResult)> {
    let samples = read_samples_file(samples_csv)?;
    let hull = feasible_hull(&samples);
    Ok((samples, hull))
}

/// Initial point stored in a `base.csv` next to a samples file, if present.
pub fn initial_point_near(samples_csv: &Path) -> Result<Option<Point>> {
    let base = samples_csv.with_file_name("base.csv");
    if !base.is_file() {
        return Ok(None);
    }
    Ok(read_samples_file(&base)?.first().map(|s| s.y))
}

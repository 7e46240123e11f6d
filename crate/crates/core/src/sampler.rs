//! Power-flow-based flexibility sampling.
//!
//! Each sample draws a setpoint for every flexibility service provider (FSP)
//! inside its capability box, solves the power flow from the initial state
//! and classifies the resulting interconnection operating point against the
//! network limits. Sample `i` uses its own ChaCha stream `i` under the run
//! seed, so results do not depend on how the work is scheduled.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{InjectionId, InjectionKind, Network};
use crate::powerflow::{PfSolution, PowerFlow, SolverOptions};

/// Reference to an injection by numeric id or by name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InjectionRef {
    Id(u32),
    Name(String),
}

impl fmt::Display for InjectionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InjectionRef::Id(id) => write!(f, "{id}"),
            InjectionRef::Name(name) => f.write_str(name),
        }
    }
}

/// One FSP entry of the configuration file. Omitted ranges are filled in by
/// the [`CapabilityPolicy`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FspSpec {
    pub injection: InjectionRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_range: Option<[f64; 2]>,
    /// Discrete (p, q) setpoints; sampled uniformly instead of the box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<[f64; 2]>>,
    /// Reactive setpoint follows active setpoint at the initial power factor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lock_power_factor: Option<bool>,
    #[serde(default)]
    pub cost_per_mw: f64,
    #[serde(default)]
    pub cost_per_mvar: f64,
}

impl FspSpec {
    pub fn for_injection(injection: InjectionRef) -> Self {
        FspSpec {
            injection,
            p_range: None,
            q_range: None,
            levels: None,
            lock_power_factor: None,
            cost_per_mw: 0.0,
            cost_per_mvar: 0.0,
        }
    }
}

/// Default capability boxes for entries without explicit ranges.
///
/// DER: active power in `[0, rating]`, reactive power in
/// `[-der_q_factor * rating, +der_q_factor * rating]`, independent.
/// Loads: active power in `[0, p_initial]` at constant power factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapabilityPolicy {
    #[serde(default = "default_der_q_factor")]
    pub der_q_factor: f64,
}

fn default_der_q_factor() -> f64 {
    0.33
}

impl Default for CapabilityPolicy {
    fn default() -> Self {
        CapabilityPolicy {
            der_q_factor: default_der_q_factor(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FspConfig {
    #[serde(default = "one")]
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub policy: CapabilityPolicy,
    #[serde(default)]
    pub fsps: Vec<FspSpec>,
}

fn one() -> u32 {
    1
}

impl FspConfig {
    pub fn empty() -> Self {
        FspConfig {
            schema_version: 1,
            description: None,
            policy: CapabilityPolicy::default(),
            fsps: Vec::new(),
        }
    }
}

pub fn load_fsp_config(path: impl AsRef<Path>) -> Result<FspConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: FspConfig = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
    if cfg.schema_version != 1 {
        return Err(Error::Validation(format!(
            "FSP config: unsupported schema_version {}",
            cfg.schema_version
        )));
    }
    Ok(cfg)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReactiveMode {
    Independent,
    /// q = p * ratio
    ConstantPowerFactor(f64),
}

/// Resolved capability of one FSP. Ranges are absolute setpoints in the
/// injection's own sign convention (loads consume, DER generate).
#[derive(Clone, Debug, PartialEq)]
pub struct Fsp {
    pub injection: InjectionId,
    pub name: String,
    pub kind: InjectionKind,
    pub initial: (f64, f64),
    pub p_range: (f64, f64),
    pub q_range: (f64, f64),
    pub levels: Option<Vec<(f64, f64)>>,
    pub reactive: ReactiveMode,
    pub cost_per_mw: f64,
    pub cost_per_mvar: f64,
}

impl Fsp {
    /// Column-safe label used in sample files.
    pub fn label(&self) -> String {
        self.name.replace(|c: char| !c.is_ascii_alphanumeric(), "_")
    }

    pub fn contains_shift(&self, dp: f64, dq: f64) -> bool {
        let (p, q) = (self.initial.0 + dp, self.initial.1 + dq);
        const EPS: f64 = 1e-9;
        match &self.levels {
            Some(levels) => levels
                .iter()
                .any(|&(lp, lq)| (lp - p).abs() < EPS && (lq - q).abs() < EPS),
            None => {
                p >= self.p_range.0 - EPS
                    && p <= self.p_range.1 + EPS
                    && q >= self.q_range.0 - EPS
                    && q <= self.q_range.1 + EPS
            }
        }
    }
}

/// Resolves the FSP configuration against the network.
pub fn identify_capabilities(net: &Network, cfg: &FspConfig) -> Result<Vec<Fsp>> {
    let mut out = Vec::with_capacity(cfg.fsps.len());
    let mut seen = BTreeSet::new();
    for spec in &cfg.fsps {
        let inj = match &spec.injection {
            InjectionRef::Id(id) => net.injection(InjectionId(*id)),
            InjectionRef::Name(name) => net.injection_by_name(name),
        }
        .ok_or_else(|| Error::Integrity(format!("FSP references unknown injection {}", spec.injection)))?;
        if !seen.insert(inj.id) {
            return Err(Error::Validation(format!("injection {} listed twice as FSP", inj.name)));
        }
        let (p0, q0) = (inj.p_mw, inj.q_mvar);
        let lock = spec.lock_power_factor.unwrap_or(inj.kind == InjectionKind::Load);

        let p_range = match spec.p_range {
            Some([lo, hi]) => (lo, hi),
            None => match inj.kind {
                InjectionKind::Der => (0.0, inj.sn_mva.unwrap_or(p0.abs())),
                InjectionKind::Load => (p0.min(0.0), p0.max(0.0)),
            },
        };
        let ratio = if p0 != 0.0 { q0 / p0 } else { 0.0 };
        let reactive = if lock {
            ReactiveMode::ConstantPowerFactor(ratio)
        } else {
            ReactiveMode::Independent
        };
        let q_range = match (spec.q_range, reactive) {
            (Some([lo, hi]), _) => (lo, hi),
            (None, ReactiveMode::ConstantPowerFactor(r)) => {
                let (a, b) = (p_range.0 * r, p_range.1 * r);
                (a.min(b), a.max(b))
            }
            (None, ReactiveMode::Independent) => match inj.kind {
                InjectionKind::Der => {
                    let rating = inj.sn_mva.unwrap_or(p0.abs());
                    let f = cfg.policy.der_q_factor;
                    (-f * rating, f * rating)
                }
                InjectionKind::Load => (q0.min(0.0), q0.max(0.0)),
            },
        };
        for (lo, hi, axis) in [(p_range.0, p_range.1, "p"), (q_range.0, q_range.1, "q")] {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::Validation(format!(
                    "FSP {}: inverted or non-finite {axis}_range [{lo}, {hi}]",
                    inj.name
                )));
            }
        }
        let levels = spec
            .levels
            .as_ref()
            .map(|ls| ls.iter().map(|l| (l[0], l[1])).collect::<Vec<_>>());
        if let Some(ls) = &levels {
            if ls.is_empty() {
                return Err(Error::Validation(format!("FSP {}: empty level list", inj.name)));
            }
            for &(p, q) in ls {
                if p < p_range.0 || p > p_range.1 || q < q_range.0 || q > q_range.1 {
                    return Err(Error::Validation(format!(
                        "FSP {}: level ({p}, {q}) outside capability box",
                        inj.name
                    )));
                }
            }
        }
        if spec.cost_per_mw < 0.0 || spec.cost_per_mvar < 0.0 {
            return Err(Error::Validation(format!("FSP {}: negative price", inj.name)));
        }
        out.push(Fsp {
            injection: inj.id,
            name: inj.name.clone(),
            kind: inj.kind,
            initial: (p0, q0),
            p_range,
            q_range,
            levels,
            reactive,
            cost_per_mw: spec.cost_per_mw,
            cost_per_mvar: spec.cost_per_mvar,
        });
    }
    Ok(out)
}

/// Setpoint shifts (dp, dq) per FSP, in FSP order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FspAction {
    pub shifts: Vec<(f64, f64)>,
}

impl FspAction {
    pub fn zero(n: usize) -> Self {
        FspAction {
            shifts: vec![(0.0, 0.0); n],
        }
    }

    pub fn cost(&self, fsps: &[Fsp]) -> f64 {
        fsps.iter()
            .zip(&self.shifts)
            .map(|(f, &(dp, dq))| f.cost_per_mw * dp.abs() + f.cost_per_mvar * dq.abs())
            .sum()
    }
}

/// Draws one action: uniform per axis inside each box, or uniform over the
/// discrete levels.
pub fn sample_action<R: Rng + ?Sized>(fsps: &[Fsp], rng: &mut R) -> FspAction {
    let shifts = fsps
        .iter()
        .map(|f| {
            let (p, q) = match &f.levels {
                Some(levels) => levels[rng.gen_range(0..levels.len())],
                None => {
                    let p = f.p_range.0 + rng.gen::<f64>() * (f.p_range.1 - f.p_range.0);
                    let q = match f.reactive {
                        ReactiveMode::ConstantPowerFactor(r) => p * r,
                        ReactiveMode::Independent => f.q_range.0 + rng.gen::<f64>() * (f.q_range.1 - f.q_range.0),
                    };
                    (p, q)
                }
            };
            (p - f.initial.0, q - f.initial.1)
        })
        .collect();
    FspAction { shifts }
}

/// Generator for sample `index` of a run seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintLimits {
    pub v_min_pu: f64,
    pub v_max_pu: f64,
    pub loading_max_percent: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_cap: Option<f64>,
}

impl Default for ConstraintLimits {
    fn default() -> Self {
        ConstraintLimits {
            v_min_pu: 0.95,
            v_max_pu: 1.05,
            loading_max_percent: 100.0,
            cost_cap: None,
        }
    }
}

impl ConstraintLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_min_pu < self.v_max_pu) {
            return Err(Error::Validation("v_min_pu must be below v_max_pu".into()));
        }
        if !(self.loading_max_percent > 0.0) {
            return Err(Error::Validation("loading_max_percent must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Violation {
    Undervoltage,
    Overvoltage,
    Overload,
    CostCap,
    NonConverged,
}

impl Violation {
    pub fn code(self) -> &'static str {
        match self {
            Violation::Undervoltage => "undervoltage",
            Violation::Overvoltage => "overvoltage",
            Violation::Overload => "overload",
            Violation::CostCap => "cost_cap",
            Violation::NonConverged => "non_converged",
        }
    }
}

impl FromStr for Violation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "undervoltage" => Violation::Undervoltage,
            "overvoltage" => Violation::Overvoltage,
            "overload" => Violation::Overload,
            "cost_cap" => Violation::CostCap,
            "non_converged" => Violation::NonConverged,
            other => return Err(Error::parse("violation code", format!("unknown code `{other}`"))),
        })
    }
}

/// Full electrical state of a sample, kept only on request.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleState {
    pub v_pu: Vec<f64>,
    pub theta_rad: Vec<f64>,
    /// Net bus injections [MW, MVAr] after the action.
    pub injections: Vec<(f64, f64)>,
}

/// One evaluated action.
#[derive(Clone, Debug, PartialEq)]
pub struct FlexSample {
    pub index: usize,
    /// Interconnection operating point (MW, MVAr), TSO to DSO positive.
    /// NaN when the power flow failed.
    pub y: (f64, f64),
    pub action: FspAction,
    pub feasible: bool,
    pub violations: BTreeSet<Violation>,
    pub v_pu_min: f64,
    pub v_pu_max: f64,
    pub loading_max: f64,
    pub state: Option<Box<SampleState>>,
}

impl FlexSample {
    pub fn converged(&self) -> bool {
        !self.violations.contains(&Violation::NonConverged)
    }

    pub fn violation_codes(&self) -> String {
        self.violations.iter().map(|v| v.code()).collect::<Vec<_>>().join("|")
    }
}

/// Evaluates actions on one network and FSP set. The power-flow model and
/// the initial injections are prepared once and shared read-only.
#[derive(Clone, Debug)]
pub struct Evaluator {
    pf: PowerFlow,
    base_injections: Vec<Complex64>,
    fsp_bus: Vec<usize>,
    fsp_sign: Vec<f64>,
    fsps: Vec<Fsp>,
    limits: ConstraintLimits,
    pub options: SolverOptions,
    pub keep_states: bool,
}

impl Evaluator {
    pub fn new(net: &Network, fsps: &[Fsp], limits: &ConstraintLimits) -> Result<Self> {
        limits.validate()?;
        let pf = PowerFlow::new(net)?;
        let base_injections = pf.scheduled_injections(net);
        let mut fsp_bus = Vec::with_capacity(fsps.len());
        let mut fsp_sign = Vec::with_capacity(fsps.len());
        for f in fsps {
            let inj = net
                .injection(f.injection)
                .ok_or_else(|| Error::Integrity(format!("FSP injection {} not in network", f.injection)))?;
            fsp_bus.push(pf.ybus().index_of(inj.bus).expect("bus indexed"));
            fsp_sign.push(match inj.kind {
                InjectionKind::Load => -1.0,
                InjectionKind::Der => 1.0,
            });
        }
        Ok(Evaluator {
            pf,
            base_injections,
            fsp_bus,
            fsp_sign,
            fsps: fsps.to_vec(),
            limits: limits.clone(),
            options: SolverOptions::default(),
            keep_states: false,
        })
    }

    pub fn fsps(&self) -> &[Fsp] {
        &self.fsps
    }

    pub fn limits(&self) -> &ConstraintLimits {
        &self.limits
    }

    /// Applies the shifts on top of the initial state and classifies the result.
    pub fn evaluate(&self, index: usize, action: &FspAction) -> FlexSample {
        let base = self.pf.base_mva();
        let mut s = self.base_injections.clone();
        for ((&bus, &sign), &(dp, dq)) in self.fsp_bus.iter().zip(&self.fsp_sign).zip(&action.shifts) {
            s[bus] += Complex64::new(sign * dp, sign * dq) / base;
        }
        let sol = self.pf.solve(&s, self.options);
        self.classify(index, action, &sol, &s)
    }

    fn classify(&self, index: usize, action: &FspAction, sol: &PfSolution, s: &[Complex64]) -> FlexSample {
        let mut violations = BTreeSet::new();
        if let Some(cap) = self.limits.cost_cap {
            if action.cost(&self.fsps) > cap {
                violations.insert(Violation::CostCap);
            }
        }
        if !sol.converged {
            violations.insert(Violation::NonConverged);
            return FlexSample {
                index,
                y: (f64::NAN, f64::NAN),
                action: action.clone(),
                feasible: false,
                violations,
                v_pu_min: f64::NAN,
                v_pu_max: f64::NAN,
                loading_max: f64::NAN,
                state: None,
            };
        }
        let (v_min, v_max, loading) = (sol.v_min(), sol.v_max(), sol.loading_max());
        if v_min < self.limits.v_min_pu {
            violations.insert(Violation::Undervoltage);
        }
        if v_max > self.limits.v_max_pu {
            violations.insert(Violation::Overvoltage);
        }
        if loading > self.limits.loading_max_percent {
            violations.insert(Violation::Overload);
        }
        let state = self.keep_states.then(|| {
            let base = self.pf.base_mva();
            Box::new(SampleState {
                v_pu: sol.v_pu.clone(),
                theta_rad: sol.theta_rad.clone(),
                injections: s.iter().map(|x| (x.re * base, x.im * base)).collect(),
            })
        });
        FlexSample {
            index,
            y: (sol.slack_p_mw, sol.slack_q_mvar),
            action: action.clone(),
            feasible: violations.is_empty(),
            violations,
            v_pu_min: v_min,
            v_pu_max: v_max,
            loading_max: loading,
            state,
        }
    }

    /// The initial operating point (zero action).
    pub fn initial_point(&self) -> FlexSample {
        self.evaluate(0, &FspAction::zero(self.fsps.len()))
    }

    /// Runs `budget` power-flow attempts. Sample `i` is drawn from stream `i`
    /// of `seed`; the output is in index order whatever the thread count.
    pub fn run(&self, budget: usize, seed: u64) -> Vec<FlexSample> {
        (0..budget)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(seed, i as u64);
                let action = sample_action(&self.fsps, &mut rng);
                self.evaluate(i, &action)
            })
            .collect()
    }
}

pub fn evaluate_action(
    net: &Network,
    fsps: &[Fsp],
    action: &FspAction,
    limits: &ConstraintLimits,
) -> Result<FlexSample> {
    if action.shifts.len() != fsps.len() {
        return Err(Error::Validation(format!(
            "action has {} shifts for {} FSPs",
            action.shifts.len(),
            fsps.len()
        )));
    }
    Ok(Evaluator::new(net, fsps, limits)?.evaluate(0, action))
}

/// The sampling loop. Fails with a setup error when the initial state does
/// not solve.
pub fn estimate_flexibility(
    net: &Network,
    fsps: &[Fsp],
    limits: &ConstraintLimits,
    budget: usize,
    seed: u64,
) -> Result<Vec<FlexSample>> {
    let eval = Evaluator::new(net, fsps, limits).map_err(|e| Error::Setup(e.to_string()))?;
    if !eval.initial_point().converged() {
        return Err(Error::Setup("initial power flow did not converge".into()));
    }
    Ok(eval.run(budget, seed))
}

/// Writes one row per sample:
/// `idx,p_mw,q_mvar,feasible,violations,v_min_pu,v_max_pu,loading_max,dp_<fsp>...,dq_<fsp>...`
pub fn write_samples_csv<W: Write>(out: W, fsps: &[Fsp], samples: &[FlexSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "idx",
        "p_mw",
        "q_mvar",
        "feasible",
        "violations",
        "v_min_pu",
        "v_max_pu",
        "loading_max",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(fsps.iter().map(|f| format!("dp_{}", f.label())));
    header.extend(fsps.iter().map(|f| format!("dq_{}", f.label())));
    w.write_record(&header).map_err(csv_err)?;
    for s in samples {
        let mut row = vec![
            s.index.to_string(),
            s.y.0.to_string(),
            s.y.1.to_string(),
            s.feasible.to_string(),
            s.violation_codes(),
            s.v_pu_min.to_string(),
            s.v_pu_max.to_string(),
            s.loading_max.to_string(),
        ];
        row.extend(s.action.shifts.iter().map(|d| d.0.to_string()));
        row.extend(s.action.shifts.iter().map(|d| d.1.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::parse("samples csv", e))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::parse("samples csv", e)
}

/// Reads a file written by [`write_samples_csv`]; returns FSP labels and samples.
pub fn read_samples_csv<R: Read>(input: R) -> Result<(Vec<String>, Vec<FlexSample>)> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.len() < 8 || (header.len() - 8) % 2 != 0 || &header[0] != "idx" {
        return Err(Error::parse("samples csv", "unexpected header"));
    }
    let n_fsp = (header.len() - 8) / 2;
    let labels = (0..n_fsp)
        .map(|i| header[8 + i].trim_start_matches("dp_").to_string())
        .collect();
    let num = |rec: &csv::StringRecord, i: usize| -> Result<f64> {
        rec[i]
            .parse::<f64>()
            .map_err(|e| Error::parse(format!("samples csv column {}", &header[i]), e))
    };
    let mut samples = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let index = rec[0]
            .parse::<usize>()
            .map_err(|e| Error::parse("samples csv column idx", e))?;
        let feasible = rec[3]
            .parse::<bool>()
            .map_err(|e| Error::parse("samples csv column feasible", e))?;
        let violations = rec[4]
            .split('|')
            .filter(|s| !s.is_empty())
            .map(Violation::from_str)
            .collect::<Result<BTreeSet<_>>>()?;
        let mut shifts = Vec::with_capacity(n_fsp);
        for i in 0..n_fsp {
            shifts.push((num(&rec, 8 + i)?, num(&rec, 8 + n_fsp + i)?));
        }
        samples.push(FlexSample {
            index,
            y: (num(&rec, 1)?, num(&rec, 2)?),
            action: FspAction { shifts },
            feasible,
            violations,
            v_pu_min: num(&rec, 5)?,
            v_pu_max: num(&rec, 6)?,
            loading_max: num(&rec, 7)?,
            state: None,
        });
    }
    Ok((labels, samples))
}

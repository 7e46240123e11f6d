//! Electrical network data model and the grid / scenario file formats.
//!
//! A [`Network`] is validated on construction and never mutated afterwards;
//! scenario edits produce a new value. Files are JSON documents carrying a
//! `schema_version` field.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Schema version written by this crate and the only one it reads.
pub const SCHEMA_VERSION: u32 = 1;

macro_rules! id_newtype {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_newtype!(
    /// Bus identifier.
    BusId
);
id_newtype!(
    /// Branch identifier, shared between lines and transformers.
    BranchId
);
id_newtype!(
    /// Load or DER identifier.
    InjectionId
);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: BusId,
    pub name: String,
    pub vn_kv: f64,
    pub kind: BusKind,
    /// Voltage setpoint of the slack bus [p.u.]; 1.0 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vm_pu: Option<f64>,
}

impl Bus {
    pub fn setpoint_pu(&self) -> f64 {
        self.vm_pu.unwrap_or(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    Line,
    Transformer,
}

/// A line or a two-winding transformer.
///
/// Lines use `length_km`, the per-km impedance parameters and `max_i_ka`.
/// Transformers use `sn_mva`, `vk_percent`, `vkr_percent` and `tap_ratio`
/// (off-nominal ratio on the `from_bus` side, which is the HV side).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub id: BranchId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub kind: BranchKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_ohm_per_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_ohm_per_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_nf_per_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_i_ka: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sn_mva: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vk_percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vkr_percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tap_ratio: Option<f64>,
    #[serde(default = "default_true")]
    pub in_service: bool,
}

fn default_true() -> bool {
    true
}

impl Branch {
    /// Display label, e.g. `Line 0` or `Trafo 15`.
    pub fn label(&self) -> String {
        match self.kind {
            BranchKind::Line => format!("Line {}", self.id),
            BranchKind::Transformer => format!("Trafo {}", self.id),
        }
    }

    pub fn tap(&self) -> f64 {
        self.tap_ratio.unwrap_or(1.0)
    }

    /// Line length; zero for transformers.
    pub fn length(&self) -> f64 {
        self.length_km.unwrap_or(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionKind {
    Load,
    Der,
}

/// Load (positive `p_mw` = consumption) or DER unit (positive `p_mw` = generation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub id: InjectionId,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub bus: BusId,
    pub kind: InjectionKind,
    pub p_mw: f64,
    pub q_mvar: f64,
    /// Rated apparent power of a DER unit [MVA].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sn_mva: Option<f64>,
}

impl Injection {
    /// Net injection into the bus [MW, MVAr], generation positive.
    pub fn injected(&self) -> (f64, f64) {
        match self.kind {
            InjectionKind::Load => (-self.p_mw, -self.q_mvar),
            InjectionKind::Der => (self.p_mw, self.q_mvar),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    schema_version: u32,
    #[serde(default)]
    provenance: Option<String>,
    base_mva: f64,
    #[serde(default = "default_f_hz")]
    f_hz: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    injections: Vec<Injection>,
}

fn default_f_hz() -> f64 {
    50.0
}

/// Validated, immutable electrical network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkDoc")]
pub struct Network {
    schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<String>,
    base_mva: f64,
    f_hz: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    injections: Vec<Injection>,
}

impl TryFrom<NetworkDoc> for Network {
    type Error = Error;

    fn try_from(doc: NetworkDoc) -> Result<Self> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        let net = Network {
            schema_version: doc.schema_version,
            provenance: doc.provenance,
            base_mva: doc.base_mva,
            f_hz: doc.f_hz,
            buses: doc.buses,
            branches: doc.branches,
            injections: doc.injections,
        };
        net.validate()?;
        Ok(net)
    }
}

impl Network {
    pub fn new(base_mva: f64, buses: Vec<Bus>, branches: Vec<Branch>, injections: Vec<Injection>) -> Result<Self> {
        let net = Network {
            schema_version: SCHEMA_VERSION,
            provenance: None,
            base_mva,
            f_hz: default_f_hz(),
            buses,
            branches,
            injections,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("grid file", e))
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("network serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn f_hz(&self) -> f64 {
        self.f_hz
    }

    pub fn provenance(&self) -> Option<&str> {
        self.provenance.as_deref()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn injections(&self) -> &[Injection] {
        &self.injections
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn branch(&self, id: BranchId) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn injection(&self, id: InjectionId) -> Option<&Injection> {
        self.injections.iter().find(|i| i.id == id)
    }

    pub fn injection_by_name(&self, name: &str) -> Option<&Injection> {
        self.injections.iter().find(|i| i.name == name)
    }

    pub fn slack_bus(&self) -> &Bus {
        self.buses
            .iter()
            .find(|b| b.kind == BusKind::Slack)
            .expect("validated network has a slack bus")
    }

    /// Returns a copy with every injection passed through `edit`.
    ///
    /// Only power setpoints may change; ids and bus assignments are kept.
    pub fn with_injection_setpoints(&self, mut edit: impl FnMut(&Injection) -> (f64, f64)) -> Network {
        let mut out = self.clone();
        for inj in &mut out.injections {
            let (p, q) = edit(inj);
            inj.p_mw = p;
            inj.q_mvar = q;
        }
        out
    }

    /// Buses not reachable from the slack bus over in-service branches.
    pub fn islanded_buses(&self) -> Vec<BusId> {
        let reached = connected_component(self, self.slack_bus().id);
        self.buses
            .iter()
            .map(|b| b.id)
            .filter(|id| !reached.contains(id))
            .collect()
    }

    /// Topology error when any bus is cut off from the slack bus.
    pub fn ensure_connected(&self) -> Result<()> {
        let islanded = self.islanded_buses();
        if islanded.is_empty() {
            Ok(())
        } else {
            let ids: Vec<String> = islanded.iter().map(ToString::to_string).collect();
            Err(Error::Topology(format!(
                "buses [{}] are islanded from the slack bus",
                ids.join(", ")
            )))
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0 && self.base_mva.is_finite()) {
            return Err(Error::Validation(format!(
                "base_mva must be positive, got {}",
                self.base_mva
            )));
        }
        if !(self.f_hz > 0.0) {
            return Err(Error::Validation(format!("f_hz must be positive, got {}", self.f_hz)));
        }

        let mut bus_ids = HashSet::new();
        for bus in &self.buses {
            if !bus_ids.insert(bus.id) {
                return Err(Error::Validation(format!("duplicate bus id {}", bus.id)));
            }
            if !(bus.vn_kv > 0.0 && bus.vn_kv.is_finite()) {
                return Err(Error::Validation(format!("bus {}: vn_kv must be positive", bus.id)));
            }
            if let Some(vm) = bus.vm_pu {
                if !(vm > 0.0 && vm.is_finite()) {
                    return Err(Error::Validation(format!("bus {}: vm_pu must be positive", bus.id)));
                }
            }
        }
        let n_slack = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if n_slack != 1 {
            return Err(Error::Validation(format!(
                "expected exactly one slack bus, found {n_slack}"
            )));
        }

        let mut branch_ids = HashSet::new();
        for br in &self.branches {
            if !branch_ids.insert(br.id) {
                return Err(Error::Validation(format!("duplicate branch id {}", br.id)));
            }
            for end in [br.from_bus, br.to_bus] {
                if !bus_ids.contains(&end) {
                    return Err(Error::Integrity(format!(
                        "branch {} references missing bus {end}",
                        br.id
                    )));
                }
            }
            if br.from_bus == br.to_bus {
                return Err(Error::Validation(format!("branch {}: from_bus equals to_bus", br.id)));
            }
            validate_branch_params(br)?;
        }

        let mut inj_ids = HashSet::new();
        for inj in &self.injections {
            if !inj_ids.insert(inj.id) {
                return Err(Error::Validation(format!("duplicate injection id {}", inj.id)));
            }
            if !bus_ids.contains(&inj.bus) {
                return Err(Error::Integrity(format!(
                    "injection {} references missing bus {}",
                    inj.id, inj.bus
                )));
            }
            if !(inj.p_mw.is_finite() && inj.q_mvar.is_finite()) {
                return Err(Error::Validation(format!("injection {}: non-finite setpoint", inj.id)));
            }
            if let Some(sn) = inj.sn_mva {
                if !(sn >= 0.0) {
                    return Err(Error::Validation(format!("injection {}: negative sn_mva", inj.id)));
                }
            }
        }
        Ok(())
    }
}

fn require(br: &Branch, field: &str, value: Option<f64>) -> Result<f64> {
    let v = value.ok_or_else(|| Error::Validation(format!("branch {}: missing field `{field}`", br.id)))?;
    if !v.is_finite() {
        return Err(Error::Validation(format!("branch {}: `{field}` is not finite", br.id)));
    }
    Ok(v)
}

fn validate_branch_params(br: &Branch) -> Result<()> {
    let bad = |msg: &str| Err(Error::Validation(format!("branch {}: {msg}", br.id)));
    match br.kind {
        BranchKind::Line => {
            if require(br, "length_km", br.length_km)? <= 0.0 {
                return bad("length_km must be positive");
            }
            let r = require(br, "r_ohm_per_km", br.r_ohm_per_km)?;
            let x = require(br, "x_ohm_per_km", br.x_ohm_per_km)?;
            let c = br.c_nf_per_km.unwrap_or(0.0);
            if r < 0.0 || x < 0.0 || c < 0.0 {
                return bad("impedance parameters must be non-negative");
            }
            if require(br, "max_i_ka", br.max_i_ka)? <= 0.0 {
                return bad("max_i_ka must be positive");
            }
        }
        BranchKind::Transformer => {
            if require(br, "sn_mva", br.sn_mva)? <= 0.0 {
                return bad("sn_mva must be positive");
            }
            let vk = require(br, "vk_percent", br.vk_percent)?;
            let vkr = require(br, "vkr_percent", br.vkr_percent)?;
            if vk < 0.0 || vkr < 0.0 || vkr > vk {
                return bad("need 0 <= vkr_percent <= vk_percent");
            }
            if br.tap() <= 0.0 {
                return bad("tap_ratio must be positive");
            }
            if let Some(i) = br.max_i_ka {
                if i <= 0.0 {
                    return bad("max_i_ka must be positive");
                }
            }
        }
    }
    Ok(())
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

/// Buses reachable from `root` over in-service branches, `root` included.
pub fn connected_component(net: &Network, root: BusId) -> BTreeSet<BusId> {
    let mut adj: HashMap<BusId, Vec<BusId>> = HashMap::new();
    for br in net.branches.iter().filter(|b| b.in_service) {
        adj.entry(br.from_bus).or_default().push(br.to_bus);
        adj.entry(br.to_bus).or_default().push(br.from_bus);
    }
    let mut seen = BTreeSet::from([root]);
    let mut queue = VecDeque::from([root]);
    while let Some(bus) = queue.pop_front() {
        for &next in adj.get(&bus).into_iter().flatten() {
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    seen
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchEdit {
    pub branch: BranchId,
    pub in_service: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadOverride {
    pub injection: InjectionId,
    pub p_mw: f64,
    pub q_mvar: f64,
}

/// Declarative topology edits and setpoint overrides applied to a base network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default)]
    pub branch_edits: Vec<BranchEdit>,
    #[serde(default)]
    pub load_overrides: Vec<LoadOverride>,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

impl Scenario {
    /// Scenario without edits.
    pub fn empty(name: impl Into<String>) -> Self {
        Scenario {
            schema_version: SCHEMA_VERSION,
            name: name.into(),
            description: None,
            source: None,
            branch_edits: Vec::new(),
            load_overrides: Vec::new(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::parse("scenario file", e))?;
        sc.check_version()?;
        Ok(sc)
    }

    fn check_version(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "scenario {}: unsupported schema_version {}",
                self.name, self.schema_version
            )));
        }
        Ok(())
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let sc: Scenario = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
    sc.check_version()?;
    Ok(sc)
}

/// Applies `sc` to a copy of `net`. All ids are resolved before anything is
/// edited, so a failing scenario leaves no partial result.
pub fn apply_scenario(net: &Network, sc: &Scenario) -> Result<Network> {
    let branch_pos: BTreeMap<BranchId, usize> = net.branches.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
    let inj_pos: BTreeMap<InjectionId, usize> = net.injections.iter().enumerate().map(|(i, b)| (b.id, i)).collect();

    let mut edits = Vec::with_capacity(sc.branch_edits.len());
    for e in &sc.branch_edits {
        let pos = branch_pos
            .get(&e.branch)
            .ok_or_else(|| Error::Integrity(format!("scenario {}: unknown branch {}", sc.name, e.branch)))?;
        edits.push((*pos, e.in_service));
    }
    let mut overrides = Vec::with_capacity(sc.load_overrides.len());
    for o in &sc.load_overrides {
        let pos = inj_pos
            .get(&o.injection)
            .ok_or_else(|| Error::Integrity(format!("scenario {}: unknown injection {}", sc.name, o.injection)))?;
        if !(o.p_mw.is_finite() && o.q_mvar.is_finite()) {
            return Err(Error::Validation(format!(
                "scenario {}: non-finite override for injection {}",
                sc.name, o.injection
            )));
        }
        overrides.push((*pos, o.p_mw, o.q_mvar));
    }

    let mut out = net.clone();
    for (pos, in_service) in edits {
        out.branches[pos].in_service = in_service;
    }
    for (pos, p, q) in overrides {
        out.injections[pos].p_mw = p;
        out.injections[pos].q_mvar = q;
    }
    Ok(out)
}

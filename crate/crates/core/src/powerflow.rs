//! Steady-state AC power flow: bus admittance matrix, Newton-Raphson in polar
//! coordinates, branch flows and loadings.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Branch, BranchId, BranchKind, BusId, BusKind, Network};

/// Newton-Raphson settings. Mismatch tolerance is in p.u. on the system base.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 30,
        }
    }
}

/// Two-port admittances of one branch in p.u.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchAdmittance {
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

/// Bus admittance matrix with the bus order it was assembled in.
#[derive(Clone, Debug)]
pub struct Ybus {
    pub bus_ids: Vec<BusId>,
    pub matrix: DMatrix<Complex64>,
}

impl Ybus {
    pub fn index_of(&self, id: BusId) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == id)
    }
}

pub fn branch_admittance(net: &Network, br: &Branch) -> Result<BranchAdmittance> {
    let base = net.base_mva();
    let vn = net
        .bus(br.from_bus)
        .map(|b| b.vn_kv)
        .ok_or_else(|| Error::Integrity(format!("branch {} from_bus missing", br.id)))?;
    match br.kind {
        BranchKind::Line => {
            let len = br.length();
            let z_base = vn * vn / base;
            let z = Complex64::new(
                br.r_ohm_per_km.unwrap_or(0.0) * len,
                br.x_ohm_per_km.unwrap_or(0.0) * len,
            ) / z_base;
            if z.norm() == 0.0 {
                return Err(Error::Singular(format!("line {} has zero series impedance", br.id)));
            }
            let y = z.inv();
            let b_total = 2.0 * PI * net.f_hz() * br.c_nf_per_km.unwrap_or(0.0) * 1e-9 * len * z_base;
            let y_sh = Complex64::new(0.0, b_total / 2.0);
            Ok(BranchAdmittance {
                yff: y + y_sh,
                yft: -y,
                ytf: -y,
                ytt: y + y_sh,
            })
        }
        BranchKind::Transformer => {
            let sn = br.sn_mva.unwrap_or(0.0);
            let z_mag = br.vk_percent.unwrap_or(0.0) / 100.0 * base / sn;
            let r = br.vkr_percent.unwrap_or(0.0) / 100.0 * base / sn;
            let x = (z_mag * z_mag - r * r).max(0.0).sqrt();
            if !(z_mag > 0.0) || !z_mag.is_finite() {
                return Err(Error::Singular(format!(
                    "transformer {} has zero short-circuit impedance",
                    br.id
                )));
            }
            let y = Complex64::new(r, x).inv();
            let t = br.tap();
            Ok(BranchAdmittance {
                yff: y / (t * t),
                yft: -y / t,
                ytf: -y / t,
                ytt: y,
            })
        }
    }
}

/// Assembles the bus admittance matrix in network bus order. Out-of-service
/// branches contribute nothing.
pub fn build_ybus(net: &Network) -> Result<Ybus> {
    let bus_ids: Vec<BusId> = net.buses().iter().map(|b| b.id).collect();
    let index: HashMap<BusId, usize> = bus_ids.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let n = bus_ids.len();
    let mut matrix = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in net.branches().iter().filter(|b| b.in_service) {
        let a = branch_admittance(net, br)?;
        let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
        matrix[(f, f)] += a.yff;
        matrix[(f, t)] += a.yft;
        matrix[(t, f)] += a.ytf;
        matrix[(t, t)] += a.ytt;
    }
    Ok(Ybus { bus_ids, matrix })
}

/// Flows at both ends of a branch. Powers are into the branch at that end.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchFlow {
    pub branch: BranchId,
    pub p_from_mw: f64,
    pub q_from_mvar: f64,
    pub p_to_mw: f64,
    pub q_to_mvar: f64,
    pub i_from_ka: f64,
    pub i_to_ka: f64,
    pub loading_percent: f64,
}

impl BranchFlow {
    fn zero(branch: BranchId) -> Self {
        BranchFlow {
            branch,
            p_from_mw: 0.0,
            q_from_mvar: 0.0,
            p_to_mw: 0.0,
            q_to_mvar: 0.0,
            i_from_ka: 0.0,
            i_to_ka: 0.0,
            loading_percent: 0.0,
        }
    }

    pub fn losses_mw(&self) -> f64 {
        self.p_from_mw + self.p_to_mw
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PfSolution {
    pub bus_ids: Vec<BusId>,
    pub v_pu: Vec<f64>,
    pub theta_rad: Vec<f64>,
    pub branch_flows: Vec<BranchFlow>,
    /// Power delivered by the slack bus, i.e. flowing from the TSO into the DSO.
    pub slack_p_mw: f64,
    pub slack_q_mvar: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest absolute mismatch [p.u.] before each iteration, final residual last.
    pub mismatch_history: Vec<f64>,
}

impl PfSolution {
    pub fn v_of(&self, bus: BusId) -> Option<f64> {
        self.bus_ids.iter().position(|&b| b == bus).map(|i| self.v_pu[i])
    }

    pub fn theta_of(&self, bus: BusId) -> Option<f64> {
        self.bus_ids.iter().position(|&b| b == bus).map(|i| self.theta_rad[i])
    }

    pub fn flow(&self, branch: BranchId) -> Option<&BranchFlow> {
        self.branch_flows.iter().find(|f| f.branch == branch)
    }

    pub fn residual(&self) -> f64 {
        self.mismatch_history.last().copied().unwrap_or(f64::INFINITY)
    }

    pub fn total_losses_mw(&self) -> f64 {
        self.branch_flows.iter().map(BranchFlow::losses_mw).sum()
    }

    pub fn v_min(&self) -> f64 {
        self.v_pu.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn v_max(&self) -> f64 {
        self.v_pu.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn loading_max(&self) -> f64 {
        self.branch_flows.iter().map(|f| f.loading_percent).fold(0.0, f64::max)
    }
}

/// Loading of `br` in the solved state [%].
///
/// Lines: largest end current against `max_i_ka`. Transformers: largest end
/// current at rated voltage against `sn_mva`.
pub fn branch_loading(sol: &PfSolution, br: &Branch) -> Result<f64> {
    if !sol.converged {
        return Err(Error::State("power flow did not converge".into()));
    }
    sol.flow(br.id)
        .map(|f| f.loading_percent)
        .ok_or_else(|| Error::State(format!("branch {} not in solution", br.id)))
}

/// Power-flow model of one network topology, reusable across injection
/// patterns. Construction fails for islanded or singular networks.
#[derive(Clone, Debug)]
pub struct PowerFlow {
    ybus: Ybus,
    slack: usize,
    slack_v: f64,
    pq: Vec<usize>,
    branches: Vec<BranchTerminal>,
    base_mva: f64,
}

#[derive(Clone, Debug)]
struct BranchTerminal {
    id: BranchId,
    ends: Option<(usize, usize, BranchAdmittance)>,
    i_base_from_ka: f64,
    i_base_to_ka: f64,
    rating: Rating,
}

#[derive(Clone, Copy, Debug)]
enum Rating {
    CurrentKa(f64),
    ApparentMva(f64),
}

impl PowerFlow {
    pub fn new(net: &Network) -> Result<Self> {
        net.ensure_connected()?;
        let ybus = build_ybus(net)?;
        let slack_bus = net.slack_bus();
        let slack = ybus.index_of(slack_bus.id).expect("slack in ybus");
        let pq = net
            .buses()
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::Pq)
            .map(|(i, _)| i)
            .collect();
        let base = net.base_mva();
        let mut branches = Vec::with_capacity(net.branches().len());
        for br in net.branches() {
            let vn_f = net.bus(br.from_bus).map(|b| b.vn_kv).unwrap_or(1.0);
            let vn_t = net.bus(br.to_bus).map(|b| b.vn_kv).unwrap_or(1.0);
            let ends = if br.in_service {
                let f = ybus.index_of(br.from_bus).expect("bus indexed");
                let t = ybus.index_of(br.to_bus).expect("bus indexed");
                Some((f, t, branch_admittance(net, br)?))
            } else {
                None
            };
            let rating = match br.kind {
                BranchKind::Line => Rating::CurrentKa(br.max_i_ka.unwrap_or(f64::INFINITY)),
                BranchKind::Transformer => Rating::ApparentMva(br.sn_mva.unwrap_or(f64::INFINITY)),
            };
            branches.push(BranchTerminal {
                id: br.id,
                ends,
                i_base_from_ka: base / (3f64.sqrt() * vn_f),
                i_base_to_ka: base / (3f64.sqrt() * vn_t),
                rating,
            });
        }
        Ok(PowerFlow {
            ybus,
            slack,
            slack_v: slack_bus.setpoint_pu(),
            pq,
            branches,
            base_mva: base,
        })
    }

    pub fn ybus(&self) -> &Ybus {
        &self.ybus
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    /// Net injection per bus [p.u.], generation positive, in Ybus order.
    pub fn scheduled_injections(&self, net: &Network) -> Vec<Complex64> {
        let mut s = vec![Complex64::new(0.0, 0.0); self.ybus.bus_ids.len()];
        for inj in net.injections() {
            let i = self.ybus.index_of(inj.bus).expect("injection bus indexed");
            let (p, q) = inj.injected();
            s[i] += Complex64::new(p, q) / self.base_mva;
        }
        s
    }

    /// Solves from a flat start for the given scheduled injections [p.u.].
    pub fn solve(&self, s_spec: &[Complex64], opts: SolverOptions) -> PfSolution {
        let n = self.ybus.bus_ids.len();
        let y = &self.ybus.matrix;
        let mut vm = vec![1.0; n];
        let mut va = vec![0.0; n];
        vm[self.slack] = self.slack_v;
        let npq = self.pq.len();

        let mut history = Vec::new();
        let mut iterations = 0;
        let mut converged = false;
        loop {
            let v: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(vm[i], va[i])).collect();
            let current = mat_vec(y, &v);
            let mismatch: Vec<Complex64> = (0..n).map(|i| v[i] * current[i].conj() - s_spec[i]).collect();
            let norm = self
                .pq
                .iter()
                .map(|&i| mismatch[i].re.abs().max(mismatch[i].im.abs()))
                .fold(0.0, f64::max);
            if !norm.is_finite() {
                history.push(f64::INFINITY);
                break;
            }
            history.push(norm);
            if norm < opts.tol {
                converged = true;
                break;
            }
            if iterations >= opts.max_iter {
                break;
            }

            // dS/dtheta = j V conj(I - Y V) ; dS/d|V| = V conj(Y Vn) + conj(I) Vn
            let vn: Vec<Complex64> = v.iter().map(|x| x / x.norm()).collect();
            let mut jac = DMatrix::<f64>::zeros(2 * npq, 2 * npq);
            for (r, &i) in self.pq.iter().enumerate() {
                for (c, &k) in self.pq.iter().enumerate() {
                    let yik = y[(i, k)];
                    let mut ds_dva = -Complex64::i() * v[i] * (yik * v[k]).conj();
                    let mut ds_dvm = v[i] * (yik * vn[k]).conj();
                    if i == k {
                        ds_dva += Complex64::i() * v[i] * current[i].conj();
                        ds_dvm += current[i].conj() * vn[i];
                    }
                    jac[(r, c)] = ds_dva.re;
                    jac[(r, npq + c)] = ds_dvm.re;
                    jac[(npq + r, c)] = ds_dva.im;
                    jac[(npq + r, npq + c)] = ds_dvm.im;
                }
            }
            let rhs = DVector::from_iterator(
                2 * npq,
                self.pq
                    .iter()
                    .map(|&i| -mismatch[i].re)
                    .chain(self.pq.iter().map(|&i| -mismatch[i].im)),
            );
            let Some(dx) = jac.lu().solve(&rhs) else {
                break;
            };
            for (r, &i) in self.pq.iter().enumerate() {
                va[i] += dx[r];
                vm[i] += dx[npq + r];
            }
            iterations += 1;
        }

        let v: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(vm[i], va[i])).collect();
        let current = mat_vec(y, &v);
        let s_slack = v[self.slack] * current[self.slack].conj() * self.base_mva;
        let branch_flows = self.branches.iter().map(|b| self.branch_flow(b, &v)).collect();
        PfSolution {
            bus_ids: self.ybus.bus_ids.clone(),
            v_pu: vm,
            theta_rad: va,
            branch_flows,
            slack_p_mw: s_slack.re,
            slack_q_mvar: s_slack.im,
            iterations,
            converged,
            mismatch_history: history,
        }
    }

    fn branch_flow(&self, b: &BranchTerminal, v: &[Complex64]) -> BranchFlow {
        let Some((f, t, a)) = b.ends else {
            return BranchFlow::zero(b.id);
        };
        let i_f = a.yff * v[f] + a.yft * v[t];
        let i_t = a.ytf * v[f] + a.ytt * v[t];
        let s_f = v[f] * i_f.conj() * self.base_mva;
        let s_t = v[t] * i_t.conj() * self.base_mva;
        let i_from_ka = i_f.norm() * b.i_base_from_ka;
        let i_to_ka = i_t.norm() * b.i_base_to_ka;
        let loading_percent = match b.rating {
            Rating::CurrentKa(max_i) => 100.0 * i_from_ka.max(i_to_ka) / max_i,
            Rating::ApparentMva(sn) => 100.0 * i_f.norm().max(i_t.norm()) * self.base_mva / sn,
        };
        BranchFlow {
            branch: b.id,
            p_from_mw: s_f.re,
            q_from_mvar: s_f.im,
            p_to_mw: s_t.re,
            q_to_mvar: s_t.im,
            i_from_ka,
            i_to_ka,
            loading_percent,
        }
    }
}

fn mat_vec(m: &DMatrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    (0..n).map(|i| (0..n).map(|k| m[(i, k)] * v[k]).sum()).collect()
}

/// Solves the network's own injections from a flat start.
pub fn solve_pf(net: &Network, opts: SolverOptions) -> Result<PfSolution> {
    if !(opts.tol > 0.0) {
        return Err(Error::Validation(format!(
            "tolerance must be positive, got {}",
            opts.tol
        )));
    }
    let pf = PowerFlow::new(net)?;
    let s = pf.scheduled_injections(net);
    Ok(pf.solve(&s, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Bus, Injection, InjectionId, InjectionKind};

    fn bus(id: u32, kind: BusKind) -> Bus {
        Bus {
            id: BusId(id),
            name: format!("b{id}"),
            vn_kv: 20.0,
            kind,
            vm_pu: None,
        }
    }

    fn line(id: u32, f: u32, t: u32, r: f64, x: f64) -> Branch {
        Branch {
            id: BranchId(id),
            name: None,
            from_bus: BusId(f),
            to_bus: BusId(t),
            kind: BranchKind::Line,
            length_km: Some(1.0),
            r_ohm_per_km: Some(r),
            x_ohm_per_km: Some(x),
            c_nf_per_km: Some(0.0),
            max_i_ka: Some(0.4),
            sn_mva: None,
            vk_percent: None,
            vkr_percent: None,
            tap_ratio: None,
            in_service: true,
        }
    }

    fn load(p: f64, q: f64) -> Injection {
        Injection {
            id: InjectionId(0),
            name: "L0".into(),
            description: None,
            bus: BusId(1),
            kind: InjectionKind::Load,
            p_mw: p,
            q_mvar: q,
            sn_mva: None,
        }
    }

    #[test]
    fn two_bus_off_diagonal_matches_hand_per_unit() {
        let net = Network::new(
            100.0,
            vec![bus(0, BusKind::Slack), bus(1, BusKind::Pq)],
            vec![line(0, 0, 1, 1.0, 1.0)],
            vec![],
        )
        .unwrap();
        let y = build_ybus(&net).unwrap();
        let z_pu = Complex64::new(1.0, 1.0) / (20.0 * 20.0 / 100.0);
        let expected = -z_pu.inv();
        assert!((y.matrix[(0, 1)] - expected).norm() < 1e-12);
        assert!((y.matrix[(1, 0)] - expected).norm() < 1e-12);
        assert!((y.matrix[(0, 0)] + expected).norm() < 1e-12);
    }

    #[test]
    fn out_of_service_branches_leave_diagonal_only() {
        let mut l = line(0, 0, 1, 1.0, 1.0);
        l.in_service = false;
        let net = Network::new(
            100.0,
            vec![bus(0, BusKind::Slack), bus(1, BusKind::Pq)],
            vec![l],
            vec![],
        )
        .unwrap();
        let y = build_ybus(&net).unwrap();
        assert!(y.matrix.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn zero_impedance_is_singular() {
        let net = Network::new(
            100.0,
            vec![bus(0, BusKind::Slack), bus(1, BusKind::Pq)],
            vec![line(0, 0, 1, 0.0, 0.0)],
            vec![],
        )
        .unwrap();
        assert!(matches!(build_ybus(&net), Err(Error::Singular(_))));
    }

    #[test]
    fn slack_only_network_is_flat() {
        let net = Network::new(100.0, vec![bus(0, BusKind::Slack)], vec![], vec![]).unwrap();
        let sol = solve_pf(&net, SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.v_pu, vec![1.0]);
        assert_eq!(sol.slack_p_mw, 0.0);
        assert_eq!(sol.slack_q_mvar, 0.0);
    }

    #[test]
    fn islanded_network_is_a_topology_error() {
        let net = Network::new(
            100.0,
            vec![bus(0, BusKind::Slack), bus(1, BusKind::Pq)],
            vec![],
            vec![load(1.0, 0.0)],
        )
        .unwrap();
        assert!(matches!(
            solve_pf(&net, SolverOptions::default()),
            Err(Error::Topology(_))
        ));
    }

    #[test]
    fn impossible_load_reports_non_convergence() {
        let net = Network::new(
            100.0,
            vec![bus(0, BusKind::Slack), bus(1, BusKind::Pq)],
            vec![line(0, 0, 1, 1.0, 1.0)],
            vec![load(5000.0, 2000.0)],
        )
        .unwrap();
        let sol = solve_pf(&net, SolverOptions::default()).unwrap();
        assert!(!sol.converged);
        assert!(branch_loading(&sol, &net.branches()[0]).is_err());
    }

    #[test]
    fn zero_flow_branch_has_zero_loading() {
        let net = Network::new(
            100.0,
            vec![bus(0, BusKind::Slack), bus(1, BusKind::Pq)],
            vec![line(0, 0, 1, 1.0, 1.0)],
            vec![],
        )
        .unwrap();
        let sol = solve_pf(&net, SolverOptions::default()).unwrap();
        assert_eq!(branch_loading(&sol, &net.branches()[0]).unwrap(), 0.0);
    }

    #[test]
    fn loading_is_relative_to_rating() {
        // 2-bus, 13.8564 MW at 20 kV and unity voltage is 0.4 kA; set rating to the
        // computed end current to get exactly 100 %.
        let mut l = line(0, 0, 1, 0.01, 0.01);
        let net = Network::new(
            100.0,
            vec![bus(0, BusKind::Slack), bus(1, BusKind::Pq)],
            vec![l.clone()],
            vec![load(10.0, 0.0)],
        )
        .unwrap();
        let sol = solve_pf(&net, SolverOptions::default()).unwrap();
        let f = sol.flow(BranchId(0)).unwrap();
        l.max_i_ka = Some(f.i_from_ka.max(f.i_to_ka));
        let net2 = Network::new(100.0, net.buses().to_vec(), vec![l], net.injections().to_vec()).unwrap();
        let sol2 = solve_pf(&net2, SolverOptions::default()).unwrap();
        let loading = branch_loading(&sol2, &net2.branches()[0]).unwrap();
        assert!((loading - 100.0).abs() < 1e-9, "{loading}");
    }
}

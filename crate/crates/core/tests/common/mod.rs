#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use flexgrid::analysis::{polygon_area, Point};
use flexgrid::grid::{apply_scenario, load_network, load_scenario, Network};
use serde::Deserialize;
use serde_json::json;

pub const SCENARIOS: &[&str] = &["unaltered", "tss1", "tss2", "tss3", "uss1", "uss2"];

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn cigre() -> Network {
    load_network(data_dir().join("cigre_mv_pv_wind.json")).unwrap()
}

pub fn scenario_path(name: &str) -> PathBuf {
    data_dir().join("scenarios").join(format!("{name}.json"))
}

pub fn scenario_network(base: &Network, name: &str) -> Network {
    let sc = load_scenario(scenario_path(name)).unwrap();
    apply_scenario(base, &sc).unwrap()
}

#[derive(Deserialize)]
pub struct ReferenceBranch {
    pub id: u32,
    pub p_from_mw: f64,
    pub q_from_mvar: f64,
    pub p_to_mw: f64,
    pub q_to_mvar: f64,
    pub loading_percent: f64,
}

#[derive(Deserialize)]
pub struct ReferenceSolution {
    pub vm_pu: HashMap<String, f64>,
    pub branches: Vec<ReferenceBranch>,
    pub ext_grid_p_mw: f64,
    pub ext_grid_q_mvar: f64,
}

pub fn reference_solution(name: &str) -> ReferenceSolution {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/reference_pf")
        .join(format!("{name}.json"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Flow agreement: 0.1 % of the reference value, with a 1 W / 1 var floor for
/// branches that carry next to nothing.
pub fn flow_close(got: f64, expect: f64) -> bool {
    (got - expect).abs() <= 1e-3 * expect.abs() + 1e-6
}

pub fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// O(n^3) hull: (i, j) is an edge when every other point lies strictly left
/// of it or on the segment itself.
pub fn brute_force_hull(points: &[Point]) -> (BTreeSet<(i64, i64)>, f64) {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    let n = pts.len();
    if n <= 2 {
        return (pts.iter().map(|p| (p.0 as i64, p.1 as i64)).collect(), 0.0);
    }
    let mut verts = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (pts[i], pts[j]);
            let edge = (0..n).filter(|&k| k != i && k != j).all(|k| {
                let c = cross(a, b, pts[k]);
                let p = pts[k];
                let on_segment = c == 0.0
                    && p.0 >= a.0.min(b.0)
                    && p.0 <= a.0.max(b.0)
                    && p.1 >= a.1.min(b.1)
                    && p.1 <= a.1.max(b.1);
                c > 0.0 || on_segment
            });
            if edge {
                verts.insert((a.0 as i64, a.1 as i64));
                verts.insert((b.0 as i64, b.1 as i64));
            }
        }
    }
    let mut v: Vec<Point> = verts.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    let c = (
        v.iter().map(|p| p.0).sum::<f64>() / v.len() as f64,
        v.iter().map(|p| p.1).sum::<f64>() / v.len() as f64,
    );
    v.sort_by(|a, b| (a.1 - c.1).atan2(a.0 - c.0).total_cmp(&(b.1 - c.1).atan2(b.0 - c.0)));
    (verts, polygon_area(&v).abs())
}

pub fn two_bus(r_ohm: f64, x_ohm: f64, p_mw: f64, q_mvar: f64) -> Network {
    let doc = json!({
        "schema_version": 1,
        "base_mva": 1.0,
        "buses": [
            {"id": 0, "name": "slack", "vn_kv": 20.0, "kind": "slack", "vm_pu": 1.0},
            {"id": 1, "name": "load", "vn_kv": 20.0, "kind": "pq"}
        ],
        "branches": [{
            "id": 0, "from_bus": 0, "to_bus": 1, "kind": "line", "length_km": 1.0,
            "r_ohm_per_km": r_ohm, "x_ohm_per_km": x_ohm, "c_nf_per_km": 0.0, "max_i_ka": 1.0
        }],
        "injections": [
            {"id": 0, "name": "L0", "bus": 1, "kind": "load", "p_mw": p_mw, "q_mvar": q_mvar}
        ]
    });
    Network::from_json_str(&doc.to_string()).unwrap()
}

/// |V2| for a series impedance R + jX feeding load P + jQ from V1 = 1:
/// V^4 + (2(PR + QX) - 1) V^2 + (R^2 + X^2)(P^2 + Q^2) = 0, upper root.
pub fn closed_form_v(r: f64, x: f64, p: f64, q: f64) -> Option<f64> {
    let b = 2.0 * (p * r + q * x) - 1.0;
    let c = (r * r + x * x) * (p * p + q * q);
    let disc = b * b - 4.0 * c;
    (disc > 0.0).then(|| ((-b + disc.sqrt()) / 2.0).sqrt())
}

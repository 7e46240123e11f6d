"""Produce reference power-flow fixtures with pandapower.

The network is pandapower's own CIGRE MV (PV + wind) model, not the exported
JSON, so the fixtures also check the transcription. Normally-open ties are
taken out of service (instead of opening a line switch) to match the branch
model of the exported file. Scenario edits are applied by id: branch ids
0..14 are line rows and 15, 16 transformer rows; injection ids 0..17 are load
rows and 18.. are static generator rows.

Usage: python3 tools/reference_pf.py crates/core/data/scenarios/*.json \
           --out crates/core/tests/fixtures/reference_pf
"""
import argparse
import copy
import json
import os
import warnings

warnings.filterwarnings("ignore")

import pandapower as pp
import pandapower.networks as pn


def base_net():
    net = pn.create_cigre_network_mv(with_der="pv_wind")
    for i, sw in net.switch.iterrows():
        if sw.et == "l" and not sw.closed:
            net.line.at[int(sw.element), "in_service"] = False
            net.switch.at[i, "closed"] = True
    return net


def apply(net, sc):
    net = copy.deepcopy(net)
    n_lines = len(net.line)
    n_loads = len(net.load)
    for e in sc.get("branch_edits", []):
        b = e["branch"]
        if b < n_lines:
            net.line.at[b, "in_service"] = e["in_service"]
        else:
            net.trafo.at[b - n_lines, "in_service"] = e["in_service"]
    for o in sc.get("load_overrides", []):
        i = o["injection"]
        table, row = ("load", i) if i < n_loads else ("sgen", i - n_loads)
        net[table].at[row, "p_mw"] = o["p_mw"]
        net[table].at[row, "q_mvar"] = o["q_mvar"]
    return net


def solve(net):
    pp.runpp(net, calculate_voltage_angles=False, tolerance_mva=1e-10, max_iteration=50)
    n_lines = len(net.line)
    branches = []
    for i, r in net.res_line.iterrows():
        branches.append(dict(id=int(i), p_from_mw=r.p_from_mw, q_from_mvar=r.q_from_mvar,
                             p_to_mw=r.p_to_mw, q_to_mvar=r.q_to_mvar,
                             loading_percent=r.loading_percent))
    for i, r in net.res_trafo.iterrows():
        branches.append(dict(id=n_lines + int(i), p_from_mw=r.p_hv_mw, q_from_mvar=r.q_hv_mvar,
                             p_to_mw=r.p_lv_mw, q_to_mvar=r.q_lv_mvar,
                             loading_percent=r.loading_percent))
    for b in branches:
        for k, v in b.items():
            if k != "id" and v != v:  # NaN for out-of-service rows
                b[k] = 0.0
    return dict(
        tool="pandapower %s" % pp.__version__,
        vm_pu={str(int(i)): float(v) for i, v in net.res_bus.vm_pu.items()},
        branches=[{k: (float(v) if k != "id" else v) for k, v in b.items()} for b in branches],
        ext_grid_p_mw=float(net.res_ext_grid.p_mw.iloc[0]),
        ext_grid_q_mvar=float(net.res_ext_grid.q_mvar.iloc[0]),
    )


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("scenarios", nargs="+")
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    base = base_net()
    for path in args.scenarios:
        with open(path) as fh:
            sc = json.load(fh)
        res = solve(apply(base, sc))
        res["scenario"] = sc["name"]
        out = os.path.join(args.out, os.path.basename(path))
        with open(out, "w") as fh:
            json.dump(res, fh, indent=1)
            fh.write("\n")
        print("wrote", out)


if __name__ == "__main__":
    main()

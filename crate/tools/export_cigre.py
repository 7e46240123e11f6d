"""Export pandapower's CIGRE MV network (PV + wind DER) into the flexgrid grid schema.

Lines whose line switch is open in the benchmark (the normally-open ties
6-7, 11-4 and 14-8) are written with in_service = false. Load injections are
named L<k> after their row index in the pandapower load table; DER keep
their pandapower names.

Usage: python3 tools/export_cigre.py crates/core/data/cigre_mv_pv_wind.json
"""
import json
import sys

import pandapower as pp
import pandapower.networks as pn


def main(out_path):
    net = pn.create_cigre_network_mv(with_der="pv_wind")
    open_lines = set(
        int(sw.element)
        for _, sw in net.switch.iterrows()
        if sw.et == "l" and not sw.closed
    )
    slack_buses = set(int(b) for b in net.ext_grid.bus)
    vm_slack = {int(r.bus): float(r.vm_pu) for _, r in net.ext_grid.iterrows()}

    buses = []
    for idx, b in net.bus.iterrows():
        rec = {
            "id": int(idx),
            "name": b["name"],
            "vn_kv": float(b.vn_kv),
            "kind": "slack" if idx in slack_buses else "pq",
        }
        if idx in slack_buses:
            rec["vm_pu"] = vm_slack[idx]
        buses.append(rec)

    branches = []
    for idx, l in net.line.iterrows():
        branches.append(
            {
                "id": int(idx),
                "name": l["name"],
                "from_bus": int(l.from_bus),
                "to_bus": int(l.to_bus),
                "kind": "line",
                "length_km": float(l.length_km),
                "r_ohm_per_km": float(l.r_ohm_per_km),
                "x_ohm_per_km": float(l.x_ohm_per_km),
                "c_nf_per_km": float(l.c_nf_per_km),
                "max_i_ka": float(l.max_i_ka),
                "in_service": bool(l.in_service) and idx not in open_lines,
            }
        )
    first_trafo = len(net.line)
    for k, (idx, t) in enumerate(net.trafo.iterrows()):
        branches.append(
            {
                "id": first_trafo + k,
                "name": t["name"],
                "from_bus": int(t.hv_bus),
                "to_bus": int(t.lv_bus),
                "kind": "transformer",
                "sn_mva": float(t.sn_mva),
                "vk_percent": float(t.vk_percent),
                "vkr_percent": float(t.vkr_percent),
                "tap_ratio": 1.0,
                "in_service": bool(t.in_service),
            }
        )

    injections = []
    for idx, l in net.load.iterrows():
        injections.append(
            {
                "id": int(idx),
                "name": "L%d" % idx,
                "description": l["name"],
                "bus": int(l.bus),
                "kind": "load",
                "p_mw": float(l.p_mw),
                "q_mvar": float(l.q_mvar),
            }
        )
    first_der = len(net.load)
    for k, (idx, g) in enumerate(net.sgen.iterrows()):
        injections.append(
            {
                "id": first_der + k,
                "name": g["name"],
                "description": "%s unit" % g["type"],
                "bus": int(g.bus),
                "kind": "der",
                "p_mw": float(g.p_mw),
                "q_mvar": float(g.q_mvar),
                "sn_mva": float(g.sn_mva),
            }
        )

    doc = {
        "schema_version": 1,
        "provenance": (
            "CIGRE medium voltage benchmark distribution network with PV and wind DER, "
            "transcribed from pandapower %s (networks.create_cigre_network_mv, with_der='pv_wind') "
            "by tools/export_cigre.py. Normally-open tie lines (line switches S1, S2, S3) are "
            "stored out of service. Loads are named L<k> after their pandapower table index." % pp.__version__
        ),
        "base_mva": float(net.sn_mva),
        "f_hz": float(net.f_hz),
        "buses": buses,
        "branches": branches,
        "injections": injections,
    }
    with open(out_path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


if __name__ == "__main__":
    main(sys.argv[1])

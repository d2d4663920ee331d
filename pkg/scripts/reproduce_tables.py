"""Evaluate the published parameter tables with this package.

Prints the iSWAP objective breakdown per table, the calibrated transmon
couplings with idle and gate E_ZZ before and after the chip optimization,
and the chain value/gradient timing ratios.
"""

import argparse
import json
import math

from codesign.bench import bench_diag_chain
from codesign.objectives import calibrate_coupling, chip_pairs, chip_param_vector, iswap_objective, iswap_param_vector
from codesign.circuits import TransmonParams
from codesign.spectral import e_zz, find_operating_point
from codesign.tables import CHAIN_RATIOS, E_ZZ_AFTER, E_ZZ_BEFORE, ISWAP_TABLES, TRANSMON_AFTER, TRANSMON_BEFORE


def iswap_rows():
    out = []
    for name, table in ISWAP_TABLES.items():
        r = iswap_objective(iswap_param_vector(table), grad=False)
        out.append({"table": name, "O": r.value, **r.terms, "leakage": r.info["leakage"], "gate_time": r.info["gate_time"]})
    return out


def _e01(p):
    return math.sqrt(8 * p.e_c * p.e_j) - p.e_c


def cphase_rows():
    j = {}
    for a, b in ("HM", "ML"):
        pa, pb = TransmonParams(*TRANSMON_BEFORE[a]), TransmonParams(*TRANSMON_BEFORE[b])
        tuned, fixed = (pa, pb) if _e01(pa) >= _e01(pb) else (pb, pa)
        j[a + b] = calibrate_coupling(tuned, fixed, E_ZZ_BEFORE[(a + b, "idle")])
    out = []
    for label, values, printed in (("before", TRANSMON_BEFORE, E_ZZ_BEFORE), ("after", TRANSMON_AFTER, E_ZZ_AFTER)):
        d = {}
        for q in "HML":
            d[f"E_C{q}"], d[f"E_J{q}"] = values[q]
        d["J_HM"], d["J_ML"] = j["HM"], j["ML"]
        for name, pair in zip(("HM", "ML"), chip_pairs(chip_param_vector(d))):
            op = find_operating_point(pair, 0.8)
            out.append({
                "table": label, "pair": name, "J_C": pair.j_c, "phi_stop": op.phi_ext_stop,
                "idle": e_zz(pair, 0.0), "idle_printed": printed[(name, "idle")],
                "gate": e_zz(pair, op.phi_ext_stop), "gate_printed": printed[(name, "gate")],
            })
    return out


def chain_rows(repeats):
    return [{"n_fm": r.n_fm, "ratio": r.ratio, "published": CHAIN_RATIOS[r.n_fm], "speedup_vs_fd": r.speedup_vs_fd}
            for r in (bench_diag_chain(n, repeats=repeats, check=False) for n in (3, 4, 5, 6))]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--json", action="store_true", help="emit one JSON document instead of text")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    doc = {"iswap": iswap_rows(), "cphase": cphase_rows(), "chain": chain_rows(args.repeats)}
    if args.json:
        print(json.dumps(doc, indent=2))
        return
    print("iSWAP tables")
    for r in doc["iswap"]:
        print(f"  {r['table']:<8} O={r['O']:.4f}  F={r['fidelity']:.6f}  P_decoh={r['p_decoh']:.3e}  "
              f"P_fm={r['p_fm']:.2e}  leakage={r['leakage']:.2e}  T={r['gate_time']:.2f} ns")
    print("transmon E_ZZ (GHz), couplings calibrated on the before table")
    for r in doc["cphase"]:
        print(f"  {r['table']:<6} {r['pair']}  J={r['J_C']:.5f}  idle {r['idle']:.3e} (printed {r['idle_printed']:.2e})  "
              f"gate {r['gate']:.3e} (printed {r['gate_printed']:.2e})  phi_stop={r['phi_stop']:.4f}")
    print("chain gradient/value time ratio")
    for r in doc["chain"]:
        print(f"  n_fm={r['n_fm']}  ratio {r['ratio']:.2f} (published {r['published']})  speedup vs FD {r['speedup_vs_fd']:.1f}")


if __name__ == "__main__":
    main()

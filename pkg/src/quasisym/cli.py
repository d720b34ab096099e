"""Command line entry point: load scenarios, run checks, write JSON and CSV reports."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import CHECK_IDS, Scenario, load_builtins, load_config
from .errors import ConfigError, QuasisymError
from .evolve import analytic_partition, energy_bounds_check, energy_catalogue, integrate_mode
from .gevrey import (
    SpectralData,
    evolved_decay_data,
    fit_decay_exponent,
    fit_growth,
    growth_samples,
    hermitian_phases,
    make_gevrey_data,
    make_ultra_data,
    theta_candidates_for,
)
from .levi import levi_refinement_check, relaxed_levi_check
from .spectrum import lc_check, lc_equivalent_check
from .suite import property_suite

SUBCOMMANDS = {
    "check-props": ("quasisym-props",),
    "levi-check": ("lc-check", "lc-equivalent", "levi-check", "relaxed-levi"),
    "solve": ("solve", "energy"),
    "fit-growth": ("solve", "fit-growth", "decay"),
    "partition": ("partition",),
    "run": CHECK_IDS,
}
_NEEDS_SOLVE = {"energy", "fit-growth", "decay"}


# ---------------------------------------------------------------- formatting

def fmt_float(x) -> str:
    """17 significant digits, round-trip exact for binary64."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def dumps(obj, indent=0) -> str:
    """Deterministic JSON; floats use fmt_float, non-finite floats become strings."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        s = fmt_float(obj)
        return json.dumps(s) if not math.isfinite(float(obj)) else s
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{dumps(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(fmt_float(v) for v in r))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- checks

def _entry(check_id, passed, constants=None, samples=0, worst_case=None):
    return {"id": check_id, "pass": bool(passed), "constants": constants or {}, "samples": int(samples),
            "worst_case": worst_case or {}}


def _error_entry(check_id, exc):
    return _entry(check_id, False, worst_case={"error": f"{type(exc).__name__}: {exc}"})


def _props(sc: Scenario, m_values):
    out = []
    p = sc.props
    for m in m_values:
        reports = property_suite(m, p["samples"], p["M"], tuple(p["eps"]), sc.seed, p["det_convention"], p["refine"],
                                 p["det_arithmetic"])
        for r in reports:
            d = r.to_dict()
            d["id"] = f"quasisym-props/{r.property_id}/m{m}"
            out.append(d)
    return out


def _refined(sc: Scenario):
    g = sc.grids
    t_fine = np.linspace(0.0, sc.spec.T, 2 * g["t_points"] - 1)
    radii = np.geomspace(g["xi_min"], g["xi_max"], 2 * g["xi_points"] - 1)
    pts = sorted(tuple(float(r * d) for d in u) for u in g["directions"] for r in radii)
    return t_fine, np.array(pts)


def _solve_one(args):
    spec, xi, tol, n_output = args
    V0 = np.zeros(spec.m, dtype=complex)
    V0[0] = 1.0
    return integrate_mode(spec, V0, xi, tol=tol, n_output=n_output)


def _solve(sc: Scenario, parallelism):
    jobs = [(sc.spec, xi, sc.solver["tol"], sc.grids["output_points"]) for xi in sc.xi_grid]
    if parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            trajs = list(pool.map(_solve_one, jobs))
    else:
        trajs = [_solve_one(j) for j in jobs]
    # merge in lexicographic frequency order
    return {tuple(map(float, xi)): tr for xi, tr in sorted(zip(map(tuple, sc.xi_grid), trajs))}


def _data(sc: Scenario):
    d = sc.data
    xi = sc.xi_grid
    if d["kind"] == "gevrey":
        data = make_gevrey_data(d["s"], d["delta"], xi)
    elif d["kind"] == "ultra":
        data = make_ultra_data(d["s"], d["delta"], xi, d.get("xi_max", float(np.max(np.linalg.norm(xi, axis=1)))))
    else:
        return None
    if d["phase"] == "random":
        data = SpectralData(data.xi, data.log_mag, hermitian_phases(xi, sc.seed))
    return data


def run_scenario(sc: Scenario, only=None, m_override=None, parallelism=1):
    """-> (report dict, {filename: csv text})."""
    wanted = [c for c in sc.checks if only is None or c in only]
    checks, csvs, growth = [], {}, None
    t_grid, xi_grid = sc.t_grid, sc.xi_grid

    def guarded(check_id, fn, record=True):
        try:
            res = fn()
        except (QuasisymError, ValueError, FloatingPointError) as exc:
            checks.append(_error_entry(check_id, exc))
            return None
        if not record:
            return res
        if isinstance(res, list):
            checks.extend(res)
        elif res is not None:
            checks.append(res)
        return res

    # properties
    if "quasisym-props" in wanted:
        guarded("quasisym-props", lambda: _props(sc, m_override or sc.props["m"]))

    # root separation and Levi conditions
    if "lc-check" in wanted:
        guarded("lc-check", lambda: lc_check(sc.spec, t_grid, xi_grid, raise_nonhyperbolic=False).to_dict())
    if "lc-equivalent" in wanted:
        guarded("lc-equivalent", lambda: lc_equivalent_check(sc.spec, t_grid).to_dict())
    if "levi-check" in wanted:
        guarded("levi-check", lambda: levi_refinement_check(
            sc.spec, ((t_grid, xi_grid), _refined(sc)), sc.levi["samples"], sc.seed).to_dict("levi-check"))
    if "relaxed-levi" in wanted:
        guarded("relaxed-levi", lambda: relaxed_levi_check(
            sc.spec, sc.levi["h"], t_grid, xi_grid, sc.levi.get("k"), sc.levi["samples"], sc.seed
        ).to_dict("relaxed-levi"))

    # evolution
    field_ = None
    if "solve" in wanted or _NEEDS_SOLVE & set(wanted):
        field_ = guarded("solve", lambda: _solve(sc, parallelism), record=False)
        if field_ is not None:
            checks.append(_solve_entry(sc, field_))
            csvs[f"{sc.name}_trajectories.csv"] = _trajectory_csv(sc, field_)
    if field_ is not None:
        if "energy" in wanted:
            guarded("energy", lambda: _energy_entry(sc, field_))
        if "fit-growth" in wanted:
            res = guarded("fit-growth", lambda: _growth_entry(sc, field_))
            if res is not None:
                growth = res["constants"]
                csvs[f"{sc.name}_growth.csv"] = _growth_csv(sc, field_, res["constants"])
        if "decay" in wanted:
            guarded("decay", lambda: _decay_entry(sc, field_))
    if "partition" in wanted:
        guarded("partition", lambda: _partition_entry(sc))

    for c in checks:
        c["gated"] = c["id"].split("/")[0] in sc.gates
    report = {
        "scenario": sc.name,
        "seed": sc.seed,
        "checks": checks,
        "growth": None if growth is None else
        {k: growth[k] for k in ("kappa", "c_stretch", "theta", "classification")},
    }
    return report, csvs


def _solve_entry(sc, field_):
    acc = [tr.accepted_steps for tr in field_.values()]
    rej = [tr.rejected_steps for tr in field_.values()]
    growth = [tr.growth for tr in field_.values()]
    worst = max(field_, key=lambda k: field_[k].growth)
    ok = all(np.all(np.isfinite(tr.V)) for tr in field_.values())
    return _entry("solve", ok, {"accepted_steps": int(sum(acc)), "rejected_steps": int(sum(rej)),
                                "max_growth": float(max(growth)), "tol": sc.solver["tol"]},
                  len(field_), {"xi": list(worst)})


def _trajectory_csv(sc, field_):
    n, m = sc.spec.n, sc.spec.m
    header = [f"xi_{i + 1}" for i in range(n)] + ["t"]
    for j in range(m):
        header += [f"re_V{j + 1}", f"im_V{j + 1}"]
    header.append("E_eps")
    rows = []
    for xi, tr in field_.items():
        for k, t in enumerate(tr.t_samples):
            row = list(xi) + [t]
            for v in tr.V[k]:
                row += [v.real, v.imag]
            row.append(tr.E_eps[k])
            rows.append(row)
    return csv_text(header, rows)


def _energy_entry(sc, field_):
    reps = [energy_bounds_check(tr, sc.spec) for tr in field_.values()]
    cat = energy_catalogue(reps)
    worst = max(reps, key=lambda r: r["growth_C"])
    return _entry("energy", cat["pass"], {k: v for k, v in cat.items() if k != "pass"}, len(reps),
                  {"xi": worst["xi"]})


def _growth_entry(sc, field_):
    g = fit_growth(field_, sc.spec.T, theta_candidates_for(sc.spec), R=sc.spec.R)
    e = sc.expect
    ok = True
    reasons = {}
    if "classification" in e:
        ok &= g.classification == e["classification"]
        reasons["expected_classification"] = e["classification"]
    if "theta" in e:
        ok &= abs(g.theta - e["theta"]) <= 1e-12
        reasons["expected_theta"] = e["theta"]
    if "c_stretch" in e:
        tol = e.get("c_rel_tol", 0.05)
        ok &= abs(g.c_stretch - e["c_stretch"]) <= tol * abs(e["c_stretch"])
        reasons["expected_c_stretch"] = e["c_stretch"]
    return _entry("fit-growth", ok, g.to_dict(), len(field_), reasons)


def _growth_csv(sc, field_, g):
    br, y = growth_samples(field_, sc.spec.T, sc.spec.R)
    model = g["a"] + g["kappa"] * np.log(br) + g["c_stretch"] * br ** g["theta"]
    xi = np.sqrt(br ** 2 - 1.0)
    return csv_text(["xi", "log_ratio", "model_value"], zip(xi, y, model))


def _decay_entry(sc, field_):
    data = _data(sc)
    if data is None or sc.data["kind"] != "gevrey":
        raise ValueError("decay check needs gevrey data")
    ev = evolved_decay_data(data, field_, sc.spec.T)
    s, info = fit_decay_exponent(ev, with_log=sc.expect.get("decay_fit") == "log", return_details=True)
    s_max = sc.expect.get("s_max")
    ok = math.isfinite(s) and (s_max is None or s <= s_max)
    return _entry("decay", ok, {"s_estimate": s, "s_data": sc.data["s"], "s_max": s_max, **info}, len(field_))


def _partition_entry(sc):
    Ns = {}
    for xi in sc.xi_grid:
        Ns[tuple(map(float, xi))] = analytic_partition(sc.spec, xi).N
    worst = max(Ns, key=lambda k: (Ns[k], k))
    return _entry("partition", True, {"max_intervals": max(Ns.values())}, len(Ns), {"xi": list(worst)})


# ---------------------------------------------------------------- driver

def write_outputs(out_dir: Path, report, csvs):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{report['scenario']}.json").write_text(dumps(report) + "\n", encoding="utf-8")
    for name, text in csvs.items():
        (out_dir / name).write_text(text, encoding="utf-8")


def scenario_passed(report):
    return all(c["pass"] for c in report["checks"] if c.get("gated", True))


def run(scenarios, out_dir, parallelism=1, only=None, m_override=None, log=None) -> int:
    """Run every scenario, write reports, return 0 iff all gated checks pass."""
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise ConfigError(0, "scenario names must be unique in a run")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = []
    for sc in sorted(scenarios, key=lambda s: s.name):
        if only is not None and not any(c in only for c in sc.checks):
            continue
        report, csvs = run_scenario(sc, only, m_override, parallelism)
        write_outputs(out_dir, report, csvs)
        ok = scenario_passed(report)
        summary.append({"scenario": sc.name, "pass": ok})
        if log:
            for c in report["checks"]:
                flag = "PASS" if c["pass"] else "FAIL"
                gate = "" if c["gated"] else " (not gated)"
                log(f"{sc.name}: {c['id']} {flag}{gate}")
    (out_dir / "summary.json").write_text(dumps({"scenarios": summary}) + "\n", encoding="utf-8")
    return 0 if all(s["pass"] for s in summary) else 1


def summarise(out_dir, log=print) -> int:
    """Read existing JSON reports and print one line per check."""
    out_dir = Path(out_dir)
    status = 0
    for f in sorted(out_dir.glob("*.json")):
        if f.name == "summary.json":
            continue
        rep = json.loads(f.read_text(encoding="utf-8"))
        for c in rep.get("checks", []):
            flag = "PASS" if c["pass"] else "FAIL"
            log(f"{rep['scenario']}: {c['id']} {flag}{'' if c.get('gated', True) else ' (not gated)'}")
        if not scenario_passed(rep):
            status = 1
    return status


def build_parser():
    p = argparse.ArgumentParser(prog="quasisym", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in list(SUBCOMMANDS) + ["report"]:
        s = sub.add_parser(name)
        s.add_argument("--config", action="append",
                       help="scenario file or builtin:<name>; repeatable (default: all built-ins)")
        s.add_argument("--out", default="out", help="output directory")
        if name != "report":
            s.add_argument("--seed", type=int, help="override every scenario seed")
            s.add_argument("--parallelism", type=int, default=os.cpu_count() or 1)
            s.add_argument("--only", action="append", choices=CHECK_IDS, help="restrict to a check id; repeatable")
            s.add_argument("--m", type=int, action="append", help="order(s) for quasisym-props")
    sub.add_parser("list", help="list built-in scenarios")
    return p


def _load(configs):
    if not configs:
        return load_builtins()
    out = []
    for c in configs:
        out.extend(load_config(c))
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            for sc in load_builtins():
                print(f"{sc.name}: {sc.description}")
            return 0
        if args.command == "report":
            return summarise(args.out)
        scenarios = _load(args.config)
        if args.seed is not None:
            for sc in scenarios:
                sc.seed = args.seed
        only = set(SUBCOMMANDS[args.command])
        if args.only:
            only &= set(args.only)
        return run(scenarios, args.out, max(1, args.parallelism), sorted(only), args.m, log=print)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Scenario files: INI-style sections of ``key = value`` pairs.

A scenario is a top-level section ``[name]``; its parts live in dotted
subsections ``[name.coefficients]``, ``[name.grids]`` and so on.  Coefficient
keys read ``a[p;g1,...,gn]`` and their values are coefficient expressions.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .coeff_dsl import parse, to_source
from .errors import ConfigError, QuasisymError
from .spectrum import ProblemSpec

CHECK_IDS = (
    "quasisym-props",
    "lc-check",
    "lc-equivalent",
    "levi-check",
    "relaxed-levi",
    "solve",
    "energy",
    "fit-growth",
    "decay",
    "partition",
)

_MAIN_KEYS = {"description", "m", "n", "T", "regularity", "smooth_k", "R", "seed", "checks", "gates"}
_PART_KEYS = {
    "grids": {"t_points", "xi_min", "xi_max", "xi_points", "directions", "output_points"},
    "data": {"kind", "s", "delta", "xi_max", "phase"},
    "solver": {"tol"},
    "props": {"m", "samples", "M", "eps", "det_convention", "det_arithmetic", "refine"},
    "levi": {"h", "k", "samples"},
    "expect": {"classification", "theta", "c_stretch", "c_rel_tol", "s_max", "decay_fit"},
    "coefficients": None,
    "roots": None,
}
_COEFF_KEY = re.compile(r"a\[\s*(\d+)\s*;\s*(\d+(?:\s*,\s*\d+)*)\s*\]$")


@dataclass
class Scenario:
    name: str
    spec: ProblemSpec
    data: dict
    grids: dict
    checks: list
    gates: list
    seed: int
    solver: dict = field(default_factory=dict)
    props: dict = field(default_factory=dict)
    levi: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    description: str = ""

    @property
    def t_grid(self):
        return np.linspace(0.0, self.spec.T, int(self.grids["t_points"]))

    @property
    def radii(self):
        g = self.grids
        return np.geomspace(g["xi_min"], g["xi_max"], int(g["xi_points"]))

    @property
    def xi_grid(self):
        """All frequencies: each radius times each unit direction, sorted lexicographically."""
        dirs = self.grids["directions"]
        pts = [tuple(float(r * d) for d in u) for u in dirs for r in self.radii]
        return np.array(sorted(pts))


def _read_sections(text, origin):
    """-> list of (section, line, {key: (value, line)})."""
    sections = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ConfigError(lineno, f"malformed section header {line!r}")
            name = line[1:-1].strip()
            if any(s[0] == name for s in sections):
                raise ConfigError(lineno, f"duplicate section [{name}]")
            current = (name, lineno, {})
            sections.append(current)
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(lineno, f"expected 'key = value', got {line!r}")
        if current is None:
            raise ConfigError(lineno, "key outside of any section")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(lineno, "empty key")
        if key in current[2]:
            raise ConfigError(lineno, f"duplicate key {key!r}")
        current[2][key] = (value, lineno)
    if not sections:
        raise ConfigError(1, f"no scenarios in {origin}")
    return sections


def _num(kind, value, line, key):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(line, f"{key}: cannot read {value!r} as {kind.__name__}") from None


def _float_list(value, line, key):
    return [_num(float, x.strip(), line, key) for x in value.split(",") if x.strip()]


def _id_list(value, line, key):
    ids = [x.strip() for x in value.split(",") if x.strip()]
    for i in ids:
        if i not in CHECK_IDS:
            raise ConfigError(line, f"{key}: unknown check id {i!r}")
    return ids


def _coefficients(entries, m, n):
    table = {}
    for key, (value, line) in entries.items():
        mo = _COEFF_KEY.match(key)
        if not mo:
            raise ConfigError(line, f"unknown coefficient key {key!r}; expected a[p;g1,...,gn]")
        p = int(mo.group(1))
        gamma = tuple(int(g) for g in mo.group(2).split(","))
        if len(gamma) != n:
            raise ConfigError(line, f"{key}: multi-index needs {n} entries")
        if not 1 <= p <= m or sum(gamma) > p:
            raise ConfigError(line, f"{key}: need 1 <= p <= m and |gamma| <= p")
        try:
            table[(p, gamma)] = parse(value)
        except QuasisymError as exc:
            raise ConfigError(line, f"{key}: {exc}") from None
    return table


def _principal_from_roots(entries, m, n, table, line):
    """Principal coefficients (-1)^p e_p(r_1, ..., r_m) of prod (tau - r_i(t) xi), n = 1."""
    if n != 1:
        raise ConfigError(line, "a roots section needs n = 1")
    if len(entries) != m:
        raise ConfigError(line, f"a roots section needs exactly m = {m} entries")
    srcs = []
    for key, (value, kl) in entries.items():
        try:
            srcs.append("(" + to_source(parse(value).ast) + ")")
        except QuasisymError as exc:
            raise ConfigError(kl, f"{key}: {exc}") from None
    out = {}
    for p in range(1, m + 1):
        if (p, (p,)) in table:
            raise ConfigError(line, f"a[{p};{p}] is given both directly and through the roots")
        terms = ["*".join(srcs[i] for i in c) for c in itertools.combinations(range(m), p)]
        body = " + ".join(terms)
        out[(p, (p,))] = parse(f"-({body})" if p % 2 else f"({body})")
    return out


def _scenario(name, line, main, parts):
    for key, (_, kl) in main.items():
        if key not in _MAIN_KEYS:
            raise ConfigError(kl, f"unknown key {key!r} in [{name}]")
    if "m" not in main:
        raise ConfigError(line, f"[{name}] needs m")

    def get(key, kind, default):
        if key not in main:
            return default
        v, kl = main[key]
        return _num(kind, v, kl, key)

    m = get("m", int, None)
    n = get("n", int, 1)
    T = get("T", float, 1.0)
    reg_raw, reg_line = main.get("regularity", ("analytic", line))
    declared = reg_raw if reg_raw in ("analytic", "smooth") else _num(int, reg_raw, reg_line, "regularity")
    seed = get("seed", int, 0)
    checks = _id_list(*main["checks"], "checks") if "checks" in main else None
    gates = _id_list(*main["gates"], "gates") if "gates" in main else None
    if gates is not None and checks is not None:
        for g in gates:
            if g not in checks:
                raise ConfigError(main["gates"][1], f"gate {g!r} is not an enabled check")

    table = _coefficients(parts.get("coefficients", {}), m, n)
    if "roots" in parts:
        table.update(_principal_from_roots(parts["roots"], m, n, table, line))
    try:
        spec = ProblemSpec.from_table(
            m, n, T, table, declared_k=declared,
            R=get("R", float, 1.0), smooth_k=get("smooth_k", int, 2), name=name,
        )
    except ConfigError:
        raise
    except (QuasisymError, ValueError) as exc:
        raise ConfigError(line, f"[{name}]: {exc}") from None

    def section(part, defaults, kinds):
        out = dict(defaults)
        for key, (v, kl) in parts.get(part, {}).items():
            kind = kinds.get(key, str)
            if kind == "floats":
                out[key] = _float_list(v, kl, key)
            elif kind == "bool":
                if v.lower() not in ("true", "false"):
                    raise ConfigError(kl, f"{key}: expected true or false")
                out[key] = v.lower() == "true"
            else:
                out[key] = _num(kind, v, kl, key)
        return out

    grids = section(
        "grids",
        {"t_points": 33, "xi_min": 64.0, "xi_max": 4096.0, "xi_points": 13, "output_points": 65},
        {"t_points": int, "xi_min": float, "xi_max": float, "xi_points": int, "output_points": int,
         "directions": str},
    )
    grids["directions"] = _directions(grids.get("directions"), n, parts.get("grids", {}).get("directions", ("", line))[1])
    data = section("data", {"kind": "unit", "s": 1.0, "delta": 1.0, "phase": "constant"},
                   {"s": float, "delta": float, "xi_max": float})
    if data["kind"] not in ("unit", "gevrey", "ultra"):
        raise ConfigError(parts["data"]["kind"][1], f"unknown data kind {data['kind']!r}")
    solver = section("solver", {"tol": 1e-8}, {"tol": float})
    props = section("props", {"m": [float(m)], "samples": 1000, "M": 10.0, "eps": [1.0, 0.1, 0.01, 0.001],
                              "det_convention": "stated", "det_arithmetic": "rational", "refine": False},
                    {"m": "floats", "samples": int, "M": float, "eps": "floats", "refine": "bool"})
    props["m"] = [int(x) for x in props["m"]]
    for key, allowed in (("det_convention", ("stated", "exact")), ("det_arithmetic", ("float", "rational"))):
        if props[key] not in allowed:
            raise ConfigError(parts["props"][key][1], f"{key} must be one of {', '.join(allowed)}")
    levi = section("levi", {"h": 0, "samples": 32}, {"h": int, "k": int, "samples": int})
    expect = section("expect", {}, {"theta": float, "c_stretch": float, "c_rel_tol": float, "s_max": float})
    if checks is None:
        checks = default_checks(spec, data)
    if gates is None:
        gates = list(checks)
    desc = main.get("description", ("", line))[0]
    return Scenario(name, spec, data, grids, checks, gates, seed, solver, props, levi, expect, desc)


def default_checks(spec, data):
    """Checks that apply to a problem when the file does not list them."""
    out = ["quasisym-props", "lc-check"]
    if spec.n == 1 and spec.m in (2, 3):
        out.append("lc-equivalent")
    out.append("levi-check")
    if spec.m >= 2:
        out.append("relaxed-levi")
    out += ["solve", "energy", "fit-growth"]
    if data["kind"] == "gevrey":
        out.append("decay")
    if spec.k_value is None:
        out.append("partition")
    return out


def _directions(value, n, line):
    if not value:
        return [tuple([1.0] + [0.0] * (n - 1))]
    dirs = []
    for chunk in value.split(";"):
        v = np.array(_float_list(chunk, line, "directions"))
        if len(v) != n or not np.any(v):
            raise ConfigError(line, f"directions: each entry needs {n} components, not all zero")
        dirs.append(tuple(float(x) for x in v / np.linalg.norm(v)))
    return dirs


def loads(text, origin="<string>"):
    sections = _read_sections(text, origin)
    mains = {}
    parts = {}
    for name, line, entries in sections:
        base, dot, part = name.partition(".")
        if not dot:
            mains[base] = (line, entries)
            continue
        if part not in _PART_KEYS:
            raise ConfigError(line, f"unknown section [{name}]")
        allowed = _PART_KEYS[part]
        if allowed is not None:
            for key, (_, kl) in entries.items():
                if key not in allowed:
                    raise ConfigError(kl, f"unknown key {key!r} in [{name}]")
        parts.setdefault(base, {})[part] = (line, entries)
    for base, p in parts.items():
        if base not in mains:
            line = min(v[0] for v in p.values())
            raise ConfigError(line, f"subsection for undefined scenario {base!r}")
    return [
        _scenario(name, line, entries, {k: v[1] for k, v in parts.get(name, {}).items()})
        for name, (line, entries) in mains.items()
    ]


def load_config(path):
    """Scenarios from a file path, or ``builtin:<name>`` for a shipped scenario."""
    path = str(path)
    if path.startswith("builtin:"):
        return loads(builtin_text(path[len("builtin:"):]), path)
    p = Path(path)
    if not p.is_file():
        raise ConfigError(0, f"no such file: {path}")
    return loads(p.read_text(encoding="utf-8"), path)


def builtin_names():
    root = resources.files("quasisym") / "scenarios"
    return sorted(f.name[:-4] for f in root.iterdir() if f.name.endswith(".cfg"))


def builtin_text(name):
    f = resources.files("quasisym") / "scenarios" / f"{name}.cfg"
    if not f.is_file():
        raise ConfigError(0, f"no built-in scenario {name!r}; have {', '.join(builtin_names())}")
    return f.read_text(encoding="utf-8")


def load_builtins():
    out = []
    for name in builtin_names():
        out.extend(loads(builtin_text(name), f"builtin:{name}"))
    return out

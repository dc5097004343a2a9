"""Metric spec files: INI text with one section per block.

A plain metric::

    [spec]
    kind = metric
    name = model
    dim = 4
    coords = x1, x2, x3, x4
    tau_unit = 1
    seed = 0

    [metric]
    x1.x1 = 1
    x4.x4 = x4

A warped product replaces ``[metric]`` by ``[warped]`` (``f``, ``interval``)
and ``[base]`` (components of ``g_S``; the last coordinate is ``t``).
Optional blocks: ``[box]`` (``coord = lo, hi``) and ``[functions]``
(``name = f(0), f'(0), f''(0)``).  The ``tau`` key in ``[spec]`` may name a
coordinate other than the last one.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from fractions import Fraction

import sympy

from . import expr as ex
from .geometry import MetricChart

SECTIONS = {"spec", "metric", "warped", "base", "box", "functions"}
SPEC_KEYS = {"kind", "name", "dim", "coords", "tau", "tau_unit", "seed"}
WARPED_KEYS = {"f", "interval"}


class SpecError(ValueError):
    """Malformed spec file."""


@dataclass(frozen=True)
class MetricSpec:
    kind: str
    name: str
    coords: tuple
    components: tuple  # ((i, j), expr) with i <= j, 0-based
    tau: str
    tau_unit: sympy.Expr = sympy.S.One
    seed: int = 0
    box: tuple = ()  # ((name, (lo, hi)), ...)
    functions: tuple = ()  # FunctionDecl
    f: sympy.Expr | None = None
    interval: tuple = (-0.5, 0.5)

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def symbols(self) -> tuple:
        return tuple(sympy.Symbol(c) for c in self.coords)


def _pair(text: str, what: str) -> tuple:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise SpecError(f"{what}: expected 'lo, hi'")
    try:
        lo, hi = (float(Fraction(p)) for p in parts)
    except (ValueError, ZeroDivisionError):
        raise SpecError(f"{what}: bad number in {text!r}") from None
    if not lo < hi:
        raise SpecError(f"{what}: empty range")
    return lo, hi


def _rational(text: str, what: str):
    try:
        return sympy.Rational(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise SpecError(f"{what}: {text!r} is not an exact rational") from None


def _unknown(section, allowed, where):
    extra = set(section) - set(allowed)
    if extra:
        raise SpecError(f"unknown keys in [{where}]: {sorted(extra)}")


def _components(section, coords, symbols, fnames, where):
    index = {c: i for i, c in enumerate(coords)}
    out = {}
    for key, val in section.items():
        parts = key.split(".")
        if len(parts) != 2 or parts[0] not in index or parts[1] not in index:
            raise SpecError(f"[{where}] key {key!r} is not 'coord.coord'")
        i, j = sorted((index[parts[0]], index[parts[1]]))
        if (i, j) in out:
            raise SpecError(f"[{where}] component {key!r} given twice")
        e = ex.parse(val, symbols, fnames)
        if e != 0:
            out[(i, j)] = e
    return tuple(sorted(out.items()))


def parse_spec(text: str) -> MetricSpec:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecError(f"malformed file: {exc}") from None
    sections = set(cp.sections())
    if sections - SECTIONS:
        raise SpecError(f"unknown sections: {sorted(sections - SECTIONS)}")
    if "spec" not in sections:
        raise SpecError("missing [spec] section")
    sp = cp["spec"]
    _unknown(sp, SPEC_KEYS, "spec")
    kind = sp.get("kind", "metric").strip()
    if kind not in ("metric", "warped"):
        raise SpecError(f"kind must be 'metric' or 'warped', got {kind!r}")
    if "coords" not in sp:
        raise SpecError("missing coords")
    coords = tuple(c.strip() for c in sp["coords"].split(","))
    if len(set(coords)) != len(coords) or not all(c.isidentifier() for c in coords):
        raise SpecError("coords must be distinct identifiers")
    if "dim" in sp:
        try:
            dim = int(sp["dim"])
        except ValueError:
            raise SpecError("dim must be an integer") from None
        if dim != len(coords):
            raise SpecError(f"dim = {dim} but {len(coords)} coords given")
    tau = sp.get("tau", coords[-1]).strip()
    if tau not in coords:
        raise SpecError(f"tau coordinate {tau!r} is not a coordinate")
    if kind == "warped" and tau != coords[-1]:
        raise SpecError("warped specs use the last coordinate as t")
    symbols = tuple(sympy.Symbol(c) for c in coords)
    funcs = []
    if "functions" in sections:
        for name, val in cp["functions"].items():
            if not name.isidentifier() or name in coords:
                raise SpecError(f"bad function name {name!r}")
            vals = tuple(_rational(v, f"function {name}") for v in val.split(",") if v.strip())
            funcs.append(ex.FunctionDecl(name, vals))
    fnames = [d.name for d in funcs]
    try:
        seed = int(sp.get("seed", "0"))
    except ValueError:
        raise SpecError("seed must be an integer") from None
    tau_unit = ex.parse(sp.get("tau_unit", "1"), symbols, fnames)
    box = []
    if "box" in sections:
        for name, val in cp["box"].items():
            if name not in coords:
                raise SpecError(f"[box] names unknown coordinate {name!r}")
            box.append((name, _pair(val, f"box {name}")))
    box = tuple(sorted(box, key=lambda kv: coords.index(kv[0])))
    name = sp.get("name", "").strip()
    if kind == "metric":
        if "metric" not in sections:
            raise SpecError("missing [metric] section")
        if {"warped", "base"} & sections:
            raise SpecError("[warped]/[base] only allowed with kind = warped")
        comps = _components(cp["metric"], coords, symbols, fnames, "metric")
        return MetricSpec(kind, name, coords, comps, tau, tau_unit, seed, box, tuple(funcs))
    if "metric" in sections:
        raise SpecError("[metric] not allowed with kind = warped")
    if "warped" not in sections or "base" not in sections:
        raise SpecError("warped specs need [warped] and [base] sections")
    w = cp["warped"]
    _unknown(w, WARPED_KEYS, "warped")
    if "f" not in w:
        raise SpecError("[warped] needs f")
    f = ex.parse(w["f"], symbols[-1:], fnames)
    interval = _pair(w.get("interval", "-1/2, 1/2"), "interval")
    comps = _components(cp["base"], coords[:-1], symbols[:-1], [], "base")
    return MetricSpec(kind, name, coords, comps, tau, tau_unit, seed, box, tuple(funcs), f, interval)


def _fmt_num(v: float) -> str:
    fr = Fraction(v).limit_denominator(10**6)
    return str(fr) if float(fr) == v else repr(v)


def format_spec(spec: MetricSpec) -> str:
    """Canonical text; ``parse_spec(format_spec(s)) == s``."""
    lines = ["[spec]", f"kind = {spec.kind}"]
    if spec.name:
        lines.append(f"name = {spec.name}")
    lines += [f"dim = {spec.dim}", f"coords = {', '.join(spec.coords)}"]
    if spec.tau != spec.coords[-1]:
        lines.append(f"tau = {spec.tau}")
    if spec.tau_unit != 1:
        lines.append(f"tau_unit = {ex.to_text(spec.tau_unit)}")
    lines.append(f"seed = {spec.seed}")
    cs = spec.coords if spec.kind == "metric" else spec.coords[:-1]
    if spec.kind == "warped":
        lines += ["", "[warped]", f"f = {ex.to_text(spec.f)}",
                  f"interval = {_fmt_num(spec.interval[0])}, {_fmt_num(spec.interval[1])}"]
    lines += ["", "[metric]" if spec.kind == "metric" else "[base]"]
    for (i, j), e in spec.components:
        lines.append(f"{cs[i]}.{cs[j]} = {ex.to_text(e)}")
    if spec.functions:
        lines += ["", "[functions]"]
        for d in spec.functions:
            lines.append(f"{d.name} = {', '.join(str(v) for v in d.values)}")
    if spec.box:
        lines += ["", "[box]"]
        for name, (lo, hi) in spec.box:
            lines.append(f"{name} = {_fmt_num(lo)}, {_fmt_num(hi)}")
    return "\n".join(lines) + "\n"


def _box(spec: MetricSpec, coords) -> tuple:
    given = dict(spec.box)
    return tuple(given.get(c, (-0.5, 0.5)) for c in coords)


def to_chart(spec: MetricSpec) -> MetricChart:
    """Chart for a plain spec, or the warped metric for a warped one."""
    if spec.kind == "warped":
        from .warped import make_warped
        return make_warped(to_warped(spec))
    syms = spec.symbols
    return MetricChart.from_components(syms, {(i, j): e for (i, j), e in spec.components},
                                       tau_index=spec.coords.index(spec.tau),
                                       tau_unit=spec.tau_unit, functions=spec.functions,
                                       box=_box(spec, spec.coords), seed=spec.seed, name=spec.name)


def to_warped(spec: MetricSpec):
    from .warped import WarpedSpec
    if spec.kind != "warped":
        raise SpecError("not a warped spec")
    syms = spec.symbols
    base = MetricChart.from_components(syms[:-1], {(i, j): e for (i, j), e in spec.components},
                                       tau_index=None, box=_box(spec, spec.coords[:-1]),
                                       seed=spec.seed, name=spec.name + ":base")
    return WarpedSpec(base, spec.f, syms[-1], spec.functions, spec.interval, spec.seed, spec.name)


def load(path) -> MetricSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())

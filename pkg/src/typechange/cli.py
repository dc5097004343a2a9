"""Command-line front end: ``analyze``, ``conformal`` and ``corpus``."""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import sympy

from . import __version__
from . import expr as ex
from .conformal import grad_extended, verify_II_law, verify_III_law, verify_weyl_invariance
from .degeneracy import AnalysisReport, Flag, PreconditionError, analyze, classify
from .geometry import GeometryError
from .specfile import SpecError, parse_spec, to_chart
from .warped import WarpedError

SEED_ENV = "TYPECHANGE_SEED"
EXIT_OK, EXIT_PARSE, EXIT_PRECONDITION = 0, 1, 2


# ---------------------------------------------------------------------------
# deterministic JSON


def _num(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return "null"
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats at 17 significant digits and stable ordering."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None or obj is True or obj is False:
        return {None: "null", True: "true", False: "false"}[obj]
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _num(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _value(e, mode: str):
    """Exact text and/or float for a scalar, filtered by the evidence mode."""
    if e is None:
        return None
    e = sympy.sympify(e)
    out = {}
    if mode in ("exact", "both"):
        out["exact"] = ex.to_text(e)
    if mode in ("numeric", "both"):
        try:
            out["numeric"] = float(e) if e.is_number else None
        except (TypeError, ValueError):
            out["numeric"] = None
    return out


def _flag(f: Flag, mode: str) -> dict:
    d = {"value": f.value, "evidence": f.evidence}
    if f.k is not None:
        d["k"] = _value(f.k, mode)
    if f.note:
        d["note"] = f.note
    return d


def report_dict(rep: AnalysisReport, mode: str = "both") -> dict:
    ext = {}
    for name, v in rep.verdicts.items():
        d = {"criteria": v.criteria, "laurent": v.laurent, "agree": v.agree, "evidence": v.evidence}
        if v.witness is not None:
            w = {"component": list(v.witness)}
            if v.witness_form is not None:
                w["pole_order"] = v.witness_form.order
                w["A1"] = _value(v.witness_form.a1, mode)
                w["A2"] = _value(v.witness_form.a2, mode)
            d["witness"] = w
        if v.note:
            d["note"] = v.note
        ext[name] = d
    diag = {}
    for k, v in rep.diagnostics.items():
        if k == "W_second_order":
            diag[k] = {"component": v["component"], "value": _value(v["value"], mode)}
        elif k == "C":
            diag[k] = _value(v, mode)
        elif isinstance(v, dict):
            diag[k] = {"exact_zero": v["exact_zero"], "max_abs": float(v["max_abs"])}
        else:
            diag[k] = v
    forms = {}
    if rep.forms is not None:
        forms["basis"] = rep.forms.basis.kind
        forms["II_sigma"] = [[ex.to_text(c) for c in row] for row in rep.forms.II_sigma.tolist()]
        if rep.forms.III is not None:
            forms["III"] = [[ex.to_text(c) for c in row] for row in rep.forms.III.tolist()]
    return {
        "flags": {k: _flag(f, mode) for k, f in rep.flags.items()},
        "extendibility": ext,
        "all_agree": rep.all_agree,
        "fundamental_forms": forms,
        "diagnostics": diag,
        "notes": list(rep.notes),
    }


# ---------------------------------------------------------------------------
# commands


def _seed(arg) -> int | None:
    if arg is not None:
        return arg
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise SpecError(f"{SEED_ENV} must be an integer") from None
    return None


def _load(path: str, seed: int | None):
    data = Path(path).read_bytes()
    spec = parse_spec(data.decode("utf-8"))
    if seed is not None:
        spec = replace(spec, seed=seed)
    if not spec.name:
        spec = replace(spec, name=Path(path).stem)
    return spec, hashlib.sha256(data).hexdigest()


def _header(path, spec, digest) -> dict:
    return {
        "engine": {"name": "typechange", "version": __version__},
        "input": {"file": Path(path).name, "sha256": digest, "seed": spec.seed},
        "metric": {"name": spec.name, "kind": spec.kind, "dim": spec.dim,
                   "coords": list(spec.coords), "tau": ex.to_text(spec.tau_unit * sympy.Symbol(spec.tau))},
    }


def _emit(doc: dict, out: str | None):
    text = dumps(doc) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_analyze(args) -> int:
    spec, digest = _load(args.file, _seed(args.seed))
    M = to_chart(spec)
    rep = analyze(M)
    doc = _header(args.file, spec, digest)
    doc.update(report_dict(rep, args.evidence))
    _emit(doc, args.json)
    return EXIT_OK


_FLAG_NAMES = ("radical_transverse", "II_flat", "III_flat", "conf_II_flat", "conf_III_flat",
               "class_conf_III_flat")


def _law(check) -> dict:
    return {"max_abs": float(check.max_abs), "evidence": check.evidence, "ok": check.ok}


def cmd_conformal(args) -> int:
    spec, digest = _load(args.file, _seed(args.seed))
    M = to_chart(spec)
    f = ex.parse(args.factor, M.coords, [d.name for d in M.functions])
    from .conformal import rescale
    N = rescale(M, f)
    doc = _header(args.file, spec, digest)
    doc["factor"] = ex.to_text(f)
    laws = {"II": _law(verify_II_law(M, f))}
    try:
        laws["III"] = _law(verify_III_law(M, f))
    except PreconditionError as exc:
        laws["III"] = {"skipped": str(exc)}
    if M.dim >= 4:
        wc = verify_weyl_invariance(M, f)
        laws["W"] = _law(wc.W)
        laws["W13"] = _law(wc.W13)
        laws["W13_identical"] = wc.identical
    g = grad_extended(M, f)
    laws["grad_extends"] = g.extends
    doc["laws"] = laws
    before, after = classify(M), classify(N)
    doc["flags"] = {n: {"before": getattr(before, n).value, "after": getattr(after, n).value}
                    for n in _FLAG_NAMES}
    _emit(doc, args.json)
    return EXIT_OK


_COLUMNS = ("file", "name", "transverse", "II_flat", "III_flat", "conf_II", "conf_III",
            "K", "Ric", "W", "agree")


def _cell(v) -> str:
    return {True: "yes", False: "no", None: "-"}.get(v, str(v))


def cmd_corpus(args) -> int:
    root = Path(args.dir)
    if not root.is_dir():
        raise SpecError(f"{root} is not a directory")
    rows = ["\t".join(_COLUMNS)]
    status = EXIT_OK
    for path in sorted(root.glob("*.ini")):
        try:
            spec, _ = _load(str(path), _seed(args.seed))
            rep = analyze(to_chart(spec), diagnostics=False)
        except Exception as exc:  # listed per file, the run continues
            rows.append("\t".join([path.name, "ERROR", f"{type(exc).__name__}: {exc}"]))
            status = EXIT_PARSE
            continue
        fl = rep.flags
        cells = [path.name, spec.name, _cell(fl["radical_transverse"].value), _cell(fl["II_flat"].value),
                 _cell(fl["III_flat"].value), _cell(fl["conf_II_flat"].value),
                 _cell(fl["conf_III_flat"].value)]
        for name in ("K", "Ric", "W"):
            v = rep.verdicts.get(name)
            cells.append(f"{_cell(v.criteria)}/{_cell(v.laurent)}" if v else "-")
        cells.append(_cell(rep.all_agree))
        if not rep.all_agree:
            status = EXIT_PARSE
        rows.append("\t".join(cells))
    text = "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return status


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"sampling seed (default: ${SEED_ENV}, then the file's seed)")
    common.add_argument("--evidence", choices=("exact", "numeric", "both"), default="both",
                        help="which representation of computed values to emit")
    p = argparse.ArgumentParser(prog="typechange",
                                description="Analyze transverse type-changing metrics.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    a = sub.add_parser("analyze", parents=[common], help="classify a metric and decide extendibility")
    a.add_argument("file")
    a.add_argument("--json", metavar="OUT", help="write the report here instead of stdout")
    a.set_defaults(func=cmd_analyze)
    c = sub.add_parser("conformal", parents=[common], help="check conformal transformation laws")
    c.add_argument("file")
    c.add_argument("--factor", required=True, help="conformal exponent f in e^(2f) g")
    c.add_argument("--json", metavar="OUT")
    c.set_defaults(func=cmd_conformal)
    k = sub.add_parser("corpus", parents=[common], help="summary table over a directory of specs")
    k.add_argument("dir")
    k.add_argument("--out", metavar="TSV")
    k.set_defaults(func=cmd_corpus)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, ex.ParseError, WarpedError, OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (PreconditionError, GeometryError, ex.ExprError) as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())

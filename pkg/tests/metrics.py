"""Metric builders shared by the test modules."""

import sympy

from typechange.geometry import MetricChart
from typechange.warped import WarpedSpec, make_warped

X = sympy.symbols("x1:6")
Y = sympy.symbols("y1:4")
T = sympy.Symbol("t")


def chart(components, m=4, coords=None, **kw):
    coords = tuple(coords or X[:m])
    return MetricChart.from_components(coords, components, **kw)


def diag(entries, coords=None, **kw):
    coords = tuple(coords or X[: len(entries)])
    return chart({(i, i): e for i, e in enumerate(entries)}, coords=coords, **kw)


def model(m=4):
    """sum (dx^i)^2 + x^m (dx^m)^2"""
    return diag([1] * (m - 1) + [X[m - 1]])


def tangent_model(m=4):
    """sum (dx^i)^2 + x^1 (dx^m)^2 with Σ = {x^1 = 0}"""
    return diag([1] * (m - 1) + [X[0]], tau_index=0)


def perturbed():
    x1, x2, x3, x4 = X[:4]
    return diag([1 + x4, 1, 1, x4])


def conformal_II_only():
    x4 = X[3]
    return diag([1 - 2 * x4] * 3 + [x4])


def conformal_III_only():
    x4 = X[3]
    return diag([1 + x4**2] * 3 + [x4])


def base_flat():
    return diag([1, 1, 1], coords=Y, tau_index=None)


def base_sphere():
    r2 = sum(y**2 for y in Y)
    c = 4 / (1 + r2) ** 2
    return diag([c, c, c], coords=Y, tau_index=None)


def base_s2xr():
    y1, y2, _ = Y
    c = 4 / (1 + y1**2 + y2**2) ** 2
    return diag([c, c, 1], coords=Y, tau_index=None)


def base_generic3():
    """non-conformally-flat 3-metric (nonzero Cotton tensor)"""
    y1, y2, _ = Y
    return diag([1, 1 + y1**2, 1 + y2**2], coords=Y, tau_index=None)


BASES = {"flat": base_flat, "sphere": base_sphere, "s2xr": base_s2xr}
WARPINGS = {"1": sympy.S.One, "1+t": 1 + T, "1+t^2": 1 + T**2}


def wspec(f, base="flat", **kw):
    b = BASES[base]() if isinstance(base, str) else base
    return WarpedSpec(b, sympy.sympify(f), T, **kw)


def warped(f, base="flat", **kw):
    return make_warped(wspec(f, base, **kw))


def shipped_metrics():
    """(name, chart) for every plain and warped metric used by the acceptance checks."""
    out = [("model", model()), ("model5", model(5)), ("tangent", tangent_model()),
           ("perturbed", perturbed()), ("conf_II_only", conformal_II_only()),
           ("conf_III_only", conformal_III_only())]
    for bname in BASES:
        for fname, f in WARPINGS.items():
            out.append((f"warped[{bname},{fname}]", warped(f, bname)))
    return out

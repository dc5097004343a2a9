"""Conformal rescaling ``ḡ = e^{2f} g`` and its effect on the forms along Σ.

``e^{2f}`` is kept as the opaque atom ``E2(f)`` so canonical forms stay
rational in it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy

from . import expr as ex
from .curvature import weyl
from .degeneracy import (PreconditionError, _box, _zero, is_conformally_II_flat,
                         is_conformally_III_flat, is_II_flat, is_III_flat, second_form, sigma_basis,
                         third_form)
from .geometry import MetricChart, apply_vector, build_adapted_frame

NUMERIC_POINTS = 10
REL_TOL = 1e-9


class ConformalError(ValueError):
    pass


class NonAlignedError(ConformalError):
    pass


class NonPolynomialError(ConformalError):
    pass


@dataclass(frozen=True)
class ConformalFactor:
    f: sympy.Expr

    @property
    def e2f(self) -> sympy.Expr:
        return ex.E2(self.f)


def rescale(M: MetricChart, f) -> MetricChart:
    """``e^{2f} g`` on the same chart with the same Σ."""
    f = sympy.sympify(f)
    if f == 0:
        return M
    w = ex.E2(f)
    g = M.g.applyfunc(lambda c: c * w if c != 0 else c)
    return M.with_metric(g, name=(M.name + "~") if M.name else "")


@dataclass(frozen=True)
class LawCheck:
    residuals: tuple
    max_abs: float
    evidence: str

    @property
    def ok(self) -> bool:
        return self.max_abs <= REL_TOL


def _check(M: MetricChart, residuals, scale_exprs, points) -> LawCheck:
    res = tuple(ex.canonicalize(r) for r in residuals)
    if all(r == 0 for r in res):
        return LawCheck(res, 0.0, "exact")
    worst = 0.0
    for r, s in zip(res, scale_exprs):
        if r == 0:
            continue
        for p in points:
            ref = max(1.0, abs(M.evaluate(s, p))) if s is not None else 1.0
            worst = max(worst, abs(M.evaluate(r, p)) / ref)
    return LawCheck(res, worst, "numeric")


def _setup(M: MetricChart, frame):
    frame = frame or build_adapted_frame(M)
    return frame, frame.radical, sigma_basis(M, frame)


def verify_II_law(M: MetricChart, f, frame=None) -> LawCheck:
    """Residual of ``II̅_Σ = e^{2f}(II_Σ − (Rf)|Σ g_Σ)`` with ``R`` fixed."""
    f = sympy.sympify(f)
    frame, R, basis = _setup(M, frame)
    N = rescale(M, f)
    sig = M.sigma
    Rf = ex.restrict_to_sigma(apply_vector(M, R, f), sig)
    e = ex.restrict_to_sigma(ex.E2(f), sig)
    vec = basis.vectors
    n = len(vec)
    res, scales = [], []
    for i in range(n):
        for j in range(i, n):
            bar = ex.restrict_to_sigma(_box(N, vec[i], vec[j], R), sig)
            old = ex.restrict_to_sigma(_box(M, vec[i], vec[j], R), sig)
            res.append(bar - e * (old - Rf * basis.g_sigma[i, j]))
            scales.append(bar)
    return _check(M, res, scales, M.samples_on_sigma(NUMERIC_POINTS))


@dataclass(frozen=True)
class Gradient:
    components: tuple
    extends: bool
    evidence: str


def grad_extended(M: MetricChart, f, frame=None) -> Gradient:
    """``grad f = Σ eps_i (E_i f) E_i + tau^{-1} (R f) R`` in coordinates."""
    f = sympy.sympify(f)
    frame = frame or build_adapted_frame(M)
    m = M.dim
    comps = [sympy.S.Zero] * m
    for v, s in zip(frame.vectors[:-1], frame.eps):
        d = apply_vector(M, v, f)
        if d != 0:
            comps = [c + s * d * vc for c, vc in zip(comps, v)]
    R = frame.radical
    Rf = ex.canonicalize(apply_vector(M, R, f))
    comps = [ex.canonicalize(c + Rf / M.tau * rc) for c, rc in zip(comps, R)]
    z, ev = _zero(M, ex.restrict_to_sigma(Rf, M.sigma))
    return Gradient(tuple(comps), z, ev)


def verify_III_law(M: MetricChart, f, frame=None) -> LawCheck:
    """Residual of ``III̅ = e^{2f}(III − II^R(grad f, R) g_Σ)``; both metrics II-flat."""
    f = sympy.sympify(f)
    frame, R, basis = _setup(M, frame)
    N = rescale(M, f)
    if not is_II_flat(M, R, frame):
        raise PreconditionError("III law needs g II-flat")
    Nframe = build_adapted_frame(N)
    if not is_II_flat(N, frame=Nframe):
        raise PreconditionError("III law needs the rescaled metric II-flat")
    grad = grad_extended(M, f, frame)
    if not grad.extends:
        raise PreconditionError("grad f does not extend across Σ")
    sig = M.sigma
    e = ex.restrict_to_sigma(ex.E2(f), sig)
    IIg = second_form(M, grad.components, R, R)
    vec = basis.vectors
    n = len(vec)
    res, scales = [], []
    for i in range(n):
        for j in range(i, n):
            bar = third_form(N, vec[i], vec[j], R)
            old = third_form(M, vec[i], vec[j], R)
            res.append(bar - e * (old - IIg * basis.g_sigma[i, j]))
            scales.append(bar)
    return _check(M, res, scales, M.samples_on_sigma(NUMERIC_POINTS))


@dataclass(frozen=True)
class WeylCheck:
    W: LawCheck
    W13: LawCheck
    identical: bool


def verify_weyl_invariance(M: MetricChart, f) -> WeylCheck:
    """``W̄ − e^{2f} W`` and ``𝒲̄ − 𝒲`` off Σ."""
    f = sympy.sympify(f)
    N = rescale(M, f)
    W, W13 = weyl(M)
    Wb, W13b = weyl(N)
    w = ex.E2(f)
    r1 = [Wb[i] - w * W[i] for i in np.ndindex(W.shape)]
    r2 = [W13b[i] - W13[i] for i in np.ndindex(W.shape)]
    pts = M.samples_off_sigma(NUMERIC_POINTS)
    c1 = _check(M, r1, list(Wb.reshape(-1)), pts)
    c2 = _check(M, r2, list(W13b.reshape(-1)), pts)
    identical = all(ex.canonicalize(W13b[i]) == ex.canonicalize(W13[i]) for i in np.ndindex(W.shape))
    return WeylCheck(c1, c2, identical)


# ---------------------------------------------------------------------------
# flattening factors


def _aligned(M: MetricChart, frame):
    if not frame.completely_adapted:
        raise NonAlignedError("frame is not completely adapted")
    R = frame.radical
    t = M.tau_index
    if any(not ex.is_zero(R[a]) for a in range(M.dim) if a != t):
        raise NonAlignedError("radical is not aligned with the tau coordinate")
    return R[t]


def _antiderivative(e, x) -> sympy.Expr:
    """Antiderivative in ``x`` vanishing at ``x = 0``; ``e`` must be polynomial in ``x``."""
    e = ex.canonicalize(e)
    if e == 0:
        return e
    num, den = sympy.fraction(e)
    if x in den.free_symbols:
        raise NonPolynomialError("integrand is not polynomial in the tau coordinate")
    try:
        p = sympy.Poly(num, x)
    except sympy.PolynomialError:
        raise NonPolynomialError("integrand is not polynomial in the tau coordinate") from None
    return ex.canonicalize(p.integrate().as_expr() / den)


def flatten_II(M: MetricChart) -> ConformalFactor:
    """``f`` with ``E_m f = k`` on Σ, making ``e^{2f} g`` II-flat."""
    frame = build_adapted_frame(M)
    lam = _aligned(M, frame)
    flag = is_conformally_II_flat(M, frame=frame)
    if not flag.value:
        raise ConformalError("metric is not conformally II-flat")
    if ex.is_zero(flag.k):
        return ConformalFactor(sympy.S.Zero)
    sig = M.sigma
    lam0 = ex.restrict_to_sigma(lam, sig)
    f = _antiderivative(flag.k / lam0, M.tau_coord)
    if not is_II_flat(rescale(M, f)):
        raise ConformalError("flattening factor failed its II-flat postcondition")
    return ConformalFactor(f)


def flatten_III(M: MetricChart) -> ConformalFactor:
    """``f`` with ``E_m f = tau k_1`` making an II-flat, conformally III-flat ``g`` III-flat."""
    frame = build_adapted_frame(M)
    lam = _aligned(M, frame)
    if not is_II_flat(M, frame=frame):
        raise ConformalError("flatten_III needs an II-flat metric")
    flag = is_conformally_III_flat(M, frame=frame)
    if not flag.value:
        raise ConformalError("metric is not conformally III-flat")
    if ex.is_zero(flag.k):
        return ConformalFactor(sympy.S.Zero)
    sig = M.sigma
    R = frame.radical
    IImm = second_form(M, R, R, R)
    k1 = ex.canonicalize(flag.k / IImm)
    lam0 = ex.restrict_to_sigma(lam, sig)
    unit0 = ex.restrict_to_sigma(M.tau_unit, sig)
    x = M.tau_coord
    f = _antiderivative(x * unit0 * k1 / lam0, x)
    if not is_III_flat(rescale(M, f)):
        raise ConformalError("flattening factor failed its III-flat postcondition")
    return ConformalFactor(f)

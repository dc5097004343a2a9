"""Warped products ``g = f(t)^2 g_S - t dt^2`` degenerating at ``t = 0``.

The chart puts ``t`` last and declares ``tau = -t`` so that
``g(∂_t, ∂_t) = tau``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import sympy
from scipy import integrate

from . import expr as ex
from .curvature import (CurvatureBundle, _zeros, kulkarni_nomizu, metric_array, ricci, riemann,
                        scalar, schouten, weyl)
from .geometry import MetricChart

SAMPLE_POINTS = 20
NUM_TOL = 1e-9
QUAD_TOL = 1e-10


class WarpedError(ValueError):
    pass


class PsiError(WarpedError):
    pass


@dataclass(frozen=True)
class WarpedSpec:
    """Base chart ``g_S`` (regular), warping function ``f`` of ``t`` and the t-interval."""

    base: MetricChart
    f: sympy.Expr
    t: sympy.Symbol = sympy.Symbol("t")
    functions: tuple = ()
    interval: tuple = (-0.5, 0.5)
    seed: int = 0
    name: str = ""

    @property
    def m(self) -> int:
        return self.base.dim + 1

    def f_realized(self) -> sympy.Expr:
        """``f`` with opaque functions replaced by their declared polynomial stand-ins."""
        vals = {}
        for d in self.functions:
            vals[d.name] = d.realization if d.realization is not None else sum(
                sympy.sympify(v) / sympy.factorial(k) * ex.S_DUMMY**k for k, v in enumerate(d.values))
        return ex.realize(self.f, vals) if vals else self.f


def _f_numeric(spec: WarpedSpec):
    fr = spec.f_realized()
    return sympy.lambdify(spec.t, fr, "math")


def make_warped(spec: WarpedSpec) -> MetricChart:
    if spec.m < 4:
        raise WarpedError("warped products need m >= 4 (the table divides by m - 3)")
    if spec.base.is_degenerate:
        raise WarpedError("base metric must be regular")
    t = spec.t
    if t in spec.base.coords:
        raise WarpedError("t must not be a base coordinate")
    fnum = _f_numeric(spec)
    if not fnum(0.0) > 0:
        raise WarpedError("warping function must satisfy f(0) > 0")
    lo, hi = spec.interval
    for s in np.linspace(lo, hi, 11):
        if not fnum(float(s)) > 0:
            raise WarpedError(f"warping function is not positive at t = {s:g}")
    for p in spec.base.samples_off_sigma(10):
        if np.linalg.eigvalsh(spec.base.numeric_metric(p)).min() <= 0:
            raise WarpedError("base metric is not positive definite at a sample")
    n = spec.base.dim
    g = sympy.zeros(n + 1, n + 1)
    f2 = spec.f**2
    for a in range(n):
        for b in range(n):
            if spec.base.g[a, b] != 0:
                g[a, b] = ex.canonicalize(f2 * spec.base.g[a, b])
    g[n, n] = -t
    return MetricChart(tuple(spec.base.coords) + (t,), sympy.ImmutableMatrix(g), tau_index=n,
                       tau_unit=-1, functions=tuple(spec.functions),
                       box=tuple(spec.base.box) + (tuple(spec.interval),), seed=spec.seed,
                       name=spec.name)


# ---------------------------------------------------------------------------
# closed-form curvature


def _lift2(A, m):
    out = _zeros(m, m)
    n = m - 1
    for a in range(n):
        for b in range(n):
            out[a, b] = A[a, b]
    return out


def _lift4(A, m):
    out = _zeros(m, m, m, m)
    for idx in itertools.product(range(m - 1), repeat=4):
        out[idx] = A[idx]
    return out


def _canon(arr):
    out = np.empty(arr.shape, dtype=object)
    for i in np.ndindex(arr.shape):
        out[i] = ex.canonicalize(arr[i])
    return out


@dataclass(frozen=True)
class BaseCurvature:
    K: np.ndarray
    Ric: np.ndarray
    Sc: sympy.Expr
    h: np.ndarray
    W: np.ndarray
    g: np.ndarray


def base_curvature(base: MetricChart) -> BaseCurvature:
    n = base.dim
    W = weyl(base)[0] if n >= 4 else _zeros(n, n, n, n)
    return BaseCurvature(riemann(base), ricci(base), scalar(base), schouten(base), W,
                         metric_array(base))


def closed_form_table(spec: WarpedSpec) -> CurvatureBundle:
    """K, Ric, Sc, h and W assembled from the base curvature and ``f``."""
    m = spec.m
    if m < 4:
        raise WarpedError("m = 3 is excluded")
    t, f = spec.t, spec.f
    fp, fpp = sympy.diff(f, t), sympy.diff(f, t, 2)
    B = base_curvature(spec.base)
    gS = _lift2(B.g, m)
    dt2 = _zeros(m, m)
    dt2[m - 1, m - 1] = sympy.S.One
    A = fp / t - 2 * fpp
    K = (f**2 * _lift4(B.K, m) + (fp**2 * f**2 / (2 * t)) * kulkarni_nomizu(gS, gS)
         + (f / 2) * A * kulkarni_nomizu(gS, dt2))
    Ric = (_lift2(B.Ric, m) - (f / (2 * t) * A - (m - 2) * fp**2 / t) * gS
           + (m - 1) / (2 * f) * A * dt2)
    Sc = B.Sc / f**2 - (m - 1) / f**2 * (f / t * A - (m - 2) * fp**2 / t)
    h = (sympy.Rational(m - 3, m - 2) * _lift2(B.h, m)
         + (B.Sc / (2 * (m - 2)**2 * (m - 1)) + fp**2 / (2 * t)) * gS
         + (t * B.Sc / (2 * (m - 1) * (m - 2) * f**2) + (fp**2 / f + fp / t - 2 * fpp) / (2 * f)) * dt2)
    traceless = _lift2(B.Ric - B.Sc / (m - 1) * B.g, m)
    W = (f**2 * _lift4(B.W, m)
         + kulkarni_nomizu(traceless, f**2 / (m - 3) * gS + t * dt2) / (m - 2))
    return CurvatureBundle(_canon(K), _canon(Ric), ex.canonicalize(Sc), _canon(h), _canon(W), None, {})


@dataclass(frozen=True)
class CrossCheck:
    mismatches: dict  # name -> list of (index, residual)
    max_abs: dict
    evidence: str

    @property
    def ok(self) -> bool:
        return all(v <= NUM_TOL for v in self.max_abs.values())


def cross_validate(spec: WarpedSpec) -> CrossCheck:
    """Closed-form table minus the generic engine, per tensor."""
    M = make_warped(spec)
    tab = closed_form_table(spec)
    eng = {"K": riemann(M), "Ric": ricci(M), "Sc": np.array(scalar(M), dtype=object),
           "h": schouten(M), "W": weyl(M)[0]}
    tabd = {"K": tab.K, "Ric": tab.Ric, "Sc": np.array(tab.Sc, dtype=object), "h": tab.h, "W": tab.W}
    mism, worst = {}, {}
    pts = M.samples_off_sigma(SAMPLE_POINTS)
    evidence = "exact"
    for name in ("K", "Ric", "Sc", "h", "W"):
        a, b = tabd[name], eng[name]
        bad = []
        for i in np.ndindex(a.shape):
            r = ex.canonicalize(a[i] - b[i])
            if r != 0:
                bad.append((i, r))
        mism[name] = bad
        if not bad:
            worst[name] = 0.0
            continue
        evidence = "numeric"
        worst[name] = max(abs(M.evaluate(r, p)) for _, r in bad for p in pts)
    return CrossCheck(mism, worst, evidence)


# ---------------------------------------------------------------------------
# extendibility lemma


def _derivative_at_zero(spec: WarpedSpec, k: int) -> sympy.Expr:
    M_sigma = ex.Hypersurface(spec.t, -spec.t, tuple(spec.functions))
    return ex.canonicalize(ex.at_zero(sympy.diff(spec.f, spec.t, k), M_sigma))


@dataclass(frozen=True)
class WarpedVerdicts:
    f0: sympy.Expr
    fp0: sympy.Expr
    fpp0: sympy.Expr
    fp_over_t0: sympy.Expr | None  # None: undefined (f'(0) != 0)
    K: bool
    h: bool
    Ric: bool
    Sc: bool
    W: bool


def warped_extendibility(spec: WarpedSpec) -> WarpedVerdicts:
    """K, h extend iff ``f'(0) = 0``; Ric, Sc iff also ``f''(0) = 0``; W always."""
    f0, fp0, fpp0 = (_derivative_at_zero(spec, k) for k in range(3))
    for v in (fp0, fpp0):
        if not v.is_number:
            raise WarpedError(f"derivative value {v} is not declared")
    k_ok = fp0 == 0
    ratio = fpp0 if k_ok else None
    r_ok = k_ok and fpp0 == 0
    return WarpedVerdicts(f0, fp0, fpp0, ratio, k_ok, k_ok, r_ok, r_ok, True)


# ---------------------------------------------------------------------------
# the Ψ reparametrization


def psi_map(spec: WarpedSpec, t: float) -> float:
    """``T = ∫_0^t |s|^{1/2} / f(s) ds``."""
    t = float(t)
    if t == 0.0:
        raise ValueError("psi_map is evaluated off Σ (t != 0)")
    fnum = _f_numeric(spec)
    val, err = integrate.quad(lambda s: math.sqrt(abs(s)) / fnum(s), 0.0, t,
                              epsabs=1e-13, epsrel=1e-13, limit=200)
    if not err <= QUAD_TOL:
        raise PsiError(f"quadrature error estimate {err:g} exceeds {QUAD_TOL:g}")
    return val


def _psi_prime(spec: WarpedSpec, t: float, h: float = 1e-5) -> float:
    fnum = _f_numeric(spec)
    val, _ = integrate.quad(lambda s: math.sqrt(abs(s)) / fnum(s), t - h, t + h,
                            epsabs=1e-15, epsrel=1e-13)
    return val / (2 * h)


@dataclass(frozen=True)
class PsiCheck:
    lorentz: float  # t > 0 against -dT^2 + g_S
    riemann: float  # t < 0 against +dT^2 + g_S
    single_sign: float  # t < 0 against -dT^2 + g_S (the one-sign reading)

    @property
    def ok(self) -> bool:
        return self.lorentz <= NUM_TOL and self.riemann <= NUM_TOL


def verify_psi_conformality(spec: WarpedSpec, n: int = 10) -> PsiCheck:
    """Compare ``Ψ^*ḡ`` with ``f^{-2} g`` at sample points on each side of Σ."""
    M = make_warped(spec)
    fnum = _f_numeric(spec)
    lo, hi = spec.interval
    nb = spec.base.dim
    base_pts = spec.base.samples_off_sigma(n)
    worst = {"+": 0.0, "-": 0.0, "one": 0.0}
    for k, bp in enumerate(base_pts):
        for side in (1, -1):
            edge = hi if side > 0 else -lo
            t = side * edge * (0.1 + 0.8 * (k + 0.5) / n)
            p = dict(bp)
            p[spec.t] = t
            G = M.numeric_metric(p) / fnum(t) ** 2
            d = _psi_prime(spec, t)
            S = spec.base.numeric_metric(bp)
            pull = np.zeros((nb + 1, nb + 1))
            pull[:nb, :nb] = S
            pull[nb, nb] = -d * d if side > 0 else d * d
            r = float(np.abs(pull - G).max())
            worst["+" if side > 0 else "-"] = max(worst["+" if side > 0 else "-"], r)
            if side < 0:
                pull[nb, nb] = -d * d
                worst["one"] = max(worst["one"], float(np.abs(pull - G).max()))
    return PsiCheck(worst["+"], worst["-"], worst["one"])


# ---------------------------------------------------------------------------
# W = 0 conditions on the base


@dataclass(frozen=True)
class WeylZeroConditions:
    W_zero: bool
    base_conformally_einstein: bool  # W^S = 0 and traceless Ric^S = 0
    constant_curvature: bool
    C: sympy.Expr | None

    @property
    def consistent(self) -> bool:
        return self.W_zero == self.base_conformally_einstein == self.constant_curvature


def weyl_zero_conditions(spec: WarpedSpec) -> WeylZeroConditions:
    m = spec.m
    tab = closed_form_table(spec)
    w_zero = all(ex.canonicalize(v) == 0 for v in tab.W.reshape(-1))
    B = base_curvature(spec.base)
    traceless = B.Ric - B.Sc / (m - 1) * B.g
    cond2 = (all(ex.canonicalize(v) == 0 for v in traceless.reshape(-1))
             and all(ex.canonicalize(v) == 0 for v in B.W.reshape(-1)))
    gg = kulkarni_nomizu(B.g, B.g)
    idx = next(i for i in np.ndindex(gg.shape) if gg[i] != 0)
    C = ex.canonicalize(2 * B.K[idx] / gg[idx])
    const = (not (C.free_symbols & set(spec.base.coords))
             and all(ex.canonicalize(B.K[i] - C / 2 * gg[i]) == 0 for i in np.ndindex(gg.shape)))
    return WeylZeroConditions(w_zero, cond2, bool(const), C if const else None)


# ---------------------------------------------------------------------------
# normal form


@dataclass(frozen=True)
class NormalForm:
    chart: MetricChart
    tau: sympy.Expr
    factor: sympy.Expr
    residuals: list = field(default_factory=list)
    dtau_at_sigma: sympy.Expr = sympy.S.Zero

    @property
    def ok(self) -> bool:
        return not self.residuals


def warped_normal_form(spec: WarpedSpec, isothermal_h) -> NormalForm:
    """Coordinates with ``g = e^{2h} f^2 (Σ (dx^i)^2 + tau (dx^m)^2)``.

    ``h`` is the isothermal factor of the base, ``g_S = e^{2h} Σ (dy^i)^2``,
    with the base coordinates taken as the ``y^i``.
    """
    if not weyl_zero_conditions(spec).W_zero:
        raise WarpedError("normal form requires W = 0")
    h = sympy.sympify(isothermal_h)
    e2h = sympy.exp(2 * h)
    base = spec.base
    n = base.dim
    iso = [ex.canonicalize(base.g[a, b] - (e2h if a == b else 0)) for a in range(n) for b in range(n)]
    if any(r != 0 for r in iso):
        raise WarpedError("supplied coordinates are not isothermal for the base metric")
    M = make_warped(spec)
    t = spec.t
    tau = ex.canonicalize(-t / (e2h * spec.f**2))
    factor = ex.canonicalize(e2h * spec.f**2)
    flat = sympy.eye(n + 1)
    flat[n, n] = tau
    res = []
    for a in range(n + 1):
        for b in range(n + 1):
            r = ex.canonicalize(M.g[a, b] - factor * flat[a, b])
            if r != 0:
                res.append(((a, b), r))
    d0 = ex.canonicalize(sympy.diff(tau, t).subs(t, 0))
    if d0 == 0:
        res.append(("dtau", d0))
    normal = MetricChart(M.coords, sympy.ImmutableMatrix(flat), tau_index=n,
                         tau_unit=ex.canonicalize(tau / t), functions=M.functions, box=M.box,
                         seed=M.seed, name=(spec.name + ":normal") if spec.name else "")
    return NormalForm(normal, tau, factor, res, d0)

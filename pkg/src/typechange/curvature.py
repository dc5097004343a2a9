"""Connection and curvature in coordinates.

Sign convention: ``K(X, Y, Z, T) = g(R(X, Y)T, Z)`` with
``R(X, Y) = [∇_X, ∇_Y] - ∇_[X,Y]``, so that ``K(x, y, x, y) > 0`` on the
round sphere.  This is the convention under which the warped-product table
(``closed_form_table``) agrees with the generic engine.

Arrays are numpy object arrays of canonical sympy expressions.  Results are
cached per chart and must be treated as read-only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy

from . import expr as ex
from .geometry import GeometryError, MetricChart

_CACHE = 256


def _zeros(*shape) -> np.ndarray:
    out = np.empty(shape, dtype=object)
    out.fill(sympy.S.Zero)
    return out


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class _Engine:
    """Curvature stack of one chart computed in a differential fraction field."""

    def __init__(self, M: MetricChart):
        self.M = M
        m = self.m = M.dim
        self.F = ex.DiffField(M.coords, [M.g[a, b] for a in range(m) for b in range(m)])
        F = self.F
        self.g = [[F.convert(M.g[a, b]) for b in range(m)] for a in range(m)]
        self._cache = {}

    def get(self, name):
        if name not in self._cache:
            self._cache[name] = getattr(self, "_" + name)()
        return self._cache[name]

    def _ginv(self):
        m = self.m
        F = self.F.field
        A = [row[:] + [F.one if i == j else F.zero for j in range(m)] for i, row in enumerate(self.g)]
        for col in range(m):
            piv = next((r for r in range(col, m) if A[r][col]), None)
            if piv is None:
                raise GeometryError("metric is identically degenerate")
            A[col], A[piv] = A[piv], A[col]
            inv = 1 / A[col][col]
            A[col] = [v * inv for v in A[col]]
            for r in range(m):
                if r != col and A[r][col]:
                    fac = A[r][col]
                    A[r] = [v - fac * w for v, w in zip(A[r], A[col])]
        return [row[m:] for row in A]

    def _first(self):
        m, F, g = self.m, self.F, self.g
        dg = [[[F.diff(g[b][c], a) for c in range(m)] for b in range(m)] for a in range(m)]
        out = [[[None] * m for _ in range(m)] for _ in range(m)]
        for a in range(m):
            for b in range(a, m):
                for c in range(m):
                    out[a][b][c] = out[b][a][c] = (dg[a][b][c] + dg[b][a][c] - dg[c][a][b]) / 2
        return out

    def _second(self):
        m = self.m
        ginv, first = self.get("ginv"), self.get("first")
        zero = self.F.field.zero
        out = [[[None] * m for _ in range(m)] for _ in range(m)]
        for a in range(m):
            for b in range(a, m):
                for c in range(m):
                    val = zero
                    for d in range(m):
                        if ginv[c][d] and first[a][b][d]:
                            val += ginv[c][d] * first[a][b][d]
                    out[c][a][b] = out[c][b][a] = val
        return out

    def _K(self):
        m, F = self.m, self.F
        first, second = self.get("first"), self.get("second")
        out = {}

        def g_r(a, b, c, d):
            # g(R(∂a,∂b)∂c, ∂d)
            val = F.diff(first[b][c][d], a) - F.diff(first[a][c][d], b)
            for e in range(m):
                if second[e][b][c] and first[a][d][e]:
                    val -= second[e][b][c] * first[a][d][e]
                if second[e][a][c] and first[b][d][e]:
                    val += second[e][a][c] * first[b][d][e]
            return val

        pairs = _pairs(m)
        for i, (a, b) in enumerate(pairs):
            for c, d in pairs[i:]:
                val = g_r(a, b, d, c)
                if not val:
                    continue
                for (p, q, s1) in ((a, b, 1), (b, a, -1)):
                    for (r, t, s2) in ((c, d, 1), (d, c, -1)):
                        out[p, q, r, t] = val * (s1 * s2)
                        out[r, t, p, q] = val * (s1 * s2)
        return out

    def _Ric(self):
        m = self.m
        K, ginv = self.get("K"), self.get("ginv")
        zero = self.F.field.zero
        out = [[zero] * m for _ in range(m)]
        for b in range(m):
            for d in range(b, m):
                val = zero
                for a in range(m):
                    for c in range(m):
                        k = K.get((a, b, c, d))
                        if k is not None and ginv[a][c]:
                            val += ginv[a][c] * k
                out[b][d] = out[d][b] = val
        return out

    def _Sc(self):
        m = self.m
        ric, ginv = self.get("Ric"), self.get("ginv")
        val = self.F.field.zero
        for a in range(m):
            for b in range(m):
                if ginv[a][b] and ric[a][b]:
                    val += ginv[a][b] * ric[a][b]
        return val

    def _h(self):
        m = self.m
        if m < 3:
            raise GeometryError("Schouten tensor needs m >= 3")
        ric, sc, g = self.get("Ric"), self.get("Sc"), self.g
        return [[(ric[a][b] - sc * g[a][b] / (2 * (m - 1))) / (m - 2) for b in range(m)] for a in range(m)]

    def _W(self):
        m = self.m
        K, h, g = self.get("K"), self.get("h"), self.g
        out = {}
        for x, y, z, t in itertools.product(range(m), repeat=4):
            if x == y or z == t:
                continue
            val = K.get((x, y, z, t), self.F.field.zero) - (
                h[x][z] * g[y][t] - g[x][t] * h[y][z] + g[x][z] * h[y][t] - h[x][t] * g[y][z])
            if val:
                out[x, y, z, t] = val
        return out

    def _W13(self):
        m = self.m
        W, ginv = self.get("W"), self.get("ginv")
        out = {}
        for a, b, c, d in itertools.product(range(m), repeat=4):
            val = self.F.field.zero
            for e in range(m):
                w = W.get((a, e, c, d))
                if w is not None and ginv[b][e]:
                    val += ginv[b][e] * w
            if val:
                out[a, b, c, d] = val
        return out

    # conversions back to sympy arrays
    def array(self, name, shape):
        data = self.get(name)
        out = _zeros(*shape)
        to = self.F.to_expr
        if isinstance(data, dict):
            for idx, v in data.items():
                out[idx] = to(v)
        elif len(shape) == 2:
            for a in range(shape[0]):
                for b in range(shape[1]):
                    out[a, b] = to(data[a][b])
        else:
            for idx in itertools.product(*(range(n) for n in shape)):
                v = data[idx[0]]
                for i in idx[1:]:
                    v = v[i]
                out[idx] = to(v)
        return _freeze(out)


@lru_cache(maxsize=_CACHE)
def _engine(M: MetricChart) -> _Engine:
    return _Engine(M)


@lru_cache(maxsize=_CACHE)
def inverse_metric(M: MetricChart) -> np.ndarray:
    """``g^{ab}``; carries the 1/tau poles explicitly."""
    return _engine(M).array("ginv", (M.dim, M.dim))


@lru_cache(maxsize=_CACHE)
def dual_connection(M: MetricChart) -> np.ndarray:
    """``Γ_{ab,c} = ½(∂_a g_bc + ∂_b g_ac − ∂_c g_ab)``; smooth on all of M."""
    return _engine(M).array("first", (M.dim,) * 3)


@lru_cache(maxsize=_CACHE)
def christoffel(M: MetricChart) -> np.ndarray:
    """``Γ^c_{ab}`` stored as ``out[c, a, b]``; valid off Σ."""
    return _engine(M).array("second", (M.dim,) * 3)


def _pairs(m):
    return [(a, b) for a in range(m) for b in range(a + 1, m)]


@lru_cache(maxsize=_CACHE)
def riemann(M: MetricChart) -> np.ndarray:
    """Covariant curvature ``K_abcd``."""
    return _engine(M).array("K", (M.dim,) * 4)


def contract_first_third(T: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """``S_bd = g^{ac} T_abcd``."""
    m = T.shape[0]
    out = _zeros(m, m)
    for b in range(m):
        for d in range(b, m):
            val = sum((ginv[a, c] * T[a, b, c, d] for a in range(m) for c in range(m)
                       if ginv[a, c] != 0 and T[a, b, c, d] != 0), sympy.S.Zero)
            out[b, d] = out[d, b] = ex.canonicalize(val)
    return out


@lru_cache(maxsize=_CACHE)
def ricci(M: MetricChart) -> np.ndarray:
    """``Ric_bd = g^{ac} K_abcd``."""
    return _engine(M).array("Ric", (M.dim, M.dim))


def trace(S: np.ndarray, ginv: np.ndarray) -> sympy.Expr:
    m = S.shape[0]
    return ex.canonicalize(sum((ginv[a, b] * S[a, b] for a in range(m) for b in range(m)
                                if ginv[a, b] != 0 and S[a, b] != 0), sympy.S.Zero))


@lru_cache(maxsize=_CACHE)
def scalar(M: MetricChart) -> sympy.Expr:
    return _engine(M).F.to_expr(_engine(M).get("Sc"))


def metric_array(M: MetricChart) -> np.ndarray:
    m = M.dim
    out = _zeros(m, m)
    for a in range(m):
        for b in range(m):
            out[a, b] = M.g[a, b]
    return out


@lru_cache(maxsize=_CACHE)
def schouten(M: MetricChart) -> np.ndarray:
    """``h = (Ric − Sc/(2(m−1)) g)/(m−2)``."""
    if M.dim < 3:
        raise GeometryError("Schouten tensor needs m >= 3")
    return _engine(M).array("h", (M.dim, M.dim))


def kulkarni_nomizu(theta: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """``θ•ω(x,y,z,t) = θ(x,z)ω(y,t) − ω(x,t)θ(y,z) + ω(x,z)θ(y,t) − θ(x,t)ω(y,z)``."""
    theta = np.asarray(theta, dtype=object)
    omega = np.asarray(omega, dtype=object)
    m = theta.shape[0]
    for T in (theta, omega):
        for a, b in itertools.combinations(range(m), 2):
            if not ex.is_zero(T[a, b] - T[b, a]):
                raise ValueError("Kulkarni-Nomizu product needs symmetric arguments")
    out = _zeros(m, m, m, m)
    for x, y, z, t in itertools.product(range(m), repeat=4):
        if x == y or z == t:
            continue
        val = (theta[x, z] * omega[y, t] - omega[x, t] * theta[y, z]
               + omega[x, z] * theta[y, t] - theta[x, t] * omega[y, z])
        if val != 0:
            out[x, y, z, t] = ex.canonicalize(val)
    return out


@lru_cache(maxsize=_CACHE)
def weyl(M: MetricChart) -> tuple[np.ndarray, np.ndarray]:
    """``W = K − h•g`` and its (1,3) form with the second slot raised."""
    if M.dim < 4:
        raise GeometryError("Weyl tensor is only used for m >= 4")
    eng = _engine(M)
    shape = (M.dim,) * 4
    return eng.array("W", shape), eng.array("W13", shape)


def raise_second(W: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """``(↑₂¹W)[a, b, c, d] = g^{be} W_aecd``."""
    m = W.shape[0]
    out = _zeros(m, m, m, m)
    for a, b, c, d in itertools.product(range(m), repeat=4):
        val = sum((ginv[b, e] * W[a, e, c, d] for e in range(m)
                   if ginv[b, e] != 0 and W[a, e, c, d] != 0), sympy.S.Zero)
        if val != 0:
            out[a, b, c, d] = ex.canonicalize(val)
    return out


def frame_components(T: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """Components ``T(E_a, E_b, ...)`` for a frame given as rows of ``frame``."""
    out = np.asarray(T, dtype=object)
    rank = out.ndim
    m = frame.shape[0]
    for axis in range(rank):
        moved = np.moveaxis(out, axis, 0)
        new = _zeros(*moved.shape)
        for a in range(m):
            acc = None
            for p in range(m):
                c = frame[a, p]
                if c == 0:
                    continue
                term = moved[p] * c
                acc = term if acc is None else acc + term
            if acc is not None:
                new[a] = acc
        out = np.moveaxis(new, 0, axis)
    flat = out.reshape(-1)
    res = np.empty(flat.shape, dtype=object)
    for i, v in enumerate(flat):
        res[i] = ex.canonicalize(v) if v != 0 else sympy.S.Zero
    return res.reshape(out.shape)


@dataclass(frozen=True)
class CurvatureBundle:
    """All curvature data of one chart, with tau-pole orders when degenerate."""

    K: np.ndarray
    Ric: np.ndarray
    Sc: sympy.Expr
    h: np.ndarray
    W: np.ndarray | None
    W13: np.ndarray | None
    pole_orders: dict

    def pole_order(self, name: str) -> int | None:
        return self.pole_orders.get(name)


def _max_pole(arr, sigma) -> int:
    vals = np.asarray(arr, dtype=object).reshape(-1)
    best = 0
    seen = set()
    for v in vals:
        if v == 0 or v in seen:
            continue
        seen.add(v)
        best = max(best, ex.pole_order(v, sigma))
    return best


def curvature_bundle(M: MetricChart, with_poles: bool = True) -> CurvatureBundle:
    W = W13 = None
    if M.dim >= 4:
        W, W13 = weyl(M)
    poles = {}
    if with_poles and M.is_degenerate:
        sigma = M.sigma
        poles = {"K": _max_pole(riemann(M), sigma), "Ric": _max_pole(ricci(M), sigma),
                 "Sc": _max_pole([scalar(M)], sigma), "h": _max_pole(schouten(M), sigma)}
        if W is not None:
            poles["W"] = _max_pole(W, sigma)
    return CurvatureBundle(riemann(M), ricci(M), scalar(M), schouten(M) if M.dim >= 3 else None,
                           W, W13, poles)


def covariant_derivative_2(M: MetricChart, S: np.ndarray) -> np.ndarray:
    """``(∇_a S)_{bc}`` for a symmetric (0,2) tensor, stored as ``out[a, b, c]``."""
    m = M.dim
    gam = christoffel(M)
    out = _zeros(m, m, m)
    for a, b, c in itertools.product(range(m), repeat=3):
        val = sympy.diff(S[b, c], M.coords[a])
        for e in range(m):
            if gam[e, a, b] != 0 and S[e, c] != 0:
                val -= gam[e, a, b] * S[e, c]
            if gam[e, a, c] != 0 and S[b, e] != 0:
                val -= gam[e, a, c] * S[b, e]
        out[a, b, c] = ex.canonicalize(val)
    return out


def cotton(M: MetricChart) -> np.ndarray:
    """``∇_a h_bc − ∇_b h_ac``; vanishes iff a 3-metric is conformally flat."""
    dh = covariant_derivative_2(M, schouten(M))
    m = M.dim
    out = _zeros(m, m, m)
    for a, b, c in itertools.product(range(m), repeat=3):
        out[a, b, c] = ex.canonicalize(dh[a, b, c] - dh[b, a, c])
    return out

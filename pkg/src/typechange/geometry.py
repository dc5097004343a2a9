"""Charts, metrics and frames around the degeneracy hypersurface."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import sympy
from scipy.stats import qmc

from . import expr as ex
from .expr import Hypersurface, ScalarExpr

SIGMA_SAMPLES = 20
DEFAULT_BOX = (-0.5, 0.5)


class GeometryError(ValueError):
    pass


class SigmaMismatchError(GeometryError):
    """det(g) is not divisible by the declared tau."""


class RadicalError(GeometryError):
    pass


class FrameError(GeometryError):
    pass


@dataclass(frozen=True)
class MetricChart:
    """Single chart with symmetric metric components and a designated tau.

    ``tau_index`` selects the coordinate ``x`` with ``Σ = {x = 0}`` and
    ``tau = tau_unit * x``.  ``tau_index=None`` marks a regular metric
    (used for the induced geometry of Σ and for base manifolds).
    """

    coords: tuple
    g: sympy.ImmutableMatrix
    tau_index: int | None = -1
    tau_unit: ScalarExpr = sympy.S.One
    functions: tuple = ()
    box: tuple = ()
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        m = len(self.coords)
        if self.g.shape != (m, m):
            raise GeometryError(f"metric must be {m}x{m}")
        if m < 2:
            raise GeometryError("dimension must be at least 2")
        for a in range(m):
            for b in range(a + 1, m):
                if not ex.is_zero(self.g[a, b] - self.g[b, a]):
                    raise GeometryError(f"metric not symmetric at ({a},{b})")
        if self.tau_index is not None and self.tau_index < 0:
            object.__setattr__(self, "tau_index", m + self.tau_index)
        if not self.box:
            object.__setattr__(self, "box", tuple(DEFAULT_BOX for _ in range(m)))
        object.__setattr__(self, "tau_unit", sympy.sympify(self.tau_unit))

    @classmethod
    def from_components(cls, coords: Sequence, components: Mapping, **kw) -> "MetricChart":
        """Build from ``{(a, b): expr}`` (upper or lower triangle; zeros omitted)."""
        coords = tuple(coords)
        index = {c: i for i, c in enumerate(coords)}
        index.update({str(c): i for i, c in enumerate(coords)})
        m = len(coords)
        mat = sympy.zeros(m, m)
        for (a, b), val in components.items():
            i = index.get(a, a)
            j = index.get(b, b)
            mat[i, j] = mat[j, i] = sympy.sympify(val)
        return cls(coords=coords, g=sympy.ImmutableMatrix(mat), **kw)

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def is_degenerate(self) -> bool:
        return self.tau_index is not None

    @property
    def tau_coord(self) -> sympy.Symbol:
        return self.coords[self.tau_index]

    @property
    def tau(self) -> ScalarExpr:
        return self.tau_unit * self.tau_coord

    @property
    def sigma(self) -> Hypersurface:
        if not self.is_degenerate:
            raise GeometryError("regular metric has no degeneracy hypersurface")
        return Hypersurface(self.tau_coord, self.tau, tuple(self.functions))

    def component(self, a: int, b: int) -> ScalarExpr:
        return self.g[a, b]

    def with_metric(self, g, **kw) -> "MetricChart":
        params = dict(coords=self.coords, g=sympy.ImmutableMatrix(g), tau_index=self.tau_index,
                      tau_unit=self.tau_unit, functions=self.functions, box=self.box,
                      seed=self.seed, name=self.name)
        params.update(kw)
        return MetricChart(**params)

    # -- numeric evidence -------------------------------------------------

    def realizations(self) -> dict:
        """Deterministic polynomial valuations for the declared opaque functions."""
        out = {}
        for d in self.functions:
            if d.realization is not None:
                out[d.name] = d.realization
            else:
                out[d.name] = sum(sympy.sympify(v) / sympy.factorial(k) * ex.S_DUMMY**k
                                  for k, v in enumerate(d.values)) if d.values else sympy.S.One
        return out

    def _halton(self, n: int, salt: int) -> np.ndarray:
        sampler = qmc.Halton(d=self.dim, scramble=True, seed=self.seed + salt)
        unit = sampler.random(n)
        lo = np.array([b[0] for b in self.box], dtype=float)
        hi = np.array([b[1] for b in self.box], dtype=float)
        return lo + unit * (hi - lo)

    def samples_on_sigma(self, n: int = SIGMA_SAMPLES) -> list[dict]:
        pts = self._halton(n, 0)
        pts[:, self.tau_index] = 0.0
        return [dict(zip(self.coords, map(float, p))) for p in pts]

    def samples_off_sigma(self, n: int = 10, margin: float = 0.05) -> list[dict]:
        """Points with ``|x_tau| >= margin``, alternating sides of Σ."""
        pts = self._halton(n, 1)
        if self.is_degenerate:
            lo, hi = self.box[self.tau_index]
            for k, p in enumerate(pts):
                side_hi = hi if k % 2 == 0 else -lo
                mag = margin + (abs(p[self.tau_index]) % 1.0) * max(side_hi - margin, 0.0) * 0.9
                p[self.tau_index] = mag if k % 2 == 0 else -mag
        return [dict(zip(self.coords, map(float, p))) for p in pts]

    def evaluate(self, e, point: Mapping) -> float:
        return ex.evaluate(e, point, self.realizations())

    def numeric_metric(self, point: Mapping) -> np.ndarray:
        m = self.dim
        out = np.empty((m, m))
        for a in range(m):
            for b in range(m):
                out[a, b] = self.evaluate(self.g[a, b], point)
        return out


# ---------------------------------------------------------------------------
# vector fields


def apply_vector(M: MetricChart, X: Sequence, e) -> ScalarExpr:
    """Directional derivative ``X(e)``."""
    return sum((X[a] * sympy.diff(e, M.coords[a]) for a in range(M.dim) if X[a] != 0), sympy.S.Zero)


def metric_pair(M: MetricChart, X: Sequence, Y: Sequence) -> ScalarExpr:
    m = M.dim
    total = sympy.S.Zero
    for a in range(m):
        if X[a] == 0:
            continue
        for b in range(m):
            if Y[b] != 0 and M.g[a, b] != 0:
                total += X[a] * M.g[a, b] * Y[b]
    return ex.canonicalize(total)


def coordinate_field(M: MetricChart, a: int) -> tuple:
    return tuple(sympy.S.One if b == a else sympy.S.Zero for b in range(M.dim))


def _nonzero_on_samples(M: MetricChart, e, points) -> list[bool]:
    out = []
    for p in points:
        try:
            out.append(abs(M.evaluate(e, p)) > ex.ZERO_TOL)
        except ex.EvaluationError:
            out.append(False)
    return out


# ---------------------------------------------------------------------------
# type change


@dataclass(frozen=True)
class TypeChange:
    value: bool
    det: ScalarExpr
    unit: ScalarExpr
    witness: tuple
    evidence: str
    off_sigma_regular: bool = True


@lru_cache(maxsize=256)
def is_transverse_type_changing(M: MetricChart) -> TypeChange:
    """``d(det g) != 0`` along Σ, with ``det g = tau * u`` and ``u|Σ`` nowhere zero."""
    det = ex.det(M.g)
    sigma = M.sigma
    try:
        unit = ex.divide_exact(det, sigma)
    except ex.NotVanishingError:
        raise SigmaMismatchError("det(g) is not divisible by tau: Σ mis-declared") from None
    u0 = ex.restrict_to_sigma(unit, sigma)
    # d(det)|Σ = u|Σ dτ|Σ since det = τ u
    witness = tuple(ex.restrict_to_sigma(u0 * sympy.diff(M.tau, c), sigma) for c in M.coords)
    evidence = "exact"
    if u0.is_number:
        value = u0 != 0
    else:
        is_zero, evidence = ex.decide_zero(u0, M.functions, M.seed)
        if is_zero:
            value = False
        else:
            value = all(_nonzero_on_samples(M, u0, M.samples_on_sigma()))
            evidence = "numeric"
    if all(ex.is_zero(w) for w in witness):
        value = False
    regular = all(_nonzero_on_samples(M, det, M.samples_off_sigma()))
    return TypeChange(bool(value), det, unit, witness, evidence, regular)


def restricted_metric(M: MetricChart) -> sympy.Matrix:
    sigma = M.sigma
    return sympy.Matrix(M.dim, M.dim, lambda a, b: ex.restrict_to_sigma(M.g[a, b], sigma))


@lru_cache(maxsize=256)
def radical_field(M: MetricChart) -> tuple:
    """Vector field ``R`` with ``g(R, .)`` divisible by tau, constant across Σ."""
    g0 = restricted_metric(M)
    kernel = g0.nullspace(simplify=ex.canonicalize)
    if len(kernel) != 1:
        raise RadicalError(f"radical has dimension {len(kernel)} on Σ, expected 1")
    v = [ex.canonicalize(c) for c in kernel[0]]
    dens = [sympy.fraction(c)[1] for c in v]
    lcm = sympy.lcm_list(dens) if len(dens) > 1 else dens[0]
    v = tuple(ex.canonicalize(c * lcm) for c in v)
    for p in M.samples_on_sigma():
        rank = np.linalg.matrix_rank(M.numeric_metric(p), tol=1e-9)
        if rank != M.dim - 1:
            raise RadicalError(f"numeric kernel dimension {M.dim - rank} at a Σ sample")
        if not any(abs(M.evaluate(c, p)) > ex.ZERO_TOL for c in v):
            raise RadicalError("radical field vanishes at a Σ sample")
    return v


@dataclass(frozen=True)
class Transversality:
    kind: str  # "transverse" | "tangent" | "non-uniform"
    value: ScalarExpr
    evidence: str

    @property
    def transverse(self) -> bool:
        return self.kind == "transverse"


def radical_transversality(M: MetricChart, R: Sequence) -> Transversality:
    """Transverse iff ``R(tau)|Σ != 0``."""
    val = ex.restrict_to_sigma(apply_vector(M, R, M.tau), M.sigma)
    if val.is_number:
        return Transversality("transverse" if val != 0 else "tangent", val, "exact")
    zero, ev = ex.decide_zero(val, M.functions, M.seed)
    if zero:
        return Transversality("tangent", val, ev)
    flags = _nonzero_on_samples(M, val, M.samples_on_sigma())
    if all(flags):
        return Transversality("transverse", val, "numeric")
    if not any(flags):
        return Transversality("tangent", val, "numeric")
    return Transversality("non-uniform", val, "numeric")


def tangent_to_sigma(M: MetricChart, X: Sequence) -> bool:
    """``X`` is tangent to Σ iff ``X(tau)`` vanishes on Σ."""
    val = ex.restrict_to_sigma(apply_vector(M, X, M.tau), M.sigma)
    return ex.decide_zero(val, M.functions, M.seed)[0]


# ---------------------------------------------------------------------------
# frames


@dataclass(frozen=True)
class Frame:
    """``vectors[a]`` holds the coordinate components of ``E_{a+1}``.

    The radical field is last; ``eps`` are the signs of the first m-1.
    """

    vectors: tuple
    eps: tuple
    adapted: bool
    completely_adapted: bool

    @property
    def radical(self) -> tuple:
        return self.vectors[-1]

    def matrix(self) -> np.ndarray:
        m = len(self.vectors)
        out = np.empty((m, m), dtype=object)
        for a in range(m):
            for b in range(m):
                out[a, b] = self.vectors[a][b]
        return out


def _scale(v, s):
    return tuple(ex.canonicalize(c * s) for c in v)


def build_adapted_frame(M: MetricChart, R: Sequence | None = None) -> Frame:
    return _adapted_frame(M, tuple(R) if R is not None else None)


def _gram_schmidt(M: MetricChart, basis, realize) -> tuple[list, list]:
    off = M.samples_off_sigma(1)[0]
    m = M.dim
    vectors, eps = [], []
    for w in basis:
        for e_j, s_j in zip(vectors, eps):
            c = metric_pair(M, w, e_j)
            if c != 0:
                w = tuple(ex.canonicalize(w[b] - s_j * c * e_j[b]) for b in range(m))
        n = metric_pair(M, w, w)
        val = M.evaluate(n, off)
        if abs(val) < ex.ZERO_TOL:
            raise FrameError("Gram-Schmidt met a null direction off Σ")
        s = 1 if val > 0 else -1
        vectors.append(_scale(w, 1 / ex.sqrt_positive(s * n, off, realize)))
        eps.append(s)
    return vectors, eps


def _radical_unit(M: MetricChart, R, sigma, samples) -> ScalarExpr:
    unit = ex.divide_exact(metric_pair(M, R, R), sigma)
    u0 = ex.restrict_to_sigma(unit, sigma)
    signs = [np.sign(M.evaluate(u0, p)) for p in samples]
    if any(s == 0 for s in signs):
        raise FrameError("g(R,R)/tau vanishes on Σ; cannot normalize the radical")
    if any(s < 0 for s in signs):
        raise FrameError("g(R,R)/tau is negative on Σ; declare tau with the opposite sign")
    return unit


@lru_cache(maxsize=256)
def _adapted_frame(M: MetricChart, R: tuple | None) -> Frame:
    """Orthonormal frame with ``E_m`` radical and ``g(E_m, E_m) = tau`` exactly.

    Transverse radical: the coordinate fields tangent to Σ are orthonormalized
    and ``R`` is projected g-orthogonally off them (this changes ``R`` only by
    a multiple of tau), giving a completely adapted frame.  Tangent radical:
    the coordinate fields are projected off ``R`` instead.  Square-root atoms
    enter through the norms.
    """
    sigma = M.sigma
    R = tuple(R) if R is not None else radical_field(M)
    samples = M.samples_on_sigma()
    realize = M.realizations()
    m = M.dim
    sample = samples[0]
    if not ex.is_zero(ex.restrict_to_sigma(apply_vector(M, R, M.tau), sigma)):
        tangent = [coordinate_field(M, a) for a in range(m) if a != M.tau_index]
        vectors, eps = _gram_schmidt(M, tangent, realize)
        for e_j, s_j in zip(vectors, eps):
            c = metric_pair(M, R, e_j)
            if c != 0:
                R = tuple(ex.canonicalize(R[b] - s_j * c * e_j[b]) for b in range(m))
        unit = _radical_unit(M, R, sigma, samples)
        vectors.append(_scale(R, 1 / ex.sqrt_positive(unit, sample, realize)))
        complete = all(tangent_to_sigma(M, v) for v in vectors[:-1])
        return Frame(tuple(vectors), tuple(eps), True, complete)

    unit = _radical_unit(M, R, sigma, samples)
    em = _scale(R, 1 / ex.sqrt_positive(unit, sample, realize))
    skip = max(a for a in range(m) if not ex.is_zero(ex.restrict_to_sigma(R[a], sigma)))
    basis = []
    for a in range(m):
        if a == skip:
            continue
        d = coordinate_field(M, a)
        coef = ex.canonicalize(ex.divide_exact(metric_pair(M, d, R), sigma) / unit)
        basis.append(tuple(ex.canonicalize(d[b] - coef * R[b]) for b in range(m)))
    vectors, eps = _gram_schmidt(M, basis, realize)
    vectors.append(em)
    complete = all(tangent_to_sigma(M, v) for v in vectors[:-1])
    return Frame(tuple(vectors), tuple(eps), True, complete)


def frame_residuals(M: MetricChart, F: Frame) -> list:
    """Orthonormality defects; all canonicalize to zero for a valid frame."""
    m = M.dim
    out = []
    for i in range(m):
        for j in range(i, m):
            val = metric_pair(M, F.vectors[i], F.vectors[j])
            if i == j == m - 1:
                target = M.tau
            elif i == j:
                target = F.eps[i]
            else:
                target = 0
            out.append(ex.canonicalize(val - target))
    return out


def numeric_signature(M: MetricChart, point: Mapping) -> tuple[int, int]:
    """(positive, negative) eigenvalue counts at a point."""
    w = np.linalg.eigvalsh(M.numeric_metric(point))
    return int((w > 1e-12).sum()), int((w < -1e-12).sum())


def numeric_adapted_frame(M: MetricChart, point: Mapping) -> np.ndarray:
    """Numeric frame at an off-Σ point for metrics without a symbolic frame.

    Rows are frame vectors; the last row is the radical direction scaled so
    that ``g(E_m, E_m) = tau`` at the point.
    """
    R = np.array([M.evaluate(c, point) for c in radical_field(M)])
    G = M.numeric_metric(point)
    tau = M.evaluate(M.tau, point)
    q = R @ G @ R
    if q / tau <= 0:
        raise FrameError("radical normalization is not real at this point")
    em = R * np.sqrt(tau / q)
    m = M.dim
    skip = int(np.argmax(np.abs(R)))
    rows = []
    for a in range(m):
        if a == skip:
            continue
        w = np.eye(m)[a] - (np.eye(m)[a] @ G @ em) / tau * em
        for r in rows:
            s = np.sign(r @ G @ r)
            w = w - s * (w @ G @ r) * r
        n = w @ G @ w
        rows.append(w / np.sqrt(abs(n)))
    rows.append(em)
    return np.array(rows)

"""Fundamental forms along Σ, flatness classes and extendibility deciders.

For a radical field ``R`` the second fundamental form is
``II^R(X, Y) = □_X Y(R)|Σ`` where ``□_X Y(R) = X(Y^c) g_cd R^d + X^a Y^b Γ_{ab,d} R^d``.
When ``g`` is II-flat the third one is ``III^R(X, Y) = II^R(∇_X Y, R)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import sympy

from . import expr as ex
from .curvature import (christoffel, cotton, dual_connection, frame_components, ricci, riemann,
                        schouten, scalar, weyl)
from .geometry import (Frame, GeometryError, MetricChart, apply_vector, build_adapted_frame,
                       coordinate_field, is_transverse_type_changing, radical_field,
                       radical_transversality, restricted_metric, tangent_to_sigma)
from sympy.core.function import AppliedUndef


class PreconditionError(ValueError):
    """A classification precondition does not hold."""


class NotIIFlatError(PreconditionError):
    pass


class TangentRadicalError(PreconditionError):
    pass


class FlatnessError(PreconditionError):
    pass


# ---------------------------------------------------------------------------
# small helpers


def _restrict(M: MetricChart, e) -> sympy.Expr:
    return ex.restrict_to_sigma(e, M.sigma)


def _opaque(M: MetricChart) -> bool:
    return any(M.g[a, b].atoms(AppliedUndef) for a in range(M.dim) for b in range(M.dim))


def base_evidence(M: MetricChart) -> str:
    """Opaque warping functions cap every verdict at numeric strength."""
    return "numeric" if _opaque(M) else "exact"


def _weaker(*evs: str) -> str:
    return "numeric" if "numeric" in evs else "exact"


def _zero(M: MetricChart, e) -> tuple[bool, str]:
    e = ex.canonicalize(e)
    if e == 0:
        return True, "exact"
    if e.is_number:
        return False, "exact"
    return ex.decide_zero(e, M.functions, M.seed)


@dataclass(frozen=True)
class Flag:
    """Boolean classification with the proportionality factor when relevant."""

    value: bool | None
    evidence: str = "exact"
    k: sympy.Expr | None = None
    note: str = ""

    def __bool__(self):
        return bool(self.value)


def _gR(M: MetricChart, R) -> tuple:
    m = M.dim
    return tuple(ex.canonicalize(sum((M.g[c, d] * R[d] for d in range(m) if R[d] != 0), sympy.S.Zero))
                 for c in range(m))


def _box(M: MetricChart, X, Y, R, gR=None) -> sympy.Expr:
    """``□_X Y(R)`` as an expression on M (before restriction)."""
    m = M.dim
    first = dual_connection(M)
    gR = gR if gR is not None else _gR(M, R)
    total = sympy.S.Zero
    for a in range(m):
        if X[a] == 0:
            continue
        for b in range(m):
            if Y[b] == 0:
                continue
            for d in range(m):
                if R[d] != 0 and first[a, b, d] != 0:
                    total += X[a] * Y[b] * first[a, b, d] * R[d]
    for c in range(m):
        if gR[c] != 0 and Y[c] != 0:
            total += apply_vector(M, X, Y[c]) * gR[c]
    return ex.canonicalize(total)


def second_form(M: MetricChart, X, Y, R) -> sympy.Expr:
    """``II^R(X, Y)`` restricted to Σ; a pole means ``R`` is not radical."""
    try:
        return _restrict(M, _box(M, X, Y, R))
    except ex.PoleError as exc:
        raise GeometryError(f"II^R has a pole on Σ ({exc}); is R radical?") from None


def covariant(M: MetricChart, X, Y) -> tuple:
    """``∇_X Y`` off Σ (may carry 1/tau terms)."""
    m = M.dim
    gam = christoffel(M)
    out = []
    for c in range(m):
        val = apply_vector(M, X, Y[c])
        for a in range(m):
            if X[a] == 0:
                continue
            for b in range(m):
                if Y[b] != 0 and gam[c, a, b] != 0:
                    val += X[a] * Y[b] * gam[c, a, b]
        out.append(ex.canonicalize(val))
    return tuple(out)


def third_form(M: MetricChart, X, Y, R) -> sympy.Expr:
    """``II^R(∇_X Y, R)`` on Σ; the contraction must restrict without a pole."""
    V = covariant(M, X, Y)
    try:
        return _restrict(M, _box(M, V, R, R))
    except ex.PoleError as exc:
        raise FlatnessError(f"III^R contraction has a pole on Σ ({exc})") from None


# ---------------------------------------------------------------------------
# tangent bases and fundamental forms


@dataclass(frozen=True)
class SigmaBasis:
    """Vector fields tangent to Σ spanning TΣ, with ``g_Σ`` in that basis."""

    vectors: tuple
    g_sigma: sympy.Matrix
    kind: str  # "frame" | "coordinate"
    eps: tuple = ()


def sigma_basis(M: MetricChart, frame: Frame) -> SigmaBasis:
    m = M.dim
    if frame.completely_adapted:
        return SigmaBasis(tuple(frame.vectors[:-1]), sympy.diag(*frame.eps), "frame", tuple(frame.eps))
    idx = [a for a in range(m) if a != M.tau_index]
    g0 = restricted_metric(M)
    vecs = tuple(coordinate_field(M, a) for a in idx)
    return SigmaBasis(vecs, sympy.Matrix(len(idx), len(idx), lambda i, j: g0[idx[i], idx[j]]),
                      "coordinate")


def proportional(M: MetricChart, T: sympy.Matrix, basis: SigmaBasis) -> Flag:
    """Test ``T = k g_Σ``.

    In an orthonormal basis: off-diagonal entries zero and ``eps_i T_ii`` all
    equal, with ``k = eps_1 T_11``.  In a coordinate basis entries are
    cross-multiplied so that no division by a diagonal entry is needed.
    """
    n = T.shape[0]
    evs = []
    if basis.kind == "frame":
        k = ex.canonicalize(basis.eps[0] * T[0, 0])
        for i in range(n):
            for j in range(i + 1, n):
                z, ev = _zero(M, T[i, j])
                evs.append(ev)
                if not z:
                    return Flag(False, _weaker(*evs))
            z, ev = _zero(M, basis.eps[i] * T[i, i] - k)
            evs.append(ev)
            if not z:
                return Flag(False, _weaker(*evs))
        return Flag(True, _weaker(*evs), k)
    G = basis.g_sigma
    entries = [(i, j) for i in range(n) for j in range(i, n)]
    p = next(((i, i) for i in range(n) if not ex.is_zero(G[i, i])), None)
    if p is None:
        return Flag(None, "exact", note="g_Σ has a vanishing diagonal in the coordinate basis")
    for (i, j) in entries:
        z, ev = _zero(M, T[i, j] * G[p] - T[p] * G[i, j])
        evs.append(ev)
        if not z:
            return Flag(False, _weaker(*evs))
    return Flag(True, _weaker(*evs), ex.canonicalize(T[p] / G[p]))


@dataclass(frozen=True)
class FundamentalForms:
    II: sympy.Matrix  # in the basis (E_1..E_{m-1}, R)
    II_sigma: sympy.Matrix
    III: sympy.Matrix | None
    basis: SigmaBasis
    R: tuple
    C: sympy.Expr | None = None


def _frame_and_radical(M: MetricChart, R=None, frame: Frame | None = None):
    if frame is None:
        frame = build_adapted_frame(M, R)
    if R is None:
        R = frame.radical
    return frame, tuple(R)


def second_fundamental(M: MetricChart, R=None, frame: Frame | None = None) -> sympy.Matrix:
    """``II^R(E_a, E_b)|Σ`` with ``E_m`` replaced by ``R`` in the last slot."""
    frame, R = _frame_and_radical(M, R, frame)
    basis = sigma_basis(M, frame)
    vecs = list(basis.vectors) + [R]
    gR = _gR(M, R)
    n = len(vecs)
    out = sympy.zeros(n, n)
    for a in range(n):
        for b in range(n):
            try:
                out[a, b] = _restrict(M, _box(M, vecs[a], vecs[b], R, gR))
            except ex.PoleError as exc:
                raise GeometryError(f"II^R has a pole on Σ ({exc}); is R radical?") from None
    return out


def II_sigma(M: MetricChart, R=None, frame: Frame | None = None) -> sympy.Matrix:
    II = second_fundamental(M, R, frame)
    n = II.shape[0] - 1
    return II[:n, :n]


def fundamental_forms(M: MetricChart, R=None, frame: Frame | None = None) -> FundamentalForms:
    frame, R = _frame_and_radical(M, R, frame)
    basis = sigma_basis(M, frame)
    II = second_fundamental(M, R, frame)
    n = II.shape[0] - 1
    IIs = II[:n, :n]
    C = None
    if basis.kind == "frame":
        C = ex.canonicalize(sum(basis.eps[l] * IIs[l, l] for l in range(n)))
    III = None
    if all(_zero(M, v)[0] for v in IIs):
        III = _third(M, R, basis)
    return FundamentalForms(II, IIs, III, basis, R, C)


def _third(M: MetricChart, R, basis: SigmaBasis) -> sympy.Matrix:
    n = len(basis.vectors)
    out = sympy.zeros(n, n)
    for i in range(n):
        for j in range(i, n):
            out[i, j] = out[j, i] = third_form(M, basis.vectors[i], basis.vectors[j], R)
    return out


def third_fundamental(M: MetricChart, R=None, frame: Frame | None = None) -> sympy.Matrix:
    frame, R = _frame_and_radical(M, R, frame)
    if not is_II_flat(M, R, frame):
        raise NotIIFlatError("III^R is defined only for II-flat metrics")
    return _third(M, R, sigma_basis(M, frame))


# ---------------------------------------------------------------------------
# flatness classes


def is_II_flat(M: MetricChart, R=None, frame: Frame | None = None) -> Flag:
    IIs = II_sigma(M, R, frame)
    evs = []
    for v in IIs:
        z, ev = _zero(M, v)
        evs.append(ev)
        if not z:
            return Flag(False, _weaker(base_evidence(M), *evs))
    return Flag(True, _weaker(base_evidence(M), *evs), sympy.S.Zero)


def is_conformally_II_flat(M: MetricChart, R=None, frame: Frame | None = None) -> Flag:
    frame, R = _frame_and_radical(M, R, frame)
    flag = proportional(M, II_sigma(M, R, frame), sigma_basis(M, frame))
    return Flag(flag.value, _weaker(base_evidence(M), flag.evidence), flag.k, flag.note)


def is_III_flat(M: MetricChart, R=None, frame: Frame | None = None) -> Flag:
    III = third_fundamental(M, R, frame)
    evs = []
    for v in III:
        z, ev = _zero(M, v)
        evs.append(ev)
        if not z:
            return Flag(False, _weaker(base_evidence(M), *evs))
    return Flag(True, _weaker(base_evidence(M), *evs), sympy.S.Zero)


def is_conformally_III_flat(M: MetricChart, R=None, frame: Frame | None = None) -> Flag:
    frame, R = _frame_and_radical(M, R, frame)
    III = third_fundamental(M, R, frame)
    flag = proportional(M, III, sigma_basis(M, frame))
    return Flag(flag.value, _weaker(base_evidence(M), flag.evidence), flag.k, flag.note)


def canonical_radical(M: MetricChart, U=None) -> tuple:
    """The radical field with ``II^R(R, R) = 1`` on Σ: ``R = c^{-1/3} U``."""
    U = tuple(U) if U is not None else radical_field(M)
    c = second_form(M, U, U, U)
    z, _ = _zero(M, c)
    if z:
        raise TangentRadicalError("II^U(U,U) vanishes on Σ: the radical is tangent")
    s = ex.root_positive(1 / c, 3)
    return tuple(ex.canonicalize(s * u) for u in U)


# ---------------------------------------------------------------------------
# classification and the criterion decider


@dataclass
class Classification:
    transverse_type_changing: Flag
    radical_transverse: Flag
    II_flat: Flag
    III_flat: Flag
    conf_II_flat: Flag
    conf_III_flat: Flag
    class_conf_III_flat: Flag
    frame: Frame | None = None
    forms: FundamentalForms | None = None
    notes: list = field(default_factory=list)


def classify(M: MetricChart) -> Classification:
    """All classification flags of ``M``; raises when ``M`` is not type-changing."""
    base = base_evidence(M)
    tc = is_transverse_type_changing(M)
    if not tc.value:
        raise PreconditionError("metric is not transverse type-changing along the declared Σ")
    tcf = Flag(True, _weaker(base, tc.evidence))
    notes = []
    if not tc.off_sigma_regular:
        notes.append("det g vanishes at an off-Σ sample")
    U = radical_field(M)
    tr = radical_transversality(M, U)
    if tr.kind == "non-uniform":
        rt = Flag(None, "numeric", note="non-uniform")
    else:
        rt = Flag(tr.transverse, _weaker(base, tr.evidence), note=tr.kind)
    frame = build_adapted_frame(M, U)
    forms = fundamental_forms(M, frame.radical, frame)
    basis = forms.basis
    iif = [_zero(M, v) for v in forms.II_sigma]
    II_flat = Flag(all(z for z, _ in iif), _weaker(base, *(e for _, e in iif)))
    cII = proportional(M, forms.II_sigma, basis)
    conf_II = Flag(cII.value, _weaker(base, cII.evidence), cII.k, cII.note)
    if forms.III is not None:
        iiif = [_zero(M, v) for v in forms.III]
        III_flat = Flag(all(z for z, _ in iiif), _weaker(base, *(e for _, e in iiif)))
        cIII = proportional(M, forms.III, basis)
        conf_III = Flag(cIII.value, _weaker(base, cIII.evidence), cIII.k, cIII.note)
    else:
        III_flat = Flag(False, II_flat.evidence, note="not II-flat")
        conf_III = Flag(False, II_flat.evidence, note="not II-flat")
    cls = _class_conf_III(M, II_flat, conf_II, conf_III)
    if rt.value is None:
        notes.append("radical transversality is non-uniform along Σ; verdicts not asserted")
    return Classification(tcf, rt, II_flat, III_flat, conf_II, conf_III, cls, frame, forms, notes)


def _class_conf_III(M, II_flat: Flag, conf_II: Flag, conf_III: Flag) -> Flag:
    """Conformal III-flatness of the class: test a II-flat representative."""
    if II_flat.value:
        return Flag(conf_III.value, conf_III.evidence, conf_III.k, "metric is its own representative")
    if not conf_II.value:
        return Flag(False, conf_II.evidence, note="class has no II-flat member")
    from .conformal import ConformalError, flatten_II, rescale
    try:
        fac = flatten_II(M)
    except ConformalError as exc:
        return Flag(None, "exact", note=f"no coordinate-aligned representative: {exc}")
    N = rescale(M, fac.f)
    flag = is_conformally_III_flat(N)
    return Flag(flag.value, flag.evidence, flag.k, "flatten_II representative")


def extendibility_by_criteria(M: MetricChart, cl: Classification | None = None) -> dict:
    """K ⇔ transverse and II-flat; Ric ⇔ transverse and III-flat;
    W ⇔ transverse and the conformal class is conformally III-flat."""
    cl = cl or classify(M)
    rt = cl.radical_transverse
    out = {}
    for name, flag in (("K", cl.II_flat), ("Ric", cl.III_flat), ("W", cl.class_conf_III_flat)):
        if rt.value is None or flag.value is None:
            out[name] = Flag(None, "numeric", note="undetermined")
        else:
            out[name] = Flag(bool(rt.value and flag.value), _weaker(rt.evidence, flag.evidence))
    return out


# ---------------------------------------------------------------------------
# the Laurent decider


@dataclass(frozen=True)
class LaurentVerdict:
    extends: bool | None
    evidence: str
    witness: tuple | None = None
    form: ex.LaurentForm | None = None
    max_pole: int = 0
    note: str = ""


def _component_order(rank: int, m: int):
    """Index order for witness search: the ``(i k j k)`` family first for rank 4."""
    idx = list(itertools.product(range(m), repeat=rank))
    if rank != 4:
        return idx
    fam = [t for t in idx if t[1] == t[3] and t[1] != t[0] and t[1] != t[2]]
    rest = [t for t in idx if t not in set(fam)]
    return fam + rest


def _laurent_tensor(M: MetricChart, T: np.ndarray) -> LaurentVerdict:
    sigma = M.sigma
    m = M.dim
    seen = {}
    evs = [base_evidence(M)]
    worst = 0
    first_fail = None
    for idx in _component_order(T.ndim, m):
        v = T[idx]
        if v == 0:
            continue
        if v in seen:
            ok = seen[v]
        else:
            try:
                form = ex.laurent_split(v, sigma)
            except ex.PoleOrderError as exc:
                return LaurentVerdict(False, _weaker(*evs), idx, None, 3, f"pole order > 2: {exc}")
            worst = max(worst, form.order)
            ok = True
            if form.order:
                z2, e2 = _zero(M, form.a2)
                z1, e1 = _zero(M, form.a1)
                evs += [e1, e2]
                ok = z1 and z2
            seen[v] = ok
            if not ok and first_fail is None:
                first_fail = (idx, form)
        if not ok and first_fail is None:
            first_fail = (idx, None)
    if first_fail is None:
        return LaurentVerdict(True, _weaker(*evs), max_pole=worst)
    return LaurentVerdict(False, _weaker(*evs), first_fail[0], first_fail[1], worst)


@dataclass(frozen=True)
class FrameCurvature:
    K: np.ndarray
    Ric: np.ndarray
    W: np.ndarray | None
    h: np.ndarray


_FRAME_CACHE: dict = {}


def frame_curvature(M: MetricChart, frame: Frame | None = None) -> FrameCurvature:
    key = (M, frame)
    if key not in _FRAME_CACHE:
        frame = frame or build_adapted_frame(M)
        E = frame.matrix()
        K = frame_components(riemann(M), E)
        Ric = frame_components(ricci(M), E)
        h = frame_components(schouten(M), E)
        W = frame_components(weyl(M)[0], E) if M.dim >= 4 else None
        if len(_FRAME_CACHE) > 64:
            _FRAME_CACHE.clear()
        _FRAME_CACHE[key] = FrameCurvature(K, Ric, W, h)
    return _FRAME_CACHE[key]


def extendibility_by_laurent(M: MetricChart, frame: Frame | None = None) -> dict:
    """Extends iff every frame component has vanishing singular Laurent part."""
    fc = frame_curvature(M, frame)
    out = {"K": _laurent_tensor(M, fc.K), "Ric": _laurent_tensor(M, fc.Ric)}
    if fc.W is not None:
        out["W"] = _laurent_tensor(M, fc.W)
    return out


def w_second_order(M: MetricChart, frame: Frame | None = None) -> tuple:
    """Largest ``(W_ikjk)_2`` over the family with ``k`` a Σ-tangent index.

    Returns ``(index, value)`` with 0-based frame indices; ``value`` is the
    coefficient of ``tau^-2`` restricted to Σ.
    """
    fc = frame_curvature(M, frame)
    if fc.W is None:
        return None, sympy.S.Zero
    m = M.dim
    best = (None, sympy.S.Zero)
    best_abs = 0.0
    for i in range(m - 1):
        for j in range(i, m - 1):
            for k in range(m - 1):
                if k in (i, j):
                    continue
                v = fc.W[i, k, j, k]
                if v == 0:
                    continue
                form = ex.laurent_split(v, M.sigma)
                if form.order < 2 or form.a2 == 0:
                    continue
                size = _max_abs(M, form.a2, M.samples_on_sigma(5))
                if size > best_abs:
                    best, best_abs = ((i, k, j, k), form.a2), size
    return best


def _max_abs(M: MetricChart, e, points) -> float:
    e = sympy.sympify(e)
    if e == 0:
        return 0.0
    return max(abs(M.evaluate(e, p)) for p in points)


# ---------------------------------------------------------------------------
# geometry of Σ


@dataclass(frozen=True)
class SigmaGeometry:
    chart: MetricChart
    christoffel: np.ndarray
    K: np.ndarray
    Ric: np.ndarray
    Sc: sympy.Expr
    h: np.ndarray | None
    W: np.ndarray | None
    cotton: np.ndarray | None


def sigma_chart(M: MetricChart) -> MetricChart:
    idx = [a for a in range(M.dim) if a != M.tau_index]
    g0 = restricted_metric(M)
    g = sympy.ImmutableMatrix(len(idx), len(idx), lambda i, j: g0[idx[i], idx[j]])
    return MetricChart(tuple(M.coords[a] for a in idx), g, tau_index=None,
                       functions=M.functions, box=tuple(M.box[a] for a in idx), seed=M.seed,
                       name=(M.name + "|Σ") if M.name else "")


def sigma_geometry(M: MetricChart) -> SigmaGeometry:
    S = sigma_chart(M)
    n = S.dim
    h = schouten(S) if n >= 3 else None
    W = weyl(S)[0] if n >= 4 else None
    C = cotton(S) if n == 3 else None
    return SigmaGeometry(S, christoffel(S), riemann(S), ricci(S), scalar(S), h, W, C)


@dataclass(frozen=True)
class GaussCheck:
    curvature_residual: list
    connection_residual: list
    ok: bool


def gauss_check(M: MetricChart) -> GaussCheck:
    """Σ is totally geodesic for II-flat metrics: ``K|TΣ = K^Σ`` and
    ``∇_X Y = ∇^Σ_X Y + III^R(X, Y) R`` with ``R`` canonical."""
    U = radical_field(M)
    if not radical_transversality(M, U).transverse:
        raise TangentRadicalError("Gauss formula needs a transverse radical")
    frame = build_adapted_frame(M, U)
    if not is_II_flat(M, frame.radical, frame):
        raise NotIIFlatError("Gauss formula needs an II-flat metric")
    R = canonical_radical(M, U)
    sg = sigma_geometry(M)
    idx = [a for a in range(M.dim) if a != M.tau_index]
    K = riemann(M)
    n = len(idx)
    curv = []
    for p, q, r, s in itertools.product(range(n), repeat=4):
        amb = _restrict(M, K[idx[p], idx[q], idx[r], idx[s]])
        d = ex.canonicalize(amb - sg.K[p, q, r, s])
        if d != 0:
            curv.append(((p, q, r, s), d))
    conn = []
    gs = sg.christoffel
    for p in range(n):
        for q in range(n):
            X = coordinate_field(M, idx[p])
            Y = coordinate_field(M, idx[q])
            V = covariant(M, X, Y)
            third = third_form(M, X, Y, R)
            for c in range(M.dim):
                try:
                    amb = _restrict(M, V[c])
                except ex.PoleError:
                    conn.append(((p, q, c), sympy.oo))
                    continue
                intrinsic = gs[idx.index(c), p, q] if c in idx else sympy.S.Zero
                d = ex.canonicalize(amb - intrinsic - third * _restrict(M, R[c]))
                if d != 0:
                    conn.append(((p, q, c), d))
    return GaussCheck(curv, conn, not curv and not conn)


# ---------------------------------------------------------------------------
# Schouten gap and B_ijk


def _completely_adapted(M: MetricChart, frame: Frame | None) -> Frame:
    frame = frame or build_adapted_frame(M)
    if not frame.completely_adapted:
        raise PreconditionError("no completely adapted frame for this chart")
    return frame


def schouten_gap(M: MetricChart, frame: Frame | None = None) -> sympy.Matrix:
    """``h^Σ_ij − h_ij`` on Σ from the frame components of ``K`` (III-flat metrics)."""
    frame = _completely_adapted(M, frame)
    if not is_III_flat(M, frame.radical, frame):
        raise NotIIFlatError("Schouten gap formula is stated for III-flat metrics")
    m = M.dim
    if m < 4:
        raise PreconditionError("Schouten gap needs m >= 4")
    K = frame_curvature(M, frame).K
    sigma = M.sigma
    n = m - 1
    mm = m - 1

    def over_tau(v):
        try:
            return ex.divide_exact(v, sigma)
        except ex.NotVanishingError:
            raise PreconditionError("K_imjm is not divisible by tau") from None

    trace_m = ex.canonicalize(sum(over_tau(K[k, mm, k, mm]) for k in range(n)))
    trace_t = ex.canonicalize(sum(K[k, l, k, l] for k in range(n) for l in range(n)))
    out = sympy.zeros(n, n)
    for i in range(n):
        for j in range(n):
            val = over_tau(K[i, mm, j, mm]) - sum(K[i, l, j, l] for l in range(n)) / (m - 3)
            if i == j:
                val -= (trace_m - trace_t / (m - 3)) / (m - 1)
            out[i, j] = _restrict(M, -val / (m - 2))
    return out


def schouten_gap_direct(M: MetricChart, frame: Frame | None = None) -> sympy.Matrix:
    """Same gap computed as ``h^Σ(E_i, E_j) − h(E_i, E_j)`` on Σ."""
    frame = _completely_adapted(M, frame)
    S = sigma_chart(M)
    hS = schouten(S)
    h = frame_curvature(M, frame).h
    idx = [a for a in range(M.dim) if a != M.tau_index]
    n = len(idx)
    E = [[_restrict(M, frame.vectors[i][a]) for a in idx] for i in range(n)]
    out = sympy.zeros(n, n)
    for i in range(n):
        for j in range(n):
            val = sum(E[i][p] * E[j][q] * hS[p, q] for p in range(n) for q in range(n)
                      if E[i][p] != 0 and E[j][q] != 0)
            out[i, j] = ex.canonicalize(val - _restrict(M, h[i, j]))
    return out


def b_ijk(M: MetricChart, frame: Frame | None = None) -> dict:
    """``B_ijk`` on Σ for an II-flat metric, keyed by 0-based ``(i, j, k)``."""
    frame = _completely_adapted(M, frame)
    if not is_II_flat(M, frame.radical, frame):
        raise NotIIFlatError("B_ijk is defined for II-flat metrics")
    m = M.dim
    K = frame_curvature(M, frame).K
    eps = frame.eps
    n = m - 1
    mm = m - 1
    tr = sum(eps[l] * K[l, mm, l, mm] for l in range(n))
    out = {}
    for i, j, k in itertools.product(range(n), repeat=3):
        val = eps[k] * K[i, mm, j, mm]
        if i == j:
            val += eps[i] * K[k, mm, k, mm] - sympy.Rational(2, m - 1) * eps[k] * eps[i] * tr
        out[(i, j, k)] = _restrict(M, val / (m - 2))
    return out


# ---------------------------------------------------------------------------
# tangency duality


def tangency_duality(M: MetricChart, X, R=None) -> tuple[bool, bool]:
    """``(X tangent to Σ, II^R(X, R)|Σ = 0)``; equal for a transverse radical."""
    R = tuple(R) if R is not None else radical_field(M)
    lhs = tangent_to_sigma(M, X)
    rhs = _zero(M, second_form(M, X, R, R))[0]
    return lhs, rhs


# ---------------------------------------------------------------------------
# full analysis


@dataclass(frozen=True)
class ExtVerdict:
    criteria: bool | None
    laurent: bool | None
    agree: bool | None
    evidence: str
    witness: tuple | None = None
    witness_form: ex.LaurentForm | None = None
    note: str = ""


@dataclass
class AnalysisReport:
    name: str
    dim: int
    flags: dict
    verdicts: dict
    diagnostics: dict
    forms: FundamentalForms | None
    notes: list

    @property
    def all_agree(self) -> bool:
        return all(v.agree for v in self.verdicts.values())


def _diag_values(M: MetricChart, values, points) -> dict:
    values = [ex.canonicalize(v) for v in values]
    exact = all(v == 0 for v in values)
    if exact:
        return {"exact_zero": True, "max_abs": 0.0}
    return {"exact_zero": False, "max_abs": max(_max_abs(M, v, points) for v in values if v != 0)}


def _representative(M: MetricChart, cl: Classification):
    """III-flat member of the class in coordinate-aligned form, with its origin."""
    from .conformal import ConformalError, flatten_II, flatten_III, rescale
    N, origin = M, "metric"
    try:
        if not cl.II_flat.value:
            if not cl.conf_II_flat.value:
                return None, "class has no II-flat member"
            N, origin = rescale(M, flatten_II(M).f), "flatten_II"
        if not is_III_flat(N):
            if not is_conformally_III_flat(N):
                return None, "class is not conformally III-flat"
            N = rescale(N, flatten_III(N).f)
            origin = "flatten_III" if origin == "metric" else "flatten_II+flatten_III"
    except ConformalError as exc:
        return None, str(exc)
    return N, origin


def analyze(M: MetricChart, diagnostics: bool = True) -> AnalysisReport:
    """Classification flags, both extendibility deciders and the diagnostics."""
    cl = classify(M)
    crit = extendibility_by_criteria(M, cl)
    laur = extendibility_by_laurent(M, cl.frame)
    verdicts = {}
    for name in ("K", "Ric", "W"):
        if name not in laur:
            continue
        c, lv = crit[name], laur[name]
        agree = None if c.value is None or lv.extends is None else (c.value == lv.extends)
        wit = tuple(i + 1 for i in lv.witness) if lv.witness is not None else None
        verdicts[name] = ExtVerdict(c.value, lv.extends, agree, _weaker(c.evidence, lv.evidence),
                                    wit, lv.form, lv.note)
    flags = {
        "transverse_type_changing": cl.transverse_type_changing,
        "radical_transverse": cl.radical_transverse,
        "II_flat": cl.II_flat,
        "III_flat": cl.III_flat,
        "conf_II_flat": cl.conf_II_flat,
        "conf_III_flat": cl.conf_III_flat,
        "class_conf_III_flat": cl.class_conf_III_flat,
    }
    diag = {}
    notes = list(cl.notes)
    if diagnostics:
        diag = _diagnostics(M, cl, notes)
    return AnalysisReport(M.name, M.dim, flags, verdicts, diag, cl.forms, notes)


def _diagnostics(M: MetricChart, cl: Classification, notes: list) -> dict:
    diag = {}
    on = M.samples_on_sigma(10)
    if M.dim >= 4:
        idx, val = w_second_order(M, cl.frame)
        diag["W_second_order"] = {"component": None if idx is None else [i + 1 for i in idx],
                                  "value": val}
    if cl.forms is not None and cl.forms.C is not None:
        diag["C"] = cl.forms.C
    # Schouten gap and B_ijk on a III-flat member of the class
    rep, origin = (None, "radical is not transverse")
    if cl.radical_transverse.value and M.dim >= 4:
        rep, origin = _representative(M, cl)
    diag["representative"] = origin if rep is not None else None
    if rep is None:
        notes.append(f"Schouten gap and B_ijk skipped: {origin}")
        diag["schouten_gap"] = diag["B_ijk"] = None
    else:
        try:
            gap = schouten_gap(rep)
            diag["schouten_gap"] = _diag_values(M, list(gap), on)
            diag["B_ijk"] = _diag_values(M, list(b_ijk(rep).values()), on)
        except PreconditionError as exc:
            notes.append(f"Schouten gap and B_ijk skipped: {exc}")
            diag["schouten_gap"] = diag["B_ijk"] = None
    if M.dim == 4 and not cl.radical_transverse.value:
        notes.append("Cotton tensor of Σ skipped: g|Σ is degenerate")
        diag["cotton"] = None
    elif M.dim == 4:
        sg = sigma_geometry(M)
        pts = sg.chart.samples_off_sigma(10)
        diag["cotton"] = _diag_values(sg.chart, list(sg.cotton.reshape(-1)), pts)
    return diag

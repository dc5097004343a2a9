import itertools

import numpy as np
import pytest
import sympy

from typechange import expr as ex
from typechange.curvature import (christoffel, cotton, curvature_bundle, dual_connection,
                                  inverse_metric, kulkarni_nomizu, ricci, riemann, scalar,
                                  weyl)
from typechange.warped import closed_form_table

from metrics import T, X, base_generic3, base_s2xr, base_sphere, diag, model, perturbed, \
    shipped_metrics, warped, wspec

x1, x2, x3, x4 = X[:4]
IDS = lambda v: v if isinstance(v, str) else ""


def _nonzero(arr):
    return {i: v for i, v in np.ndenumerate(np.asarray(arr, dtype=object)) if v != 0}


def test_model_dual_connection():
    G = dual_connection(model())
    assert _nonzero(G) == {(3, 3, 3): sympy.Rational(1, 2)}


def test_warped_dual_connection():
    G = dual_connection(warped(1, "flat"))
    assert G[3, 3, 3] == -sympy.Rational(1, 2)


def test_flat_dual_connection():
    assert _nonzero(dual_connection(diag([1, 1, 1, 1], tau_index=None))) == {}


def test_model_christoffel():
    C = christoffel(model())
    assert _nonzero(C) == {(3, 3, 3): 1 / (2 * x4)}


def test_warped_christoffel_displays():
    f = 1 + T**2
    M = warped(f, "flat")
    C = christoffel(M)
    # ∇_U U = (1/2t) U with U = ∂_t
    assert ex.is_zero(C[3, 3, 3] - 1 / (2 * T))
    assert all(C[a, 3, 3] == 0 for a in range(3))
    # ∇_U X = (f'/f) X
    for i in range(3):
        assert ex.is_zero(C[i, 3, i] - sympy.diff(f, T) / f)


def test_model_is_flat():
    assert _nonzero(riemann(model())) == {}


def test_flat_warped_vanishes():
    M = warped(1, "flat")
    assert _nonzero(riemann(M)) == {} and _nonzero(ricci(M)) == {} and scalar(M) == 0


def test_sphere_sign_convention():
    """K(∂1,∂2,∂1,∂2) = sectional curvature * |∂1 ∧ ∂2|^2 > 0 on the unit sphere."""
    S = base_sphere()
    K = riemann(S)
    assert ex.is_zero(K[0, 1, 0, 1] - S.g[0, 0] * S.g[1, 1])
    assert ex.is_zero(scalar(S) - 6)


def test_warped_sphere_scalar_matches_table():
    spec = wspec(1 + T**2, "sphere")
    M = warped(1 + T**2, "sphere")
    assert ex.is_zero(scalar(M) - closed_form_table(spec).Sc)


def test_kulkarni_nomizu_oracles():
    g = np.array(sympy.Matrix(4, 4, lambda a, b: sympy.Symbol(f"g{min(a, b)}{max(a, b)}")).tolist(),
                 dtype=object)
    gg = kulkarni_nomizu(g, g)
    for x, y, z, t in itertools.product(range(4), repeat=4):
        assert ex.is_zero(gg[x, y, z, t] - 2 * (g[x, z] * g[y, t] - g[x, t] * g[y, z]))
    th = np.array(sympy.diag(1, x1, 2, x2).tolist(), dtype=object)
    assert all(ex.is_zero(a - b) for a, b in zip(kulkarni_nomizu(th, g).reshape(-1),
                                                  kulkarni_nomizu(g, th).reshape(-1)))
    d = np.array(sympy.eye(4).tolist(), dtype=object)
    assert kulkarni_nomizu(d, d)[0, 1, 0, 1] == 2


def test_kulkarni_nomizu_needs_symmetric():
    a = np.array([[0, 1], [0, 0]], dtype=object)
    with pytest.raises(ValueError):
        kulkarni_nomizu(a, a)


def test_conformally_flat_weyl_vanishes():
    w = ex.E2(x1)
    M = diag([w, w, w, w], tau_index=None)
    W, W13 = weyl(M)
    assert _nonzero(W) == {} and _nonzero(W13) == {}


def test_model_weyl_vanishes():
    assert _nonzero(weyl(model())[0]) == {}


def test_warped_weyl_matches_table():
    spec = wspec(1 + T, "s2xr")
    W = weyl(warped(1 + T, "s2xr"))[0]
    Wt = closed_form_table(spec).W
    assert all(ex.is_zero(a - b) for a, b in zip(W.reshape(-1), Wt.reshape(-1)))


def test_bundle_pole_orders():
    B = curvature_bundle(warped(1 + T, "flat"))
    assert B.pole_order("K") == 1
    assert B.pole_order("W") == 0
    assert curvature_bundle(model()).pole_order("K") == 0


def test_cotton():
    assert _nonzero(cotton(base_sphere())) == {}
    assert _nonzero(cotton(base_s2xr())) == {}  # S^2 x R is conformally flat
    C = cotton(base_generic3())
    S = base_generic3()
    vals = [abs(S.evaluate(v, p)) for v in _nonzero(C).values() for p in S.samples_off_sigma(5)]
    assert vals and max(vals) > 1e-3


# -- invariants ------------------------------------------------------------


@pytest.mark.parametrize("name,M", shipped_metrics(), ids=IDS)
def test_connection_identities(name, M):
    G = dual_connection(M)
    m = M.dim
    sig = M.sigma
    for a, b, c in itertools.product(range(m), repeat=3):
        assert G[a, b, c] == G[b, a, c]
        assert ex.is_zero(sympy.diff(M.g[b, c], M.coords[a]) - G[a, b, c] - G[a, c, b])
        assert ex.pole_order(G[a, b, c], sig) == 0


@pytest.mark.parametrize("name,M", shipped_metrics(), ids=IDS)
def test_riemann_symmetries(name, M):
    K = riemann(M)
    m = M.dim
    for a, b, c, d in itertools.product(range(m), repeat=4):
        v = K[a, b, c, d]
        assert ex.is_zero(v + K[b, a, c, d])
        assert ex.is_zero(v + K[a, b, d, c])
        assert ex.is_zero(v - K[c, d, a, b])
        assert ex.is_zero(v + K[b, c, a, d] + K[c, a, b, d])


@pytest.mark.parametrize("name,M", shipped_metrics(), ids=IDS)
def test_weyl_trace_free(name, M):
    W, _ = weyl(M)
    gi = inverse_metric(M)
    m = M.dim
    for i, j in itertools.combinations(range(4), 2):
        for rest in itertools.product(range(m), repeat=2):
            acc = 0
            for a, c in itertools.product(range(m), repeat=2):
                if gi[a, c] == 0:
                    continue
                idx = [None] * 4
                idx[i], idx[j] = a, c
                k = iter(rest)
                idx = [next(k) if v is None else v for v in idx]
                acc += gi[a, c] * W[tuple(idx)]
            assert ex.is_zero(acc)


def _second_bianchi_residual(M):
    m = M.dim
    K = riemann(M)
    C = christoffel(M)
    syms = M.coords
    entries = {}
    for a, b, c, d in itertools.product(range(m), repeat=4):
        entries[(a, b, c, d)] = K[a, b, c, d]

    def nabla(e, a, b, c, d):
        val = sympy.diff(K[a, b, c, d], syms[e])
        for p in range(m):
            val -= C[p, e, a] * K[p, b, c, d] + C[p, e, b] * K[a, p, c, d]
            val -= C[p, e, c] * K[a, b, p, d] + C[p, e, d] * K[a, b, c, p]
        return val

    worst = 0.0
    exprs = []
    for a, b, c, d, e in itertools.product(range(m), repeat=5):
        exprs.append(nabla(e, c, d, a, b) + nabla(a, c, d, b, e) + nabla(b, c, d, e, a))
    for p in M.samples_off_sigma(10):
        vals = [abs(M.evaluate(x, p)) for x in exprs]
        scale = max(1.0, max(abs(M.evaluate(v, p)) for v in entries.values()))
        worst = max(worst, max(vals) / scale)
    return worst


@pytest.mark.parametrize("M", [perturbed(), warped(1 + T, "flat")], ids=["perturbed", "warped"])
def test_second_bianchi(M):
    assert _second_bianchi_residual(M) <= 1e-8

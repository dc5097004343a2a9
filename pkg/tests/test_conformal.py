import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from typechange import expr as ex
from typechange.conformal import (ConformalError, NonAlignedError, flatten_II, flatten_III,
                                  grad_extended, rescale, verify_II_law, verify_III_law,
                                  verify_weyl_invariance)
from typechange.degeneracy import (PreconditionError, classify, fundamental_forms, is_II_flat,
                                   is_III_flat, second_fundamental)
from typechange.geometry import (is_transverse_type_changing, radical_field,
                                 radical_transversality)

from metrics import (T, X, Y, chart, conformal_II_only, conformal_III_only, model, perturbed,
                     shipped_metrics, tangent_model, warped)

x1, x2, x3, x4 = X[:4]
y1 = Y[0]
IDS = lambda v: v if isinstance(v, str) else ""


def test_rescale_zero_is_identity():
    M = model()
    assert rescale(M, 0) is M


def test_rescale_keeps_type_change():
    N = rescale(model(), x1)
    tc = is_transverse_type_changing(N)
    assert tc.value
    assert ex.is_zero(tc.det - ex.E2(x1) ** 4 * x4)


def test_rescale_warped_constant():
    c = sympy.Rational(1, 3)
    N = rescale(warped(1 + T, "flat"), c)
    assert ex.is_zero(N.g[0, 0] - ex.E2(c) * (1 + T) ** 2)
    assert ex.is_zero(N.g[3, 3] + ex.E2(c) * T)


def test_II_law_oracles():
    M = model()
    chk = verify_II_law(M, x1)
    assert chk.evidence == "exact" and chk.max_abs == 0
    IIbar = second_fundamental(rescale(M, x1), (0, 0, 0, 1))
    assert ex.is_zero(IIbar[0, 0])
    chk = verify_II_law(M, x4)
    assert chk.max_abs == 0
    IIbar = second_fundamental(rescale(M, x4), (0, 0, 0, 1))
    for i in range(3):
        assert ex.is_zero(IIbar[i, i] + 1)  # −e^{2f}|Σ g_ii with f|Σ = 0
    assert verify_II_law(M, 0).max_abs == 0


def test_II_flatness_is_not_conformally_invariant():
    M = model()
    assert is_II_flat(M).value
    assert not is_II_flat(rescale(M, x4)).value


def test_grad_oracles():
    M = model()
    g = grad_extended(M, x1)
    assert g.extends and g.components == (1, 0, 0, 0)
    assert not grad_extended(M, x4).extends
    g = grad_extended(M, x4**2)
    assert g.extends and g.components == (0, 0, 0, 2)


def test_grad_is_inverse_metric_times_df():
    from typechange.curvature import inverse_metric
    M = conformal_III_only()
    f = x1 * x4**2 + x2
    g = grad_extended(M, f)
    gi = inverse_metric(M)
    for a in range(4):
        expected = sum(gi[a, b] * sympy.diff(f, M.coords[b]) for b in range(4))
        assert ex.is_zero(g.components[a] - expected)


def test_III_law_oracles():
    M = model()
    assert verify_III_law(M, 0).max_abs == 0
    chk = verify_III_law(M, x4**2)
    assert chk.max_abs == 0 and chk.evidence == "exact"
    III = fundamental_forms(rescale(M, x4**2)).III
    assert all(ex.is_zero(III[i, j] + (1 if i == j else 0)) for i in range(3) for j in range(3))
    W = warped(1 + T**2, "flat")
    assert verify_III_law(W, T**2 * (1 + y1)).max_abs == 0


def test_III_law_preconditions():
    with pytest.raises(PreconditionError):
        verify_III_law(perturbed(), x1)
    with pytest.raises(PreconditionError):
        verify_III_law(model(), x4)  # rescaled metric is not II-flat


@pytest.mark.parametrize("M,f", [(model(), 0), (model(), x1 * x2), (warped(1 + T, "sphere"), T)],
                         ids=["zero", "x1x2", "warped"])
def test_weyl_invariance(M, f):
    wc = verify_weyl_invariance(M, f)
    assert wc.W.max_abs == 0 and wc.W13.max_abs == 0 and wc.identical


def test_flatten_II():
    M = conformal_II_only()
    fac = flatten_II(M)
    assert fac.f == x4
    assert is_II_flat(rescale(M, fac.f)).value
    assert flatten_II(model()).f == 0
    W = warped(1 + T, "flat")
    assert is_II_flat(rescale(W, flatten_II(W).f)).value


def test_flatten_III():
    for M in (conformal_III_only(), warped(1 + T**2, "sphere")):
        fac = flatten_III(M)
        assert fac.f != 0
        assert is_III_flat(rescale(M, fac.f)).value


def test_flatten_errors():
    with pytest.raises(ConformalError):
        flatten_II(perturbed())
    with pytest.raises(ConformalError):
        flatten_III(conformal_II_only())
    M = chart({(0, 0): 1, (1, 1): 1, (2, 2): 1, (0, 3): x4, (3, 3): x4})
    with pytest.raises(NonAlignedError):
        flatten_II(M)


ALIGNED = [(n, M) for n, M in shipped_metrics()
           if n not in ("tangent", "perturbed")]


@pytest.mark.parametrize("name,M", ALIGNED, ids=IDS)
def test_flatten_II_on_aligned_metrics(name, M):
    N = rescale(M, flatten_II(M).f)
    assert all(v == 0 for v in fundamental_forms(N).II_sigma)


# -- properties ------------------------------------------------------------

METRICS = {"model": model, "conf_II": conformal_II_only, "conf_III": conformal_III_only,
           "perturbed": perturbed, "tangent": tangent_model,
           "warped": lambda: warped(1 + T**2, "flat")}


@st.composite
def factors(draw, name):
    M = METRICS[name]()
    a, b, c, d = M.coords
    coef = st.integers(-2, 2)
    terms = [draw(coef) * v for v in (a, b, d, a * d, d**2, a * b)]
    return M, sympy.Add(*terms) / 2


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(sorted(METRICS)).flatmap(factors))
def test_conformal_flags_invariant(Mf):
    M, f = Mf
    N = rescale(M, f)
    a, b = classify(M), classify(N)
    assert radical_field(N) == radical_field(M)
    assert radical_transversality(N, radical_field(N)).kind == radical_transversality(M, radical_field(M)).kind
    assert b.conf_II_flat.value == a.conf_II_flat.value
    if a.class_conf_III_flat.value is not None and b.class_conf_III_flat.value is not None:
        assert b.class_conf_III_flat.value == a.class_conf_III_flat.value


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["model", "conf_II", "conf_III", "perturbed", "warped"]).flatmap(factors))
def test_II_law_random(Mf):
    M, f = Mf
    chk = verify_II_law(M, f)
    assert chk.max_abs == 0 and chk.evidence == "exact"


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["model", "conf_III", "warped"]).flatmap(factors))
def test_III_law_random(Mf):
    M, f = Mf
    d = M.coords[3]
    f = f.subs(d, 0) + d**2 * f  # Rf|Σ = 0 keeps the rescaled metric II-flat
    chk = verify_III_law(M, f)
    assert chk.max_abs == 0 and chk.evidence == "exact"

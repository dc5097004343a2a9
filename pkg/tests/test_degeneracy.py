import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from typechange import expr as ex
from typechange.degeneracy import (NotIIFlatError, PreconditionError, TangentRadicalError, analyze,
                                   b_ijk, canonical_radical, classify, extendibility_by_criteria,
                                   extendibility_by_laurent, fundamental_forms, gauss_check,
                                   is_conformally_II_flat, is_conformally_III_flat, is_II_flat,
                                   is_III_flat, schouten_gap, schouten_gap_direct, second_form,
                                   second_fundamental, sigma_geometry, tangency_duality,
                                   third_fundamental, w_second_order)
from typechange.geometry import build_adapted_frame, radical_field, tangent_to_sigma

from metrics import (T, X, base_generic3, chart, conformal_II_only, conformal_III_only, diag, model,
                     perturbed, shipped_metrics, tangent_model, warped)

x1, x2, x3, x4 = X[:4]
D4 = (0, 0, 0, 1)
half = sympy.Rational(1, 2)
IDS = lambda v: v if isinstance(v, str) else ""


# -- fundamental forms -----------------------------------------------------


def test_model_second_form():
    II = second_fundamental(model(), D4)
    assert II == sympy.diag(0, 0, 0, half)


def test_tangent_model_second_form_vanishes_on_radical():
    assert second_form(tangent_model(), D4, D4, D4) == 0


def test_warped_second_form_before_normalization():
    assert second_form(warped(1 + T, "flat"), D4, D4, D4) == -half


def test_second_form_symmetric_and_orthogonal():
    for _, M in shipped_metrics():
        if not classify(M).radical_transverse.value:
            continue
        forms = fundamental_forms(M)
        assert forms.II == forms.II.T
        n = forms.II.shape[0] - 1
        for i in range(n):
            assert ex.is_zero(forms.II[i, n])


@pytest.mark.parametrize("g44,expected", [(16 * x4, (0, 0, 0, half)),
                                          (2 * x4, (0, 0, 0, 1)),
                                          (x4, (0, 0, 0, sympy.cbrt(2)))])
def test_canonical_radical_oracles(g44, expected):
    M = diag([1, 1, 1, g44])
    R = canonical_radical(M, D4)
    assert all(ex.is_zero(a - b) for a, b in zip(R, expected))
    assert ex.is_zero(second_form(M, R, R, R) - 1)
    assert canonical_radical(M, R) == R


def test_canonical_radical_tangent_raises():
    with pytest.raises(TangentRadicalError):
        canonical_radical(tangent_model(), D4)


def test_perturbation_not_II_flat():
    M = perturbed()
    IIs = fundamental_forms(M).II_sigma
    assert IIs[0, 0] == -half
    assert not is_II_flat(M).value
    assert not is_conformally_II_flat(M).value
    with pytest.raises(NotIIFlatError):
        third_fundamental(M)


def test_conformal_II_only_factor():
    M = conformal_II_only()
    flag = is_conformally_II_flat(M)
    assert flag.value and flag.k == 1
    assert not is_II_flat(M).value


@pytest.mark.parametrize("f,II_flat", [(1, True), (1 + T, False), (1 + T**2, True), (1 - T / 2 + T**2, False)])
def test_warped_conformally_II_flat_always(f, II_flat):
    M = warped(f, "sphere")
    assert is_conformally_II_flat(M).value
    assert bool(is_II_flat(M).value) is II_flat


def test_III_oracles():
    assert third_fundamental(model()) == sympy.zeros(3, 3)
    assert third_fundamental(warped(1, "flat")) == sympy.zeros(3, 3)
    M = warped(1 + T**2, "flat")
    assert is_conformally_III_flat(M).value and not is_III_flat(M).value
    k = is_conformally_III_flat(M).k
    assert k != 0


def test_conformal_III_only_metric():
    M = conformal_III_only()
    assert is_II_flat(M).value and not is_III_flat(M).value
    flag = is_conformally_III_flat(M)
    assert flag.value and flag.k == -half


def test_offdiagonal_metric_gets_completely_adapted_frame():
    M = chart({(0, 0): 1, (1, 1): 1, (2, 2): 1, (0, 3): x4, (3, 3): x4})
    F = build_adapted_frame(M)
    assert F.completely_adapted
    assert ex.is_zero(F.radical[0] + x4 / sympy.sqrt(1 - x4))
    forms = fundamental_forms(M)
    assert forms.basis.kind == "frame"
    cl = classify(M)
    assert cl.II_flat.value and cl.III_flat.value
    assert schouten_gap(M) == sympy.zeros(3, 3)


def test_coordinate_basis_for_tangent_radical():
    M = tangent_model()
    assert not build_adapted_frame(M).completely_adapted
    assert fundamental_forms(M).basis.kind == "coordinate"


# -- deciders --------------------------------------------------------------


def _criteria(M):
    return {k: v.value for k, v in extendibility_by_criteria(M).items()}


def _laurent(M):
    return {k: v.extends for k, v in extendibility_by_laurent(M).items()}


def test_model_all_extend():
    assert _criteria(model()) == {"K": True, "Ric": True, "W": True}
    L = extendibility_by_laurent(model())
    assert all(v.extends and v.max_pole == 0 for v in L.values())


def test_tangent_model_nothing_extends():
    M = tangent_model()
    assert _criteria(M) == {"K": False, "Ric": False, "W": False}
    L = extendibility_by_laurent(M)
    assert not any(v.extends for v in L.values())
    w = L["W"]
    i, k, j, k2 = w.witness
    assert k == k2 and k not in (i, j)
    assert w.form.order == 2 and w.form.a2 == -sympy.Rational(1, 24)


def test_tangent_model_second_order_diagnostic():
    idx, val = w_second_order(tangent_model())
    assert idx is not None and idx[1] == idx[3]
    assert val == sympy.Rational(1, 12)
    assert w_second_order(model()) == (None, 0)


def test_warped_1pt():
    M = warped(1 + T, "flat")
    assert _criteria(M) == {"K": False, "Ric": False, "W": True}
    assert _laurent(M) == {"K": False, "Ric": False, "W": True}


# -- Σ geometry ------------------------------------------------------------


def test_gauss_model():
    assert gauss_check(model()).ok


@pytest.mark.parametrize("base", ["flat", "sphere"])
def test_gauss_warped(base):
    M = warped(1 + T**2, base)
    g = gauss_check(M)
    assert g.ok
    nonzero = any(v != 0 for v in sigma_geometry(M).K.reshape(-1))
    assert nonzero is (base == "sphere")


def test_gauss_preconditions():
    with pytest.raises(NotIIFlatError):
        gauss_check(perturbed())
    with pytest.raises(TangentRadicalError):
        gauss_check(tangent_model())


def test_sigma_geometry_model():
    sg = sigma_geometry(model())
    assert sg.chart.g == sympy.eye(3)
    assert all(v == 0 for v in sg.K.reshape(-1)) and sg.Sc == 0


def test_sigma_cotton():
    sph = sigma_geometry(warped(1 + T**2, "sphere"))
    assert all(v == 0 for v in sph.cotton.reshape(-1))
    gen = sigma_geometry(warped(1, base_generic3()))
    S = gen.chart
    vals = [abs(S.evaluate(v, p)) for v in gen.cotton.reshape(-1) if v != 0 for p in S.samples_off_sigma(5)]
    assert max(vals) > 1e-3


@pytest.mark.parametrize("M", [model(), warped(1, "flat"), warped(1, "sphere")], ids=["model", "flat", "sphere"])
def test_gap_and_B_vanish(M):
    assert schouten_gap(M) == sympy.zeros(3, 3)
    assert all(v == 0 for v in b_ijk(M).values())


@pytest.mark.parametrize("base", ["sphere", "s2xr"])
def test_gap_formula_matches_direct(base):
    M = warped(1, base)
    assert all(ex.is_zero(a - b) for a, b in zip(schouten_gap(M), schouten_gap_direct(M)))


def test_gap_needs_III_flat():
    with pytest.raises(PreconditionError):
        schouten_gap(warped(1 + T**2, "flat"))


def test_corollary_flat_implies_III_flat():
    for M in (model(), warped(1, "flat")):
        cl = classify(M)
        assert cl.radical_transverse.value and cl.III_flat.value
        assert all(v == 0 for v in sigma_geometry(M).K.reshape(-1))


# -- agreement over the shipped metrics ------------------------------------


@pytest.mark.parametrize("name,M", shipped_metrics(), ids=IDS)
def test_deciders_agree(name, M):
    rep = analyze(M, diagnostics=False)
    assert rep.all_agree
    assert all(v.evidence == "exact" for v in rep.verdicts.values())


def test_not_type_changing_raises():
    with pytest.raises(PreconditionError):
        classify(diag([1, 1, 1, x4**2]))


def test_opaque_evidence_is_numeric():
    from typechange.expr import FunctionDecl
    f = sympy.Function("f")
    M = warped(f(T), "flat", functions=(FunctionDecl("f", (1, 0, 2)),))
    rep = analyze(M, diagnostics=False)
    assert rep.all_agree
    assert {k: v.criteria for k, v in rep.verdicts.items()} == {"K": True, "Ric": False, "W": True}
    assert all(v.evidence == "numeric" for v in rep.verdicts.values())


# -- properties ------------------------------------------------------------

TRANSVERSE = {"model": model, "perturbed": perturbed, "conf_II": conformal_II_only,
              "conf_III": conformal_III_only, "warped": lambda: warped(1 + T, "flat")}


@st.composite
def units(draw):
    """Polynomials positive on the sampling box."""
    a, b = draw(st.integers(0, 3)), draw(st.integers(0, 3))
    c = draw(st.integers(-1, 1))
    return 1 + a * x1**2 + b * x2**2 + c * x4 * x3 / 2


def _scaled(M, u):
    u = u.subs(x4, M.tau_coord) if M.tau_coord != x4 else u
    u = u.subs({x1: M.coords[0], x2: M.coords[1], x3: M.coords[2]})
    return tuple(ex.canonicalize(u * c) for c in radical_field(M))


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(sorted(TRANSVERSE)), units())
def test_flags_independent_of_radical(name, u):
    M = TRANSVERSE[name]()
    R = _scaled(M, u)
    base = classify(M)
    assert is_II_flat(M, R).value == base.II_flat.value
    assert is_conformally_II_flat(M, R).value == base.conf_II_flat.value
    if base.II_flat.value:
        assert is_conformally_III_flat(M, R).value == base.conf_III_flat.value
        assert is_III_flat(M, R).value == base.III_flat.value


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(sorted(TRANSVERSE)), units(), st.sampled_from([1, -1]))
def test_canonical_radical_unique(name, u, sign):
    M = TRANSVERSE[name]()
    R0 = canonical_radical(M)
    R1 = canonical_radical(M, tuple(sign * c for c in _scaled(M, u)))
    for a, b in zip(R0, R1):
        assert ex.is_zero(ex.restrict_to_sigma(a - b, M.sigma))


_poly = st.builds(lambda a, b, c: a + b * x1 + c * x2, st.integers(-2, 2), st.integers(-2, 2), st.integers(-2, 2))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(sorted(TRANSVERSE)), st.lists(_poly, min_size=3, max_size=3), _poly,
       st.booleans())
def test_tangency_duality(name, comps, last, tangent):
    M = TRANSVERSE[name]()
    s = M.coords
    sub = {x1: s[0], x2: s[1]}
    X_ = [c.subs(sub) for c in comps] + [M.tau_coord * last.subs(sub) if tangent else 1 + 0 * last]
    lhs, rhs = tangency_duality(M, X_)
    assert lhs == rhs == tangent_to_sigma(M, X_)

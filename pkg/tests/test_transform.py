"""Forward/inverse transform: exactness, stability, and the paper-free
closed-form oracles (degenerate, Erlang, exponential images)."""

import math

import numpy as np
import pytest
from scipy.special import gammainc, gammaincc

from record_moments.distributions import (
    HRep,
    make_family,
    record_weight_integral,
    to_h_rep,
)
from record_moments.errors import ConfigurationError, DomainError
from record_moments.ers import ers_compute, validate_eq6
from record_moments.numerics import Tolerance, integrate_finite, integrate_halfline
from record_moments.transform import (
    TDist,
    c_T,
    invariance_check,
    phi,
    phi_inverse,
    roundtrip,
    t_dense_support_example,
    t_exponential,
    t_gamma,
    t_lognormal,
    t_stieltjes,
    tdist_from_json,
    v_density,
)

GAMMA = 0.5772156649015329
TWO_POINT = make_family("two_point", -1.0, 1 - math.exp(-1), math.e - 1)


# -- TDist basics ------------------------------------------------------------

def test_tdist_atom_validation():
    with pytest.raises(DomainError):
        TDist.from_atoms([(-1.0, 0.5), (1.0, 0.5)])
    with pytest.raises(ConfigurationError):
        TDist.from_atoms([(1.0, 0.6), (2.0, 0.6)])


def test_tdist_mixture_validation():
    a = TDist.degenerate(1.0)
    with pytest.raises(ConfigurationError):
        TDist.mixture([a, a], [0.5, 0.6])


def test_tdist_moments_atoms_and_gamma():
    d = TDist.from_atoms([(0.5, 0.25), (2.0, 0.75)])
    assert d.moment(2) == pytest.approx(0.25 * 0.25 + 0.75 * 4.0)
    g = t_gamma(2.0, 1.0)
    for n in range(5):
        assert g.moment(n) == pytest.approx(math.factorial(n + 1), rel=1e-12)


def test_tdist_gamma_moment_quadrature_matches_closed_form():
    g = t_gamma(1.7, 0.8)
    for n in (1, 3):
        closed = g.moment(n)
        assert g._density_integral(n) == pytest.approx(closed, rel=1e-9)


def test_tdist_lognormal_moments():
    ln = t_lognormal(0.0, 1.0)
    for n in (1, 2, 4):
        assert ln.moment(n) == pytest.approx(math.exp(n**2 / 2), rel=1e-12)
        assert ln._density_integral(n) == pytest.approx(math.exp(n**2 / 2), rel=1e-8)


def test_tdist_json():
    d = tdist_from_json('{"kind": "atoms", "atoms": [[1.0, 1.0]]}')
    assert d.atoms == ((1.0, 1.0),)
    s = tdist_from_json('{"kind": "stieltjes_lambda", "lambda": 0.5}')
    assert s.known_indeterminate
    g = tdist_from_json({"kind": "density", "family": "gamma", "shape": 2, "rate": 1})
    assert g.moment(1) == pytest.approx(2.0)
    with pytest.raises(ConfigurationError):
        tdist_from_json('{"kind": "nope"}')


# -- centering constant --------------------------------------------------------

def test_c_T_degenerate_values():
    assert c_T(TDist.degenerate(1.0)) == pytest.approx(1.0, abs=1e-14)
    assert c_T(TDist.degenerate(2.0)) == pytest.approx(0.5, abs=1e-14)


def test_c_T_erlang_against_quadrature_oracle():
    # oracle: one-shot composite quadrature of t e^{-t} g(t) on a fine grid
    val = c_T(t_gamma(2.0, 1.0))
    ts = np.linspace(1e-9, 60.0, 2_000_001)
    mid = 0.5 * (ts[1:] + ts[:-1])
    g = np.where(mid > 1.0, 1.0 / mid, (math.e * mid - np.expm1(mid)) / mid)
    oracle = float(np.sum(mid * np.exp(-mid) * g) * (ts[1] - ts[0]))
    assert val == pytest.approx(oracle, abs=1e-9)
    assert val == pytest.approx(math.e - 2.0, abs=1e-12)


def test_c_T_consistent_across_forms():
    # the same distribution through density and cdf evaluators
    g_density = t_gamma(2.5, 1.3)
    g_cdf = TDist.from_cdf(
        lambda t: gammainc(2.5, 1.3 * np.maximum(np.asarray(t, dtype=float), 0.0)),
        survival_left=lambda t: gammaincc(2.5, 1.3 * np.maximum(np.asarray(t, dtype=float), 0.0)))
    assert c_T(g_cdf) == pytest.approx(c_T(g_density), abs=1e-9)


# -- forward map ----------------------------------------------------------------

def test_phi_exponential_is_erlang2():
    T = phi(make_family("exponential", 1.0))
    ts = np.linspace(0.05, 12.0, 60)
    np.testing.assert_allclose(T.cdf_left(ts), gammainc(2, ts), atol=1e-7)
    np.testing.assert_allclose(T.moments_cache[1:4],
                               [2.0, 6.0, 24.0], rtol=1e-7)


def test_phi_log_record_is_exponential():
    T = phi(make_family("log_record"))
    ts = np.linspace(0.05, 12.0, 60)
    np.testing.assert_allclose(T.cdf_left(ts), -np.expm1(-ts), atol=1e-7)


def test_phi_two_point_is_degenerate():
    T = phi(TWO_POINT)
    assert T.atoms is not None and len(T.atoms) == 1
    t0, p0 = T.atoms[0]
    assert t0 == pytest.approx(1.0, abs=1e-14)
    assert p0 == 1.0
    assert float(T.cdf_left(np.array([1.0]))[0]) == 0.0
    assert float(T.cdf_left(np.array([1.0 + 1e-12]))[0]) == 1.0


def test_phi_rejects_constant():
    with pytest.raises(DomainError):
        phi(make_family("constant", 0.5))


def test_phi_tail_survival_is_relatively_accurate():
    T = phi(make_family("exponential", 1.0))
    ts = np.array([15.0, 25.0, 35.0])
    np.testing.assert_allclose(T.survival_left(ts), gammaincc(2, ts), rtol=1e-8)


def test_phi_moments_from_cdf_match_record_derived():
    T = phi(make_family("lognormal", 0.0, 0.5))
    for n in range(1, 7):
        tail = T.moment_by_tail_quadrature(n)
        assert tail == pytest.approx(T.moments_cache[n], rel=1e-5)


# -- gap density ----------------------------------------------------------------

def test_v_density_normalizer_equals_record_gap():
    d = make_family("exponential", 1.0)
    v = v_density(d)
    seq = ers_compute(d, 2)
    assert v.normalizer == pytest.approx(seq.rho[1] - seq.rho[0], abs=1e-8)
    xs = np.linspace(-1.0, 30.0, 301)
    vals = v.f_v(xs)
    assert np.all(vals >= 0)
    assert vals[0] == 0.0  # vanishes where F = 0
    total = integrate_finite(v.f_v, 0.0, 60.0, Tolerance(1e-10, 1e-9, 3000))
    assert total.value == pytest.approx(1.0, abs=1e-8)


# -- inverse map ------------------------------------------------------------------

def test_phi_inverse_degenerate_closed_form():
    h = phi_inverse(TDist.degenerate(1.0))
    assert float(h.h(np.array([0.4]))[0]) == pytest.approx(-1.0, abs=1e-14)
    assert float(h.h(np.array([1.0]))[0]) == pytest.approx(-1.0, abs=1e-14)
    assert float(h.h(np.array([3.0]))[0]) == pytest.approx(math.e - 1, abs=1e-14)
    # lands in the normalized class
    assert record_weight_integral(h, 0).value == pytest.approx(0.0, abs=1e-10)
    assert record_weight_integral(h, 1).value == pytest.approx(1.0, abs=1e-10)


def test_phi_inverse_erlang_is_linear():
    h = phi_inverse(t_gamma(2.0, 1.0))
    ys = np.geomspace(0.05, 30.0, 50)
    np.testing.assert_allclose(h.h(ys), ys - 1.0, atol=1e-7)


def test_phi_inverse_exponential_is_log():
    h = phi_inverse(t_exponential(1.0))
    ys = np.geomspace(0.05, 30.0, 50)
    np.testing.assert_allclose(h.h(ys), np.log(ys) + GAMMA, atol=1e-7)


def test_phi_inverse_lands_in_normalized_class():
    for T in (t_gamma(1.3, 0.9), t_lognormal(0.2, 0.8),
              TDist.from_atoms([(0.5, 0.3), (1.5, 0.7)])):
        h = phi_inverse(T)
        assert record_weight_integral(h, 0).value == pytest.approx(0.0, abs=1e-7)
        assert record_weight_integral(h, 1).value == pytest.approx(1.0, abs=1e-7)
        ys = np.geomspace(1e-3, 35.0, 500)
        hv = h.h(ys)
        assert np.all(np.diff(hv) >= -1e-9)


def test_phi_inverse_sign_structure():
    # recentered by c_T - e F_T(1-), the output is <= 0 up to 1 and >= 0 after
    for T in (t_gamma(2.0, 1.0), TDist.from_atoms([(0.5, 0.4), (2.0, 0.6)])):
        h = phi_inverse(T)
        shift = c_T(T) - math.e * float(T.cdf_left(np.array([1.0]))[0])
        ys = np.geomspace(1e-3, 25.0, 400)
        shifted = h.h(ys) + shift
        assert np.all(shifted[ys <= 1.0] <= 1e-9)
        assert np.all(shifted[ys >= 1.0] >= -1e-9)


def test_phi_inverse_strict_increase_across_support():
    # support of T inside an interval forces strict growth of H0 there
    h = phi_inverse(t_gamma(2.0, 1.0))
    ys = np.linspace(0.5, 6.0, 40)
    assert np.all(np.diff(h.h(ys)) > 0)


def test_eq_4_6_identity_on_reconstructions():
    # int (y^k - k!) e^{-y} H0 dy = k! sum_{j<k} E T^j/(j+1)!
    for T in (t_gamma(2.0, 1.0), TDist.from_atoms([(0.8, 0.5), (1.6, 0.5)])):
        h = phi_inverse(T)
        for k in range(1, 7):
            lhs = math.factorial(k) * (record_weight_integral(h, k).value
                                       - record_weight_integral(h, 0).value)
            rhs = math.factorial(k) * sum(T.moment(j) / math.factorial(j + 1)
                                          for j in range(k))
            assert lhs == pytest.approx(rhs, rel=1e-6), (T.label, k)


def test_centering_identity_lemma():
    # int e^{-y} (H0 + c - e F(1-)) dy = c - e F(1-)
    for T in (t_gamma(2.0, 1.0), t_exponential(1.0),
              TDist.from_atoms([(0.5, 0.4), (2.0, 0.6)])):
        h = phi_inverse(T)
        shift = c_T(T) - math.e * float(T.cdf_left(np.array([1.0]))[0])

        def shifted(y, h=h, s=shift):
            return np.exp(-np.asarray(y, dtype=float)) * (
                np.asarray(h.h(y), dtype=float) + s)

        res = integrate_halfline(shifted, breakpoints=h.breakpoints)
        assert res.value == pytest.approx(shift, abs=1e-7), T.label


# -- round trips -------------------------------------------------------------------

@pytest.mark.parametrize("name,args,tol", [
    ("exponential", (1.0,), 1e-6),
    ("log_record", (), 1e-6),
    ("lognormal", (0.0, 1.0), 1e-6),
])
def test_roundtrip_continuous(name, args, tol):
    rep = roundtrip(make_family(name, *args))
    assert rep.sup_distance < tol


def test_roundtrip_two_point_exact_off_jumps():
    rep = roundtrip(TWO_POINT)
    assert rep.sup_distance < 1e-12


def test_two_sided_inverse():
    # phi(phi_inverse(T)) must reproduce the distribution function of T
    cases = [
        (TDist.degenerate(1.0), None),
        (t_gamma(2.0, 1.0), lambda t: gammainc(2, t)),
        (t_exponential(1.0), lambda t: -np.expm1(-t)),
    ]
    for T, cdf in cases:
        back = phi(phi_inverse(T))
        if cdf is None:
            assert back.atoms is not None
            assert back.atoms[0][0] == pytest.approx(1.0, abs=1e-12)
        else:
            ts = np.linspace(0.1, 10.0, 25)
            np.testing.assert_allclose(back.cdf_left(ts), cdf(ts), atol=2e-6)


def test_validate_eq6_through_transform():
    report = validate_eq6(make_family("exponential", 1.0), t_gamma(2.0, 1.0), 10)
    assert report.max_rel_discrepancy < 1e-7
    report2 = validate_eq6(make_family("log_record"), t_exponential(1.0), 8)
    assert report2.max_rel_discrepancy < 1e-7
    report3 = validate_eq6(TWO_POINT, TDist.degenerate(1.0), 8)
    assert report3.max_rel_discrepancy < 1e-9


# -- invariance ---------------------------------------------------------------------

def test_invariance_under_affine_maps():
    rep = invariance_check(make_family("exponential", 1.0), 5.0, 3.0)
    assert rep.max_discrepancy < 1e-7
    rep2 = invariance_check(TWO_POINT, -2.0, 0.5)
    assert rep2.max_discrepancy < 1e-9


def test_invariance_identity_is_exact():
    rep = invariance_check(make_family("exponential", 1.0), 0.0, 1.0)
    assert rep.max_discrepancy == 0.0


def test_invariance_rejects_nonpositive_scale():
    with pytest.raises(DomainError):
        invariance_check(make_family("exponential", 1.0), 0.0, -1.0)


# -- dense-support discrete example ---------------------------------------------------

def test_dense_support_example():
    T = t_dense_support_example()
    assert abs(sum(p for _, p in T.atoms) - 1.0) < 1e-12
    assert all(t > 0 for t, _ in T.atoms)
    h = phi_inverse(T)
    # the truncated support is dense only down to the largest rational
    # gap (~1/7 here), so strict growth is asserted on a coarser grid
    ys = np.linspace(0.2, 10.0, 60)
    hv = h.h(ys)
    assert np.all(np.diff(hv) > 0)

    from record_moments.ers import ers_to_t_moments
    from record_moments.moments import stieltjes_feasibility
    seq = ers_compute(h, 8, check_membership=False)
    ms = stieltjes_feasibility(ers_to_t_moments(seq))
    assert ms.feasible_stieltjes
    assert ms.determinacy_hint == "likely_determinate"

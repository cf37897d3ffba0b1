"""Family construction, the exponential coordinate, and membership checks."""

import math

import numpy as np
import pytest

from record_moments.distributions import (
    HRep,
    affine,
    distribution_from_json,
    make_family,
    membership_check,
    standardize,
    to_h_rep,
)
from record_moments.errors import ConfigurationError, DegenerateInputError
from record_moments.numerics import Tolerance, integrate_halfline, invert_monotone

GAMMA = 0.5772156649015329


def test_exponential_quantile_closed_form():
    d = make_family("exponential", 1.0)
    u = np.array([0.1, 0.5, 0.9])
    np.testing.assert_allclose(d.quantile(u), -np.log1p(-u), rtol=1e-14)


def test_bernoulli_quantile_display():
    d = make_family("bernoulli", 0.5)
    assert float(d.quantile(0.3)) == 0.0
    assert float(d.quantile(0.5)) == 0.0   # left continuity at the jump
    assert float(d.quantile(0.7)) == 1.0


def test_two_point_fixture_quantile():
    d = make_family("two_point", -1.0, 1 - math.exp(-1), math.e - 1)
    assert float(d.quantile(0.2)) == -1.0
    assert float(d.quantile(1 - math.exp(-1))) == -1.0
    assert float(d.quantile(0.9)) == pytest.approx(math.e - 1)


def test_unknown_family_and_bad_params():
    with pytest.raises(ConfigurationError):
        make_family("does_not_exist")
    with pytest.raises(ConfigurationError):
        make_family("exponential", -2.0)
    with pytest.raises(ConfigurationError):
        make_family("two_point", 1.0, 0.5, -1.0)


def test_json_loader():
    d = distribution_from_json('{"kind": "exponential", "rate": 2.0}')
    assert float(d.quantile(0.5)) == pytest.approx(math.log(2) / 2)
    d2 = distribution_from_json({"kind": "piecewise_quantile",
                                 "knots": [[0.25, -1.0], [0.75, 2.0]]})
    assert float(d2.quantile(0.5)) == pytest.approx(0.5)
    with pytest.raises(ConfigurationError):
        distribution_from_json('{"kind": "piecewise_quantile", "knots": [[0.8, 0], [0.2, 1]]}')
    with pytest.raises(ConfigurationError):
        distribution_from_json('{"no_kind": 1}')
    with pytest.raises(ConfigurationError):
        distribution_from_json('{"kind": "exponential", "rate": 1, "oops": 2}')


def test_h_rep_exponential_identity():
    h = to_h_rep(make_family("exponential", 1.0))
    ys = np.array([0.2, 1.0, 7.0, 50.0, 400.0])
    np.testing.assert_allclose(h(ys), ys, rtol=1e-14)


def test_h_rep_log_record():
    h = to_h_rep(make_family("log_record"))
    ys = np.array([0.5, 1.0, 10.0, 90.0])
    np.testing.assert_allclose(h(ys), np.log(ys), rtol=1e-12, atol=1e-12)


def test_h_rep_bernoulli_step():
    h = to_h_rep(make_family("bernoulli", 0.5))
    assert float(h(0.5)) == 0.0
    assert float(h(math.log(2))) == 0.0   # left continuity at the jump
    assert float(h(math.log(2) + 1e-12)) == 1.0
    assert h.step is not None
    np.testing.assert_allclose(h.step[0], [math.log(2)])


def test_h_rep_round_trips_quantile():
    # u -> -log(1-u) -> H must reproduce the quantile pointwise
    for name, args in [("exponential", (1.0,)), ("lognormal", (0.0, 1.0)),
                       ("gumbel", ()), ("uniform", (-2.0, 5.0))]:
        d = make_family(name, *args)
        h = to_h_rep(d)
        us = np.linspace(0.01, 0.99, 197)
        np.testing.assert_allclose(h(-np.log1p(-us)), d.quantile(us),
                                   rtol=1e-10, atol=1e-12, err_msg=name)


def test_membership_linear_h():
    rep = membership_check(to_h_rep(make_family("exponential", 1.0)), 4)
    assert rep.in_H_star and not rep.in_H_zero
    expected = [math.factorial(m + 1) for m in range(5)]
    np.testing.assert_allclose([v for _, v, _ in rep.moment_integrals],
                               expected, rtol=1e-8)
    assert rep.rho1 == pytest.approx(1.0, abs=1e-8)
    assert rep.rho2 == pytest.approx(2.0, abs=1e-8)


def test_membership_normalized_source():
    # (X - 1)/(2 - 1) for X exponential has H(y) = y - 1
    d0 = standardize(make_family("exponential", 1.0), 1.0, 2.0)
    rep = membership_check(to_h_rep(d0), 4)
    assert rep.in_H_zero
    assert rep.rho1 == pytest.approx(0.0, abs=1e-8)
    assert rep.rho2 == pytest.approx(1.0, abs=1e-8)


def test_membership_rejects_constants():
    rep = membership_check(to_h_rep(make_family("constant", 3.0)), 4)
    assert not rep.in_H_star
    assert not rep.non_constant


def test_membership_battery():
    for name, args in [("exponential", (1.0,)), ("log_record", ()),
                       ("lognormal", (0.0, 1.0)), ("bernoulli", (0.5,)),
                       ("two_point", (-1.0, 1 - math.exp(-1), math.e - 1))]:
        rep = membership_check(to_h_rep(make_family(name, *args)), 4)
        assert rep.in_H_star, name


def test_membership_flags_divergence():
    grow = HRep(h=lambda y: np.exp(np.asarray(y, dtype=float)))
    rep = membership_check(grow, 3)
    assert not rep.in_H_star
    assert rep.failing_order == 0


def test_heavy_tail_regression_fixture():
    # all record expectations finite although E X^{1+delta} diverges
    d = make_family("heavy_tail", 0.0)
    h = to_h_rep(d)
    rep = membership_check(h, 6)
    assert rep.in_H_star
    # int_0^oo y^6 e^{-y} H(y) dy = 2*Gamma(14) plus the O(1) piece below y=1
    assert rep.moment_integrals[6][1] == pytest.approx(2 * math.gamma(14), rel=1e-4)

    # truncated estimates of E |X|^{1.5} keep growing: no 1+delta moment
    delta = 0.5

    def g(y):
        y = np.asarray(y, dtype=float)
        hy = np.where(y <= 1.0, y, np.exp(np.minimum(y - np.sqrt(np.maximum(y, 1.0)), 500.0)))
        return np.exp(-y) * hy ** (1 + delta)

    tol = Tolerance(abs_tol=1e-6, rel_tol=1e-6, max_subdivisions=4000)
    vals = [integrate_halfline(g, tol, truncate_at=Y, tail_bound=0.0).value
            for Y in (100.0, 200.0, 400.0)]
    assert vals[1] > 2 * vals[0]
    assert vals[2] > 2 * vals[1]


def test_quantile_agrees_with_cdf_inversion_continuous():
    rng = np.random.default_rng(7)
    us = rng.uniform(0.005, 0.995, size=10_000)
    for name, args, bracket in [("exponential", (1.0,), (0.0, 50.0)),
                                ("lognormal", (0.0, 1.0), (1e-9, 1e4)),
                                ("uniform", (-1.0, 3.0), (-1.0, 3.0))]:
        d = make_family(name, *args)
        sample = us[:100]  # bisection is scalar; keep runtime moderate
        inv = np.array([invert_monotone(d.cdf, u, bracket) for u in sample])
        np.testing.assert_allclose(inv, d.quantile(sample), atol=1e-9, rtol=1e-7,
                                   err_msg=name)


def test_quantile_agrees_with_cdf_inversion_discrete():
    d = make_family("two_point", -1.0, 0.4, 2.0)
    for u in (0.1, 0.39, 0.41, 0.9):
        assert invert_monotone(d.cdf, u, (-5.0, 5.0)) == pytest.approx(
            float(d.quantile(u)), abs=1e-9)


def test_galois_inequalities():
    rng = np.random.default_rng(11)
    xs = rng.uniform(-3, 8, size=500)
    us = rng.uniform(0.01, 0.99, size=500)
    for name, args in [("exponential", (1.0,)), ("lognormal", (0.0, 1.0)),
                       ("bernoulli", (0.3,))]:
        d = make_family(name, *args)
        F = np.asarray(d.cdf(xs), dtype=float)
        inside = (F > 0) & (F < 1)
        q_of_f = d.quantile(F[inside])
        assert np.all(q_of_f <= xs[inside] + 1e-9), name
        f_of_q = d.cdf(d.quantile(us))
        assert np.all(f_of_q >= us - 1e-9), name


def test_standardize_exponential():
    d = standardize(make_family("exponential", 1.0), 1.0, 2.0)
    us = np.linspace(0.05, 0.95, 50)
    np.testing.assert_allclose(d.quantile(us), -np.log1p(-us) - 1.0, rtol=1e-12)


def test_standardize_identity_case():
    base = make_family("uniform", 0.0, 1.0)
    d = standardize(base, 0.0, 1.0)
    us = np.linspace(0.05, 0.95, 50)
    np.testing.assert_allclose(d.quantile(us), base.quantile(us), rtol=1e-14)


def test_standardize_log_record():
    d = standardize(make_family("log_record"), -GAMMA, 1.0 - GAMMA)
    us = np.linspace(0.05, 0.95, 50)
    np.testing.assert_allclose(d.quantile(us), np.log(-np.log1p(-us)) + GAMMA,
                               rtol=1e-10, atol=1e-12)


def test_standardize_rejects_degenerate():
    with pytest.raises(DegenerateInputError):
        standardize(make_family("exponential", 1.0), 2.0, 2.0)


def test_affine_transforms_atoms_and_cdf():
    d = affine(make_family("bernoulli", 0.5), -2.0, 0.5)
    assert d.atoms == ((-2.0, 0.5), (-1.5, 0.5))
    assert float(d.cdf(-2.0)) == 0.5
    assert float(d.quantile(0.75)) == -1.5


def test_piecewise_quantile_monotone_and_clamped():
    d = make_family("piecewise_quantile", [[0.2, -1.0], [0.5, 0.0], [0.9, 4.0]])
    assert float(d.quantile(0.05)) == -1.0   # clamped: atom at the left end
    assert float(d.quantile(0.99)) == 4.0
    us = np.linspace(0.01, 0.99, 101)
    q = d.quantile(us)
    assert np.all(np.diff(q) >= 0)


def test_erlang_h_native_matches_quantile():
    d = make_family("erlang", 3, 2.0)
    h = to_h_rep(d)
    us = np.linspace(0.01, 0.99, 99)
    np.testing.assert_allclose(h(-np.log1p(-us)), d.quantile(us), rtol=1e-9)

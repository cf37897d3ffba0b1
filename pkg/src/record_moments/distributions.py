"""Distribution representations and the exponential-coordinate view.

A distribution is represented primarily by its left-continuous inverse
distribution function (quantile) on (0,1); cdf, density and atom data
are optional derived views.  The canonical computational coordinate is
``H(y) = quantile(1 - exp(-y))`` on (0, oo), under which the n-th record
of the distribution is H evaluated at an Erlang(n,1) variable.  Built-in
families carry a hand-written H so that large-y evaluation does not lose
precision to the saturation of ``1 - exp(-y)`` near u = 1.

``membership_check`` verifies the integrability conditions
``int y^m e^{-y} |H(y)| dy < oo`` that make every expected record finite,
and reports whether the distribution is additionally normalized so its
first two expected records are 0 and 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gammainc, gammaincc, gammaincinv, gammainccinv, ndtr, ndtri

from .errors import ConfigurationError, DegenerateInputError, DomainError
from .numerics import (
    DEFAULT_TOL,
    Tolerance,
    choose_truncation,
    integrate_halfline,
    poly_exp_tail_integral,
)

_U_CAP = np.nextafter(1.0, 0.0)

# |rho1| and |rho2 - 1| below this count as "normalized"
H_ZERO_TOL = 1e-7


@dataclass(frozen=True)
class QuantileRep:
    """A distribution given by its left-continuous inverse d.f.

    ``atoms`` lists (location, mass) pairs sorted by location; when the
    masses sum to 1 the distribution is purely discrete and downstream
    code switches to exact finite-sum evaluation.
    """

    quantile: Callable
    cdf: Optional[Callable] = None
    pdf: Optional[Callable] = None
    atoms: Optional[tuple] = None
    support_hint: tuple = (-math.inf, math.inf)
    label: str = ""
    h_native: Optional[Callable] = None
    h_breakpoints: tuple = ()
    log_h_native: Optional[Callable] = None

    def __post_init__(self):
        if self.atoms is not None:
            masses = [m for _, m in self.atoms]
            xs = [x for x, _ in self.atoms]
            if any(not 0 < m <= 1 for m in masses):
                raise ConfigurationError("atom masses must lie in (0, 1]")
            if sum(masses) > 1 + 1e-12:
                raise ConfigurationError("atom masses must sum to at most 1")
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise ConfigurationError("atom locations must be strictly increasing")

    @property
    def is_discrete(self) -> bool:
        return self.atoms is not None and abs(sum(m for _, m in self.atoms) - 1) <= 1e-12


@dataclass(frozen=True)
class HRep:
    """A distribution in the exponential coordinate, X = H(E).

    ``step`` holds (jump_points, values) for purely discrete sources:
    H equals values[i] on (jump_points[i-1], jump_points[i]] with an
    implicit final interval reaching infinity.  ``t_source`` is set on
    representations produced by the inverse transform and records the
    positive random variable they were reconstructed from.  ``log_h``,
    when present, evaluates log(H(y)) stably where H overflows.
    """

    h: Callable
    source: Optional[QuantileRep] = None
    breakpoints: tuple = ()
    step: Optional[tuple] = None
    t_source: Optional[object] = None
    log_h: Optional[Callable] = None

    def __call__(self, y):
        return self.h(y)

    def quantile(self, u):
        """View back in the unit coordinate: u -> H(-log(1-u))."""
        u = np.asarray(u, dtype=float)
        return self.h(-np.log1p(-np.minimum(u, _U_CAP)))


@dataclass(frozen=True)
class MembershipReport:
    """Outcome of the record-integrability diagnostics."""

    max_order_checked: int
    moment_integrals: tuple
    in_H_star: bool
    in_H_zero: bool
    rho1: float
    rho2: float
    failing_order: Optional[int] = None
    non_constant: bool = True


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------

def _exponential(rate: float = 1.0) -> QuantileRep:
    if rate <= 0:
        raise ConfigurationError("exponential rate must be positive")
    return QuantileRep(
        quantile=lambda u: -np.log1p(-np.asarray(u, dtype=float)) / rate,
        cdf=lambda x: np.where(np.asarray(x) > 0, -np.expm1(-rate * np.maximum(x, 0.0)), 0.0),
        pdf=lambda x: np.where(np.asarray(x) > 0, rate * np.exp(-rate * np.maximum(x, 0.0)), 0.0),
        support_hint=(0.0, math.inf),
        label=f"exponential(rate={rate:g})",
        h_native=lambda y: np.asarray(y, dtype=float) / rate,
    )


def _uniform(a: float = 0.0, b: float = 1.0) -> QuantileRep:
    if not b > a:
        raise ConfigurationError("uniform needs a < b")
    return QuantileRep(
        quantile=lambda u: a + (b - a) * np.asarray(u, dtype=float),
        cdf=lambda x: np.clip((np.asarray(x, dtype=float) - a) / (b - a), 0.0, 1.0),
        pdf=lambda x: np.where((np.asarray(x) >= a) & (np.asarray(x) <= b), 1.0 / (b - a), 0.0),
        support_hint=(a, b),
        label=f"uniform({a:g},{b:g})",
        h_native=lambda y: a - (b - a) * np.expm1(-np.asarray(y, dtype=float)),
    )


def _log_record() -> QuantileRep:
    # H(y) = log y; the quantile is u -> log(-log(1-u))
    return QuantileRep(
        quantile=lambda u: np.log(-np.log1p(-np.asarray(u, dtype=float))),
        cdf=lambda x: -np.expm1(-np.exp(np.asarray(x, dtype=float))),
        pdf=lambda x: np.exp(np.asarray(x, dtype=float) - np.exp(np.asarray(x, dtype=float))),
        support_hint=(-math.inf, math.inf),
        label="log_record",
        h_native=lambda y: np.log(np.asarray(y, dtype=float)),
    )


def _gumbel() -> QuantileRep:
    def h(y):
        y = np.asarray(y, dtype=float)
        return -np.log(-np.log1p(-np.exp(-y)))

    return QuantileRep(
        quantile=lambda u: -np.log(-np.log(np.asarray(u, dtype=float))),
        cdf=lambda x: np.exp(-np.exp(-np.asarray(x, dtype=float))),
        pdf=lambda x: np.exp(-np.asarray(x, dtype=float) - np.exp(-np.asarray(x, dtype=float))),
        support_hint=(-math.inf, math.inf),
        label="gumbel",
        h_native=h,
    )


def _lognormal(mu: float = 0.0, sigma: float = 1.0) -> QuantileRep:
    if sigma <= 0:
        raise ConfigurationError("lognormal sigma must be positive")

    def cdf(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0
        out = np.where(pos, ndtr((np.log(np.where(pos, x, 1.0)) - mu) / sigma), 0.0)
        return out

    def pdf(x):
        x = np.asarray(x, dtype=float)
        pos = x > 0
        z = (np.log(np.where(pos, x, 1.0)) - mu) / sigma
        return np.where(pos, np.exp(-0.5 * z * z) / (np.where(pos, x, 1.0) * sigma * math.sqrt(2 * math.pi)), 0.0)

    return QuantileRep(
        quantile=lambda u: np.exp(mu + sigma * ndtri(np.asarray(u, dtype=float))),
        cdf=cdf,
        pdf=pdf,
        support_hint=(0.0, math.inf),
        label=f"lognormal({mu:g},{sigma:g})",
        # Phi^{-1}(1 - e^{-y}) = -Phi^{-1}(e^{-y}), stable for large y
        h_native=lambda y: np.exp(mu - sigma * ndtri(np.exp(-np.asarray(y, dtype=float)))),
    )


def _two_point(x1: float, p: float, x2: float) -> QuantileRep:
    if not 0 < p < 1:
        raise ConfigurationError("two_point mass p must lie in (0,1)")
    if not x2 > x1:
        raise ConfigurationError("two_point needs x1 < x2")
    y_jump = -math.log1p(-p)
    return QuantileRep(
        quantile=lambda u: np.where(np.asarray(u, dtype=float) <= p, x1, x2),
        cdf=lambda x: np.where(np.asarray(x) < x1, 0.0, np.where(np.asarray(x) < x2, p, 1.0)),
        atoms=((x1, p), (x2, 1.0 - p)),
        support_hint=(x1, x2),
        label=f"two_point({x1:g},{p:g},{x2:g})",
        h_native=lambda y: np.where(np.asarray(y, dtype=float) <= y_jump, x1, x2),
        h_breakpoints=(y_jump,),
    )


def _bernoulli(p: float = 0.5) -> QuantileRep:
    d = _two_point(0.0, 1.0 - p, 1.0)
    return replace(d, label=f"bernoulli({p:g})")


def _piecewise_quantile(knots: Sequence) -> QuantileRep:
    knots = [(float(u), float(x)) for u, x in knots]
    if len(knots) < 2:
        raise ConfigurationError("piecewise_quantile needs at least two knots")
    us = np.array([u for u, _ in knots])
    xs = np.array([x for _, x in knots])
    if not (np.all(np.diff(us) > 0) and us[0] > 0 and us[-1] < 1):
        raise ConfigurationError("knot u-values must be strictly increasing inside (0,1)")
    if np.any(np.diff(xs) < 0):
        raise ConfigurationError("knot x-values must be non-decreasing")
    atoms = []
    if us[0] > 0:
        atoms.append((float(xs[0]), float(us[0])))
    if us[-1] < 1:
        atoms.append((float(xs[-1]), float(1 - us[-1])))
    strictly = bool(np.all(np.diff(xs) > 0))

    def cdf(x):
        x = np.asarray(x, dtype=float)
        inner = np.interp(x, xs, us)
        return np.where(x < xs[0], 0.0, np.where(x >= xs[-1], 1.0, inner))

    return QuantileRep(
        quantile=lambda u: np.interp(np.asarray(u, dtype=float), us, xs),
        cdf=cdf if strictly else None,
        atoms=tuple(atoms) if atoms and xs[0] != xs[-1] else None,
        support_hint=(float(xs[0]), float(xs[-1])),
        label="piecewise_quantile",
        h_native=lambda y: np.interp(-np.expm1(-np.asarray(y, dtype=float)), us, xs),
        h_breakpoints=tuple(-math.log1p(-u) for u in us),
    )


def _erlang(k: int, rate: float = 1.0) -> QuantileRep:
    if int(k) != k or k < 1 or rate <= 0:
        raise ConfigurationError("erlang needs integer k >= 1 and rate > 0")
    k = int(k)
    return QuantileRep(
        quantile=lambda u: gammaincinv(k, np.asarray(u, dtype=float)) / rate,
        cdf=lambda x: gammainc(k, rate * np.maximum(np.asarray(x, dtype=float), 0.0)),
        pdf=lambda x: np.where(
            np.asarray(x) > 0,
            rate * (rate * np.maximum(np.asarray(x, dtype=float), 1e-300)) ** (k - 1)
            * np.exp(-rate * np.maximum(np.asarray(x, dtype=float), 0.0)) / math.factorial(k - 1),
            0.0,
        ),
        support_hint=(0.0, math.inf),
        label=f"erlang({k},{rate:g})",
        h_native=lambda y: gammainccinv(k, np.exp(-np.asarray(y, dtype=float))) / rate,
    )


def _constant(value: float = 0.0) -> QuantileRep:
    return QuantileRep(
        quantile=lambda u: np.full_like(np.asarray(u, dtype=float), value),
        cdf=lambda x: np.where(np.asarray(x) >= value, 1.0, 0.0),
        atoms=((value, 1.0),),
        support_hint=(value, value),
        label=f"constant({value:g})",
        h_native=lambda y: np.full_like(np.asarray(y, dtype=float), value),
    )


def _heavy_tail(c: float = 0.0) -> QuantileRep:
    # H(y) = y on (0,1], exp(y - sqrt(y)) beyond, shifted by -c: every
    # record has a finite expectation, yet E X^{1+delta} = oo for all
    # delta > 0, so the distribution sits outside every L^{1+delta}
    def h(y):
        y = np.asarray(y, dtype=float)
        safe = np.maximum(y, 1e-300)
        return np.where(y <= 1.0, y, np.exp(safe - np.sqrt(safe))) - c

    def cdf(x):
        x = np.asarray(x, dtype=float) + c
        small = -np.expm1(-np.clip(x, 0.0, 1.0))
        lx = np.log(np.maximum(x, 1.0))
        s = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * lx))
        big = -np.expm1(-s * s)
        return np.where(x <= 0, 0.0, np.where(x <= 1.0, small, big))

    def log_h(y):
        y = np.asarray(y, dtype=float)
        e = y - np.sqrt(np.maximum(y, 1.0))
        return e + np.log1p(-c * np.exp(np.minimum(-e, 0.0)))

    return QuantileRep(
        quantile=lambda u: h(-np.log1p(-np.minimum(np.asarray(u, dtype=float), _U_CAP))),
        cdf=cdf,
        support_hint=(-c, math.inf),
        label=f"heavy_tail(c={c:g})",
        h_native=h,
        h_breakpoints=(1.0,),
        log_h_native=log_h,
    )


_FAMILIES = {
    "exponential": _exponential,
    "uniform": _uniform,
    "log_record": _log_record,
    "gumbel": _gumbel,
    "lognormal": _lognormal,
    "bernoulli": _bernoulli,
    "two_point": _two_point,
    "piecewise_quantile": _piecewise_quantile,
    "erlang": _erlang,
    "constant": _constant,
    "heavy_tail": _heavy_tail,
}


def make_family(name: str, *params) -> QuantileRep:
    """Construct a built-in family by name and positional parameters."""
    try:
        builder = _FAMILIES[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown family {name!r}; known: {sorted(_FAMILIES)}") from None
    try:
        return builder(*params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for family {name!r}: {exc}") from None


_JSON_PARAM_ORDER = {
    "exponential": ("rate",),
    "uniform": ("a", "b"),
    "log_record": (),
    "gumbel": (),
    "lognormal": ("mu", "sigma"),
    "bernoulli": ("p",),
    "two_point": ("x1", "p", "x2"),
    "piecewise_quantile": ("knots",),
    "erlang": ("k", "rate"),
    "constant": ("value",),
    "heavy_tail": ("c",),
}


def distribution_from_json(spec) -> QuantileRep:
    """Build a QuantileRep from a JSON object/string of the documented
    schema, e.g. ``{"kind": "exponential", "rate": 1.0}`` or
    ``{"kind": "piecewise_quantile", "knots": [[0.25, -1.0], [0.75, 2.0]]}``."""
    if isinstance(spec, str):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid distribution JSON: {exc}") from None
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigurationError("distribution JSON must be an object with a 'kind' key")
    kind = spec["kind"]
    if kind not in _JSON_PARAM_ORDER:
        raise ConfigurationError(f"unknown distribution kind {kind!r}")
    names = _JSON_PARAM_ORDER[kind]
    extra = set(spec) - set(names) - {"kind"}
    if extra:
        raise ConfigurationError(f"unexpected keys {sorted(extra)} for kind {kind!r}")
    args = []
    for n in names:
        if n in spec:
            args.append(spec[n])
        else:
            break
    return make_family(kind, *args)


# ---------------------------------------------------------------------------
# coordinate change and diagnostics
# ---------------------------------------------------------------------------

def to_h_rep(d: QuantileRep) -> HRep:
    """View the distribution in the exponential coordinate."""
    if d.h_native is not None:
        h = d.h_native
    else:
        def h(y, q=d.quantile):
            u = np.minimum(-np.expm1(-np.asarray(y, dtype=float)), _U_CAP)
            return q(u)

    step = None
    if d.is_discrete:
        xs = np.array([x for x, _ in d.atoms], dtype=float)
        cum = np.cumsum([m for _, m in d.atoms])
        jumps = -np.log1p(-np.minimum(cum[:-1], _U_CAP))
        step = (jumps, xs)
    return HRep(h=h, source=d, breakpoints=tuple(d.h_breakpoints), step=step,
                log_h=d.log_h_native)


def _step_abs_moment(step, order: int) -> float:
    jumps, xs = step
    edges = np.concatenate([[0.0], jumps, [math.inf]])
    total = 0.0
    for x, a, b in zip(xs, edges[:-1], edges[1:]):
        w_a = poly_exp_tail_integral(order, a)
        w_b = poly_exp_tail_integral(order, b) if math.isfinite(b) else 0.0
        total += abs(x) * (w_a - w_b)
    return total


def _step_signed_moment(step, order: int) -> float:
    jumps, xs = step
    edges = np.concatenate([[0.0], jumps, [math.inf]])
    total = 0.0
    for x, a, b in zip(xs, edges[:-1], edges[1:]):
        w_a = poly_exp_tail_integral(order, a)
        w_b = poly_exp_tail_integral(order, b) if math.isfinite(b) else 0.0
        total += x * (w_a - w_b)
    return total


_PROBE_GRID = np.geomspace(1e-3, 30.0, 64)


def record_weight_integrand(h: HRep, order: int, absolute: bool = False) -> Callable:
    """The integrand ``y^order/order! * e^{-y} * H(y)`` (optionally |H|).

    Where H overflows the float range but provides ``log_h``, the value
    is assembled in log space; the weighted product stays finite long
    after H itself does not.
    """
    lg = math.lgamma(order + 1)

    def g(y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            hv = np.atleast_1d(np.asarray(h.h(y), dtype=float))
            logw = (-y - lg) if order == 0 else (order * np.log(y) - y - lg)
            finite = np.isfinite(hv)
            out = np.exp(logw) * np.where(finite, hv, 0.0)
            if not np.all(finite):
                if h.log_h is None:
                    out[~finite] = np.nan
                else:
                    bad = ~finite
                    out[bad] = np.exp(logw[bad] + np.asarray(h.log_h(y[bad]), dtype=float))
        if absolute:
            out = np.abs(out)
        return out

    return g


def record_weight_integral(h: HRep, order: int, tol: Tolerance = DEFAULT_TOL,
                           absolute: bool = False):
    """Integrate the record-weight integrand over (0, oo).

    Truncation comes from decay-rate extrapolation rather than the
    probed exponential envelope, which keeps sub-exponential tails
    (heavy members of the record-integrable class) honest.
    """
    g = record_weight_integrand(h, order, absolute=absolute)
    g_abs = g if absolute else record_weight_integrand(h, order, absolute=True)
    try:
        y_star, tail = choose_truncation(g_abs, tol.abs_tol)
    except DomainError:
        return integrate_halfline(g, tol, breakpoints=h.breakpoints)
    return integrate_halfline(g, tol, truncate_at=y_star, tail_bound=tail,
                              breakpoints=h.breakpoints)


def membership_check(h: HRep, max_order: int = 6,
                     tol: Tolerance = DEFAULT_TOL) -> MembershipReport:
    """Check ``int y^m e^{-y} |H(y)| dy < oo`` for m = 0..max_order.

    Divergence is judged pragmatically: an integral is declared divergent
    when doubling the truncation point twice keeps growing the estimate
    by more than rel_tol each time.  The first two signed integrals give
    the leading expected records rho1, rho2; the report flags whether
    they sit at the normalized values (0, 1).
    """
    if max_order < 2:
        raise ConfigurationError("max_order must be at least 2")
    vals = h(np.asarray(_PROBE_GRID))
    spread = float(np.max(vals) - np.min(vals))
    non_constant = spread > 1e-13 * max(1.0, float(np.max(np.abs(vals))))

    if h.step is not None:
        integrals = tuple((m, _step_abs_moment(h.step, m), True)
                          for m in range(max_order + 1))
        rho1 = _step_signed_moment(h.step, 0)
        rho2 = _step_signed_moment(h.step, 1)
        in_star = non_constant
        in_zero = in_star and abs(rho1) <= H_ZERO_TOL and abs(rho2 - 1) <= H_ZERO_TOL
        return MembershipReport(max_order, integrals, in_star, in_zero,
                                rho1, rho2, None, non_constant)

    integrals = []
    failing = None
    for m in range(max_order + 1):
        g = record_weight_integrand(h, m, absolute=True)
        res = record_weight_integral(h, m, tol, absolute=True)
        converged = res.converged
        if converged and res.truncation_point is not None:
            # doubling-the-horizon divergence sentinel
            y0 = res.truncation_point
            i0 = res.value
            i1 = integrate_halfline(g, tol, truncate_at=2 * y0,
                                    breakpoints=h.breakpoints).value
            i2 = integrate_halfline(g, tol, truncate_at=4 * y0,
                                    breakpoints=h.breakpoints).value
            scale = max(1.0, abs(i1))
            if (i1 - i0) > tol.rel_tol * scale and (i2 - i1) > tol.rel_tol * scale:
                converged = False
        # the weighted values carry 1/m!; report the plain moment integral
        integrals.append((m, res.value * math.factorial(m), converged))
        if not converged and failing is None:
            failing = m
    in_star = failing is None and non_constant

    rho1 = rho2 = math.nan
    if in_star:
        rho1 = record_weight_integral(h, 0, tol).value
        rho2 = record_weight_integral(h, 1, tol).value
    in_zero = in_star and abs(rho1) <= H_ZERO_TOL and abs(rho2 - 1) <= H_ZERO_TOL
    return MembershipReport(max_order, tuple(integrals), in_star, in_zero,
                            rho1, rho2, failing, non_constant)


def affine(d: QuantileRep, shift: float, scale: float) -> QuantileRep:
    """The distribution of ``shift + scale * X`` (scale > 0)."""
    if scale <= 0:
        raise DomainError("affine scale must be positive")
    q, cdf, pdf, hn = d.quantile, d.cdf, d.pdf, d.h_native
    atoms = None
    if d.atoms is not None:
        atoms = tuple((shift + scale * x, m) for x, m in d.atoms)
    lo, hi = d.support_hint
    return QuantileRep(
        quantile=lambda u: shift + scale * q(u),
        cdf=(lambda x: cdf((np.asarray(x, dtype=float) - shift) / scale)) if cdf else None,
        pdf=(lambda x: pdf((np.asarray(x, dtype=float) - shift) / scale) / scale) if pdf else None,
        atoms=atoms,
        support_hint=(shift + scale * lo, shift + scale * hi),
        label=f"{shift:g}+{scale:g}*({d.label})" if d.label else "",
        h_native=(lambda y: shift + scale * hn(y)) if hn else None,
        h_breakpoints=d.h_breakpoints,
    )


def standardize(d: QuantileRep, rho1: float, rho2: float) -> QuantileRep:
    """The distribution of ``(X - rho1) / (rho2 - rho1)``; with the true
    first two expected records this lands in the normalized class."""
    if not rho2 > rho1:
        raise DegenerateInputError("standardize needs rho2 > rho1")
    span = rho2 - rho1
    return affine(d, -rho1 / span, 1.0 / span)


def h_rep_affine(h: HRep, shift: float, scale: float) -> HRep:
    """Exponential-coordinate counterpart of ``affine``."""
    if scale <= 0:
        raise DomainError("affine scale must be positive")
    base = h.h
    step = None
    if h.step is not None:
        step = (h.step[0], shift + scale * h.step[1])
    return HRep(
        h=lambda y: shift + scale * base(y),
        source=None,
        breakpoints=h.breakpoints,
        step=step,
        t_source=h.t_source,
    )

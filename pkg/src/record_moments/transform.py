"""The bijection between normalized distributions and positive variables.

Forward direction: a distribution whose records are all integrable maps
to the positive random variable ``T = L(F(V))`` where V is distributed
like the normalized gap density ``(1-F)L(F)``.  In the exponential
coordinate this gives, for the normalized source H0,

    Pr(T < t) = t e^{-t} H0(t) - int_0^t (1-w) e^{-w} H0(w) dw,

which is how the cdf form produced by ``phi`` evaluates.  The transform
ignores location and scale, so ``phi`` standardizes its input first.

Inverse direction: ``phi_inverse`` rebuilds the normalized H0 from the
distribution function of T,

    H0(y) = (e^y / y) F_T(y-) - int_1^y ((x-1)/x^2) e^x F_T(x) dx - c_T,

with the centering constant c_T fixed by ``int e^{-y} H0 = 0``.  Three
evaluation paths implement this formula:

* atoms: piecewise-constant F_T makes the integral an exact sum of
  antiderivative differences (the antiderivative of ((x-1)/x^2) e^x is
  e^x / x), so the output step function is exact;
* density: the formula collapses to single integrals of (e^x/x) f(x),
  maintained as a lazily extended prefix table, with a log-space channel
  for the far tail;
* cdf: the subtraction of two e^y-sized quantities is rearranged into a
  survival-function form whose terms stay O(poly) -- the naive formula
  loses all precision beyond y around 30.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gammainc, gammaincc, ndtr

from .distributions import HRep, QuantileRep, membership_check, to_h_rep
from .errors import ConfigurationError, DomainError, NonConvergenceError
from .ers import ers_compute, ers_to_t_moments
from .moments import stieltjes_family_density
from .numerics import (
    DEFAULT_TOL,
    CumulativeIntegral,
    QuadResult,
    Tolerance,
    choose_truncation,
    integrate_finite,
    integrate_halfline,
    log_exp_integral,
)

# left limits of a generic cdf are taken at this offset unless atoms are
# declared, in which case exact limits are used
CDF_LEFT_EPS = 1e-9

# below this t the forward map uses the plain cdf formula; beyond it the
# survival form keeps relative accuracy in the tail
_SURVIVAL_SWITCH = 12.0

_ATOM_MASS_TOL = 1e-12


def _g_upper(t):
    """1/t, the centering integrand on (1, oo)."""
    t = np.asarray(t, dtype=float)
    return 1.0 / t


def _g_lower(t):
    """(1 + e t - e^t)/t on (0, 1], written as (e t - expm1(t))/t which is
    stable down to t = 0 (limit e - 1)."""
    t = np.asarray(t, dtype=float)
    return (math.e * t - np.expm1(t)) / t


def _g_lower_deriv(t):
    """Derivative of the lower centering integrand: (e^t (1-t) - 1)/t^2,
    evaluated through its power series for small t."""
    t = np.asarray(t, dtype=float)
    small = np.abs(t) < 1e-4
    ts = np.where(small, 1.0, t)
    direct = (np.exp(ts) * (1.0 - ts) - 1.0) / ts**2
    j = np.arange(8)
    coeff = (j + 1) / np.array([math.factorial(int(k) + 2) for k in j])
    series = -np.polyval(coeff[::-1], np.where(small, t, 0.0))
    return np.where(small, series, direct)


class TDist:
    """A positive random variable with all moments finite.

    One of three underlying forms: a finite atom list, a density on
    (0, oo), or a distribution function with a left-limit evaluator.
    Mixtures combine components linearly.  All evaluators are
    numpy-vectorized.
    """

    def __init__(self, *, atoms=None, density=None, cdf=None, cdf_left=None,
                 survival_left=None, moment_fn=None, moments_cache=None,
                 components=None, weights=None, label="",
                 density_substitution="linear", known_indeterminate=False,
                 atom_points=(), validate=True, tol: Tolerance = DEFAULT_TOL):
        self.atoms = None if atoms is None else tuple((float(t), float(p)) for t, p in atoms)
        self.density = density
        self._cdf = cdf
        self._cdf_left = cdf_left
        self._survival_left = survival_left
        self.moment_fn = moment_fn
        self.moments_cache = list(moments_cache) if moments_cache is not None else None
        self.components = components
        self.weights = weights
        self.label = label
        self.density_substitution = density_substitution
        self.known_indeterminate = known_indeterminate
        self.tol = tol
        if self.atoms is not None:
            ts = [t for t, _ in self.atoms]
            ps = [p for _, p in self.atoms]
            if any(t <= 0 for t in ts):
                raise DomainError("all atoms must sit strictly above 0")
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise ConfigurationError("atoms must be sorted with distinct locations")
            if abs(sum(ps) - 1.0) > _ATOM_MASS_TOL:
                raise ConfigurationError("atom masses must sum to 1 within 1e-12")
            self.atom_points = tuple(ts)
            self._ts = np.array(ts)
            self._ps = np.array(ps)
            self._cum = np.cumsum(self._ps)
        elif components is not None:
            self.atom_points = tuple(sorted(set(
                p for c in components for p in c.atom_points)))
        else:
            self.atom_points = tuple(sorted(atom_points))
        if validate and self.density is not None and self.components is None:
            total = self._density_integral(0)
            if abs(total - 1.0) > 1e-6:
                raise ConfigurationError(
                    f"density integrates to {total:.9f}, not 1")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def from_atoms(pairs, label="") -> "TDist":
        pairs = sorted((float(t), float(p)) for t, p in pairs)
        return TDist(atoms=pairs, label=label or "atoms")

    @staticmethod
    def degenerate(value: float) -> "TDist":
        return TDist.from_atoms([(value, 1.0)], label=f"degenerate({value:g})")

    @staticmethod
    def from_density(f, *, moment_fn=None, substitution="linear", label="",
                     cdf=None, known_indeterminate=False, validate=True) -> "TDist":
        return TDist(density=f, moment_fn=moment_fn, cdf=cdf,
                     density_substitution=substitution, label=label or "density",
                     known_indeterminate=known_indeterminate, validate=validate)

    @staticmethod
    def from_cdf(cdf, *, cdf_left=None, survival_left=None, atom_points=(),
                 moments_cache=None, label="") -> "TDist":
        return TDist(cdf=cdf, cdf_left=cdf_left, survival_left=survival_left,
                     atom_points=atom_points, moments_cache=moments_cache,
                     label=label or "cdf")

    @staticmethod
    def mixture(components: Sequence["TDist"], weights: Sequence[float],
                label="") -> "TDist":
        weights = [float(w) for w in weights]
        if len(weights) != len(components) or abs(sum(weights) - 1) > 1e-12:
            raise ConfigurationError("mixture weights must match and sum to 1")
        if any(w < 0 for w in weights):
            raise ConfigurationError("mixture weights must be nonnegative")
        return TDist(components=list(components), weights=weights,
                     label=label or "mixture")

    # -- distribution function views ---------------------------------------

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.atoms is not None:
            idx = np.searchsorted(self._ts, t, side="right")
            return np.where(idx > 0, self._cum[np.maximum(idx - 1, 0)], 0.0)
        if self.components is not None:
            return sum(w * c.cdf(t) for w, c in zip(self.weights, self.components))
        if self._cdf is not None:
            return np.asarray(self._cdf(t), dtype=float)
        raise DomainError("this form has no cdf evaluator")

    def cdf_left(self, t):
        t = np.asarray(t, dtype=float)
        if self.atoms is not None:
            idx = np.searchsorted(self._ts, t, side="left")
            return np.where(idx > 0, self._cum[np.maximum(idx - 1, 0)], 0.0)
        if self.components is not None:
            return sum(w * c.cdf_left(t) for w, c in zip(self.weights, self.components))
        if self._cdf_left is not None:
            return np.asarray(self._cdf_left(t), dtype=float)
        return self.cdf(t - CDF_LEFT_EPS)

    def survival(self, t):
        t = np.asarray(t, dtype=float)
        if self.atoms is not None:
            return 1.0 - self.cdf(t)
        if self.components is not None:
            return sum(w * c.survival(t) for w, c in zip(self.weights, self.components))
        if self._survival_left is not None:
            return np.asarray(self._survival_left(t + CDF_LEFT_EPS), dtype=float)
        return 1.0 - self.cdf(t)

    def survival_left(self, t):
        t = np.asarray(t, dtype=float)
        if self.atoms is not None:
            return 1.0 - self.cdf_left(t)
        if self.components is not None:
            return sum(w * c.survival_left(t)
                       for w, c in zip(self.weights, self.components))
        if self._survival_left is not None:
            return np.asarray(self._survival_left(t), dtype=float)
        return 1.0 - self.cdf_left(t)

    # -- moments -------------------------------------------------------------

    def _density_integral(self, n: int) -> float:
        """int t^n f(t) dt by quadrature, respecting the substitution hint."""
        f = self.density
        if self.density_substitution == "log":
            def g(s):
                s = np.asarray(s, dtype=float)
                t = np.exp(s)
                return t ** (n + 1) * np.asarray(f(t), dtype=float)

            lo, hi = -14.0, 6.0 + 3.0 * n
            res = integrate_finite(g, lo, hi, self.tol)
            while hi < 500:
                wider = integrate_finite(g, hi, hi + 8.0, self.tol)
                if abs(wider.value) <= max(self.tol.abs_tol,
                                           self.tol.rel_tol * abs(res.value)):
                    break
                res = QuadResult(res.value + wider.value,
                                 res.abs_error_estimate + wider.abs_error_estimate,
                                 res.evaluations + wider.evaluations,
                                 res.converged and wider.converged)
                hi += 8.0
            if not res.converged:
                raise NonConvergenceError(f"moment {n} quadrature failed", result=res)
            return float(res.value)

        def g(t):
            t = np.asarray(t, dtype=float)
            return t ** n * np.asarray(f(t), dtype=float)

        y_star, tail = choose_truncation(g, self.tol.abs_tol)
        res = integrate_halfline(g, self.tol, truncate_at=y_star, tail_bound=tail)
        if not res.converged:
            raise NonConvergenceError(f"moment {n} quadrature failed", result=res)
        return float(res.value)

    def moment(self, n: int) -> float:
        """E T^n; exact for atoms, closed-form when known, else quadrature."""
        if n == 0:
            return 1.0
        if self.moments_cache is not None and n < len(self.moments_cache):
            return float(self.moments_cache[n])
        if self.atoms is not None:
            return float(np.sum(self._ps * self._ts ** n))
        if self.components is not None:
            return float(sum(w * c.moment(n)
                             for w, c in zip(self.weights, self.components)))
        if self.moment_fn is not None:
            return float(self.moment_fn(n))
        if self.density is not None:
            return self._density_integral(n)
        return self.moment_by_tail_quadrature(n)

    def moment_by_tail_quadrature(self, n: int) -> float:
        """E T^n = n int t^(n-1) Pr(T > t) dt; the route that only needs
        the distribution-function view."""
        def g(t):
            t = np.asarray(t, dtype=float)
            return n * t ** (n - 1) * np.asarray(self.survival(t), dtype=float)

        y_star, tail = choose_truncation(g, self.tol.abs_tol)
        res = integrate_halfline(g, self.tol, truncate_at=y_star, tail_bound=tail,
                                 breakpoints=self.atom_points)
        if not res.converged:
            raise NonConvergenceError(f"tail moment {n} failed", result=res)
        return float(res.value)


# -- TDist families ----------------------------------------------------------

def t_gamma(shape: float, rate: float = 1.0) -> TDist:
    """Gamma-distributed transform variable (closed cdf/survival/moments)."""
    if shape <= 0 or rate <= 0:
        raise ConfigurationError("gamma needs positive shape and rate")
    lognorm = shape * math.log(rate) - math.lgamma(shape)

    def density(t):
        t = np.asarray(t, dtype=float)
        tt = np.maximum(t, 1e-300)
        return np.where(t > 0,
                        np.exp(lognorm + (shape - 1) * np.log(tt) - rate * tt), 0.0)

    dist = TDist(
        density=density,
        cdf=lambda t: gammainc(shape, rate * np.maximum(np.asarray(t, dtype=float), 0.0)),
        moment_fn=lambda n: math.exp(math.lgamma(shape + n) - math.lgamma(shape)
                                     - n * math.log(rate)),
        label=f"gamma({shape:g},{rate:g})",
        validate=False,
    )
    dist._cdf_left = dist._cdf                      # continuous: no atoms
    dist._survival_left = lambda t: gammaincc(
        shape, rate * np.maximum(np.asarray(t, dtype=float), 0.0))
    return dist


def t_exponential(rate: float = 1.0) -> TDist:
    d = t_gamma(1.0, rate)
    d.label = f"exponential({rate:g})"
    return d


def t_erlang(k: int, rate: float = 1.0) -> TDist:
    if int(k) != k or k < 1:
        raise ConfigurationError("erlang needs integer k >= 1")
    d = t_gamma(float(k), rate)
    d.label = f"erlang({int(k)},{rate:g})"
    return d


def t_lognormal(mu: float = 0.0, sigma: float = 1.0) -> TDist:
    if sigma <= 0:
        raise ConfigurationError("lognormal sigma must be positive")

    def density(t):
        t = np.asarray(t, dtype=float)
        tt = np.maximum(t, 1e-300)
        z = (np.log(tt) - mu) / sigma
        return np.where(t > 0,
                        np.exp(-0.5 * z * z) / (tt * sigma * math.sqrt(2 * math.pi)),
                        0.0)

    dist = TDist(
        density=density,
        cdf=lambda t: np.where(np.asarray(t) > 0,
                               ndtr((np.log(np.maximum(np.asarray(t, dtype=float),
                                                       1e-300)) - mu) / sigma), 0.0),
        moment_fn=lambda n: math.exp(n * mu + 0.5 * (n * sigma) ** 2),
        density_substitution="log", label=f"lognormal({mu:g},{sigma:g})",
        validate=False,
    )
    dist._cdf_left = dist._cdf
    return dist


def t_stieltjes(lam: float) -> TDist:
    """A member of the equal-moments lognormal family.

    Moments are deliberately left to quadrature: that every member
    reproduces exp(n^2/2) is a computed fact here, not an input.
    """
    if abs(lam) > 1:
        raise DomainError("|lambda| <= 1 required")
    def f(t):
        t = np.asarray(t, dtype=float)
        return np.where(t > 0,
                        stieltjes_family_density(lam, np.maximum(t, 1e-300)), 0.0)

    return TDist.from_density(
        f, substitution="log", label=f"stieltjes_lambda({lam:g})",
        known_indeterminate=(lam != 0.0), validate=False)


def t_dense_support_example(n_rationals: int = 20, poisson_cap: int = 14) -> TDist:
    """Discrete positive variable with support dense in (0, oo): a unit
    Poisson count plus an independent component charging the rationals of
    (0, 1] with geometric masses.  Truncated to a finite atom list and
    renormalized."""
    rats = []
    q = 1
    while len(rats) < n_rationals:
        for p in range(1, q + 1):
            if math.gcd(p, q) == 1:
                rats.append(p / q)
                if len(rats) >= n_rationals:
                    break
        q += 1
    masses = {}
    for k in range(poisson_cap + 1):
        pk = math.exp(-1.0) / math.factorial(k)
        for n, r in enumerate(rats, start=1):
            t = k + r
            masses[t] = masses.get(t, 0.0) + pk * 2.0 ** (-n)
    total = sum(masses.values())
    pairs = sorted((t, p / total) for t, p in masses.items())
    return TDist(atoms=pairs, label="poisson_plus_dense_rationals")


def tdist_from_json(spec) -> TDist:
    """Build a TDist from the documented JSON schema."""
    if isinstance(spec, str):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid TDist JSON: {exc}") from None
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigurationError("TDist JSON must be an object with a 'kind' key")
    kind = spec["kind"]
    if kind == "atoms":
        if "atoms" not in spec:
            raise ConfigurationError("atoms form needs an 'atoms' list")
        return TDist.from_atoms(spec["atoms"])
    if kind == "stieltjes_lambda":
        if "lambda" not in spec:
            raise ConfigurationError("stieltjes_lambda needs a 'lambda' value")
        return t_stieltjes(float(spec["lambda"]))
    if kind == "density":
        family = spec.get("family")
        if family == "lognormal":
            return t_lognormal(float(spec.get("mu", 0.0)), float(spec.get("sigma", 1.0)))
        if family == "gamma":
            return t_gamma(float(spec["shape"]), float(spec.get("rate", 1.0)))
        if family == "exponential":
            return t_exponential(float(spec.get("rate", 1.0)))
        raise ConfigurationError(f"unknown density family {family!r}")
    raise ConfigurationError(f"unknown TDist kind {kind!r}")


# -- the gap density ----------------------------------------------------------

@dataclass(frozen=True)
class VDensity:
    """The normalized gap density ``(1-F) L(F) / normalizer`` whose image
    under L(F(.)) is the transform variable."""

    f_v: Callable
    normalizer: float


def v_density(d: QuantileRep, tol: Tolerance = DEFAULT_TOL) -> VDensity:
    if d.cdf is None:
        raise DomainError("the gap density needs a cdf view")

    def raw(x):
        x = np.asarray(x, dtype=float)
        F = np.clip(np.asarray(d.cdf(x), dtype=float), 0.0, 1.0)
        inner = (F > 0.0) & (F < 1.0)
        L = -np.log1p(-np.where(inner, F, 0.0))
        return np.where(inner, (1.0 - F) * L, 0.0)

    lo = float(d.quantile(1e-15))
    hi = float(d.quantile(1.0 - 1e-15))
    res = integrate_finite(raw, lo, hi, tol,
                           breakpoints=[x for x, _ in (d.atoms or ())])
    if not res.converged:
        raise NonConvergenceError("gap-density normalizer did not converge",
                                  result=res)
    norm = float(res.value)
    if norm <= 0:
        raise DomainError("degenerate distribution: zero gap mass")
    return VDensity(f_v=lambda x: raw(x) / norm, normalizer=norm)


# -- forward map ---------------------------------------------------------------

class _PhiCdf:
    """Distribution-function evaluators of the forward image of a
    normalized source H0, via the exponential-coordinate identity
    ``Pr(T < t) = t e^{-t} H0(t) - int_0^t (1-w) e^{-w} H0(w) dw``.

    Below the switch point the prefix integral is used directly; beyond
    it the complementary (survival) integral is evaluated in a shifted
    coordinate so that tail values keep relative accuracy.
    """

    def __init__(self, h0: Callable, breakpoints, tol: Tolerance):
        self.h0 = h0
        self.tol = tol
        self._prefix = CumulativeIntegral(
            lambda w: (1.0 - w) * np.exp(-w) * np.asarray(h0(w), dtype=float),
            anchor=0.0, breakpoints=breakpoints)

    def _cdf_left_scalar(self, t: float) -> float:
        if t <= 0:
            return 0.0
        if t > _SURVIVAL_SWITCH:
            return 1.0 - self._survival_left_scalar(t)
        val = t * math.exp(-t) * float(self.h0(np.array([t]))[0]) - self._prefix.value(t)
        return min(max(val, 0.0), 1.0)

    def _survival_left_scalar(self, t: float) -> float:
        if t <= 0:
            return 1.0
        if t <= _SURVIVAL_SWITCH:
            return 1.0 - self._cdf_left_scalar(t)

        def g(v):
            v = np.asarray(v, dtype=float)
            return np.exp(-v) * (v + t - 1.0) * np.asarray(self.h0(v + t), dtype=float)

        res = integrate_halfline(g, self.tol)
        if not res.converged:
            raise NonConvergenceError(
                f"survival quadrature failed at t = {t}", result=res)
        q = res.value - t * float(self.h0(np.array([t]))[0])
        return min(max(math.exp(-t) * q, 0.0), 1.0)

    def cdf_left(self, t):
        return np.array([self._cdf_left_scalar(float(v))
                         for v in np.atleast_1d(np.asarray(t, dtype=float))])

    def survival_left(self, t):
        return np.array([self._survival_left_scalar(float(v))
                         for v in np.atleast_1d(np.asarray(t, dtype=float))])

    def cdf(self, t):
        return self.cdf_left(np.asarray(t, dtype=float) + CDF_LEFT_EPS)


def _phi_discrete(h: HRep, span: float) -> TDist:
    """Exact forward image of a purely discrete source: the transform
    variable charges the jump points of H with the gap-density masses."""
    jumps, xs = h.step
    if xs.size < 2:
        raise DomainError("degenerate source")
    cum = 1.0 - np.exp(-jumps)          # F value on each gap
    gaps = np.diff(xs)
    weights = (1.0 - cum) * jumps * gaps / span
    keep = weights > 0
    pairs = list(zip(jumps[keep], weights[keep]))
    total = sum(p for _, p in pairs)
    pairs = [(t, p / total) for t, p in pairs]
    return TDist.from_atoms(pairs, label="phi(discrete)")


def phi(d, tol: Tolerance = DEFAULT_TOL, *, n_moments: int = 8) -> TDist:
    """Forward transform: the positive variable whose moments encode the
    expected record increments of the source.

    Accepts a quantile representation or its exponential-coordinate
    view.  The source is standardized internally (the map is blind to
    location and scale); discrete sources produce an exact atom list,
    anything else a cdf-form TDist with a moment cache filled from the
    expected record sequence.
    """
    h = d if isinstance(d, HRep) else to_h_rep(d)
    rep = membership_check(h, max_order=max(2, n_moments), tol=tol)
    if not rep.in_H_star:
        raise DomainError("the source is outside the record-integrable class")
    span = rep.rho2 - rep.rho1
    if span <= 0:
        raise DomainError("degenerate source: rho2 <= rho1")
    if h.step is not None:
        return _phi_discrete(h, span)

    base = h.h
    rho1 = rep.rho1

    def h0(y):
        return (np.asarray(base(y), dtype=float) - rho1) / span

    log_h0 = None
    if h.log_h is not None:
        # valid where H overflows, so the -rho1 shift is below resolution
        log_h0 = lambda y: np.asarray(h.log_h(y), dtype=float) - math.log(span)
    h0_rep = HRep(h=h0, breakpoints=h.breakpoints, log_h=log_h0)
    seq = ers_compute(h0_rep, n_moments + 2, tol, check_membership=False)
    cache = [1.0] + list(ers_to_t_moments(seq).m[1:])
    eval_ = _PhiCdf(h0, h.breakpoints, tol)
    return TDist.from_cdf(
        eval_.cdf, cdf_left=eval_.cdf_left, survival_left=eval_.survival_left,
        moments_cache=cache,
        label=f"phi({getattr(h.source, 'label', '') or 'source'})")


# -- centering constant --------------------------------------------------------

def c_T(t_dist: TDist, tol: Tolerance = DEFAULT_TOL) -> float:
    """The centering constant of the inversion formula:
    ``E[(1/T) 1{T>1}] + E[(1 + eT - e^T)/T 1{T<=1}]``."""
    if t_dist.atoms is not None:
        ts, ps = t_dist._ts, t_dist._ps
        vals = np.where(ts > 1.0, _g_upper(ts), _g_lower(np.minimum(ts, 1.0)))
        return float(np.dot(ps, vals))
    if t_dist.components is not None:
        return float(sum(w * c_T(c, tol)
                         for w, c in zip(t_dist.weights, t_dist.components)))
    if t_dist.density is not None:
        f = t_dist.density
        lower = integrate_finite(
            lambda t: _g_lower(t) * np.asarray(f(t), dtype=float), 0.0, 1.0, tol)

        def upper_int(t):
            t = np.asarray(t, dtype=float)
            return np.asarray(f(t), dtype=float) / t

        if t_dist.density_substitution == "log":
            def g(s):
                s = np.asarray(s, dtype=float)
                t = np.exp(s)
                return np.asarray(f(t), dtype=float)

            upper = integrate_finite(g, 0.0, 40.0, tol)
        else:
            y_star, tail = choose_truncation(upper_int, tol.abs_tol)
            upper = integrate_halfline(upper_int, tol, lo=1.0,
                                       truncate_at=y_star, tail_bound=tail)
        if not (lower.converged and upper.converged):
            raise NonConvergenceError("centering constant did not converge")
        return float(lower.value + upper.value)
    # distribution-function form: integrate by parts on both pieces
    F1 = float(t_dist.cdf(np.array([1.0]))[0])
    S1 = float(t_dist.survival(np.array([1.0]))[0])

    def upper_tail(t):
        t = np.asarray(t, dtype=float)
        return np.asarray(t_dist.survival(t), dtype=float) / t**2

    y_star, tail = choose_truncation(upper_tail, tol.abs_tol, y_start=30.0)
    up = integrate_halfline(upper_tail, tol, lo=1.0, truncate_at=y_star,
                            tail_bound=tail, breakpoints=t_dist.atom_points)
    low = integrate_finite(
        lambda t: _g_lower_deriv(t) * np.asarray(t_dist.cdf(t), dtype=float),
        0.0, 1.0, tol, breakpoints=t_dist.atom_points)
    if not (up.converged and low.converged):
        raise NonConvergenceError("centering constant did not converge")
    return float(S1 - up.value + _g_lower(np.array([1.0]))[0] * F1 - low.value)


# -- inverse map ---------------------------------------------------------------

def _antideriv(x):
    """Antiderivative of ((x-1)/x^2) e^x."""
    x = np.asarray(x, dtype=float)
    return np.exp(x) / x


class _AtomInverse:
    """Exact inverse image of a finite atom list: a left-continuous step
    function jumping exactly at the atoms."""

    def __init__(self, t_dist: TDist, tol: Tolerance):
        ts, ps = t_dist._ts, t_dist._ps
        if np.any(ts > 690.0):
            raise DomainError("atom beyond the overflow horizon of e^t/t")
        self.c = c_T(t_dist, tol)
        cum = np.concatenate([[0.0], np.cumsum(ps)])   # F on segment i: cum[i]
        E = _antideriv(ts)
        # A[i] = signed int_1^{t_i} w(x) F(x) dx, one sweep in each
        # direction from the anchor (F is cum[i] between t_i and t_{i+1})
        A = np.empty(ts.size)
        k1 = int(np.searchsorted(ts, 1.0, side="right"))  # atoms <= 1
        prev_x, prev_A = 1.0, 0.0
        for i in range(k1, ts.size):
            prev_A += cum[i] * (E[i] - float(_antideriv(prev_x)))
            A[i] = prev_A
            prev_x = ts[i]
        prev_x, prev_A = 1.0, 0.0
        for i in range(k1 - 1, -1, -1):
            prev_A -= cum[i + 1] * (float(_antideriv(prev_x)) - E[i])
            A[i] = prev_A
            prev_x = ts[i]
        # H0 is constant between atoms: its value on (t_i, t_{i+1}] follows
        # from the formula at the left boundary (segment 0 uses t_1)
        levels = np.empty(ts.size + 1)
        levels[0] = cum[0] * E[0] - A[0] - self.c
        levels[1:] = cum[1:] * E - A - self.c
        self.jumps = ts
        self.levels = levels

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        idx = np.searchsorted(self.jumps, y, side="left")
        return self.levels[idx]


class _DensityInverse:
    """Inverse image of a density: prefix integrals of (e^x/x) f(x) from
    the anchor point 1, plus the constant centering block; a log-space
    channel serves the region where the prefix overflows."""

    def __init__(self, t_dist: TDist, tol: Tolerance):
        f = t_dist.density
        self.f = f
        self.tol = tol
        self.table = CumulativeIntegral(
            lambda x: np.exp(np.asarray(x, dtype=float))
            / np.asarray(x, dtype=float) * np.asarray(f(x), dtype=float),
            anchor=1.0,
            breakpoints=np.geomspace(1e-4, 0.5, 12), domain=(0.0, math.inf))
        low = integrate_finite(
            lambda t: np.expm1(t) / t * np.asarray(f(t), dtype=float), 0.0, 1.0, tol)
        if t_dist.density_substitution == "log":
            up = integrate_finite(
                lambda s: np.asarray(f(np.exp(np.asarray(s, dtype=float))), dtype=float),
                0.0, 40.0, tol)
        else:
            def g(t):
                t = np.asarray(t, dtype=float)
                return np.asarray(f(t), dtype=float) / t

            y_star, tail = choose_truncation(g, tol.abs_tol)
            up = integrate_halfline(g, tol, lo=1.0, truncate_at=y_star,
                                    tail_bound=tail)
        if not (low.converged and up.converged):
            raise NonConvergenceError("inverse-map constants did not converge")
        self.const = float(low.value - up.value)

        def w_log(x):
            x = np.asarray(x, dtype=float)
            with np.errstate(divide="ignore"):
                fv = np.asarray(f(x), dtype=float)
                return np.where(fv > 0, x - np.log(x) + np.log(np.maximum(fv, 1e-320)),
                                -np.inf)

        self._w_log = w_log

    def __call__(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty_like(y)
        for i, v in enumerate(y):
            if v > 660.0:
                out[i] = math.inf
            else:
                out[i] = self.table.value(float(v)) + self.const
        return out

    def log_value(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty_like(y)
        for i, v in enumerate(y):
            la = log_exp_integral(self._w_log, 1.0, float(v))
            # fold in the O(1) constant block, negligible for large y
            ratio = self.const * math.exp(-la) if la < 700.0 else 0.0
            out[i] = la + math.log1p(ratio)
        return out


class _CdfInverse:
    """Inverse image from the distribution-function view.

    Uses the two-sided rearrangement: above 1 all terms are expressed in
    the survival function (each of order poly(y)), below 1 in the cdf;
    the naive difference of e^y-sized quantities is never formed.
    """

    def __init__(self, t_dist: TDist, tol: Tolerance):
        self.t = t_dist
        self.tol = tol
        self.c = c_T(t_dist, tol)
        breaks = [b for b in t_dist.atom_points]
        self.upper = CumulativeIntegral(
            lambda x: ((np.asarray(x, dtype=float) - 1.0) / np.asarray(x, dtype=float) ** 2)
            * np.exp(np.asarray(x, dtype=float))
            * np.asarray(t_dist.survival(x), dtype=float),
            anchor=1.0, breakpoints=breaks)
        self.lower = CumulativeIntegral(
            lambda x: ((1.0 - np.asarray(x, dtype=float)) / np.asarray(x, dtype=float) ** 2)
            * np.exp(np.asarray(x, dtype=float))
            * np.asarray(t_dist.cdf(x), dtype=float),
            anchor=1.0, breakpoints=breaks + list(np.geomspace(1e-4, 0.5, 12)),
            domain=(0.0, math.inf))

    def __call__(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty_like(y)
        for i, v in enumerate(y):
            v = float(v)
            if v >= 1.0:
                s_left = float(np.atleast_1d(self.t.survival_left(np.array([v])))[0])
                ey = math.exp(v - math.log(v)) if v < 700 else math.inf
                out[i] = math.e - self.c + self.upper.value(v) - s_left * ey
            else:
                f_left = float(np.atleast_1d(self.t.cdf_left(np.array([v])))[0])
                ey = math.exp(v - math.log(v))
                # lower table accumulates from 1 downward with +v(x)F(x)
                out[i] = f_left * ey + self.lower.value(v) - self.c
        return out


def phi_inverse(t_dist: TDist, tol: Tolerance = DEFAULT_TOL) -> HRep:
    """Inverse transform: the normalized exponential-coordinate function
    whose expected record increments reproduce the moments of ``t_dist``.

    The output is left-continuous and non-decreasing, with first two
    expected records 0 and 1 (verified by the membership diagnostics
    downstream).
    """
    if t_dist.atoms is not None:
        inv = _AtomInverse(t_dist, tol)
        jumps = inv.jumps.astype(float)
        return HRep(h=inv, breakpoints=tuple(jumps), step=(jumps, inv.levels),
                    t_source=t_dist)
    if t_dist.components is not None or t_dist.density is None:
        inv = _CdfInverse(t_dist, tol)
        return HRep(h=inv, breakpoints=tuple(t_dist.atom_points) + (1.0,),
                    t_source=t_dist)
    inv = _DensityInverse(t_dist, tol)
    return HRep(h=inv, breakpoints=(1.0,), t_source=t_dist,
                log_h=inv.log_value)


# -- property checks -----------------------------------------------------------

@dataclass(frozen=True)
class RoundTripReport:
    sup_distance: float
    grid: np.ndarray
    original: np.ndarray
    reconstructed: np.ndarray
    rho1: float
    rho2: float


def roundtrip(d, tol: Tolerance = DEFAULT_TOL, *,
              grid: Optional[np.ndarray] = None) -> RoundTripReport:
    """Standardize, push forward, pull back, and report the sup distance
    between the normalized source and its reconstruction on a grid that
    avoids the source's jump points."""
    h = d if isinstance(d, HRep) else to_h_rep(d)
    rep = membership_check(h, tol=tol)
    if not rep.in_H_star:
        raise DomainError("the source is outside the record-integrable class")
    span = rep.rho2 - rep.rho1
    base, rho1 = h.h, rep.rho1

    def h0(y):
        return (np.asarray(base(y), dtype=float) - rho1) / span

    T = phi(h, tol)
    rec = phi_inverse(T, tol)
    if grid is None:
        grid = np.geomspace(0.02, 25.0, 300)
    jump_points = np.asarray(h.breakpoints, dtype=float)
    if jump_points.size:
        keep = np.all(np.abs(grid[:, None] - jump_points[None, :]) > 1e-6, axis=1)
        grid = grid[keep]
    orig = np.asarray(h0(grid), dtype=float)
    back = np.asarray(rec.h(grid), dtype=float)
    return RoundTripReport(float(np.max(np.abs(orig - back))), grid, orig, back,
                           rep.rho1, rep.rho2)


@dataclass(frozen=True)
class InvarianceReport:
    max_discrepancy: float
    grid: np.ndarray


def invariance_check(d: QuantileRep, c: float, lam: float,
                     tol: Tolerance = DEFAULT_TOL, *,
                     grid: Optional[np.ndarray] = None) -> InvarianceReport:
    """The forward map must not see location or scale: compare the
    distribution functions of the images of X and c + lam * X."""
    from .distributions import affine
    if lam <= 0:
        raise DomainError("scale must be positive")
    t1 = phi(d, tol)
    t2 = phi(affine(d, c, lam), tol)
    if grid is None:
        grid = np.geomspace(0.05, 15.0, 120)
    a = np.asarray(t1.cdf_left(grid), dtype=float)
    b = np.asarray(t2.cdf_left(grid), dtype=float)
    return InvarianceReport(float(np.max(np.abs(a - b))), grid)

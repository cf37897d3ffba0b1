"""Shared numerical kernel.

Adaptive quadrature on the unit interval and the half line, monotone
function inversion, and the cumulative-integral tables used by the
transform machinery.

The quadrature engine is a classic adaptive scheme: each panel is
evaluated with an embedded Gauss(7)/Kronrod(15) pair, the panel with
the largest error estimate is bisected, and the process repeats until
the summed error estimate meets the requested tolerance or the
subdivision budget runs out.  Integrands are expected to be
numpy-vectorized (called with a 15-element array per panel); every
integrand in this package is.

Half-line integrals are truncated at a point Y* beyond which a growth
bound certifies the neglected tail is below ``abs_tol/2``; the tail
bound is folded into the reported error estimate.
"""

from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

# Gauss-Kronrod 15/7 abscissae and weights (positive half, QUADPACK dqk15).
_XGK_POS = np.array([
    0.9914553711208126, 0.9491079123427585, 0.8648644233597691,
    0.7415311855993944, 0.5860872354676911, 0.4058451513773972,
    0.2077849550078985,
])
_WGK_POS = np.array([
    0.0229353220105292, 0.0630920926299785, 0.1047900103222502,
    0.1406532597155259, 0.1690047266392679, 0.1903505780647854,
    0.2044329400752989,
])
_WGK_CENTER = 0.2094821410847278
_WG_POS = np.array([
    0.1294849661688697, 0.2797053914892767, 0.3818300505051189,
])
_WG_CENTER = 0.4179591836734694

_NODES = np.concatenate([-_XGK_POS, [0.0], _XGK_POS[::-1]])
_WEIGHTS_K = np.concatenate([_WGK_POS, [_WGK_CENTER], _WGK_POS[::-1]])
_WEIGHTS_G = np.zeros(15)
_WEIGHTS_G[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate(
    [_WG_POS, [_WG_CENTER], _WG_POS[::-1]]
)

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Tolerance:
    """Quadrature tolerances.

    ``abs_tol`` and ``rel_tol`` bound the summed panel error estimate;
    ``max_subdivisions`` caps the number of panel bisections.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    max_subdivisions: int = 2000

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.max_subdivisions > 0):
            raise ConfigurationError("Tolerance fields must be strictly positive")


DEFAULT_TOL = Tolerance()


@dataclass(frozen=True)
class QuadResult:
    """Outcome of a quadrature call.

    ``converged`` means the error estimate (including any tail-truncation
    bound) met the requested tolerance; a non-converged result is still
    the best available estimate, never silently wrong.
    """

    value: float
    abs_error_estimate: float
    evaluations: int
    converged: bool
    detail: Optional[str] = None
    truncation_point: Optional[float] = None


@dataclass(frozen=True)
class GrowthBound:
    """Certified envelope ``|f(y)| <= coeff * y**poly_order * exp(-(1-exp_slack)*y)``
    for y beyond the probed range; used to bound neglected half-line tails."""

    coeff: float
    poly_order: int = 0
    exp_slack: float = 0.0

    def __post_init__(self):
        if self.coeff < 0 or self.poly_order < 0 or not 0 <= self.exp_slack < 1:
            raise ConfigurationError("invalid growth bound")

    def tail_beyond(self, y: float) -> float:
        """Upper bound for the integral of the envelope over (y, oo)."""
        if not math.isfinite(self.coeff):
            return math.inf
        rate = 1.0 - self.exp_slack
        return self.coeff / rate ** (self.poly_order + 1) * poly_exp_tail_integral(
            self.poly_order, rate * y
        )


def poly_exp_tail_integral(k: int, t: float) -> float:
    """Exact value of the tail integral of ``u**k * exp(-u)`` over (t, oo).

    Closed form: ``k! * exp(-t) * sum_{j<=k} t**j / j!``.  Evaluated in a
    numerically benign order (all terms positive), valid for t >= 0.
    """
    if k < 0 or t < 0:
        raise DomainError("poly_exp_tail_integral needs k >= 0 and t >= 0")
    # sum in log space only when t**k/k! risks overflow
    if t > 0 and k * math.log(max(t, 1e-300)) > 600:
        log_terms = [-t + math.lgamma(k + 1) + j * math.log(t) - math.lgamma(j + 1)
                     for j in range(k + 1)]
        m = max(log_terms)
        return math.exp(m) * sum(math.exp(lt - m) for lt in log_terms)
    acc = 1.0
    term = 1.0
    for j in range(1, k + 1):
        term *= t / j
        acc += term
    return math.factorial(k) * math.exp(-t) * acc


def _panel(f, a: float, b: float):
    """Gauss-Kronrod 15 estimate of ``f`` over [a, b] with error estimate."""
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    fx = np.asarray(f(center + half * _NODES), dtype=float)
    resk = half * float(_WEIGHTS_K @ fx)
    resg = half * float(_WEIGHTS_G @ fx)
    resabs = half * float(_WEIGHTS_K @ np.abs(fx))
    mean = resk / (b - a) if b != a else 0.0
    resasc = half * float(_WEIGHTS_K @ np.abs(fx - mean))
    err = abs(resk - resg)
    if not np.all(np.isfinite(fx)):
        return resk, math.inf
    if resasc != 0.0 and err != 0.0:
        err = resasc * min(1.0, (200.0 * err / resasc) ** 1.5)
    err = max(err, 50.0 * _EPS * resabs)
    return resk, err


def _adaptive(f, edges: Sequence[float], tol: Tolerance,
              abs_target: float) -> tuple[float, float, int, bool]:
    """Adaptive panel subdivision over the initial partition ``edges``.

    Returns (value, error, evaluations, converged) where convergence is
    against ``max(abs_target, rel_tol * |value|)``.
    """
    heap = []
    total = 0.0
    total_err = 0.0
    evals = 0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        v, e = _panel(f, a, b)
        evals += 15
        total += v
        total_err += e
        heapq.heappush(heap, (-e, a, b, v, e))
    splits = 0
    while total_err > max(abs_target, tol.rel_tol * abs(total)):
        if splits >= tol.max_subdivisions or not heap:
            return total, total_err, evals, False
        ne, a, b, v, e = heapq.heappop(heap)
        if not math.isfinite(e):
            # non-finite integrand value inside the worst panel; bisect
            # toward it, but give up once panels are at rounding width
            if b - a < 8 * _EPS * max(abs(a), abs(b), 1.0):
                return total, math.inf, evals, False
        m = 0.5 * (a + b)
        v1, e1 = _panel(f, a, m)
        v2, e2 = _panel(f, m, b)
        evals += 30
        splits += 1
        total += v1 + v2 - v
        total_err += e1 + e2 - e
        heapq.heappush(heap, (-e1, a, m, v1, e1))
        heapq.heappush(heap, (-e2, m, b, v2, e2))
    return total, total_err, evals, True


def _initial_edges(lo: float, hi: float, breakpoints: Sequence[float]) -> list[float]:
    pts = {lo, hi}
    for b in breakpoints:
        if lo < b < hi:
            pts.add(float(b))
    # seed a geometric ladder so that distant structure is found
    step = hi - lo
    x = lo + step / 2
    ladder = []
    if hi - lo > 4.0:
        x = lo + 1.0
        while x < hi:
            ladder.append(x)
            x = lo + (x - lo) * 2.0
    pts.update(ladder)
    return sorted(pts)


def integrate_unit(f: Callable, tol: Tolerance = DEFAULT_TOL, *,
                   lo: float = 0.0, hi: float = 1.0,
                   log_singularity_at_one: bool = False,
                   breakpoints: Sequence[float] = ()) -> QuadResult:
    """Integrate ``f`` over (lo, hi) inside the unit interval.

    With ``log_singularity_at_one`` set (for integrands that blow up
    logarithmically as u -> 1) the integral is re-mapped through
    ``u = 1 - exp(-y)`` onto the half line, where the singular factor
    becomes polynomial against an exponential weight.  Note that the
    evaluation points are still passed to ``f`` in the u coordinate,
    which saturates at the largest double below 1; beyond that horizon
    (and, more gradually, approaching it) the u interface itself limits
    the attainable accuracy, and the reported error estimate grows
    accordingly rather than being silently optimistic.
    """
    if not 0.0 <= lo < hi <= 1.0:
        raise DomainError(f"invalid unit-interval bounds ({lo}, {hi})")
    if log_singularity_at_one and hi == 1.0:
        y_lo = -math.log1p(-lo) if lo > 0 else 0.0
        u_cap = np.nextafter(1.0, 0.0)

        def g(y):
            y = np.asarray(y, dtype=float)
            u = np.minimum(-np.expm1(-y), u_cap)
            return np.asarray(f(u), dtype=float) * np.exp(-y)

        mapped = [-math.log1p(-b) for b in breakpoints if lo < b < 1.0]
        return integrate_halfline(g, tol, lo=y_lo, breakpoints=mapped)
    edges = _initial_edges(lo, hi, breakpoints)
    value, err, evals, ok = _adaptive(f, edges, tol, tol.abs_tol)
    return QuadResult(value, err, evals, ok)


def integrate_finite(f: Callable, a: float, b: float,
                     tol: Tolerance = DEFAULT_TOL, *,
                     breakpoints: Sequence[float] = ()) -> QuadResult:
    """Adaptive integral over a finite interval; sign-aware in (a, b)."""
    if a == b:
        return QuadResult(0.0, 0.0, 0, True)
    sign = 1.0
    if a > b:
        a, b, sign = b, a, -1.0
    edges = _initial_edges(a, b, breakpoints)
    value, err, evals, ok = _adaptive(f, edges, tol, tol.abs_tol)
    return QuadResult(sign * value, err, evals, ok)


def integrate_halfline(f: Callable, tol: Tolerance = DEFAULT_TOL, *,
                       lo: float = 0.0,
                       growth: Optional[GrowthBound] = None,
                       truncate_at: Optional[float] = None,
                       tail_bound: float = 0.0,
                       breakpoints: Sequence[float] = ()) -> QuadResult:
    """Integrate ``f`` over (lo, oo).

    The tail is cut at a point Y* where the neglected remainder is
    certified below ``abs_tol/2``:

    * ``growth`` supplies the envelope used to bound the tail;
    * with no growth bound, an envelope coefficient is calibrated by
      probing ``|f|`` at three points (and re-checked at each candidate
      Y*), which is a heuristic -- callers integrating functions with
      sub-exponential but non-polynomial growth should pass either a
      growth bound or an explicit ``truncate_at``;
    * ``truncate_at`` overrides the search; the caller then owns the
      ``tail_bound`` that is folded into the error estimate.
    """
    if truncate_at is not None:
        y_star = float(truncate_at)
        tail = float(tail_bound)
        detail = None
        probe_evals = 0
    else:
        gb = growth
        probe_evals = 0
        if gb is None:
            probes = np.array([max(lo + 1.0, 10.0), max(lo + 2.0, 20.0),
                               max(lo + 4.0, 40.0)])
            fp = np.abs(np.asarray(f(probes), dtype=float))
            probe_evals += probes.size
            coeff = float(np.max(fp * np.exp(probes)))
            if not math.isfinite(coeff):
                return QuadResult(math.nan, math.inf, probe_evals, False,
                                  detail="growth probe returned non-finite values")
            gb = GrowthBound(coeff=coeff)
        y_star = max(lo + 1.0, 30.0)
        tail = gb.tail_beyond(y_star)
        detail = None
        # "not <" keeps scanning on nan as well as on large tails
        while not (tail < tol.abs_tol / 2):
            y_star *= 1.5
            if y_star > 1e6:
                return QuadResult(math.nan, math.inf, probe_evals, False,
                                  detail="tail bound could not be established "
                                         "below abs_tol/2 by y = 1e6")
            if growth is None:
                # re-check the probed envelope coefficient further out
                # (in log space: the coefficient can exceed float range)
                fy = abs(float(np.asarray(f(np.array([y_star])), dtype=float)[0]))
                probe_evals += 1
                rate = 1.0 - gb.exp_slack
                if fy > 0 and math.isfinite(fy):
                    log_need = (math.log(fy) + rate * y_star
                                - gb.poly_order * math.log(max(y_star, 1.0)))
                    need = math.exp(log_need) if log_need < 700 else math.inf
                elif not math.isfinite(fy):
                    need = math.inf
                else:
                    need = 0.0
                if need > gb.coeff:
                    gb = GrowthBound(need, gb.poly_order, gb.exp_slack)
            tail = gb.tail_beyond(y_star)
    edges = _initial_edges(lo, y_star, breakpoints)
    abs_target = max(tol.abs_tol - tail, tol.abs_tol / 2)
    value, err, evals, ok = _adaptive(f, edges, tol, abs_target)
    return QuadResult(value, err + tail, evals + probe_evals, ok,
                      detail=detail, truncation_point=y_star)


def choose_truncation(g: Callable, abs_tol: float, *, y_start: float = 40.0,
                      y_cap: float = 1e6, margin: float = 100.0):
    """Pick a truncation point for ``int_0^oo g`` by extrapolating the
    observed decay rate of ``|g|``.

    At each candidate Y the local e-folding rate lam is estimated from
    probes on [Y, 1.25 Y]; the tail is then taken to be roughly
    ``|g(Y)| / lam`` and Y is accepted once ``margin`` times that
    estimate drops below ``abs_tol/2``.  Unlike a certified growth
    bound this works for sub-exponential decay (tails like
    ``exp(-sqrt(y))`` or lognormal), at the price of being an
    extrapolation; the safety margin is folded into the returned tail
    bound.  Returns (y_star, tail_bound) or raises DomainError when no
    decaying tail is found below ``y_cap``.
    """
    y = float(y_start)
    while y <= y_cap:
        probes = y * np.array([1.0, 1.08, 1.17, 1.25])
        gv = np.abs(np.asarray(g(probes), dtype=float))
        if not np.all(np.isfinite(gv)):
            raise DomainError("integrand is non-finite in the tail region")
        m1 = float(max(gv[0], gv[1]))
        m2 = float(max(gv[2], gv[3]))
        if m2 == 0.0 and m1 == 0.0:
            return 1.25 * y, 0.0
        if 0 < m2 < m1:
            lam = math.log(m1 / m2) / (0.25 * y - max(0.08 * y, 0.0))
            est_tail = m2 / lam if lam > 0 else math.inf
            if margin * est_tail < abs_tol / 2:
                return 1.25 * y, margin * est_tail
        y *= 1.6
    raise DomainError(f"no decaying tail found below y = {y_cap:g}")


def invert_monotone(F: Callable, u: float, bracket: tuple[float, float], *,
                    x_tol: float = 1e-12, max_iter: int = 200) -> float:
    """Generalized inverse ``inf{x : F(x) >= u}`` of a non-decreasing F.

    Bisection keeps the invariant F(lo) < u <= F(hi); on flat stretches
    of F this converges to the left endpoint of the preimage, matching
    the left-continuity convention for inverse distribution functions.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if lo >= hi:
        raise DomainError("empty bracket")
    f_lo, f_hi = float(F(lo)), float(F(hi))
    if f_hi < u:
        raise DomainError(f"u={u} above the range of F on the bracket")
    if f_lo >= u:
        raise DomainError(f"u={u} at or below the range of F on the bracket")
    for _ in range(max_iter):
        if hi - lo <= x_tol:
            break
        mid = 0.5 * (lo + hi)
        if float(F(mid)) >= u:
            hi = mid
        else:
            lo = mid
    return hi


class CumulativeIntegral:
    """Lazy prefix integral ``y -> int_anchor^y fn`` with signed orientation.

    Panels of fixed width are accumulated outward from the anchor as
    needed (cut at the supplied breakpoints so discontinuities never sit
    inside a panel), each evaluated with the Gauss-Kronrod pair; a query
    adds one partial-panel evaluation, so repeated queries along a grid
    cost O(1) each.  Thread-unsafe during lazy extension.
    """

    def __init__(self, fn: Callable, anchor: float, *, panel_width: float = 0.25,
                 breakpoints: Sequence[float] = (), panel_abs_tol: float = 1e-13,
                 domain: tuple[float, float] = (-math.inf, math.inf)):
        self.fn = fn
        self.anchor = float(anchor)
        self.width = float(panel_width)
        self.panel_abs_tol = float(panel_abs_tol)
        self.domain = (float(domain[0]), float(domain[1]))
        self.breaks = sorted(set(float(b) for b in breakpoints))
        # edges/prefix above the anchor and below it (both start at anchor)
        self._up_edges = [self.anchor]
        self._up_prefix = [0.0]
        self._down_edges_neg = [-self.anchor]   # ascending in -x
        self._down_prefix = [0.0]
        self.error_estimate = 0.0

    def _refined(self, a: float, b: float, depth: int = 0) -> tuple[float, float]:
        """Panel value with recursive bisection until the local error
        estimate is negligible (endpoint singularities need the grading)."""
        v, e = _panel(self.fn, a, b)
        if e <= max(self.panel_abs_tol, 1e-13 * abs(v)) or depth >= 36:
            return v, e
        m = 0.5 * (a + b)
        v1, e1 = self._refined(a, m, depth + 1)
        v2, e2 = self._refined(m, b, depth + 1)
        return v1 + v2, e1 + e2

    def _next_edge(self, x: float, direction: int) -> float:
        nxt = x + direction * self.width
        if direction > 0:
            i = bisect.bisect_right(self.breaks, x)
            if i < len(self.breaks) and self.breaks[i] < nxt:
                nxt = self.breaks[i]
            nxt = min(nxt, self.domain[1])
        else:
            i = bisect.bisect_left(self.breaks, x)
            if i > 0 and self.breaks[i - 1] > nxt:
                nxt = self.breaks[i - 1]
            nxt = max(nxt, self.domain[0])
        return nxt

    def _extend(self, y: float):
        while self._up_edges[-1] < y:
            a = self._up_edges[-1]
            b = self._next_edge(a, +1)
            v, e = self._refined(a, b)
            self._up_edges.append(b)
            self._up_prefix.append(self._up_prefix[-1] + v)
            self.error_estimate += e
        while -self._down_edges_neg[-1] > y:
            b = -self._down_edges_neg[-1]
            a = self._next_edge(b, -1)
            v, e = self._refined(a, b)
            self._down_edges_neg.append(-a)
            self._down_prefix.append(self._down_prefix[-1] + v)
            self.error_estimate += e

    def value(self, y: float) -> float:
        y = float(y)
        if y == self.anchor:
            return 0.0
        self._extend(y)
        if y > self.anchor:
            i = bisect.bisect_left(self._up_edges, y)
            a = self._up_edges[i - 1]
            part = self._refined(a, y)[0] if y > a else 0.0
            return self._up_prefix[i - 1] + part
        i = bisect.bisect_left(self._down_edges_neg, -y)
        b = -self._down_edges_neg[i - 1]
        part = self._refined(y, b)[0] if b > y else 0.0
        return -(self._down_prefix[i - 1] + part)

    def values(self, ys) -> np.ndarray:
        return np.array([self.value(y) for y in np.atleast_1d(ys)])


def log_exp_integral(w: Callable, a: float, b: float, *,
                     panel: float = 4.0,
                     envelope: Optional[Callable] = None,
                     rel_floor: float = 1e-15) -> float:
    """``log`` of ``int_a^b exp(w(x)) dx`` for integrands whose mass piles
    up near ``b`` (w non-decreasing up to local dips).

    Panels are processed right-to-left in shifted (overflow-safe)
    arithmetic; the sweep stops early once the remaining stretch is
    provably negligible against the accumulated value, using
    ``envelope`` (default: w itself, assumed non-decreasing) to bound
    the remainder.
    """
    if b <= a:
        return -math.inf
    env = envelope if envelope is not None else w
    log_acc = -math.inf
    x_hi = float(b)
    stale = 0
    while x_hi > a:
        x_lo = max(a, x_hi - panel)
        center = 0.5 * (x_lo + x_hi)
        half = 0.5 * (x_hi - x_lo)
        wx = np.asarray(w(center + half * _NODES), dtype=float)
        m = float(np.max(wx))
        if math.isfinite(m):
            p = half * float(_WEIGHTS_K @ np.exp(wx - m))
            log_panel = m + math.log(p) if p > 0 else -math.inf
        else:
            log_panel = -math.inf
        log_acc = np.logaddexp(log_acc, log_panel)
        if math.isfinite(log_acc) and log_panel < log_acc + math.log(rel_floor):
            stale += 1
            if stale >= 3:
                remaining = x_lo - a
                if remaining <= 0:
                    break
                bound = float(env(x_lo)) + math.log(remaining)
                if bound < log_acc + math.log(rel_floor):
                    break
        else:
            stale = 0
        x_hi = x_lo
    return float(log_acc)

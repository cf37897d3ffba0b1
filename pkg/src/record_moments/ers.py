"""Expected record sequences and their moment-sequence structure.

The n-th expected record of a distribution with exponential-coordinate
representation H is ``int_0^oo y^{n-1}/(n-1)! e^{-y} H(y) dy``.  Purely
discrete sources evaluate this as an exact finite sum of incomplete-gamma
tail weights; everything else goes through adaptive quadrature, switching
to log-space assembly where H exceeds the float range.

Normalized differences of consecutive entries,
``(rho_{n+2} - rho_{n+1})/(rho_2 - rho_1) * (n+1)!``, form the moment
sequence of a positive random variable with all moments finite; that
equivalence drives the conversions and the validation report here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import gammaincc

from .distributions import (
    HRep,
    QuantileRep,
    membership_check,
    record_weight_integral,
    to_h_rep,
)
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    DomainError,
    NonConvergenceError,
)
from .moments import MomentSeq
from .numerics import DEFAULT_TOL, Tolerance

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class ErsSeq:
    """A finite prefix rho_1..rho_N of an expected record sequence with
    per-entry absolute error bounds."""

    rho: np.ndarray
    error: np.ndarray
    source_label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float))
        object.__setattr__(self, "error", np.asarray(self.error, dtype=float))
        if self.rho.shape != self.error.shape or self.rho.ndim != 1:
            raise ConfigurationError("rho and error must be 1-d and equal length")

    def __len__(self) -> int:
        return self.rho.size

    def to_json_dict(self) -> dict:
        return {"rho": [float(v) for v in self.rho],
                "error": [float(e) for e in self.error],
                "label": self.source_label}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @staticmethod
    def from_json(text: Union[str, dict]) -> "ErsSeq":
        obj = json.loads(text) if isinstance(text, str) else text
        if "rho" not in obj:
            raise ConfigurationError("expected-record JSON needs a 'rho' list")
        rho = np.asarray(obj["rho"], dtype=float)
        err = np.asarray(obj.get("error", np.zeros_like(rho)), dtype=float)
        return ErsSeq(rho, err, obj.get("label", ""))


@dataclass(frozen=True)
class GenFunEval:
    """Truncated evaluation of the record generating function
    ``sum_n rho_n t^(n-1)`` with a convergence diagnostic."""

    t: float
    value: float
    terms_used: int
    converged: bool
    radius_estimate: float


@dataclass(frozen=True)
class Eq6Report:
    """Entry-wise comparison of the two sides of the record/moment
    correspondence: normalized record differences against T-moments."""

    entries: tuple
    max_rel_discrepancy: float


def _step_ers(step, n_max: int) -> np.ndarray:
    """Exact expected records of a step H: sums of x_j times Erlang tail
    weights over the jump partition."""
    jumps, xs = step
    edges = np.concatenate([[0.0], jumps])
    rho = np.empty(n_max)
    for n in range(1, n_max + 1):
        upper = gammaincc(n, edges)           # regularized tail weights
        w = upper - np.concatenate([upper[1:], [0.0]])
        rho[n - 1] = float(np.dot(xs, w))
    return rho


def ers_compute(d: Union[QuantileRep, HRep], n_max: int,
                tol: Tolerance = DEFAULT_TOL, *,
                check_membership: bool = True) -> ErsSeq:
    """First ``n_max`` expected records of a distribution.

    Refuses (DomainError) when the membership diagnostics fail: outside
    that class some record has no finite expectation and the sequence is
    meaningless.  Raises NonConvergenceError if any quadrature cannot
    certify its tolerance.
    """
    if n_max < 1:
        raise ConfigurationError("n_max must be >= 1")
    h = d if isinstance(d, HRep) else to_h_rep(d)
    label = getattr(h.source, "label", "") or ""
    if check_membership:
        rep = membership_check(h, max_order=max(2, n_max), tol=tol)
        if not rep.in_H_star:
            reason = ("it is constant; non-constant required" if not rep.non_constant
                      else f"moment integral of order {rep.failing_order} diverges")
            raise DomainError(f"not in the record-integrable class: {reason}")
    if h.step is not None:
        rho = _step_ers(h.step, n_max)
        scale = float(np.max(np.abs(h.step[1]))) if h.step[1].size else 1.0
        err = np.full(n_max, 8 * _EPS * max(scale, 1.0))
        return ErsSeq(rho, err, label)
    rho = np.empty(n_max)
    err = np.empty(n_max)
    for n in range(1, n_max + 1):
        res = record_weight_integral(h, n - 1, tol)
        if not res.converged:
            raise NonConvergenceError(
                f"expected record {n} did not converge: {res.detail or 'tolerance not met'}",
                result=res)
        rho[n - 1] = res.value
        err[n - 1] = res.abs_error_estimate
    return ErsSeq(rho, err, label)


def ers_from_t_moments(moments, n_max: int, rho1: float = 0.0,
                       rho2: float = 1.0) -> ErsSeq:
    """Expected record sequence of the distribution reconstructed from a
    positive variable with the given moments:
    ``rho_{n+1} = rho1 + (rho2 - rho1) * sum_{j<n} m_j / (j+1)!``."""
    if not rho2 > rho1:
        raise DegenerateInputError("rho2 must exceed rho1")
    m = np.asarray(moments, dtype=float)
    if m.size < n_max - 1:
        raise ConfigurationError(f"need {n_max - 1} moments for {n_max} records")
    rho = np.empty(n_max)
    rho[0] = rho1
    acc = 0.0
    for n in range(1, n_max):
        acc += m[n - 1] / math.factorial(n)
        rho[n] = rho1 + (rho2 - rho1) * acc
    return ErsSeq(rho, np.full(n_max, 4 * _EPS * max(1.0, float(np.max(np.abs(rho))))),
                  "from_t_moments")


def ers_to_t_moments(rho: ErsSeq) -> MomentSeq:
    """Moments of the transform variable hiding in the record sequence:
    ``m_n = (n+1)! (rho_{n+2} - rho_{n+1}) / (rho_2 - rho_1)``."""
    r = rho.rho
    if r.size < 3:
        raise ConfigurationError("need at least three expected records")
    span = r[1] - r[0]
    if span <= 0:
        raise DegenerateInputError(
            "rho_2 <= rho_1: the source is degenerate, no transform variable exists")
    n = np.arange(r.size - 1)
    factorials = np.array([math.factorial(int(k) + 1) for k in n], dtype=float)
    m = factorials * np.diff(r) / span
    m[0] = 1.0
    return MomentSeq(m)


def gen_fun_rho(rho: ErsSeq, t: float, tol: Tolerance = DEFAULT_TOL) -> GenFunEval:
    """Truncated ``sum_n rho_n t^(n-1)``.

    The remainder bound uses the last term ratio; the convergence radius
    estimate is the median of ``|rho_n / rho_{n+1}|`` over the last five
    entries.  Visibly growing terms (or float overflow in them) yield
    ``converged = False``.
    """
    r = np.asarray(rho.rho, dtype=float)
    N = r.size
    with np.errstate(over="ignore", invalid="ignore"):
        terms = r * np.power(float(t), np.arange(N, dtype=float))
    nz = np.abs(r) > 0
    tail_ratios = np.abs(r[1:][nz[:-1]] / r[:-1][nz[:-1]])
    last = tail_ratios[-5:]
    radius = float(1.0 / np.median(last)) if last.size else math.inf
    finite = np.isfinite(terms)
    value = float(np.sum(terms[finite]))
    if t == 0.0:
        return GenFunEval(t, float(r[0]), 1, True, radius)
    if not np.all(finite):
        return GenFunEval(t, value, int(np.sum(finite)), False, radius)
    mags = np.abs(terms[np.abs(terms) > 0])
    if mags.size >= 2 and mags[-1] >= mags[-2]:
        return GenFunEval(t, value, N, False, radius)
    converged = False
    if mags.size >= 2:
        ratio = mags[-1] / mags[-2]
        tail = mags[-1] * ratio / (1 - ratio)
        converged = tail <= max(tol.abs_tol, tol.rel_tol * abs(value))
    return GenFunEval(t, value, N, converged, radius)


def validate_eq6(d: Union[QuantileRep, HRep], t_dist, n_max: int,
                 tol: Tolerance = DEFAULT_TOL) -> Eq6Report:
    """Compare normalized record differences with T-moments entry-wise.

    ``t_dist`` is anything exposing ``moment(n)``.  Discrepancies are
    reported, never raised.
    """
    seq = ers_compute(d, n_max + 2, tol)
    r = seq.rho
    span = r[1] - r[0]
    entries = []
    worst = 0.0
    for n in range(0, n_max + 1):
        lhs = (r[n + 1] - r[n]) / span
        rhs = float(t_dist.moment(n)) / math.factorial(n + 1)
        rel = abs(lhs - rhs) / max(abs(rhs), 1e-300)
        entries.append((n, lhs, rhs, rel))
        worst = max(worst, rel)
    return Eq6Report(tuple(entries), worst)

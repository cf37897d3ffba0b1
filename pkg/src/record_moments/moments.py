"""Stieltjes moment-sequence diagnostics and the generating-function pipeline.

A sequence is a Stieltjes moment sequence (moments of a measure on
[0, oo)) exactly when both the Hankel matrix [m_{i+j}] and its shift
[m_{i+j+1}] are positive semidefinite; with finitely many moments we can
only test those two conditions numerically, so ``feasible`` means "no
PSD violation detected at the available order".

Determinacy (is the representing distribution unique?) is undecidable
from finitely many moments.  ``carleman_diagnostic`` reports the partial
Carleman sum -- divergence of the full series is a classical sufficient
condition -- and labels a heuristic verdict that never claims
indeterminacy on its own.  The module also hosts the classical family of
densities that share every moment with the standard lognormal: the
textbook witness that feasibility plus smoothness does not buy
uniqueness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np

from .errors import ConfigurationError, DomainError, NonConvergenceError
from .numerics import DEFAULT_TOL, Tolerance, integrate_finite

if TYPE_CHECKING:  # pragma: no cover
    from .ers import ErsSeq

_HANKEL_EIG_TOL = 1e-10
_DETERMINATE, _INCONCLUSIVE, _KNOWN_INDET = (
    "likely_determinate", "inconclusive", "known_indeterminate_example")


@dataclass(frozen=True)
class MomentSeq:
    """Moments m_0..m_K of a candidate positive random variable, plus
    feasibility/determinacy diagnostics once they have been computed."""

    m: np.ndarray
    feasible_stieltjes: Optional[bool] = None
    hankel_min_eig: Optional[tuple] = None
    carleman_partial_sum: Optional[float] = None
    determinacy_hint: Optional[str] = None
    known_indeterminate: bool = False

    def __post_init__(self):
        object.__setattr__(self, "m", np.asarray(self.m, dtype=float))
        if self.m.ndim != 1 or self.m.size < 1:
            raise ConfigurationError("a moment sequence needs at least m_0")

    @property
    def order(self) -> int:
        return self.m.size - 1

    def to_json_dict(self) -> dict:
        return {
            "m": [float(v) for v in self.m],
            "feasible": self.feasible_stieltjes,
            "hints": {
                "hankel_min_eig": list(self.hankel_min_eig) if self.hankel_min_eig else None,
                "carleman_partial_sum": self.carleman_partial_sum,
                "determinacy": self.determinacy_hint,
            },
        }


@dataclass(frozen=True)
class MgfEval:
    """One evaluation of the moment generating function pipeline."""

    a: float
    value: float
    converged: bool


def _hankel_eigs(m: np.ndarray):
    K = m.size - 1
    p = K // 2
    H = np.array([[m[i + j] for j in range(p + 1)] for i in range(p + 1)])
    plain = float(np.linalg.eigvalsh(H)[0])
    plain_scale = float(np.max(np.abs(np.linalg.eigvalsh(H))))
    q = (K - 1) // 2
    Hs = np.array([[m[i + j + 1] for j in range(q + 1)] for i in range(q + 1)])
    shifted = float(np.linalg.eigvalsh(Hs)[0])
    shifted_scale = float(np.max(np.abs(np.linalg.eigvalsh(Hs))))
    return plain, plain_scale, shifted, shifted_scale


def _determinacy_verdict(ms: MomentSeq, partial: float) -> str:
    if ms.known_indeterminate:
        return _KNOWN_INDET
    m = ms.m
    terms = [m[n] ** (-1.0 / (2 * n)) for n in range(1, m.size) if m[n] > 0]
    if len(terms) < 3:
        return _INCONCLUSIVE
    # geometric decay of the Carleman terms means the series saturates
    ratio = terms[-1] / terms[-2]
    return _DETERMINATE if ratio > 0.9 else _INCONCLUSIVE


def stieltjes_feasibility(ms: MomentSeq) -> MomentSeq:
    """Fill the Hankel feasibility flags (and determinacy diagnostics).

    The tolerance is relative to each Hankel matrix's spectral norm:
    moment sequences of interest grow factorially, so an absolute
    eigenvalue threshold would be meaningless.
    """
    if ms.order < 2:
        raise ConfigurationError("feasibility needs moments up to order 2")
    plain, plain_scale, shifted, shifted_scale = _hankel_eigs(ms.m)
    feasible = (plain >= -_HANKEL_EIG_TOL * max(plain_scale, 1e-300)
                and shifted >= -_HANKEL_EIG_TOL * max(shifted_scale, 1e-300))
    partial = carleman_diagnostic(ms) if np.all(ms.m[1:] > 0) else None
    hint = _determinacy_verdict(ms, partial) if partial is not None else None
    return replace(ms, feasible_stieltjes=feasible,
                   hankel_min_eig=(plain, shifted),
                   carleman_partial_sum=partial,
                   determinacy_hint=hint)


def carleman_diagnostic(ms: MomentSeq) -> float:
    """Partial Carleman sum ``sum_{n=1}^K m_n^(-1/(2n))``.

    Divergence of the infinite series is sufficient for determinacy;
    the partial sum is only an indicator and never proves anything on
    its own.
    """
    m = ms.m
    if np.any(m[1:] <= 0):
        raise DomainError("Carleman diagnostic needs strictly positive moments")
    return float(sum(m[n] ** (-1.0 / (2 * n)) for n in range(1, m.size)))


def stieltjes_family_density(lam: float, t):
    """The classical equal-moments family: the standard lognormal density
    modulated by ``1 + lam * sin(pi log t)``.

    Every member shares all moments ``exp(n^2/2)`` with the lognormal,
    so no |lam| <= 1 member is determined by its moments.
    """
    if abs(lam) > 1:
        raise DomainError("|lambda| <= 1 is required for a nonnegative density")
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("the density lives on t > 0")
    logt = np.log(t)
    base = np.exp(-0.5 * logt**2) / (t * math.sqrt(2 * math.pi))
    return (1.0 + lam * np.sin(math.pi * logt)) * base


def stieltjes_equal_ers(n_max: int) -> np.ndarray:
    """The expected record sequence shared by the whole equal-moments
    family: rho_n = sum_{k=0}^{n-2} exp(k^2/2)/(k+1)! (empty sum = 0)."""
    rho = np.zeros(n_max)
    for n in range(2, n_max + 1):
        k = np.arange(0, n - 1)
        rho[n - 1] = float(np.sum(np.exp(k**2 / 2.0)
                                  / [math.factorial(int(j) + 1) for j in k]))
    return rho


def mgf_from_ers(rho: "ErsSeq", a: float, tol: Tolerance = DEFAULT_TOL) -> MgfEval:
    """Moment generating function of the transform variable, read off the
    expected record sequence.

    Differentiating ``(1-t) * sum rho_n t^(n-1)`` termwise and dividing
    by rho_2 - rho_1 gives ``sum (n+1)(rho_{n+2} - rho_{n+1}) a^n / (rho_2 - rho_1)``;
    the coefficients are already in hand, so no numerical differencing
    is involved.
    """
    r = np.asarray(rho.rho, dtype=float)
    if r.size < 3:
        raise ConfigurationError("need at least three expected records")
    span = r[1] - r[0]
    if span <= 0:
        raise DomainError("degenerate source: rho_2 must exceed rho_1")
    diffs = np.diff(r)                  # rho_{n+2} - rho_{n+1}, n = 0, 1, ...
    n = np.arange(diffs.size)
    with np.errstate(over="ignore", invalid="ignore"):
        terms = (n + 1) * diffs * (a ** n.astype(float)) / span
    if not np.all(np.isfinite(terms)):
        finite = np.isfinite(terms)
        return MgfEval(a, float(np.sum(terms[finite])), False)
    value = float(np.sum(terms))
    converged = True
    if a != 0 and terms.size >= 2 and terms[-2] != 0:
        ratio = abs(terms[-1] / terms[-2])
        if ratio < 1:
            tail = abs(terms[-1]) * ratio / (1 - ratio)
            converged = tail <= max(tol.abs_tol, tol.rel_tol * abs(value))
        else:
            converged = False
    return MgfEval(a, value, converged)


def ers_from_mgf(m_T: Callable, rho1: float, rho2: float, t: float,
                 tol: Tolerance = DEFAULT_TOL) -> float:
    """Generating-function value of the expected record sequence rebuilt
    from the transform variable's mgf:
    ``(rho1 + (rho2 - rho1) * int_0^t m_T) / (1 - t)``."""
    if not abs(t) < 1:
        raise DomainError("|t| < 1 is required")
    if t == 0.0:
        return float(rho1)

    def f(s):
        return np.asarray(m_T(np.asarray(s, dtype=float)), dtype=float)

    res = integrate_finite(f, 0.0, t, tol)
    if not (res.converged and math.isfinite(res.value)):
        raise NonConvergenceError("mgf integral did not converge on [0, t]",
                                  result=res)
    return (rho1 + (rho2 - rho1) * res.value) / (1.0 - t)

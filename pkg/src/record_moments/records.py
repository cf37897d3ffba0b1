"""Record-value laws and Monte Carlo simulators.

Three notions of upper records are supported:

* ``ordinary`` -- strict records of an i.i.d. stream; the chain can
  terminate when the distribution has an atom at its upper endpoint.
* ``weak`` -- ties with the current record also count; never terminates.
* ``quantile_uniform`` -- the quantile function applied to records of a
  standard uniform stream.  This is the working notion behind expected
  record sequences, and is simulated exactly through partial sums of
  standard exponentials: the n-th record equals H evaluated at an
  Erlang(n,1) variable.

Each replication owns an independent, reproducible RNG stream derived
from (seed, replication index), so results do not depend on scheduling
or replication order.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import gammainc

from .distributions import HRep, QuantileRep, to_h_rep
from .errors import ConfigurationError, DomainError

_NOTIONS = ("ordinary", "weak", "quantile_uniform")


@dataclass(frozen=True)
class RecordSample:
    """Simulated record values: one row per replication, one column per
    record index, NaN where a replication realized fewer records.
    ``terminated_flags[r]`` counts the records realized in replication r."""

    values: np.ndarray
    notion: str
    seed: int
    terminated_flags: np.ndarray

    @property
    def reps(self) -> int:
        return self.values.shape[0]

    @property
    def n_max(self) -> int:
        return self.values.shape[1]


def uniform_record_pdf(n: int, u):
    """Density of the n-th standard uniform record at u: L(u)^(n-1)/(n-1)!
    with L(u) = -log(1-u)."""
    if n < 1:
        raise DomainError("record index must be >= 1")
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise DomainError("u must lie in (0, 1)")
    L = -np.log1p(-u)
    if n == 1:
        return np.ones_like(L)
    return np.exp((n - 1) * np.log(L) - math.lgamma(n))


def record_cdf(d: QuantileRep, n: int, x):
    """Distribution function of the n-th record of ``d``.

    Equals ``1 - (1-F(x)) * sum_{k<n} L(F(x))^k / k!``, which is the
    Erlang(n,1) distribution function evaluated at L(F(x)); the
    regularized incomplete gamma gives that value with the right
    conventions at F = 0 (result 0) and F = 1 (result 1) built in.
    """
    if n < 1:
        raise DomainError("record index must be >= 1")
    if d.cdf is None:
        raise DomainError("record_cdf needs a distribution with a cdf view")
    F = np.clip(np.asarray(d.cdf(x), dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore"):
        t = np.where(F < 1.0, -np.log1p(-np.where(F < 1.0, F, 0.0)), np.inf)
    return gammainc(n, t)


def _stream_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng((int(seed), int(rep)))


def simulate_quantile_records(d: Union[QuantileRep, HRep], n_max: int,
                              reps: int, seed: int) -> RecordSample:
    """Exact simulation of quantile-of-uniform records via Erlang sums.

    Draws n_max i.i.d. standard exponentials per replication, forms
    partial sums S_1..S_n and returns H(S_n).  This notion never
    terminates, so every replication yields all n_max records.
    """
    if reps < 1 or n_max < 1:
        raise ConfigurationError("reps and n_max must be >= 1")
    h = d if isinstance(d, HRep) else to_h_rep(d)
    sums = np.empty((reps, n_max))
    for r in range(reps):
        rng = _stream_rng(seed, r)
        sums[r] = np.cumsum(rng.standard_exponential(n_max))
    values = np.asarray(h(sums), dtype=float)
    flags = np.full(reps, n_max, dtype=int)
    return RecordSample(values, "quantile_uniform", seed, flags)


def simulate_stream_records(d: QuantileRep, notion: str, stream_len: int,
                            reps: int, seed: int) -> RecordSample:
    """Scan i.i.d. streams of length ``stream_len`` for ordinary (strict)
    or weak (ties allowed) records.

    Replications may realize different record counts; rows are NaN-padded
    and ``terminated_flags`` reports the realized counts.  Note the count
    is limited by the stream length even for non-terminating chains.
    """
    if notion == "quantile_uniform":
        raise ConfigurationError(
            "quantile_uniform records are simulated exactly by "
            "simulate_quantile_records, not by stream scanning")
    if notion not in _NOTIONS:
        raise ConfigurationError(f"unknown record notion {notion!r}")
    if reps < 1 or stream_len < 1:
        raise ConfigurationError("reps and stream_len must be >= 1")
    strict = notion == "ordinary"
    per_rep = []
    counts = np.empty(reps, dtype=int)
    for r in range(reps):
        rng = _stream_rng(seed, r)
        x = np.asarray(d.quantile(rng.random(stream_len)), dtype=float)
        if stream_len == 1:
            recs = x
        else:
            prev_max = np.maximum.accumulate(x)[:-1]
            later = x[1:] > prev_max if strict else x[1:] >= prev_max
            mask = np.concatenate([[True], later])
            recs = x[mask]
        per_rep.append(recs)
        counts[r] = recs.size
    width = int(counts.max())
    values = np.full((reps, width), np.nan)
    for r, recs in enumerate(per_rep):
        values[r, :recs.size] = recs
    return RecordSample(values, notion, seed, counts)


def record_sample_to_csv(sample: RecordSample, path_or_buf) -> None:
    """Write rows (rep, n, value, notion), skipping unrealized records."""
    own = isinstance(path_or_buf, (str, bytes))
    buf = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        writer = csv.writer(buf)
        writer.writerow(["rep", "n", "value", "notion"])
        for r in range(sample.reps):
            row = sample.values[r]
            for n in range(sample.terminated_flags[r]):
                writer.writerow([r, n + 1, repr(float(row[n])), sample.notion])
    finally:
        if own:
            buf.close()


def record_sample_summary(sample: RecordSample) -> dict:
    """Per-record-index summary: count, mean, standard error, quantiles."""
    out = {"notion": sample.notion, "seed": sample.seed, "per_n": []}
    qs = (0.1, 0.25, 0.5, 0.75, 0.9)
    for n in range(sample.n_max):
        col = sample.values[:, n]
        col = col[np.isfinite(col)]
        if col.size == 0:
            out["per_n"].append({"n": n + 1, "count": 0})
            continue
        se = float(np.std(col, ddof=1) / math.sqrt(col.size)) if col.size > 1 else math.nan
        out["per_n"].append({
            "n": n + 1,
            "count": int(col.size),
            "mean": float(np.mean(col)),
            "se": se,
            "quantiles": {str(q): float(np.quantile(col, q)) for q in qs},
        })
    return out

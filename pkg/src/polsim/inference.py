"""Bayesian estimation of inter-arrival (or service) rates from duration traces.

Exponential likelihood with a conjugate Gamma(alpha, beta) prior on the rate:
the posterior after n observations summing to S is Gamma(alpha + n, beta + S),
and a new duration is predicted by compounding a rate draw from the posterior
with an exponential draw at that rate.  Traces with clearly non-exponential
shape are better fed to the simulator directly via an empirical
DistributionSpec (bootstrap resampling) instead of forcing this model.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class GammaPosterior:
    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be > 0")

    @property
    def mean(self) -> float:
        """Posterior mean of the rate."""
        return self.alpha / self.beta

    @property
    def predictive_mean(self) -> float:
        """Mean of the next duration; infinite when alpha <= 1."""
        if self.alpha <= 1.0:
            return float("inf")
        return self.beta / (self.alpha - 1.0)


def fit_exponential(data, prior: GammaPosterior) -> GammaPosterior:
    """Conjugate update: (alpha + n, beta + sum of durations)."""
    data = np.asarray(data, dtype=np.float64)
    if data.size == 0:
        raise ValueError("data must be non-empty")
    if np.any(data <= 0):
        raise ValueError("durations must all be > 0")
    return GammaPosterior(prior.alpha + data.size, prior.beta + float(data.sum()))


def posterior_predictive_sample(
    post: GammaPosterior, rng: np.random.Generator
) -> float:
    """One draw of the next duration: rate ~ posterior, duration ~ Exp(rate)."""
    m = rng.gamma(post.alpha, 1.0 / post.beta)
    return float(rng.exponential(1.0 / m))


def posterior_predictive_samples(
    post: GammaPosterior, size: int, rng: np.random.Generator
) -> np.ndarray:
    rates = rng.gamma(post.alpha, 1.0 / post.beta, size)
    return rng.exponential(1.0 / rates)


def load_trace(path, column: str | None = None) -> list[float]:
    """Read positive durations (seconds) from a trace file.

    Default format is one decimal per line; pass ``column`` to read that
    column of a headered CSV instead.  Rejects non-positive or malformed
    entries naming the offending line.
    """
    path = Path(path)
    values: list[float] = []
    if column is None:
        with path.open() as fh:
            for lineno, raw in enumerate(fh, start=1):
                text = raw.strip()
                if not text:
                    continue
                try:
                    v = float(text)
                except ValueError:
                    raise ValueError(
                        f"{path}: line {lineno}: not a decimal: {text!r}"
                    ) from None
                if v <= 0:
                    raise ValueError(f"{path}: line {lineno}: duration must be > 0")
                values.append(v)
    else:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or column not in reader.fieldnames:
                raise ValueError(f"{path}: no column named {column!r}")
            for lineno, row in enumerate(reader, start=2):
                text = (row[column] or "").strip()
                try:
                    v = float(text)
                except ValueError:
                    raise ValueError(
                        f"{path}: line {lineno}: not a decimal: {text!r}"
                    ) from None
                if v <= 0:
                    raise ValueError(f"{path}: line {lineno}: duration must be > 0")
                values.append(v)
    if not values:
        raise ValueError(f"{path}: trace is empty")
    return values

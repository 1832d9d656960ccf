"""Separation quality metrics and exhaustive permutation assignment.

All dB values are clamped to [-100, 100]; EPS guards the residual term.
Functions accept :class:`~consep.audio.Waveform` objects or plain 1-D arrays.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .audio import ENERGY_FLOOR, Waveform
from .errors import CapacityError, DegenerateSignalError, ShapeError

EPS = 1e-12
DB_MIN, DB_MAX = -100.0, 100.0
MAX_SOURCES = 8


def _as_samples(x) -> np.ndarray:
    if isinstance(x, Waveform):
        return x.samples
    return np.asarray(x, dtype=np.float64)


def _pair(reference, estimate):
    if isinstance(reference, Waveform) and isinstance(estimate, Waveform):
        if reference.sample_rate_hz != estimate.sample_rate_hz:
            raise ShapeError("sample rate mismatch")
    s, s_hat = _as_samples(reference), _as_samples(estimate)
    if s.shape != s_hat.shape or s.ndim != 1:
        raise ShapeError(f"signal shapes differ: {s.shape} vs {s_hat.shape}")
    if float(s @ s) <= ENERGY_FLOOR:
        raise DegenerateSignalError("reference has zero energy")
    if float(s_hat @ s_hat) <= ENERGY_FLOOR:
        raise DegenerateSignalError("estimate has zero energy")
    return s, s_hat


def _db(num: float, den: float) -> float:
    if num <= 0.0:
        return DB_MIN
    return float(np.clip(10.0 * np.log10(num / den), DB_MIN, DB_MAX))


def si_snr(reference, estimate) -> float:
    """Scale-invariant SNR of ``estimate`` against ``reference`` (no mean removal)."""
    s, s_hat = _pair(reference, estimate)
    target = (s_hat @ s) / (s @ s) * s
    residual = target - s_hat
    return _db(float(target @ target), float(residual @ residual) + EPS)


def sdr(reference, estimate) -> float:
    """Plain energy-ratio SDR; not scale invariant."""
    s, s_hat = _pair(reference, estimate)
    err = s - s_hat
    return _db(float(s @ s), float(err @ err) + EPS)


def si_snri(reference, estimate, mixture) -> float:
    return si_snr(reference, estimate) - si_snr(reference, mixture)


def sdri(reference, estimate, mixture) -> float:
    return sdr(reference, estimate) - sdr(reference, mixture)


METRICS = {"si_snr": si_snr, "sdr": sdr}


@dataclass(frozen=True)
class Assignment:
    """Best pairing of estimates to references.

    ``permutation[j]`` is the (0-based) reference index matched to estimate ``j``.
    """

    permutation: tuple[int, ...]
    mean_score_db: float

    def estimate_for_reference(self) -> tuple[int, ...]:
        """Inverse view: entry ``i`` is the estimate index matched to reference ``i``."""
        inv = [0] * len(self.permutation)
        for j, i in enumerate(self.permutation):
            inv[i] = j
        return tuple(inv)


@lru_cache(maxsize=None)
def _permutations(m: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(m))), dtype=np.intp).reshape(-1, m)


def _members(sources):
    # SourceSet, 2-D array (one row per source) or any sequence of signals
    return list(sources)


def pairwise_scores(references, estimates, metric: str = "si_snr") -> np.ndarray:
    """Matrix ``S[i, j] = metric(references[i], estimates[j])``."""
    refs, ests = _members(references), _members(estimates)
    if len(refs) != len(ests):
        raise ShapeError(f"source count mismatch: {len(refs)} references vs {len(ests)} estimates")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {sorted(METRICS)}")
    fn = METRICS[metric]
    return np.array([[fn(r, e) for e in ests] for r in refs], dtype=np.float64).reshape(len(refs), len(ests))


def assignment_from_scores(scores: np.ndarray) -> Assignment:
    """Maximise the mean of ``scores[perm[j], j]`` over all permutations.

    Ties resolve to the lexicographically smallest permutation because
    ``itertools.permutations`` enumerates in lexicographic order and argmax
    returns the first maximum.
    """
    m = scores.shape[0]
    if m < 1:
        raise ShapeError("need at least one source")
    if m > MAX_SOURCES:
        raise CapacityError(f"exhaustive assignment supports at most {MAX_SOURCES} sources, got {m}")
    perms = _permutations(m)
    cols = np.arange(m)
    means = scores[perms, cols].sum(axis=1) / m
    best = int(np.argmax(means))
    return Assignment(tuple(int(i) for i in perms[best]), float(means[best]))


def best_assignment(references, estimates, metric: str = "si_snr") -> Assignment:
    refs, ests = _members(references), _members(estimates)
    if len(refs) != len(ests):
        raise ShapeError(f"source count mismatch: {len(refs)} vs {len(ests)}")
    if len(refs) > MAX_SOURCES:
        raise CapacityError(f"exhaustive assignment supports at most {MAX_SOURCES} sources, got {len(refs)}")
    return assignment_from_scores(pairwise_scores(refs, ests, metric))

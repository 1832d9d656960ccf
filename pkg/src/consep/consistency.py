"""Cross-model agreement scores and the per-mixture SCI record."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace

from .audio import SourceSet, Waveform
from .errors import ShapeError
from .metrics import best_assignment, si_snr

PRIMARY = "primary"
REVIEWER = "reviewer"


@dataclass(frozen=True)
class SciTuple:
    """Consistency record for one mixture.

    ``seps`` are the pseudo-reference paths; ``origin`` says which model made them.
    """

    id: str
    scm_db: float
    mscm_db: float
    mix: str
    seps: tuple[str, ...]
    origin: str = PRIMARY
    # the two output sets the scores were computed from (for integrity checks)
    scored_primary: tuple[str, ...] | None = None
    scored_reviewer: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mix", os.fspath(self.mix))
        object.__setattr__(self, "seps", tuple(os.fspath(p) for p in self.seps))
        for name in ("scored_primary", "scored_reviewer"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(os.fspath(p) for p in val))
        if self.origin not in (PRIMARY, REVIEWER):
            raise ValueError(f"origin must be primary or reviewer, got {self.origin!r}")
        for v in (self.scm_db, self.mscm_db):
            if not (math.isfinite(v) and -100.0 <= v <= 100.0):
                raise ValueError(f"score {v} outside [-100, 100] dB")

    def with_seps(self, seps, origin: str) -> "SciTuple":
        return replace(self, seps=tuple(seps), origin=origin)


def _check_sets(x: SourceSet, v: SourceSet):
    if len(x) != len(v):
        raise ShapeError(f"model outputs have different source counts: {len(x)} vs {len(v)}")
    if x.num_samples != v.num_samples or x.sample_rate_hz != v.sample_rate_hz:
        raise ShapeError("model outputs differ in length or sample rate")


def scm(x: SourceSet, v: SourceSet) -> float:
    """Best-permutation mean SI-SNR with the primary outputs ``x`` as references."""
    _check_sets(x, v)
    return best_assignment(x, v, "si_snr").mean_score_db


def mscm(y: Waveform, x: SourceSet, v: SourceSet) -> float:
    """Mean SI-SNR between the mixture and all 2M separated signals. Lower is better."""
    _check_sets(x, v)
    if len(y) != x.num_samples or y.sample_rate_hz != x.sample_rate_hz:
        raise ShapeError("mixture does not match separated outputs")
    scores = [si_snr(y, phi) for phi in (*x, *v)]
    # fsum is correctly rounded, so swapping x and v cannot change the result
    return math.fsum(scores) / len(scores)


def build_sci(id: str, y: Waveform, x: SourceSet, v: SourceSet, mix_path, sep_paths,
              reviewer_paths=None) -> SciTuple:
    """Score one mixture; the primary model's outputs become the pseudo references."""
    sep_paths = tuple(sep_paths)
    if len(sep_paths) != len(x):
        raise ShapeError(f"{id}: expected {len(x)} separation paths, got {len(sep_paths)}")
    return SciTuple(
        id=id, scm_db=scm(x, v), mscm_db=mscm(y, x, v), mix=mix_path, seps=sep_paths, origin=PRIMARY,
        scored_primary=sep_paths if reviewer_paths is not None else None,
        scored_reviewer=tuple(reviewer_paths) if reviewer_paths is not None else None,
    )

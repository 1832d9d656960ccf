"""Spectrogram fusion of two models' outputs and the reviewer-label rewrite."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from pathlib import Path

from .audio import SourceSet, Waveform, read_wav, write_wav
from .consistency import REVIEWER, SciTuple
from .errors import CapacityError, ShapeError
from .manifest import SeparationManifest, SepRecord, write_separation
from .metrics import MAX_SOURCES

log = logging.getLogger(__name__)

N_FFT = 256
HOP = 64


def hann(n: int) -> np.ndarray:
    """Periodic Hann window (COLA at hops of n/2, n/4, ...)."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


@dataclass(eq=False)
class Spectrogram:
    frames: np.ndarray  # (n_frames, n_fft // 2 + 1), complex
    n_fft: int
    hop: int
    sample_rate_hz: int
    length: int  # samples of the analysed signal
    window: str = "hann"

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.frames)


def _check_params(n_fft: int, hop: int):
    if n_fft < 2 or n_fft & (n_fft - 1):
        raise ShapeError(f"n_fft must be a power of two, got {n_fft}")
    if hop < 1 or n_fft % hop:
        raise ShapeError(f"hop {hop} must divide n_fft {n_fft}")


def stft(w: Waveform, n_fft: int = N_FFT, hop: int = HOP) -> Spectrogram:
    """Frames start at sample 0 with no padding: ``1 + (len - n_fft) // hop`` frames."""
    _check_params(n_fft, hop)
    x = w.samples
    if x.size < n_fft:
        raise ShapeError(f"signal of {x.size} samples is shorter than n_fft={n_fft}")
    n_frames = 1 + (x.size - n_fft) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = np.fft.rfft(x[idx] * hann(n_fft), axis=1)
    return Spectrogram(frames, n_fft, hop, w.sample_rate_hz, x.size)


def istft(s: Spectrogram) -> Waveform:
    """Weighted overlap-add; samples with no window coverage come out as zero."""
    win = hann(s.n_fft)
    n_frames = s.frames.shape[0]
    n = max(s.length, (n_frames - 1) * s.hop + s.n_fft)
    y = np.zeros(n)
    norm = np.zeros(n)
    chunks = np.fft.irfft(s.frames, n=s.n_fft, axis=1) * win
    for i in range(n_frames):
        sl = slice(i * s.hop, i * s.hop + s.n_fft)
        y[sl] += chunks[i]
        norm[sl] += win ** 2
    covered = norm > 1e-8
    y[covered] /= norm[covered]
    return Waveform(y[:s.length], s.sample_rate_hz)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    a, b = a.ravel(), b.ravel()
    den = np.linalg.norm(a) * np.linalg.norm(b)
    return float(a @ b / den) if den > 0 else 0.0


def match_speakers(a: Sequence[Spectrogram], b: Sequence[Spectrogram]) -> tuple[int, ...]:
    """Permutation ``perm`` maximising sum_i cos(|a[i]|, |b[perm[i]]|); ties go lexicographic."""
    if len(a) != len(b):
        raise ShapeError(f"cannot match {len(a)} spectrograms against {len(b)}")
    m = len(a)
    if m > MAX_SOURCES:
        raise CapacityError(f"speaker matching supports at most {MAX_SOURCES} sources")
    for s in (*a, *b):
        if s.frames.shape != a[0].frames.shape:
            raise ShapeError("spectrogram shapes differ")
    sim = np.array([[_cosine(ai.magnitude, bj.magnitude) for bj in b] for ai in a]).reshape(m, m)
    best, best_score = None, -np.inf
    for perm in itertools.permutations(range(m)):
        score = sum(sim[i, perm[i]] for i in range(m))
        if score > best_score:
            best, best_score = perm, score
    return tuple(best)


def _padded(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    # n_fft of zeros on both sides so every original sample has full overlap-add coverage
    tail = (-(x.size + n_fft)) % hop
    return np.concatenate([np.zeros(n_fft), x, np.zeros(n_fft + tail)])


def linear_fuse(primary_out: SourceSet, reviewer_out: SourceSet, lam: float = 0.8,
                n_fft: int = N_FFT, hop: int = HOP) -> SourceSet:
    """Per matched speaker: magnitude ``lam*|P| + (1-lam)*|R|`` with the primary's phase."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    if len(primary_out) != len(reviewer_out):
        raise ShapeError("source counts differ")
    if (primary_out.num_samples != reviewer_out.num_samples
            or primary_out.sample_rate_hz != reviewer_out.sample_rate_hz):
        raise ShapeError("primary and reviewer outputs differ in length or rate")
    n, rate = primary_out.num_samples, primary_out.sample_rate_hz

    def spec(w):
        return stft(Waveform(_padded(w.samples, n_fft, hop), rate), n_fft, hop)

    ps = [spec(w) for w in primary_out]
    rs = [spec(w) for w in reviewer_out]
    perm = match_speakers(ps, rs)
    fused = []
    for i, p in enumerate(ps):
        r = rs[perm[i]]
        mag = lam * p.magnitude + (1.0 - lam) * r.magnitude
        frames = mag * np.exp(1j * np.angle(p.frames))
        y = istft(Spectrogram(frames, n_fft, hop, rate, p.length)).samples
        fused.append(Waveform(y[n_fft:n_fft + n], rate))
    return SourceSet(fused)


def hkf_rewrite(selected: Sequence[SciTuple], reviewer_seps: Mapping[str, object]) -> list[SciTuple]:
    """Swap each selected tuple's pseudo labels for the adapted reviewer's outputs.

    ``reviewer_seps`` maps id to either a list of paths or a ``(SourceSet, paths)``
    pair. Scores are kept: they are the selection statistics, not label quality.
    """
    out = []
    for t in selected:
        if t.id not in reviewer_seps:
            raise KeyError(f"no reviewer separation for mixture {t.id!r}")
        entry = reviewer_seps[t.id]
        paths = entry[1] if isinstance(entry, tuple) and len(entry) == 2 and isinstance(entry[0], SourceSet) else entry
        if len(paths) != len(t.seps):
            raise ShapeError(f"{t.id}: reviewer produced {len(paths)} sources, tuple has {len(t.seps)}")
        out.append(t.with_seps(paths, REVIEWER))
    return out


def fuse_batch(primary: SeparationManifest, reviewer: SeparationManifest, out_dir, lam: float = 0.8,
               manifest_name: str = "separation.jsonl") -> SeparationManifest:
    """Fuse two separation manifests id by id into ``out_dir/<id>.s<i>.wav``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rev = reviewer.by_id()
    records = []
    for p in primary.records:
        r = rev.get(p.id)
        if not p.ok or r is None or not r.ok:
            records.append(SepRecord(p.id, None, "failed", "missing input separation"))
            continue
        try:
            fused = linear_fuse(SourceSet(read_wav(x) for x in p.seps), SourceSet(read_wav(x) for x in r.seps), lam)
        except (ShapeError, OSError, ValueError) as exc:
            log.warning("fusion failed for %s: %s", p.id, exc)
            records.append(SepRecord(p.id, None, "failed", str(exc)))
            continue
        paths = [out_dir / f"{p.id}.s{i}.wav" for i in range(1, len(fused) + 1)]
        for path, w in zip(paths, fused):
            write_wav(path, w, "float32")
        records.append(SepRecord(p.id, paths))
    result = SeparationManifest(records, {"fusion_lambda": lam})
    write_separation(result, out_dir / manifest_name)
    return result

"""Waveform container, WAV I/O, resampling and fixed-length shaping."""

from __future__ import annotations

import os
import tempfile
import warnings
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import firwin, resample_poly

from .errors import DegenerateSignalError, FormatError, ShapeError

DEFAULT_RATE = 8000
PCM16_SCALE = 32768.0
ENERGY_FLOOR = 1e-12

# windowed-sinc resampler design
KAISER_BETA = 8.0
TAPS_PER_BRANCH = 64


@dataclass(eq=False)
class Waveform:
    """Mono signal with its sample rate. Samples are stored as float64."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ShapeError(f"waveform must be 1-D, got shape {x.shape}")
        if x.size < 1:
            raise ShapeError("waveform must contain at least one sample")
        if not np.all(np.isfinite(x)):
            raise FormatError("waveform contains NaN or Inf samples")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        self.samples = x
        self.sample_rate_hz = int(self.sample_rate_hz)

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    @property
    def energy(self) -> float:
        return float(self.samples @ self.samples)

    def with_samples(self, samples) -> "Waveform":
        return Waveform(samples, self.sample_rate_hz)


class SourceSet:
    """Ordered list of M waveforms sharing length and sample rate."""

    def __init__(self, sources: Iterable[Waveform]):
        self.sources = tuple(sources)
        if not self.sources:
            raise ShapeError("a source set needs at least one member")
        n, rate = len(self.sources[0]), self.sources[0].sample_rate_hz
        for w in self.sources[1:]:
            if len(w) != n or w.sample_rate_hz != rate:
                raise ShapeError("source set members must share length and sample rate")

    @classmethod
    def from_array(cls, array, sample_rate_hz: int) -> "SourceSet":
        array = np.atleast_2d(np.asarray(array, dtype=np.float64))
        return cls(Waveform(row, sample_rate_hz) for row in array)

    def __len__(self):
        return len(self.sources)

    def __iter__(self):
        return iter(self.sources)

    def __getitem__(self, i):
        return self.sources[i]

    @property
    def sample_rate_hz(self) -> int:
        return self.sources[0].sample_rate_hz

    @property
    def num_samples(self) -> int:
        return len(self.sources[0])

    def as_array(self) -> np.ndarray:
        return np.stack([w.samples for w in self.sources])

    def reordered(self, order: Sequence[int]) -> "SourceSet":
        return SourceSet(self.sources[i] for i in order)


def read_wav(path) -> Waveform:
    """Load a PCM16 or float32 WAV file as a mono float64 waveform.

    Stereo input is averaged to mono. PCM16 samples are divided by 32768.
    """
    path = Path(path)
    try:
        with warnings.catch_warnings():
            # scipy only warns on a short data chunk; promote that to an error
            warnings.simplefilter("error", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except wavfile.WavFileWarning as exc:
        raise OSError(f"{path}: truncated or malformed WAV ({exc})") from exc
    except ValueError as exc:
        msg = str(exc)
        if "format" in msg.lower() or "riff" in msg.lower() or "supported" in msg.lower():
            raise FormatError(f"{path}: {msg}") from exc
        raise OSError(f"{path}: {msg}") from exc
    except EOFError as exc:
        raise OSError(f"{path}: truncated WAV file") from exc

    if data.dtype == np.int16:
        x = data.astype(np.float64) / PCM16_SCALE
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported sample type {data.dtype} (need int16 or float32)")
    if x.ndim == 2:
        if x.shape[1] > 2:
            raise FormatError(f"{path}: {x.shape[1]} channels not supported")
        x = x.mean(axis=1)
    if x.size == 0:
        raise OSError(f"{path}: no samples")
    return Waveform(x, rate)


def write_wav(path, w: Waveform, encoding: str = "float32") -> None:
    """Write ``w`` atomically. ``pcm16`` clips to [-1, 1) before quantizing."""
    path = Path(path)
    if encoding == "pcm16":
        q = np.round(w.samples * PCM16_SCALE)
        data = np.clip(q, -32768, 32767).astype(np.int16)
    elif encoding == "float32":
        data = w.samples.astype(np.float32)
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            wavfile.write(fh, w.sample_rate_hz, data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _resample_filter(up: int, down: int) -> np.ndarray:
    max_rate = max(up, down)
    half_len = TAPS_PER_BRANCH // 2 * max_rate
    return firwin(2 * half_len + 1, 1.0 / max_rate, window=("kaiser", KAISER_BETA))


def resample(w: Waveform, target_hz: int) -> Waveform:
    """Band-limited polyphase resampling (Kaiser windowed sinc).

    Output length is ``round(len(w) * target_hz / source_hz)``.
    """
    target_hz = int(target_hz)
    if target_hz <= 0:
        raise ValueError("target rate must be positive")
    if target_hz == w.sample_rate_hz:
        return Waveform(w.samples.copy(), target_hz)
    ratio = Fraction(target_hz, w.sample_rate_hz)
    up, down = ratio.numerator, ratio.denominator
    y = resample_poly(w.samples, up, down, window=_resample_filter(up, down))
    n_out = max(1, int(round(len(w) * target_hz / w.sample_rate_hz)))
    if y.size >= n_out:
        y = y[:n_out]
    else:
        y = np.concatenate([y, np.zeros(n_out - y.size)])
    return Waveform(y, target_hz)


def clamp_or_pad(w: Waveform, seconds: float, seed=None, rng: np.random.Generator | None = None) -> Waveform:
    """Cut a contiguous ``seconds``-long segment at a random offset, or zero-pad the tail."""
    if seconds <= 0:
        raise ValueError("seconds must be positive")
    n = int(round(seconds * w.sample_rate_hz))
    if len(w) == n:
        return w
    if len(w) < n:
        return w.with_samples(np.concatenate([w.samples, np.zeros(n - len(w))]))
    if rng is None:
        rng = np.random.default_rng(seed)
    offset = int(rng.integers(0, len(w) - n + 1))
    return w.with_samples(w.samples[offset:offset + n].copy())


def require_energy(x: np.ndarray, what: str = "signal") -> None:
    if float(x @ x) <= ENERGY_FLOOR:
        raise DegenerateSignalError(f"{what} has zero energy")

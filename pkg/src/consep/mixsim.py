"""Two-speaker mixture simulation.

Each source is resampled, clamped (or zero-padded) to a fixed duration with
its own random offset, and the second source is scaled so the first sits
``snr_db`` above it. The stored references are the scaled signals that are
actually present in the mixture.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import SourceSet, Waveform, clamp_or_pad, read_wav, resample, write_wav
from .errors import CapacityError, DegenerateSignalError, FormatError
from .manifest import DatasetManifest, MixRecord, atomic_write_text, write_dataset

log = logging.getLogger(__name__)

PEAK_LIMIT = 1.0
PEAK_TARGET = 0.99


@dataclass(frozen=True)
class MixSpec:
    id: str
    src_paths: tuple[Path, Path]
    snr_db: float
    duration_s: float = 4.0
    rate_hz: int = 8000
    offset_seed: int = 0

    def __post_init__(self):
        if len(self.src_paths) != 2:
            raise ValueError("a mixture needs exactly two source paths")
        if Path(self.src_paths[0]) == Path(self.src_paths[1]):
            raise ValueError("source paths must be distinct")
        if self.duration_s <= 0 or self.rate_hz <= 0:
            raise ValueError("duration and rate must be positive")
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")


def mix_sources(s1: Waveform, s2: Waveform, snr_db: float, duration_s: float = 4.0,
                rate_hz: int = 8000, offset_seed: int = 0) -> tuple[Waveform, SourceSet]:
    rng = np.random.default_rng(offset_seed)
    a = clamp_or_pad(resample(s1, rate_hz), duration_s, rng=rng).samples
    b = clamp_or_pad(resample(s2, rate_hz), duration_s, rng=rng).samples
    ea, eb = float(a @ a), float(b @ b)
    if ea <= 1e-12 or eb <= 1e-12:
        raise DegenerateSignalError("a source is silent after clamping")
    gain = np.sqrt(ea / (eb * 10.0 ** (snr_db / 10.0)))
    b = gain * b
    mix = a + b
    peak = float(np.max(np.abs(mix)))
    if peak > PEAK_LIMIT:
        k = PEAK_TARGET / peak
        a, b, mix = a * k, b * k, mix * k
    return Waveform(mix, rate_hz), SourceSet([Waveform(a, rate_hz), Waveform(b, rate_hz)])


def make_mixture(spec: MixSpec) -> tuple[Waveform, SourceSet]:
    s1, s2 = (read_wav(p) for p in spec.src_paths)
    try:
        return mix_sources(s1, s2, spec.snr_db, spec.duration_s, spec.rate_hz, spec.offset_seed)
    except DegenerateSignalError as exc:
        raise DegenerateSignalError(f"{spec.id}: {exc}") from exc


@dataclass(frozen=True)
class SourceEntry:
    path: Path
    speaker_id: str
    gender: str | None = None


def read_source_list(path) -> list[SourceEntry]:
    """Read ``{"path", "speaker_id", "gender"?}`` lines; paths relative to the list file."""
    path = Path(path)
    base = path.parent.absolute()
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                out.append(SourceEntry(Path(os.path.normpath(base / row["path"])), str(row["speaker_id"]),
                                       row.get("gender")))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{line_no}: bad source record ({exc})") from exc
    return out


def write_source_list(entries, path) -> None:
    base = os.path.abspath(Path(path).parent)
    lines = [json.dumps({"path": Path(os.path.relpath(os.path.abspath(e.path), base)).as_posix(),
                         "speaker_id": e.speaker_id, "gender": e.gender}, sort_keys=True) for e in entries]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def plan_mixtures(sources: list[SourceEntry], count: int, snr_range=(0.0, 5.0), seed: int = 0,
                  duration_s: float = 4.0, rate_hz: int = 8000, prefix: str = "mix"):
    by_spk: dict[str, list[SourceEntry]] = {}
    for e in sources:
        by_spk.setdefault(e.speaker_id, []).append(e)
    speakers = sorted(by_spk)
    if count > 0 and len(speakers) < 2:
        raise CapacityError("need at least two distinct speakers to build mixtures")
    rng = np.random.default_rng(seed)
    plan = []
    for i in range(count):
        spk = rng.choice(len(speakers), size=2, replace=False)
        e1, e2 = (by_spk[speakers[k]][int(rng.integers(len(by_spk[speakers[k]])))] for k in spk)
        snr = float(rng.uniform(*snr_range))
        spec = MixSpec(f"{prefix}{i:05d}", (e1.path, e2.path), snr, duration_s, rate_hz,
                       int(rng.integers(2**31 - 1)))
        plan.append((spec, e1, e2))
    return plan


def build_dataset(source_list, count: int, snr_range=(0.0, 5.0), seed: int = 0, out_dir=".",
                  duration_s: float = 4.0, rate_hz: int = 8000, encoding: str = "float32",
                  parallelism: int = 1, prefix: str = "mix") -> DatasetManifest:
    """Simulate ``count`` mixtures and write ``out_dir/{mix,s1,s2}/<id>.wav`` plus ``manifest.jsonl``."""
    sources = read_source_list(source_list) if not isinstance(source_list, list) else source_list
    out_dir = Path(out_dir)
    for sub in ("mix", "s1", "s2"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    plan = plan_mixtures(sources, count, snr_range, seed, duration_s, rate_hz, prefix)

    def work(item):
        spec, e1, e2 = item
        mix, refs = make_mixture(spec)
        paths = [out_dir / "mix" / f"{spec.id}.wav", out_dir / "s1" / f"{spec.id}.wav",
                 out_dir / "s2" / f"{spec.id}.wav"]
        for p, w in zip(paths, (mix, refs[0], refs[1])):
            write_wav(p, w, encoding)
        return MixRecord(id=spec.id, mix=paths[0], refs=paths[1:], speakers=[e1.speaker_id, e2.speaker_id],
                         genders=[e1.gender, e2.gender], snr_db=spec.snr_db, sources=[e1.path, e2.path])

    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        records = list(pool.map(work, plan))
    meta = {"count": count, "seed": seed, "snr_range": list(snr_range), "duration_s": duration_s,
            "rate_hz": rate_hz, "encoding": encoding}
    manifest = DatasetManifest(records, meta)
    write_dataset(manifest, out_dir / "manifest.jsonl")
    log.info("wrote %d mixtures to %s", count, out_dir)
    return manifest


# -- toy speech-like corpus ---------------------------------------------------

def _syllable_envelope(n: int, rate: int, rng) -> np.ndarray:
    env = np.zeros(n)
    t = int(rng.uniform(0.05, 0.2) * rate)
    while t < n:
        length = int(rng.uniform(0.08, 0.3) * rate)
        seg = np.hanning(max(length, 8)) ** 0.5 * rng.uniform(0.4, 1.0)
        end = min(n, t + seg.size)
        env[t:end] = seg[:end - t]
        t = end + int(rng.uniform(0.02, 0.15) * rate)
    return env


def synth_utterance(f0_base: float, formants, duration_s: float, rate: int, rng) -> np.ndarray:
    """Harmonic source with a drifting pitch, formant envelope and syllable gating."""
    n = int(duration_s * rate)
    t = np.arange(n) / rate
    drift = np.cumsum(rng.standard_normal(n)) / np.sqrt(n) * 0.05
    f0 = f0_base * (1.0 + 0.08 * np.sin(2 * np.pi * rng.uniform(0.3, 1.2) * t + rng.uniform(0, 2 * np.pi)) + drift)
    phase = 2 * np.pi * np.cumsum(f0) / rate
    wobble = 1.0 + 0.05 * np.sin(2 * np.pi * 0.5 * t)
    y = np.zeros(n)
    nyq = 0.45 * rate
    for k in range(1, int(nyq / f0_base) + 1):
        fk = k * f0
        amp = sum(np.exp(-0.5 * ((fk - fc * wobble) / bw) ** 2) for fc, bw in formants) / k ** 0.3
        amp[fk > nyq] = 0.0
        y += amp * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    noise = np.convolve(rng.standard_normal(n), [1.0, -0.9], mode="same") * 0.05
    y = (y + noise) * _syllable_envelope(n, rate, rng)
    return 0.5 * y / (np.max(np.abs(y)) + 1e-12)


def synth_corpus(out_dir, n_speakers: int = 10, utts_per_speaker: int = 5, rate_hz: int = 16000,
                 seed: int = 0, duration_range=(3.0, 6.0)) -> Path:
    """Write a small corpus of synthetic single-speaker utterances and its source list.

    Speakers alternate male/female with pitch ranges of roughly 95-140 Hz and
    175-250 Hz. Returns the path of ``sources.jsonl``.
    """
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    entries = []
    for s in range(n_speakers):
        gender = "M" if s % 2 == 0 else "F"
        f0 = rng.uniform(95, 140) if gender == "M" else rng.uniform(175, 250)
        scale = 1.0 if gender == "M" else 1.15
        formants = [(rng.uniform(450, 800) * scale, 120.0), (rng.uniform(1100, 2000) * scale, 180.0),
                    (rng.uniform(2400, 3200), 250.0)]
        spk = f"spk{s:03d}"
        for u in range(utts_per_speaker):
            y = synth_utterance(f0, formants, rng.uniform(*duration_range), rate_hz, rng)
            p = out_dir / "wav" / f"{spk}_{u:02d}.wav"
            write_wav(p, Waveform(y, rate_hz), "pcm16")
            entries.append(SourceEntry(p, spk, gender))
    list_path = out_dir / "sources.jsonl"
    write_source_list(entries, list_path)
    return list_path

"""Separation backends and the trainer contract.

Built-in backends stand in for neural separators at desk scale:

* ``identity`` returns M copies of the mixture (a failed separation);
* ``oracle`` returns the true references;
* ``noisy_oracle`` returns each reference plus noise orthogonal to it, scaled so
  that SI-SNR(ref, output) equals the requested level exactly.

``external`` runs a command that writes ``<stem>.s1.wav .. <stem>.sM.wav`` into
an output directory. Trainers follow the same pattern: ``anneal`` raises a
noisy oracle's SNR by a fixed step, ``command`` runs an external trainer.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import subprocess
import tempfile
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .audio import SourceSet, Waveform, read_wav, write_wav
from .errors import BackendError, ContractError, ShapeError
from .manifest import DatasetManifest, SeparationManifest, SepRecord, atomic_write_text, write_separation

log = logging.getLogger(__name__)

KINDS = ("identity", "oracle", "noisy_oracle", "external")
NOISE_COLORS = ("white", "pink")
DIAG_TAIL = 2000


@dataclass(frozen=True)
class BackendSpec:
    """Separator description. Only the fields relevant to ``kind`` are consulted.

    ``snr_jitter_db`` and ``fail_rate`` make a noisy oracle's quality vary per
    mixture. Failures are decided by ``fail_seed`` and the mixture content, so
    backends sharing a ``fail_seed`` fail on nested sets of mixtures.
    """

    kind: str
    noise_snr_db: float | None = None
    seed: int = 0
    noise_color: str = "white"
    snr_jitter_db: float = 0.0
    fail_rate: float = 0.0
    fail_seed: int = 0
    command: tuple[str, ...] | None = None
    model_token: str | None = None
    timeout_s: float = 3600.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "noisy_oracle" and self.noise_snr_db is None:
            raise ValueError("noisy_oracle needs noise_snr_db")
        if self.noise_color not in NOISE_COLORS:
            raise ValueError(f"noise_color must be one of {NOISE_COLORS}")
        if not 0.0 <= self.fail_rate <= 1.0:
            raise ValueError("fail_rate must lie in [0, 1]")
        if self.kind == "external":
            if not self.command:
                raise ValueError("external backend needs a command template")
            object.__setattr__(self, "command", tuple(self.command))
            joined = " ".join(self.command)
            for ph in ("{mix}", "{out_dir}", "{num_sources}"):
                if ph not in joined:
                    raise ValueError(f"external command must contain the {ph} placeholder")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["command"] is not None:
            d["command"] = list(d["command"])
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "BackendSpec":
        return cls(**dict(d))


def _content_key(mix: Waveform) -> int:
    return zlib.crc32(mix.samples.tobytes())


def _unit_uniform(*key: int) -> float:
    return float(np.random.default_rng(list(key)).random())


def _colored_noise(rng, n: int, color: str) -> np.ndarray:
    noise = rng.standard_normal(n)
    if color == "pink":
        spec = np.fft.rfft(noise)
        f = np.arange(spec.size, dtype=np.float64)
        f[0] = 1.0
        noise = np.fft.irfft(spec / np.sqrt(f), n)
    return noise


def noisy_copy(ref: np.ndarray, snr_db: float, rng, color: str = "white") -> np.ndarray:
    """``ref`` plus noise orthogonal to it with energy ratio ``snr_db``."""
    ee = float(ref @ ref)
    if ee <= 1e-12:
        raise ShapeError("cannot add calibrated noise to a silent reference")
    n = _colored_noise(rng, ref.size, color)
    n = n - (n @ ref) / ee * ref
    n *= np.sqrt(ee / (float(n @ n) * 10.0 ** (snr_db / 10.0)))
    return ref + n


def _render(template, **values) -> list[str]:
    return [str(arg).format(**values) for arg in template]


def _run(cmd: list[str], timeout: float, what: str):
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired as exc:
        raise BackendError(f"{what} timed out after {timeout}s", str(exc.stderr or "")[-DIAG_TAIL:]) from exc
    except OSError as exc:
        raise BackendError(f"{what} could not start: {exc}") from exc
    if proc.returncode != 0:
        diag = (proc.stdout[-DIAG_TAIL:] + proc.stderr[-DIAG_TAIL:]).strip()
        raise BackendError(f"{what} exited with status {proc.returncode}", diag)
    return proc


def separate_external(backend: BackendSpec, mix_path, num_sources: int, out_dir) -> list[Path]:
    """Run the external command for one mixture; return the M output paths after validation."""
    mix_path, out_dir = Path(mix_path), Path(out_dir)
    cmd = _render(backend.command, mix=mix_path, out_dir=out_dir, num_sources=num_sources,
                  model=backend.model_token or "")
    _run(cmd, backend.timeout_s, f"separator {cmd[0]!r}")
    mix = read_wav(mix_path)
    paths = []
    for i in range(1, num_sources + 1):
        p = out_dir / f"{mix_path.stem}.s{i}.wav"
        if not p.exists():
            raise BackendError(f"separator did not write {p.name}")
        w = read_wav(p)
        if w.sample_rate_hz != mix.sample_rate_hz:
            raise BackendError(f"{p.name}: sample rate {w.sample_rate_hz} != mixture rate {mix.sample_rate_hz}")
        if len(w) != len(mix):
            raise BackendError(f"{p.name}: {len(w)} samples, mixture has {len(mix)}")
        paths.append(p)
    return paths


def separate(backend: BackendSpec, mix: Waveform, refs: SourceSet | None = None, num_sources: int = 2) -> SourceSet:
    if backend.kind == "identity":
        return SourceSet(Waveform(mix.samples.copy(), mix.sample_rate_hz) for _ in range(num_sources))
    if backend.kind == "external":
        with tempfile.TemporaryDirectory(prefix="consep-sep-") as tmp:
            mix_path = Path(tmp) / "mix.wav"
            out = Path(tmp) / "out"
            out.mkdir()
            write_wav(mix_path, mix, "float32")
            return SourceSet(read_wav(p) for p in separate_external(backend, mix_path, num_sources, out))
    if refs is None:
        raise ContractError(f"{backend.kind} backend requires reference sources")
    if len(refs) != num_sources:
        raise ContractError(f"expected {num_sources} references, got {len(refs)}")
    if refs.num_samples != len(mix) or refs.sample_rate_hz != mix.sample_rate_hz:
        raise ShapeError("references do not match the mixture")
    if backend.kind == "oracle":
        return SourceSet(Waveform(r.samples.copy(), r.sample_rate_hz) for r in refs)

    key = _content_key(mix)
    if backend.fail_rate > 0 and _unit_uniform(backend.fail_seed, key) < backend.fail_rate:
        return separate(replace(backend, kind="identity"), mix, num_sources=num_sources)
    rng = np.random.default_rng([backend.seed, key])
    snr = backend.noise_snr_db + backend.snr_jitter_db * rng.standard_normal()
    return SourceSet(Waveform(noisy_copy(r.samples, snr, rng, backend.noise_color), r.sample_rate_hz) for r in refs)


def output_paths(out_dir, mix_id: str, num_sources: int) -> list[Path]:
    return [Path(out_dir) / f"{mix_id}.s{i}.wav" for i in range(1, num_sources + 1)]


def _separate_one(backend: BackendSpec, rec, out_dir: Path, num_sources: int, skip_existing: bool) -> SepRecord:
    paths = output_paths(out_dir, rec.id, num_sources)
    if skip_existing and all(p.exists() for p in paths):
        return SepRecord(rec.id, paths)
    try:
        if backend.kind == "external":
            with tempfile.TemporaryDirectory(prefix=f".{rec.id}.", dir=out_dir) as tmp:
                # run on a copy named by id so output stems follow the id
                staged = Path(tmp) / f"{rec.id}.wav"
                shutil.copyfile(rec.mix, staged)
                produced = separate_external(backend, staged, num_sources, tmp)
                for src, dst in zip(produced, paths):
                    os.replace(src, dst)
        else:
            mix = read_wav(rec.mix)
            refs = SourceSet(read_wav(p) for p in rec.refs) if rec.refs else None
            est = separate(backend, mix, refs, num_sources)
            for p, w in zip(paths, est):
                write_wav(p, w, "float32")
    except Exception as exc:  # per-id isolation: record and move on
        log.warning("separation failed for %s: %s", rec.id, exc)
        for p in paths:
            if p.exists():
                p.unlink()
        return SepRecord(rec.id, None, "failed", f"{type(exc).__name__}: {exc}")
    return SepRecord(rec.id, paths)


def separate_batch(backend: BackendSpec, manifest: DatasetManifest, out_dir, parallelism: int = 1,
                   num_sources: int = 2, skip_existing: bool = True, manifest_name: str = "separation.jsonl",
                   ) -> SeparationManifest:
    """Separate every mixture, writing ``<out_dir>/<id>.s<i>.wav`` and a separation manifest.

    Failures are recorded per id. Outputs already on disk are reused when
    ``skip_existing`` is set, so an interrupted batch resumes where it stopped.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"output directory {out_dir} is not writable")
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        records = list(pool.map(lambda r: _separate_one(backend, r, out_dir, num_sources, skip_existing),
                                manifest.records))
    records.sort(key=lambda r: r.id)
    result = SeparationManifest(records, {"backend": backend.to_dict(), "num_sources": num_sources})
    write_separation(result, out_dir / manifest_name)
    n_failed = sum(not r.ok for r in records)
    if n_failed:
        log.warning("%d of %d separations failed", n_failed, len(records))
    return result


def load_separation(out_dir, mix_id: str, num_sources: int = 2) -> SourceSet:
    return SourceSet(read_wav(p) for p in output_paths(out_dir, mix_id, num_sources))


# -- trainers -----------------------------------------------------------------

TRAINER_KINDS = ("anneal", "command")


@dataclass(frozen=True)
class TrainerSpec:
    """``anneal`` improves a noisy oracle by ``step_db``; ``command`` runs an external trainer.

    Command placeholders: {train_manifest}, {dev_manifest}, {model_in}, {model_out}.
    """

    kind: str
    step_db: float = 3.0
    command: tuple[str, ...] | None = None
    timeout_s: float = 24 * 3600.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in TRAINER_KINDS:
            raise ValueError(f"unknown trainer kind {self.kind!r}")
        if self.kind == "command":
            if not self.command:
                raise ValueError("command trainer needs a command template")
            object.__setattr__(self, "command", tuple(self.command))

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["command"] is not None:
            d["command"] = list(d["command"])
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainerSpec":
        return cls(**dict(d))


def adapt(trainer: TrainerSpec, backend: BackendSpec, train_manifest, dev_manifest, model_out) -> BackendSpec:
    """Run one adaptation round and return the updated backend description."""
    model_out = Path(model_out)
    if trainer.kind == "anneal":
        if backend.kind != "noisy_oracle":
            raise ContractError("the anneal trainer only applies to noisy_oracle backends")
        adapted = replace(backend, noise_snr_db=backend.noise_snr_db + trainer.step_db,
                          model_token=str(model_out))
        atomic_write_text(model_out, json.dumps(adapted.to_dict(), sort_keys=True) + "\n")
        return adapted
    cmd = _render(trainer.command, train_manifest=train_manifest, dev_manifest=dev_manifest,
                  model_in=backend.model_token or "", model_out=model_out)
    _run(cmd, trainer.timeout_s, f"trainer {cmd[0]!r}")
    if not model_out.exists() or model_out.stat().st_size == 0:
        raise BackendError(f"trainer did not produce a model at {model_out}")
    return replace(backend, model_token=str(model_out))


def spec_digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]

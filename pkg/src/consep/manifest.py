"""Line-delimited JSON manifests.

Every manifest starts with a header line ``{"kind": ..., "version": 1, "meta": {...}}``
followed by one JSON object per record. Path-valued fields are stored relative
to the manifest's directory and resolved back to absolute path strings on read.
Writes go through a temp file and ``os.replace``.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import ParseError

VERSION = 1


class _PathCodec:
    """Converts paths to/from manifest-relative form, caching per directory.

    Records usually share a handful of directories, so the costly
    normalisation runs once per directory rather than once per path.
    """

    def __init__(self, base):
        self.base = os.path.abspath(base)
        self._rel: dict[str, str] = {}
        self._abs: dict[str, str] = {}

    def to_rel(self, value):
        if value is None:
            return None
        if isinstance(value, (list, tuple)):
            return [self.to_rel(v) for v in value]
        head, name = os.path.split(os.fspath(value))
        if name in ("", ".", ".."):
            return os.path.relpath(os.path.abspath(value), self.base).replace(os.sep, "/")
        d = self._rel.get(head)
        if d is None:
            d = os.path.relpath(os.path.abspath(head or "."), self.base).replace(os.sep, "/")
            self._rel[head] = d
        return name if d == "." else f"{d}/{name}"

    def to_abs(self, value):
        if value is None:
            return None
        if isinstance(value, list):
            return [self.to_abs(v) for v in value]
        head, name = os.path.split(value)
        if name in ("", ".", ".."):
            return os.path.normpath(os.path.join(self.base, value))
        d = self._abs.get(head)
        if d is None:
            d = os.path.normpath(os.path.join(self.base, head))
            self._abs[head] = d
        return os.path.join(d, name)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path, kind: str, meta: dict, rows: Iterable[dict], path_fields=()) -> None:
    path = Path(path)
    codec = _PathCodec(path.parent)
    lines = [json.dumps({"kind": kind, "version": VERSION, "meta": meta}, sort_keys=True)]
    for row in rows:
        row = dict(row)
        for f in path_fields:
            if f in row:
                row[f] = codec.to_rel(row[f])
        lines.append(json.dumps(row, sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_jsonl(path, kind: str | None = None, path_fields=()) -> tuple[dict, list[dict]]:
    """Return ``(meta, rows)``; raises :class:`ParseError` naming the bad line."""
    path = Path(path)
    codec = _PathCodec(path.parent)
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(path, 1, "empty manifest (missing header line)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(path, 1, f"bad header: {exc}") from exc
    if not isinstance(header, dict) or "kind" not in header:
        raise ParseError(path, 1, "header must be an object with a 'kind' field")
    if kind is not None and header["kind"] != kind:
        raise ParseError(path, 1, f"expected a {kind!r} manifest, found {header['kind']!r}")
    rows, seen = [], set()
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(path, line_no, str(exc)) from exc
        if not isinstance(row, dict):
            raise ParseError(path, line_no, "record must be a JSON object")
        if "id" in row:
            if row["id"] in seen:
                raise ParseError(path, line_no, f"duplicate id {row['id']!r}")
            seen.add(row["id"])
        for f in path_fields:
            if f in row:
                row[f] = codec.to_abs(row[f])
        row["_line"] = line_no
        rows.append(row)
    return header.get("meta", {}), rows


def manifest_kind(path) -> str:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    try:
        return json.loads(first)["kind"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ParseError(path, 1, "missing or malformed header") from exc


def _field(row, name, path):
    try:
        return row[name]
    except KeyError:
        raise ParseError(path, row.get("_line", 0), f"missing field {name!r}") from None


# -- dataset manifests (mixtures with optional ground truth) -----------------

def fspath_list(paths):
    return None if paths is None else [os.fspath(p) for p in paths]


@dataclass
class MixRecord:
    id: str
    mix: str
    refs: list[str] | None = None
    speakers: list[str] | None = None
    genders: list[str | None] | None = None
    snr_db: float | None = None
    sources: list[str] | None = None

    def __post_init__(self):
        self.mix = os.fspath(self.mix)
        self.refs = fspath_list(self.refs)
        self.sources = fspath_list(self.sources)

    def to_row(self) -> dict:
        return {
            "id": self.id, "mix": self.mix, "refs": self.refs, "speakers": self.speakers,
            "genders": self.genders, "snr_db": self.snr_db, "sources": self.sources,
        }

    @property
    def same_gender(self) -> bool | None:
        if not self.genders or any(g is None for g in self.genders):
            return None
        return len(set(self.genders)) == 1


@dataclass
class DatasetManifest:
    records: list[MixRecord]
    meta: dict = field(default_factory=dict)

    def by_id(self) -> dict[str, MixRecord]:
        return {r.id: r for r in self.records}


DATASET_PATHS = ("mix", "refs", "sources")


def write_dataset(m: DatasetManifest, path) -> None:
    write_jsonl(path, "dataset", m.meta, (r.to_row() for r in m.records), DATASET_PATHS)


def read_dataset(path) -> DatasetManifest:
    meta, rows = read_jsonl(path, "dataset", DATASET_PATHS)
    recs = []
    for row in rows:
        recs.append(MixRecord(
            id=str(_field(row, "id", path)), mix=_field(row, "mix", path), refs=row.get("refs"),
            speakers=row.get("speakers"), genders=row.get("genders"),
            snr_db=row.get("snr_db"), sources=row.get("sources"),
        ))
    return DatasetManifest(recs, meta)


# -- separation manifests ----------------------------------------------------

@dataclass
class SepRecord:
    id: str
    seps: list[str] | None
    status: str = "ok"
    error: str | None = None

    def __post_init__(self):
        self.seps = fspath_list(self.seps)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SeparationManifest:
    records: list[SepRecord]
    meta: dict = field(default_factory=dict)

    def by_id(self) -> dict[str, SepRecord]:
        return {r.id: r for r in self.records}


def write_separation(m: SeparationManifest, path) -> None:
    rows = ({"id": r.id, "seps": r.seps, "status": r.status, "error": r.error} for r in m.records)
    write_jsonl(path, "separation", m.meta, rows, ("seps",))


def read_separation(path) -> SeparationManifest:
    meta, rows = read_jsonl(path, "separation", ("seps",))
    recs = [SepRecord(str(_field(r, "id", path)), r.get("seps"), r.get("status", "ok"), r.get("error")) for r in rows]
    return SeparationManifest(recs, meta)


# -- trainer manifests (source training set plus pseudo-labelled data) --------

def write_training_set(path, records: Iterable[dict], meta: dict | None = None) -> None:
    """Records: ``{"id", "mix", "refs", "origin"}`` with origin source|primary|reviewer."""
    write_jsonl(path, "train", meta or {}, records, ("mix", "refs"))


def read_training_set(path) -> tuple[dict, list[dict]]:
    meta, rows = read_jsonl(path, "train", ("mix", "refs"))
    for r in rows:
        r.pop("_line", None)
    return meta, rows

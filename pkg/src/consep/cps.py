"""Pseudo-label selection (top-p%, joint threshold, oracle) and SCI manifests."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from .audio import SourceSet, read_wav
from .consistency import PRIMARY, REVIEWER, SciTuple, mscm, scm
from .errors import ParseError
from .manifest import read_jsonl, write_jsonl
from .metrics import best_assignment

MODES = ("cps1", "cps2", "oracle")


@dataclass(frozen=True)
class SelectionConfig:
    mode: str = "cps2"
    p_percent: float | None = None
    alpha_db: float | None = None
    beta_db: float | None = None
    eta_db: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown selection mode {self.mode!r}")
        need = {"cps1": ("p_percent",), "cps2": ("alpha_db", "beta_db"), "oracle": ("eta_db",)}[self.mode]
        for name in need:
            if getattr(self, name) is None:
                raise ValueError(f"selection mode {self.mode} requires {name}")
        if self.mode == "cps1" and not 0.0 <= self.p_percent <= 100.0:
            raise ValueError("p_percent must lie in [0, 100]")

    def to_dict(self) -> dict:
        need = {"cps1": ("p_percent",), "cps2": ("alpha_db", "beta_db"), "oracle": ("eta_db",)}[self.mode]
        return {"mode": self.mode, **{k: getattr(self, k) for k in need}}

    @classmethod
    def from_dict(cls, d: Mapping) -> "SelectionConfig":
        known = {k: d[k] for k in ("mode", "p_percent", "alpha_db", "beta_db", "eta_db") if k in d}
        # short aliases used in config files and on the command line
        for short, long in (("p", "p_percent"), ("alpha", "alpha_db"), ("beta", "beta_db"), ("eta", "eta_db")):
            if short in d and long not in known:
                known[long] = d[short]
        return cls(**known)


def cps1_count(n: int, p_percent: float) -> int:
    # exact rational arithmetic so p=30, n=10 gives 3, not ceil(3.0000000000000004)
    return math.ceil(Fraction(n) * Fraction(p_percent) / 100)


def cps1_select(tuples: Sequence[SciTuple], p_percent: float) -> list[SciTuple]:
    """Keep the ceil(N*p/100) tuples with the highest SCM, in input order.

    Ties at the cutoff go to the smaller id.
    """
    if not 0.0 <= p_percent <= 100.0:
        raise ValueError("p_percent must lie in [0, 100]")
    k = cps1_count(len(tuples), p_percent)
    ranked = sorted(range(len(tuples)), key=lambda i: (-tuples[i].scm_db, tuples[i].id))
    keep = set(ranked[:k])
    return [t for i, t in enumerate(tuples) if i in keep]


def cps2_select(tuples: Sequence[SciTuple], alpha_db: float, beta_db: float) -> list[SciTuple]:
    return [t for t in tuples if t.scm_db > alpha_db and t.mscm_db < beta_db]


def _load_set(paths) -> SourceSet:
    return SourceSet(read_wav(p) for p in paths)


def oracle_select(tuples: Sequence[SciTuple], ground_truth: Mapping[str, SourceSet], eta_db: float,
                  estimates: Mapping[str, SourceSet] | None = None) -> list[SciTuple]:
    """Keep tuples whose pseudo labels score above ``eta_db`` against true references.

    ``estimates`` may supply the separated sets in memory; otherwise each
    tuple's ``seps`` files are read.
    """
    out = []
    for t in tuples:
        if t.id not in ground_truth:
            raise KeyError(f"no ground truth for mixture {t.id!r}")
        est = estimates[t.id] if estimates is not None else _load_set(t.seps)
        if best_assignment(ground_truth[t.id], est, "si_snr").mean_score_db > eta_db:
            out.append(t)
    return out


def select(tuples: Sequence[SciTuple], cfg: SelectionConfig, ground_truth=None, estimates=None) -> list[SciTuple]:
    if cfg.mode == "cps1":
        return cps1_select(tuples, cfg.p_percent)
    if cfg.mode == "cps2":
        return cps2_select(tuples, cfg.alpha_db, cfg.beta_db)
    if ground_truth is None:
        raise ValueError("oracle selection needs ground truth")
    return oracle_select(tuples, ground_truth, cfg.eta_db, estimates)


@dataclass
class Manifest:
    """SCI tuples with a selection flag each, plus run metadata."""

    records: list[SciTuple]
    selected: list[bool]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.records) != len(self.selected):
            raise ValueError("records and selected flags differ in length")
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest ids must be unique")

    @classmethod
    def from_selection(cls, records: Sequence[SciTuple], chosen: Sequence[SciTuple], meta=None) -> "Manifest":
        keep = {t.id for t in chosen}
        return cls(list(records), [r.id in keep for r in records], dict(meta or {}))

    def selected_records(self) -> list[SciTuple]:
        return [r for r, s in zip(self.records, self.selected) if s]

    def rejected_records(self) -> list[SciTuple]:
        return [r for r, s in zip(self.records, self.selected) if not s]

    @property
    def config(self) -> SelectionConfig | None:
        c = self.meta.get("config")
        return SelectionConfig.from_dict(c) if c else None


SCI_PATHS = ("mix", "seps", "scored_primary", "scored_reviewer")


def _tuple_row(t: SciTuple, sel: bool) -> dict:
    row = {"id": t.id, "scm_db": t.scm_db, "mscm_db": t.mscm_db, "mix": t.mix,
           "seps": list(t.seps), "origin": t.origin, "selected": bool(sel)}
    if t.scored_primary is not None:
        row["scored_primary"] = list(t.scored_primary)
    if t.scored_reviewer is not None:
        row["scored_reviewer"] = list(t.scored_reviewer)
    return row


def write_manifest(m: Manifest, path) -> None:
    write_jsonl(path, "sci", m.meta, (_tuple_row(t, s) for t, s in zip(m.records, m.selected)), SCI_PATHS)


def read_manifest(path) -> Manifest:
    meta, rows = read_jsonl(path, "sci", SCI_PATHS)
    recs, flags = [], []
    for row in rows:
        try:
            recs.append(SciTuple(
                id=str(row["id"]), scm_db=float(row["scm_db"]), mscm_db=float(row["mscm_db"]),
                mix=row["mix"], seps=row["seps"], origin=row.get("origin", PRIMARY),
                scored_primary=row.get("scored_primary"), scored_reviewer=row.get("scored_reviewer"),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(path, row["_line"], f"bad SCI record: {exc}") from exc
        flags.append(bool(row.get("selected", False)))
    return Manifest(recs, flags, meta)


def new_meta(cfg: SelectionConfig | None, iteration: int | None = None, stamp: bool = True, **extra) -> dict:
    meta = {"iteration": iteration, "config": cfg.to_dict() if cfg else None}
    if stamp:
        meta["created"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    meta.update(extra)
    return meta


def check_selection(m: Manifest, ground_truth=None) -> bool:
    """True when re-running the echoed selection reproduces the stored flags."""
    cfg = m.config
    if cfg is None:
        raise ValueError("manifest carries no selection config")
    chosen = {t.id for t in select(m.records, cfg, ground_truth)}
    return all((r.id in chosen) == s for r, s in zip(m.records, m.selected))


def verify_scores(m: Manifest, only_selected: bool = True, tol_db: float = 1e-6,
                  loader: Callable = read_wav) -> list[str]:
    """Recompute SCM/mSCM from the scored waveform files; return ids that disagree."""
    bad = []
    for rec, sel in zip(m.records, m.selected):
        if only_selected and not sel:
            continue
        if rec.scored_primary is None or rec.scored_reviewer is None:
            bad.append(rec.id)
            continue
        x = SourceSet(loader(p) for p in rec.scored_primary)
        v = SourceSet(loader(p) for p in rec.scored_reviewer)
        y = loader(rec.mix)
        if abs(scm(x, v) - rec.scm_db) > tol_db or abs(mscm(y, x, v) - rec.mscm_db) > tol_db:
            bad.append(rec.id)
    return bad


__all__ = [
    "SelectionConfig", "Manifest", "cps1_select", "cps2_select", "oracle_select", "select",
    "write_manifest", "read_manifest", "check_selection", "verify_scores", "PRIMARY", "REVIEWER",
]

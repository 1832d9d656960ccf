"""Evaluation scoreboards and diagnostic reports over manifests."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .audio import SourceSet, read_wav
from .cps import Manifest, read_manifest
from .errors import ConsepError
from .manifest import (DatasetManifest, SeparationManifest, read_dataset, read_separation)
from .metrics import best_assignment, sdr, si_snr


def _dataset(m) -> DatasetManifest:
    return m if isinstance(m, DatasetManifest) else read_dataset(m)


def _separation(m) -> SeparationManifest:
    return m if isinstance(m, SeparationManifest) else read_separation(m)


def utterance_scores(refs: SourceSet, est: SourceSet, mix) -> dict:
    """SI-SNRi and SDRi (dB) averaged over sources under the best SI-SNR pairing."""
    a = best_assignment(refs, est, "si_snr")
    inv = a.estimate_for_reference()
    si = [si_snr(r, est[inv[i]]) - si_snr(r, mix) for i, r in enumerate(refs)]
    sd = [sdr(r, est[inv[i]]) - sdr(r, mix) for i, r in enumerate(refs)]
    return {"si_snri": float(np.mean(si)), "sdri": float(np.mean(sd)), "permutation": list(a.permutation)}


@dataclass
class EvalReport:
    system: str
    per_utt: list[dict]
    mean_sdri: float
    mean_si_snri: float
    count: int
    failed: list[dict] = field(default_factory=list)
    by_gender: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        lines = [f"system: {self.system}", f"utterances scored: {self.count}  failed: {len(self.failed)}",
                 f"mean SDRi {self.mean_sdri:.2f} dB / SI-SNRi {self.mean_si_snri:.2f} dB"]
        for k, v in (self.by_gender or {}).items():
            lines.append(f"  {k:>9} gender: n={v['count']}  SDRi {v['mean_sdri']:.2f} / SI-SNRi {v['mean_si_snri']:.2f}")
        for f in self.failed:
            lines.append(f"  FAILED {f['id']}: {f['error']}")
        return "\n".join(lines)


def _means(rows):
    if not rows:
        return math.nan, math.nan
    return (float(np.mean([r["sdri"] for r in rows])), float(np.mean([r["si_snri"] for r in rows])))


def score_separations(gt, sep) -> tuple[list[dict], list[dict]]:
    """Per-utterance scores and the list of ids that could not be scored."""
    gt, sep = _dataset(gt), _separation(sep)
    seps = sep.by_id()
    rows, failed = [], []
    for rec in gt.records:
        s = seps.get(rec.id)
        try:
            if not rec.refs:
                raise ConsepError("no ground truth references")
            if s is None or not s.ok:
                raise ConsepError("no separation" if s is None else f"separation failed: {s.error}")
            refs = SourceSet(read_wav(p) for p in rec.refs)
            est = SourceSet(read_wav(p) for p in s.seps)
            row = {"id": rec.id, **utterance_scores(refs, est, read_wav(rec.mix))}
        except (ConsepError, OSError, ValueError) as exc:
            failed.append({"id": rec.id, "error": str(exc)})
            continue
        row["same_gender"] = rec.same_gender
        rows.append(row)
    return rows, failed


def evaluate(gt_manifest, sep_manifest, system: str = "system") -> EvalReport:
    rows, failed = score_separations(gt_manifest, sep_manifest)
    by_gender = None
    if rows and any(r["same_gender"] is not None for r in rows):
        by_gender = {}
        for label, flag in (("same", True), ("different", False)):
            sub = [r for r in rows if r["same_gender"] is flag]
            if sub:
                sd, si = _means(sub)
                by_gender[label] = {"count": len(sub), "mean_sdri": sd, "mean_si_snri": si}
    sd, si = _means(rows)
    return EvalReport(system, rows, sd, si, len(rows), failed, by_gender)


# -- bad cases ----------------------------------------------------------------

CATEGORIES = ("primary_F_reviewer_F", "primary_T_reviewer_F", "primary_F_reviewer_T")


def bad_case_partition(gt_manifest, primary_seps, reviewer_seps, threshold_db: float,
                       sci: Manifest | str | Path | None = None) -> dict:
    """Mark a mixture bad when either system's SI-SNRi is below ``threshold_db``.

    With ``sci`` given, only its selected tuples are examined and their SCM is
    reported next to each case.
    """
    p_rows, p_fail = score_separations(gt_manifest, primary_seps)
    r_rows, r_fail = score_separations(gt_manifest, reviewer_seps)
    p_by, r_by = {r["id"]: r for r in p_rows}, {r["id"]: r for r in r_rows}
    scm = None
    ids = [r["id"] for r in p_rows if r["id"] in r_by]
    if sci is not None:
        sci = sci if isinstance(sci, Manifest) else read_manifest(sci)
        scm = {t.id: t.scm_db for t in sci.selected_records()}
        ids = [i for i in ids if i in scm]
    counts = {"primary_T_reviewer_T": 0, **{c: 0 for c in CATEGORIES}}
    cases = []
    for i in ids:
        qp, qr = p_by[i]["si_snri"], r_by[i]["si_snri"]
        cat = f"primary_{'F' if qp < threshold_db else 'T'}_reviewer_{'F' if qr < threshold_db else 'T'}"
        counts[cat] += 1
        if cat != "primary_T_reviewer_T":
            cases.append({"id": i, "scm_db": scm.get(i) if scm else None, "si_snri_primary": qp,
                          "si_snri_reviewer": qr, "category": cat})
    n_bad = len(cases)
    return {
        "threshold_db": threshold_db,
        "total": len(ids),
        "bad": n_bad,
        "bad_fraction": n_bad / len(ids) if ids else 0.0,
        "counts": counts,
        "bad_breakdown": {c: (counts[c] / n_bad if n_bad else 0.0) for c in CATEGORIES},
        "cases": cases,
        "unscored": sorted({f["id"] for f in p_fail + r_fail}),
    }


def format_badcases(rep: dict) -> str:
    lines = [f"bad cases: {rep['bad']}/{rep['total']} ({100 * rep['bad_fraction']:.1f}%) "
             f"at SI-SNRi < {rep['threshold_db']} dB"]
    for c in CATEGORIES:
        lines.append(f"  {c:<22} {rep['counts'][c]:>6}  {100 * rep['bad_breakdown'][c]:5.1f}%")
    lines.append(f"  {'primary_T_reviewer_T':<22} {rep['counts']['primary_T_reviewer_T']:>6}  (not bad)")
    return "\n".join(lines)


# -- gender preference ----------------------------------------------------------

GENDER_COLUMNS = ("rank", "id", "scm_db", "mscm_db", "same_gender")


def gender_profile(selection: Manifest | str | Path, genders, top_k: int = 500, n_bins: int = 10) -> dict:
    """Same/different-gender flags of the top-``top_k`` selected mixtures by descending SCM.

    ``genders`` is a dataset manifest (or path) or a mapping id -> same-gender flag.
    Also reports the same-gender fraction per rank decile of the whole selection.
    """
    sel = selection if isinstance(selection, Manifest) else read_manifest(selection)
    if isinstance(genders, Mapping):
        flags = dict(genders)
    else:
        flags = {r.id: r.same_gender for r in _dataset(genders).records}
    ranked = sorted(sel.selected_records(), key=lambda t: (-t.scm_db, t.id))
    missing = [t.id for t in ranked if flags.get(t.id) is None]
    known = [t for t in ranked if flags.get(t.id) is not None]
    rows = [{"rank": k + 1, "id": t.id, "scm_db": t.scm_db, "mscm_db": t.mscm_db, "same_gender": bool(flags[t.id])}
            for k, t in enumerate(known[:top_k])]
    deciles = []
    if known:
        for b, chunk in enumerate(np.array_split(np.arange(len(known)), min(n_bins, len(known)))):
            same = [flags[known[i].id] for i in chunk]
            deciles.append({"bin": b + 1, "count": len(same), "same_gender_fraction": float(np.mean(same))})
    return {
        "columns": list(GENDER_COLUMNS),
        "top": rows,
        "deciles": deciles,
        "selected": len(ranked),
        "same_gender_fraction": float(np.mean([flags[t.id] for t in known])) if known else math.nan,
        "missing_metadata": missing,
    }


def format_gender(rep: dict) -> str:
    lines = [f"selected: {rep['selected']}  same-gender fraction: {rep['same_gender_fraction']:.3f}"]
    lines.append("rank-decile  count  same-gender")
    for d in rep["deciles"]:
        lines.append(f"{d['bin']:>11}  {d['count']:>5}  {d['same_gender_fraction']:.3f}")
    if rep["missing_metadata"]:
        lines.append(f"missing gender metadata: {len(rep['missing_metadata'])} ids")
    return "\n".join(lines)


# -- selection quantity -----------------------------------------------------------

def _get(obj, key):
    return obj[key] if isinstance(obj, Mapping) else getattr(obj, key)


def quantity_report(reports: Sequence) -> list[dict]:
    """One row per iteration with scored/selected counts per split (plus oracle counts if present)."""
    if not reports:
        raise ValueError("quantity report needs at least one iteration")
    rows = []
    for rep in reports:
        counts = _get(rep, "counts")
        row = {"iteration": _get(rep, "iteration")}
        for split in ("train", "dev"):
            c = counts.get(split) or {}
            row[f"{split}_scored"] = c.get("scored", 0)
            row[f"{split}_selected"] = c.get("selected", 0)
            if "t_set" in c:
                row[f"{split}_t_set"] = c["t_set"]
            for model in ("primary", "reviewer"):
                key = f"oracle_{model}"
                if key in c:
                    row[f"{split}_{key}"] = c[key]
        rows.append(row)
    return rows


def format_table(rows: Iterable[dict]) -> str:
    rows = list(rows)
    if not rows:
        return ""
    cols = list(dict.fromkeys(k for r in rows for k in r))
    cells = [[str(c) for c in cols]] + [["" if r.get(c) is None else
                                         (f"{r[c]:.3f}" if isinstance(r.get(c), float) else str(r[c]))
                                         for c in cols] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells)


def dump_json(obj, path) -> None:
    from .manifest import atomic_write_text

    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")

"""Iterative separation consistency training over two backends.

Each iteration runs as a sequence of named stages (``iter1.sep_primary_train``,
``iter1.score``, ...). A stage's result is written to ``checkpoints/<stage>.json``
only after its outputs are on disk, so an interrupted run resumes at the first
stage without a checkpoint. Separation stages also reuse any per-mixture
outputs that were already written.

Variants:

* ``sct1``: select pseudo labels from the primary outputs (D-set) and adapt
  both models on the source set plus the D-set.
* ``sct2``: adapt the reviewer on the D-set, re-separate with it, swap the
  D-set labels for the reviewer outputs (T-set) and adapt the primary on the T-set.
* ``sct3``: like ``sct2``, but re-score the D-set with the primary and the
  adapted reviewer outputs and select again before the swap.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from .analysis import dump_json, evaluate
from .audio import SourceSet, read_wav
from .consistency import PRIMARY, REVIEWER, build_sci
from .cps import Manifest, SelectionConfig, new_meta, oracle_select, read_manifest, select, write_manifest
from .errors import CheckpointError, ConsepError, DegenerateSignalError, ShapeError
from .fusion import fuse_batch, hkf_rewrite
from .manifest import atomic_write_text, read_dataset, read_separation, write_training_set
from .separators import BackendSpec, TrainerSpec, adapt, separate_batch

log = logging.getLogger(__name__)

VARIANTS = ("sct1", "sct2", "sct3")
PATH_FIELDS = ("unlabeled_train_manifest", "unlabeled_dev_manifest", "source_train_manifest", "eval_manifest")


class StageStop(ConsepError):
    """Raised after the stage named by ``stop_after`` has been checkpointed."""


@dataclass
class SctConfig:
    variant: str
    iterations: int
    selection: list[SelectionConfig]
    primary_backend: BackendSpec
    reviewer_backend: BackendSpec
    unlabeled_train_manifest: Path
    unlabeled_dev_manifest: Path | None = None
    source_train_manifest: Path | None = None
    trainer_primary: TrainerSpec | None = None
    trainer_reviewer: TrainerSpec | None = None
    second_stage: list[SelectionConfig] | None = None
    work_dir: Path = Path("sct_work")
    num_sources: int = 2
    parallelism: int = 1
    oracle_eta_db: float | None = None
    eval_manifest: Path | None = None
    fusion_lambda: float = 0.8

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if len(self.selection) != self.iterations:
            raise ValueError(f"need one selection config per iteration ({self.iterations}), got {len(self.selection)}")
        if self.second_stage is not None and len(self.second_stage) != self.iterations:
            raise ValueError("second_stage needs one selection config per iteration")
        if self.variant in ("sct2", "sct3") and self.trainer_primary is not None and self.trainer_reviewer is None:
            raise ValueError(f"{self.variant} needs a reviewer trainer when a primary trainer is set")
        if (self.trainer_primary or self.trainer_reviewer) and self.source_train_manifest is None:
            raise ValueError("adaptation needs source_train_manifest")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        for name in PATH_FIELDS + ("work_dir",):
            val = getattr(self, name)
            if val is not None:
                setattr(self, name, Path(val))

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "iterations": self.iterations,
            "selection": [s.to_dict() for s in self.selection],
            "second_stage": [s.to_dict() for s in self.second_stage] if self.second_stage else None,
            "primary_backend": self.primary_backend.to_dict(),
            "reviewer_backend": self.reviewer_backend.to_dict(),
            "trainer_primary": self.trainer_primary.to_dict() if self.trainer_primary else None,
            "trainer_reviewer": self.trainer_reviewer.to_dict() if self.trainer_reviewer else None,
            **{k: (str(os.path.abspath(getattr(self, k))) if getattr(self, k) is not None else None)
               for k in PATH_FIELDS},
            "work_dir": str(os.path.abspath(self.work_dir)),
            "num_sources": self.num_sources,
            "parallelism": self.parallelism,
            "oracle_eta_db": self.oracle_eta_db,
            "fusion_lambda": self.fusion_lambda,
        }

    @classmethod
    def from_dict(cls, d: Mapping, base_dir=None) -> "SctConfig":
        d = dict(d)
        base = Path(base_dir) if base_dir is not None else Path.cwd()
        for name in PATH_FIELDS + ("work_dir",):
            if d.get(name) is not None:
                d[name] = base / d[name]
        sel = d.get("selection")
        if isinstance(sel, Mapping):
            raise ValueError("selection must be a list with one entry per iteration")
        d["selection"] = [SelectionConfig.from_dict(s) for s in sel or []]
        if d.get("second_stage"):
            d["second_stage"] = [SelectionConfig.from_dict(s) for s in d["second_stage"]]
        for name in ("primary_backend", "reviewer_backend"):
            d[name] = BackendSpec.from_dict(d[name])
        for name in ("trainer_primary", "trainer_reviewer"):
            if d.get(name):
                d[name] = TrainerSpec.from_dict(d[name])
        return cls(**d)

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("work_dir")
        d.pop("parallelism")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def stage_selection(self, k: int) -> SelectionConfig:
        return self.selection[k - 1]

    def second_selection(self, k: int) -> SelectionConfig:
        return self.second_stage[k - 1] if self.second_stage else self.selection[k - 1]


def load_config(path, env: Mapping[str, str] | None = None) -> SctConfig:
    """Read a JSON or YAML config; relative paths resolve against the file's directory.

    ``CONSEP_PARALLELISM`` and ``CONSEP_WORKDIR`` override the file.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    data = yaml.safe_load(text) if path.suffix in (".yaml", ".yml") else json.loads(text)
    env = os.environ if env is None else env
    if env.get("CONSEP_PARALLELISM"):
        data["parallelism"] = int(env["CONSEP_PARALLELISM"])
    if env.get("CONSEP_WORKDIR"):
        data["work_dir"] = os.path.abspath(env["CONSEP_WORKDIR"])
    return SctConfig.from_dict(data, base_dir=path.parent)


@dataclass
class IterationReport:
    iteration: int
    variant: str
    counts: dict
    means: dict
    manifests: dict
    models: dict
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "IterationReport":
        return cls(**d)


def stage_names(cfg: SctConfig) -> list[str]:
    splits = ["train"] + (["dev"] if cfg.unlabeled_dev_manifest else [])
    names = []
    for k in range(1, cfg.iterations + 1):
        it = f"iter{k}"
        names += [f"{it}.sep_primary_{s}" for s in splits]
        names += [f"{it}.sep_reviewer_{s}" for s in splits]
        names.append(f"{it}.score")
        if cfg.variant == "sct1":
            names += [f"{it}.adapt_reviewer", f"{it}.adapt_primary"]
        else:
            names.append(f"{it}.adapt_reviewer")
            names += [f"{it}.sep_reviewer_adapted_{s}" for s in splits]
            if cfg.variant == "sct3":
                names.append(f"{it}.rescore")
            names += [f"{it}.hkf", f"{it}.adapt_primary"]
        names.append(f"{it}.report")
    if cfg.eval_manifest:
        names.append("final.eval")
    return names


def _mean(vals):
    return float(np.mean(vals)) if vals else None


class _Runner:
    def __init__(self, cfg: SctConfig, stop_after: str | None = None):
        self.cfg = cfg
        self.wd = Path(cfg.work_dir).absolute()
        self.stop_after = stop_after
        self.primary = cfg.primary_backend
        self.reviewer = cfg.reviewer_backend
        self.data = {"train": read_dataset(cfg.unlabeled_train_manifest)}
        if cfg.unlabeled_dev_manifest:
            self.data["dev"] = read_dataset(cfg.unlabeled_dev_manifest)
        self._gt_cache: dict[str, dict] = {}

    # -- checkpoint plumbing ---------------------------------------------------

    def _marker(self, key: str) -> Path:
        return self.wd / "checkpoints" / f"{key}.json"

    def stage(self, key: str, fn):
        marker = self._marker(key)
        if marker.exists():
            try:
                return json.loads(marker.read_text(encoding="utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise CheckpointError(f"corrupt checkpoint {marker}: {exc}") from exc
        log.info("stage %s", key)
        result = fn()
        atomic_write_text(marker, json.dumps(result, sort_keys=True, indent=1) + "\n")
        if self.stop_after == key:
            raise StageStop(f"stopped after stage {key}")
        return result

    def rel(self, p) -> str:
        return Path(os.path.relpath(os.path.abspath(p), self.wd)).as_posix()

    def abs(self, rel) -> Path:
        return self.wd / rel

    def init_work_dir(self):
        self.wd.mkdir(parents=True, exist_ok=True)
        (self.wd / "checkpoints").mkdir(exist_ok=True)
        cfg_file, digest_file = self.wd / "config.json", self.wd / "config.sha256"
        digest = self.cfg.digest()
        if digest_file.exists():
            stored = digest_file.read_text(encoding="utf-8").strip()
            if stored != digest:
                raise CheckpointError(f"{self.wd} belongs to a run with a different config (hash {stored[:12]}); "
                                      "refusing to mix results")
        else:
            if any((self.wd / "checkpoints").iterdir()):
                raise CheckpointError(f"{self.wd} has checkpoints but no config hash")
            atomic_write_text(cfg_file, json.dumps(self.cfg.to_dict(), indent=2, sort_keys=True) + "\n")
            atomic_write_text(digest_file, digest + "\n")

    # -- helpers -----------------------------------------------------------------

    def ground_truth(self, split: str) -> dict:
        if split not in self._gt_cache:
            gt = {}
            for rec in self.data[split].records:
                if not rec.refs:
                    raise ConsepError(f"oracle selection needs references; {rec.id} has none")
                gt[rec.id] = SourceSet(read_wav(p) for p in rec.refs)
            self._gt_cache[split] = gt
        return self._gt_cache[split]

    def _separate(self, k: int, tag: str, backend: BackendSpec) -> dict[str, Path]:
        out = {}
        for split, ds in self.data.items():
            key = f"iter{k}.sep_{tag}_{split}"
            out_dir = self.wd / f"iter{k}" / "sep" / tag / split

            def run(ds=ds, out_dir=out_dir):
                m = separate_batch(backend, ds, out_dir, self.cfg.parallelism, self.cfg.num_sources)
                return {"manifest": self.rel(out_dir / "separation.jsonl"),
                        "failed": [r.id for r in m.records if not r.ok]}

            out[split] = self.abs(self.stage(key, run)["manifest"])
        return out

    def _build_tuples(self, split: str, records, sep_p: Path, sep_r: Path):
        p_by, r_by = read_separation(sep_p).by_id(), read_separation(sep_r).by_id()

        def one(rec):
            p, r = p_by.get(rec.id), r_by.get(rec.id)
            if p is None or r is None or not p.ok or not r.ok:
                return None, "separation failed"
            try:
                y = read_wav(rec.mix)
                x = SourceSet(read_wav(q) for q in p.seps)
                v = SourceSet(read_wav(q) for q in r.seps)
                return build_sci(rec.id, y, x, v, rec.mix, p.seps, r.seps), None
            except (DegenerateSignalError, ShapeError, OSError) as exc:
                return None, str(exc)

        with ThreadPoolExecutor(max_workers=self.cfg.parallelism) as pool:
            results = list(pool.map(one, records))
        tuples = [t for t, _ in results if t is not None]
        unscorable = [rec.id for rec, (t, _) in zip(records, results) if t is None]
        return tuples, unscorable

    def _select(self, split, tuples, sel_cfg: SelectionConfig):
        gt = self.ground_truth(split) if sel_cfg.mode == "oracle" else None
        return select(tuples, sel_cfg, gt)

    def _write_sci(self, path: Path, m: Manifest) -> str:
        path.parent.mkdir(parents=True, exist_ok=True)
        write_manifest(m, path)
        return self.rel(path)

    # -- stages --------------------------------------------------------------------

    def score(self, k, sep_p, sep_r):
        sel_cfg = self.cfg.stage_selection(k)
        out = {}
        for split, ds in self.data.items():
            tuples, unscorable = self._build_tuples(split, ds.records, sep_p[split], sep_r[split])
            chosen = self._select(split, tuples, sel_cfg)
            m = Manifest.from_selection(tuples, chosen, new_meta(sel_cfg, k, stamp=False, split=split, stage="cps"))
            rel = self._write_sci(self.wd / f"iter{k}" / f"sci_{split}.jsonl", m)
            out[split] = {"manifest": rel, "scored": len(tuples), "selected": len(chosen), "unscorable": unscorable}
        return out

    def _pseudo_rows(self, tuples):
        return [{"id": t.id, "mix": t.mix, "refs": list(t.seps), "origin": t.origin} for t in tuples]

    def adapt_model(self, k, role: str, sets: dict[str, str]):
        trainer = self.cfg.trainer_primary if role == PRIMARY else self.cfg.trainer_reviewer
        backend = self.primary if role == PRIMARY else self.reviewer
        result = {"backend": backend.to_dict()}
        if trainer is None:
            result["skipped"] = "no trainer configured"
            return result
        pseudo = {s: read_manifest(self.abs(rel)).selected_records() for s, rel in sets.items()}
        if not pseudo["train"]:
            result["skipped"] = "empty selection"
            result["warning"] = f"iteration {k}: no pseudo-labelled training data; {role} adaptation skipped"
            log.warning(result["warning"])
            return result
        src = read_dataset(self.cfg.source_train_manifest)
        source_rows = [{"id": r.id, "mix": r.mix, "refs": r.refs, "origin": "source"} for r in src.records]
        rows = source_rows + self._pseudo_rows(pseudo["train"])
        ids = [r["id"] for r in rows]
        if len(set(ids)) != len(ids):
            raise ConsepError("source and pseudo-labelled mixture ids collide")
        tdir = self.wd / f"iter{k}" / "trainsets"
        tdir.mkdir(parents=True, exist_ok=True)
        train_path, dev_path = tdir / f"{role}_train.jsonl", tdir / f"{role}_dev.jsonl"
        meta = {"iteration": k, "role": role, "source": self.rel(self.cfg.source_train_manifest)}
        write_training_set(train_path, rows, meta)
        write_training_set(dev_path, self._pseudo_rows(pseudo.get("dev", [])), meta)
        mdir = self.wd / f"iter{k}" / "models"
        mdir.mkdir(parents=True, exist_ok=True)
        adapted = adapt(trainer, backend, train_path, dev_path, mdir / f"{role}.model")
        result.update(backend=adapted.to_dict(), train_manifest=self.rel(train_path),
                      dev_manifest=self.rel(dev_path), model=self.rel(mdir / f"{role}.model"))
        return result

    def _apply_adapt(self, role, result):
        spec = BackendSpec.from_dict(result["backend"])
        if role == PRIMARY:
            self.primary = spec
        else:
            self.reviewer = spec

    def rescore(self, k, d_sets, sep_p, sep_r2):
        sel_cfg = self.cfg.second_selection(k)
        out = {}
        for split, ds in self.data.items():
            chosen_ids = {t.id for t in read_manifest(self.abs(d_sets[split])).selected_records()}
            records = [r for r in ds.records if r.id in chosen_ids]
            tuples, unscorable = self._build_tuples(split, records, sep_p[split], sep_r2[split])
            chosen = self._select(split, tuples, sel_cfg)
            m = Manifest.from_selection(tuples, chosen, new_meta(sel_cfg, k, stamp=False, split=split, stage="cps2"))
            rel = self._write_sci(self.wd / f"iter{k}" / f"sci2_{split}.jsonl", m)
            out[split] = {"manifest": rel, "scored": len(tuples), "selected": len(chosen), "unscorable": unscorable}
        return out

    def hkf(self, k, sources: dict[str, str], sep_r2):
        out = {}
        oracle = self.cfg.stage_selection(k).mode == "oracle"
        for split in self.data:
            m = read_manifest(self.abs(sources[split]))
            rev = {r.id: r.seps for r in read_separation(sep_r2[split]).records if r.ok}
            pool = m.records if oracle else m.selected_records()
            missing = [t.id for t in pool if t.id not in rev]
            rewritten = hkf_rewrite([t for t in pool if t.id in rev], rev)
            if oracle:
                # each model's own outputs are judged against the references
                rewritten = oracle_select(rewritten, self.ground_truth(split), self.cfg.stage_selection(k).eta_db)
            meta = new_meta(self.cfg.stage_selection(k), k, stamp=False, split=split, stage="hkf")
            t_set = Manifest(rewritten, [True] * len(rewritten), meta)
            rel = self._write_sci(self.wd / f"iter{k}" / f"t_{split}.jsonl", t_set)
            out[split] = {"manifest": rel, "size": len(rewritten), "dropped": missing}
        return out

    def oracle_counts(self, split, sci_rel, reviewer_sep: Path | None):
        eta = self.cfg.oracle_eta_db
        gt = self.ground_truth(split)
        tuples = read_manifest(self.abs(sci_rel)).records
        counts = {"oracle_primary": len(oracle_select(tuples, gt, eta))}
        if reviewer_sep is not None:
            rev = {r.id: r.seps for r in read_separation(reviewer_sep).records if r.ok}
            swapped = hkf_rewrite([t for t in tuples if t.id in rev], rev)
            counts["oracle_reviewer"] = len(oracle_select(swapped, gt, eta))
        return counts

    def report(self, k, score, adapt_results, hkf_res=None, rescore_res=None, sep_r_final=None):
        counts, means, manifests, warnings = {}, {}, {}, []
        for split in self.data:
            s = score[split]
            c = {"scored": s["scored"], "selected": s["selected"], "unscorable": len(s["unscorable"])}
            m = read_manifest(self.abs(s["manifest"]))
            sel, rej = m.selected_records(), m.rejected_records()
            means[split] = {
                "selected_scm_db": _mean([t.scm_db for t in sel]), "selected_mscm_db": _mean([t.mscm_db for t in sel]),
                "rejected_scm_db": _mean([t.scm_db for t in rej]), "rejected_mscm_db": _mean([t.mscm_db for t in rej]),
            }
            manifests[f"sci_{split}"] = s["manifest"]
            if rescore_res:
                c["second_stage_selected"] = rescore_res[split]["selected"]
                manifests[f"sci2_{split}"] = rescore_res[split]["manifest"]
            if hkf_res:
                c["t_set"] = hkf_res[split]["size"]
                manifests[f"t_{split}"] = hkf_res[split]["manifest"]
            if self.cfg.oracle_eta_db is not None:
                c.update(self.oracle_counts(split, s["manifest"], sep_r_final[split] if sep_r_final else None))
            if s["selected"] == 0:
                warnings.append(f"iteration {k}: no {split} mixtures selected")
            counts[split] = c
        models = {}
        for role, res in adapt_results.items():
            models[role] = res.get("model") or res["backend"].get("model_token")
            if "warning" in res:
                warnings.append(res["warning"])
        rep = IterationReport(k, self.cfg.variant, counts, means, manifests, models, warnings)
        dump_json(rep.to_dict(), self.wd / f"iter{k}" / "report.json")
        return rep.to_dict()

    def iteration(self, k: int) -> IterationReport:
        it = f"iter{k}"
        (self.wd / it).mkdir(exist_ok=True)
        sep_p = self._separate(k, "primary", self.primary)
        sep_r = self._separate(k, "reviewer", self.reviewer)
        score = self.stage(f"{it}.score", lambda: self.score(k, sep_p, sep_r))
        d_sets = {s: v["manifest"] for s, v in score.items()}
        adapt_results = {}
        hkf_res = rescore_res = sep_r2 = None

        res = self.stage(f"{it}.adapt_reviewer", lambda: self.adapt_model(k, REVIEWER, d_sets))
        adapt_results[REVIEWER] = res
        if self.cfg.variant == "sct1":
            # both models learn from the same D-set, starting from this iteration's models
            res = self.stage(f"{it}.adapt_primary", lambda: self.adapt_model(k, PRIMARY, d_sets))
            adapt_results[PRIMARY] = res
            self._apply_adapt(REVIEWER, adapt_results[REVIEWER])
            self._apply_adapt(PRIMARY, res)
        else:
            self._apply_adapt(REVIEWER, res)
            sep_r2 = self._separate(k, "reviewer_adapted", self.reviewer)
            hkf_source = d_sets
            if self.cfg.variant == "sct3":
                rescore_res = self.stage(f"{it}.rescore", lambda: self.rescore(k, d_sets, sep_p, sep_r2))
                hkf_source = {s: v["manifest"] for s, v in rescore_res.items()}
            hkf_res = self.stage(f"{it}.hkf", lambda: self.hkf(k, hkf_source, sep_r2))
            t_sets = {s: v["manifest"] for s, v in hkf_res.items()}
            res = self.stage(f"{it}.adapt_primary", lambda: self.adapt_model(k, PRIMARY, t_sets))
            adapt_results[PRIMARY] = res
            self._apply_adapt(PRIMARY, res)
        rep = self.stage(f"{it}.report", lambda: self.report(k, score, adapt_results, hkf_res, rescore_res,
                                                            sep_r2 or sep_r))
        return IterationReport.from_dict(rep)

    def final_eval(self):
        ds = read_dataset(self.cfg.eval_manifest)
        base = self.wd / "final"
        outs, reports = {}, {}
        for tag, backend in ((PRIMARY, self.primary), (REVIEWER, self.reviewer)):
            outs[tag] = separate_batch(backend, ds, base / tag, self.cfg.parallelism, self.cfg.num_sources)
        outs["fused"] = fuse_batch(outs[PRIMARY], outs[REVIEWER], base / "fused", self.cfg.fusion_lambda)
        for tag, sep in outs.items():
            rep = evaluate(ds, sep, tag)
            dump_json(rep.to_dict(), base / f"eval_{tag}.json")
            reports[tag] = {"mean_sdri": rep.mean_sdri, "mean_si_snri": rep.mean_si_snri, "count": rep.count,
                            "report": self.rel(base / f"eval_{tag}.json")}
        return reports

    def run(self) -> list[IterationReport]:
        self.init_work_dir()
        reports = [self.iteration(k) for k in range(1, self.cfg.iterations + 1)]
        if self.cfg.eval_manifest:
            self.stage("final.eval", self.final_eval)
        return reports


def run_sct(cfg: SctConfig, stop_after: str | None = None) -> list[IterationReport]:
    """Run (or continue) the configured loop; returns one report per iteration.

    ``stop_after`` names a stage at which to stop once it is checkpointed
    (raises :class:`StageStop`); used to exercise resumption.
    """
    return _Runner(cfg, stop_after).run()


def stored_config(work_dir) -> SctConfig:
    work_dir = Path(work_dir)
    path = work_dir / "config.json"
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise CheckpointError(f"no checkpoint in {work_dir}") from exc
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint config {path}: {exc}") from exc
    data["work_dir"] = str(work_dir.absolute())
    try:
        return SctConfig.from_dict(data)
    except (TypeError, ValueError, KeyError) as exc:
        raise CheckpointError(f"corrupt checkpoint config {path}: {exc}") from exc


def resume(work_dir, cfg: SctConfig | None = None, stop_after: str | None = None) -> list[IterationReport]:
    """Continue a run from its checkpoints; completed stages are loaded, not recomputed.

    If ``cfg`` is given its hash must match the stored one.
    """
    stored = stored_config(work_dir)
    if cfg is not None and cfg.digest() != stored.digest():
        raise CheckpointError("config differs from the checkpointed run; refusing to resume")
    if cfg is not None:
        stored = replace(cfg, work_dir=Path(work_dir))
    return run_sct(stored, stop_after)


def load_reports(work_dir) -> list[IterationReport]:
    out = []
    for p in sorted(Path(work_dir).glob("iter*/report.json"), key=lambda p: int(p.parent.name[4:])):
        out.append(IterationReport.from_dict(json.loads(p.read_text(encoding="utf-8"))))
    return out

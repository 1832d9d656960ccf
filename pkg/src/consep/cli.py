"""Command-line entry point: ``consep <subcommand> ...``.

Exit codes: 0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from . import analysis
from .audio import SourceSet, read_wav
from .consistency import build_sci
from .cps import Manifest, SelectionConfig, new_meta, read_manifest, select, write_manifest
from .driver import StageStop, load_config, load_reports, resume, run_sct
from .errors import ConsepError, DegenerateSignalError, ShapeError
from .fusion import fuse_batch, hkf_rewrite
from .manifest import SeparationManifest, SepRecord, read_dataset
from .mixsim import build_dataset, synth_corpus
from .separators import BackendSpec, output_paths, separate_batch

log = logging.getLogger("consep")


def _load_struct(text_or_path: str) -> dict:
    p = Path(text_or_path)
    if p.exists():
        raw = p.read_text(encoding="utf-8")
        return yaml.safe_load(raw) if p.suffix in (".yaml", ".yml") else json.loads(raw)
    return json.loads(text_or_path)


def _dir_separation(ds, sep_dir, num_sources) -> SeparationManifest:
    recs = []
    for r in ds.records:
        paths = output_paths(sep_dir, r.id, num_sources)
        ok = all(p.exists() for p in paths)
        recs.append(SepRecord(r.id, paths if ok else None, "ok" if ok else "failed",
                              None if ok else "missing output files"))
    return SeparationManifest(recs)


def score_dirs(ds, primary_dir, reviewer_dir, num_sources=2):
    """SCI tuples for every mixture whose two separations exist in the given directories."""
    tuples, unscorable = [], []
    for rec in ds.records:
        xp = output_paths(primary_dir, rec.id, num_sources)
        vp = output_paths(reviewer_dir, rec.id, num_sources)
        try:
            x = SourceSet(read_wav(p) for p in xp)
            v = SourceSet(read_wav(p) for p in vp)
            tuples.append(build_sci(rec.id, read_wav(rec.mix), x, v, rec.mix, xp, vp))
        except (OSError, DegenerateSignalError, ShapeError) as exc:
            log.warning("cannot score %s: %s", rec.id, exc)
            unscorable.append(rec.id)
    return tuples, unscorable


def _emit(obj, out, text=None):
    if out:
        analysis.dump_json(obj, out)
    print(text if text is not None else json.dumps(obj, indent=2, sort_keys=True, default=str))


# -- subcommands ----------------------------------------------------------------

def cmd_synth_corpus(a):
    path = synth_corpus(a.out_dir, a.speakers, a.utts, a.rate, a.seed)
    print(path)


def cmd_mix(a):
    m = build_dataset(a.sources, a.count, (a.snr_min, a.snr_max), a.seed, a.out_dir, a.duration, a.rate,
                      a.encoding, a.parallelism, a.prefix)
    print(f"{len(m.records)} mixtures -> {Path(a.out_dir) / 'manifest.jsonl'}")


def cmd_separate(a):
    spec = _load_struct(a.backend)
    spec.setdefault("seed", a.seed)
    backend = BackendSpec.from_dict(spec)
    m = separate_batch(backend, read_dataset(a.manifest), a.out_dir, a.parallelism, a.num_sources)
    failed = [r.id for r in m.records if not r.ok]
    print(f"{len(m.records) - len(failed)} separated, {len(failed)} failed")
    return 1 if failed and a.strict else 0


def cmd_score(a):
    ds = read_dataset(a.mix_manifest)
    tuples, unscorable = score_dirs(ds, a.primary_dir, a.reviewer_dir, a.num_sources)
    meta = new_meta(None, stamp=False, stage="score", unscorable=unscorable)
    write_manifest(Manifest(tuples, [False] * len(tuples), meta), a.out)
    print(f"scored {len(tuples)} mixtures ({len(unscorable)} unscorable) -> {a.out}")


def cmd_cps(a):
    cfg = SelectionConfig(a.mode, a.p, a.alpha, a.beta, a.eta)
    m = read_manifest(a.manifest)
    gt = None
    if cfg.mode == "oracle":
        if not a.gt:
            raise ConsepError("oracle selection needs --gt (dataset manifest with references)")
        gt = {r.id: SourceSet(read_wav(p) for p in r.refs) for r in read_dataset(a.gt).records}
    chosen = select(m.records, cfg, gt)
    meta = {**m.meta, **new_meta(cfg, m.meta.get("iteration"), stamp=not a.no_timestamp, stage="cps")}
    write_manifest(Manifest.from_selection(m.records, chosen, meta), a.out)
    print(f"selected {len(chosen)} of {len(m.records)} -> {a.out}")


def cmd_hkf(a):
    m = read_manifest(a.manifest)
    sel = m.selected_records()
    rev = {t.id: output_paths(a.reviewer_dir, t.id, len(t.seps)) for t in sel}
    rewritten = hkf_rewrite(sel, rev)
    meta = {**m.meta, "stage": "hkf"}
    write_manifest(Manifest(rewritten, [True] * len(rewritten), meta), a.out)
    print(f"rewrote {len(rewritten)} tuples -> {a.out}")


def cmd_fuse(a):
    ds = read_dataset(a.mix_manifest)
    p = _dir_separation(ds, a.primary_dir, a.num_sources)
    r = _dir_separation(ds, a.reviewer_dir, a.num_sources)
    m = fuse_batch(p, r, a.out_dir, a.lam)
    print(f"fused {sum(x.ok for x in m.records)} of {len(m.records)} -> {a.out_dir}")


def cmd_sct_run(a):
    cfg = load_config(a.config)
    if a.work_dir:
        cfg.work_dir = Path(a.work_dir)
    if a.parallelism_set:
        cfg.parallelism = a.parallelism
    try:
        reports = resume(cfg.work_dir, cfg, a.stop_after) if a.resume else run_sct(cfg, a.stop_after)
    except StageStop as exc:
        print(str(exc))
        return 0
    print(analysis.format_table(analysis.quantity_report(reports)))
    return 0


def cmd_resume(a):
    wd = a.dir or a.work_dir or os.environ.get("CONSEP_WORKDIR")
    if not wd:
        raise ConsepError("resume needs a work directory")
    try:
        reports = resume(wd, stop_after=a.stop_after)
    except StageStop as exc:
        print(str(exc))
        return 0
    print(analysis.format_table(analysis.quantity_report(reports)))
    return 0


def cmd_analyze(a):
    if a.mode == "evaluate":
        rep = analysis.evaluate(a.gt, a.sep, a.system)
        _emit(rep.to_dict(), a.out, rep.table())
    elif a.mode == "badcases":
        rep = analysis.bad_case_partition(a.gt, a.primary, a.reviewer, a.threshold, a.sci)
        _emit(rep, a.out, analysis.format_badcases(rep))
    elif a.mode == "gender":
        rep = analysis.gender_profile(a.sci, a.gt, a.top_k)
        _emit(rep, a.out, analysis.format_gender(rep))
    else:
        wd = a.dir or a.work_dir
        if not wd:
            raise ConsepError("quantity report needs a work directory")
        rows = analysis.quantity_report(load_reports(wd))
        _emit(rows, a.out, analysis.format_table(rows))


# -- parser ------------------------------------------------------------------------

def _global_options(p: argparse.ArgumentParser, defaults: bool) -> None:
    # accepted before or after the subcommand; subparsers must not reset the top-level values
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=d(0), help="seed for all randomness")
    p.add_argument("--parallelism", type=int, default=d(None), help="worker count (env CONSEP_PARALLELISM)")
    p.add_argument("--log-level", default=d("INFO"))
    p.add_argument("--work-dir", default=d(None), help="run directory (env CONSEP_WORKDIR)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="consep", description="Separation consistency training toolkit")
    _global_options(ap, True)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, False)
    sub = ap.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth-corpus", parents=[common], help="write a toy speech-like single-speaker corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--speakers", type=int, default=10)
    p.add_argument("--utts", type=int, default=5)
    p.add_argument("--rate", type=int, default=16000)
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("mix", parents=[common], help="simulate two-speaker mixtures")
    p.add_argument("--sources", required=True, help="source list (JSON lines: path, speaker_id, gender)")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--snr-min", type=float, default=0.0)
    p.add_argument("--snr-max", type=float, default=5.0)
    p.add_argument("--duration", type=float, default=4.0)
    p.add_argument("--rate", type=int, default=8000)
    p.add_argument("--encoding", choices=("float32", "pcm16"), default="float32")
    p.add_argument("--prefix", default="mix")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("separate", parents=[common], help="run a separation backend over a dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--backend", required=True, help="backend spec as JSON text or a JSON/YAML file")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--num-sources", type=int, default=2)
    p.add_argument("--strict", action="store_true", help="exit 1 if any mixture failed")
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("score", parents=[common], help="build SCI tuples from two separation directories")
    p.add_argument("--primary-dir", required=True)
    p.add_argument("--reviewer-dir", required=True)
    p.add_argument("--mix-manifest", required=True)
    p.add_argument("--num-sources", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("cps", parents=[common], help="select pseudo labels from a scored manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=("cps1", "cps2", "oracle"), required=True)
    p.add_argument("--p", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--gt", help="dataset manifest with references (oracle mode)")
    p.add_argument("--no-timestamp", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cps)

    p = sub.add_parser("hkf", parents=[common], help="replace selected pseudo labels with reviewer outputs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--reviewer-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hkf)

    p = sub.add_parser("fuse", parents=[common], help="spectrogram fusion of two separation directories")
    p.add_argument("--primary-dir", required=True)
    p.add_argument("--reviewer-dir", required=True)
    p.add_argument("--mix-manifest", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.8)
    p.add_argument("--num-sources", type=int, default=2)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("sct-run", parents=[common], help="run the iterative training loop from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", action="store_true")
    p.add_argument("--stop-after", default=None, help="stop once the named stage is checkpointed")
    p.set_defaults(func=cmd_sct_run)

    p = sub.add_parser("resume", parents=[common], help="continue an interrupted run")
    p.add_argument("dir", nargs="?", help="work directory (defaults to --work-dir)")
    p.add_argument("--stop-after", default=None)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("analyze", parents=[common], help="evaluation and selection diagnostics")
    asub = p.add_subparsers(dest="mode", metavar="mode", required=True)
    q = asub.add_parser("evaluate", parents=[common])
    q.add_argument("--gt", required=True)
    q.add_argument("--sep", required=True)
    q.add_argument("--system", default="system")
    q.add_argument("--out")
    q = asub.add_parser("badcases", parents=[common])
    q.add_argument("--gt", required=True)
    q.add_argument("--primary", required=True)
    q.add_argument("--reviewer", required=True)
    q.add_argument("--threshold", type=float, required=True)
    q.add_argument("--sci")
    q.add_argument("--out")
    q = asub.add_parser("gender", parents=[common])
    q.add_argument("--sci", required=True)
    q.add_argument("--gt", required=True)
    q.add_argument("--top-k", type=int, default=500)
    q.add_argument("--out")
    q = asub.add_parser("quantity", parents=[common])
    q.add_argument("dir", nargs="?")
    q.add_argument("--out")
    p.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args.parallelism_set = args.parallelism is not None
    if args.parallelism is None:
        args.parallelism = int(os.environ.get("CONSEP_PARALLELISM", "1"))
    if args.parallelism < 1:
        parser.print_usage(sys.stderr)
        print("consep: error: --parallelism must be at least 1", file=sys.stderr)
        return 2
    try:
        return int(args.func(args) or 0)
    except (ConsepError, OSError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return 1


def sct_run_main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    return main(["sct-run", *argv])


if __name__ == "__main__":
    sys.exit(main())

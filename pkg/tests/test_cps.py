from __future__ import annotations

import json
import math
import time

import numpy as np
import pytest

from oracles import cps1_oracle
from consep.audio import SourceSet, Waveform, read_wav, write_wav
from consep.consistency import SciTuple, build_sci
from consep.cps import (Manifest, SelectionConfig, check_selection, cps1_select, cps2_select, new_meta,
                        oracle_select, read_manifest, select, verify_scores, write_manifest)
from consep.errors import ParseError


def make_tuples(rng, n, quantize=False):
    scm = rng.uniform(-20, 40, n)
    mscm = rng.uniform(-10, 20, n)
    if quantize:  # force ties
        scm = np.round(scm / 5) * 5
    ids = [f"u{i:05d}" for i in rng.permutation(n)]
    return [SciTuple(ids[i], float(scm[i]), float(mscm[i]), f"mix/{ids[i]}.wav",
                     [f"sep/{ids[i]}.s1.wav", f"sep/{ids[i]}.s2.wav"]) for i in range(n)]


def test_config_validation():
    with pytest.raises(ValueError):
        SelectionConfig("cps2", alpha_db=5)
    with pytest.raises(ValueError):
        SelectionConfig("cps1", p_percent=120)
    with pytest.raises(ValueError):
        SelectionConfig("magic")
    c = SelectionConfig.from_dict({"mode": "cps2", "alpha": 5, "beta": 5})
    assert c.to_dict() == {"mode": "cps2", "alpha_db": 5, "beta_db": 5}
    assert SelectionConfig.from_dict(c.to_dict()) == c


def test_cps1_edges(rng):
    t = make_tuples(rng, 17)
    assert cps1_select(t, 100) == t
    assert cps1_select(t, 0) == []
    assert cps1_select([], 50) == []
    assert len(cps1_select(t, 0.001)) == 1


def test_cps1_top_half_of_ten():
    t = [SciTuple(f"id{i}", float(s), 0.0, "m", ["a"]) for i, s in enumerate([3, 9, 1, 7, 5, 2, 8, 4, 6, 0])]
    got = cps1_select(t, 50)
    assert [x.id for x in got] == ["id1", "id3", "id4", "id6", "id8"]


def test_cps1_count_is_exact_ceiling():
    t = [SciTuple(f"i{k}", 0.0, 0.0, "m", ["a"]) for k in range(10)]
    assert len(cps1_select(t, 30)) == 3  # 10*30/100 is not rounded up to 4 by float error
    for n in range(0, 40):
        items = [SciTuple(f"i{k:03d}", float(k % 7), 0.0, "m", ["a"]) for k in range(n)]
        for p in (0, 5, 10, 25, 33, 50, 66, 70, 99, 100):
            assert len(cps1_select(items, p)) == math.ceil(round(n * p / 100, 9))


def test_cps1_matches_sort_oracle(rng):
    t = make_tuples(rng, 400, quantize=True)
    for p in (1, 10, 37.5, 50, 90):
        assert {x.id for x in cps1_select(t, p)} == cps1_oracle([(x.id, x.scm_db) for x in t], p)


def test_cps1_ties_go_to_smaller_id():
    t = [SciTuple(i, 5.0, 0.0, "m", ["a"]) for i in ("c", "a", "d", "b")]
    assert [x.id for x in cps1_select(t, 50)] == ["a", "b"]


def test_cps2_predicate_and_extremes(rng):
    t = make_tuples(rng, 500)
    got = cps2_select(t, 5, 5)
    assert got == [x for x in t if x.scm_db > 5 and x.mscm_db < 5]
    assert cps2_select(t, 100, 100) == []
    edge = [SciTuple("e", 5.0, 4.0, "m", ["a"]), SciTuple("f", 6.0, 5.0, "m", ["a"])]
    assert cps2_select(edge, 5, 5) == []  # both comparisons are strict
    deg = SciTuple("g", 100.0, 100.0, "m", ["a"])
    assert cps2_select(t + [deg], -100, 100) == t


def test_cps2_membership_independent_of_order(rng):
    t = make_tuples(rng, 300)
    shuffled = [t[i] for i in rng.permutation(len(t))]
    assert {x.id for x in cps2_select(t, 3, 7)} == {x.id for x in cps2_select(shuffled, 3, 7)}


def test_oracle_select_trivial(rng):
    refs = SourceSet(Waveform(rng.standard_normal(200), 8000) for _ in range(2))
    orth = SourceSet([Waveform(np.r_[np.ones(100), np.zeros(100)], 8000),
                      Waveform(np.r_[np.zeros(100), np.ones(100)], 8000)])
    gt = {"good": refs, "bad": orth}
    # alternating signs sum to zero over each half, so both are orthogonal to both references
    alt = np.tile([1.0, -1.0], 100)
    bad_est = SourceSet([Waveform(alt, 8000), Waveform(np.r_[alt[:100], np.zeros(100)], 8000)])
    good_t = SciTuple("good", 0.0, 0.0, "m", ["a", "b"])
    bad_t = SciTuple("bad", 0.0, 0.0, "m", ["a", "b"])
    got = oracle_select([good_t, bad_t], gt, 5.0, estimates={"good": refs, "bad": bad_est})
    assert got == [good_t]
    with pytest.raises(KeyError):
        oracle_select([SciTuple("zzz", 0.0, 0.0, "m", ["a"])], gt, 5.0)


def test_oracle_select_reads_files(tmp_path, rng):
    refs = SourceSet(Waveform(rng.standard_normal(100), 8000) for _ in range(2))
    paths = []
    for i, w in enumerate(refs):
        p = tmp_path / f"s{i}.wav"
        write_wav(p, w)
        paths.append(p)
    t = SciTuple("x", 0.0, 0.0, "m", paths)
    assert oracle_select([t], {"x": refs}, 5.0) == [t]


def test_select_dispatch(rng):
    t = make_tuples(rng, 50)
    assert select(t, SelectionConfig("cps1", p_percent=20)) == cps1_select(t, 20)
    assert select(t, SelectionConfig("cps2", alpha_db=1, beta_db=2)) == cps2_select(t, 1, 2)
    with pytest.raises(ValueError):
        select(t, SelectionConfig("oracle", eta_db=5))


def test_manifest_roundtrip(tmp_path, rng):
    base = tmp_path / "sub"
    base.mkdir()
    t = [SciTuple(x.id, x.scm_db, x.mscm_db, base / x.mix, [base / s for s in x.seps]) for x in make_tuples(rng, 20)]
    t[3] = t[3].with_seps([tmp_path / "rev" / "a.wav", tmp_path / "rev" / "b.wav"], "reviewer")
    cfg = SelectionConfig("cps2", alpha_db=5, beta_db=5)
    m = Manifest.from_selection(t, cps2_select(t, 5, 5), new_meta(cfg, 2))
    path = base / "sci.jsonl"
    write_manifest(m, path)
    back = read_manifest(path)
    assert back.selected == m.selected
    assert back.records == m.records
    assert back.meta["iteration"] == 2 and back.config == cfg
    # stored relative to the manifest's directory
    rows = [json.loads(line) for line in path.read_text().splitlines()[1:]]
    assert rows[0]["mix"] == f"mix/{t[0].id}.wav"
    assert rows[3]["seps"] == ["../rev/a.wav", "../rev/b.wav"]
    assert check_selection(back)
    assert [p.name for p in path.parent.iterdir()] == ["sci.jsonl"]


def test_manifest_rejects_duplicates_and_bad_lines(tmp_path):
    path = tmp_path / "m.jsonl"
    row = {"id": "a", "scm_db": 1.0, "mscm_db": 0.0, "mix": "m.wav", "seps": ["s.wav"], "origin": "primary",
           "selected": True}
    header = json.dumps({"kind": "sci", "version": 1, "meta": {}})
    path.write_text("\n".join([header, json.dumps(row), json.dumps(row)]) + "\n")
    with pytest.raises(ParseError) as ei:
        read_manifest(path)
    assert ei.value.line_no == 3
    path.write_text("\n".join([header, json.dumps(row), "{not json"]) + "\n")
    with pytest.raises(ParseError) as ei:
        read_manifest(path)
    assert ei.value.line_no == 3
    bad = dict(row, scm_db="high")
    path.write_text("\n".join([header, json.dumps(bad)]) + "\n")
    with pytest.raises(ParseError) as ei:
        read_manifest(path)
    assert ei.value.line_no == 2
    with pytest.raises(ValueError):
        Manifest([SciTuple("a", 0.0, 0.0, "m", ["s"])] * 2, [True, False])


def test_manifest_10k_roundtrip_under_one_second(tmp_path, rng):
    t = make_tuples(rng, 10_000)
    m = Manifest.from_selection(t, cps2_select(t, 5, 5), new_meta(SelectionConfig("cps2", alpha_db=5, beta_db=5)))
    start = time.perf_counter()
    write_manifest(m, tmp_path / "big.jsonl")
    back = read_manifest(tmp_path / "big.jsonl")
    elapsed = time.perf_counter() - start
    assert len(back.records) == 10_000 and back.selected == m.selected
    assert elapsed < 1.0, f"round trip took {elapsed:.2f}s"


def test_verify_scores_detects_tampering(tmp_path, rng):
    def save(name, w):
        p = tmp_path / name
        write_wav(p, w)
        return p

    y = Waveform(rng.standard_normal(300), 8000)
    x = SourceSet(Waveform(rng.standard_normal(300), 8000) for _ in range(2))
    v = SourceSet(Waveform(x[i].samples + 0.3 * rng.standard_normal(300), 8000) for i in range(2))
    xp = [save(f"x{i}.wav", w) for i, w in enumerate(x)]
    vp = [save(f"v{i}.wav", w) for i, w in enumerate(v)]
    t = build_sci("a", read_wav(save("y.wav", y)), SourceSet(read_wav(p) for p in xp),
                  SourceSet(read_wav(p) for p in vp), tmp_path / "y.wav", xp, vp)
    m = Manifest([t], [True])
    assert verify_scores(m) == []
    tampered = SciTuple("a", t.scm_db + 1, t.mscm_db, t.mix, t.seps, scored_primary=t.scored_primary,
                        scored_reviewer=t.scored_reviewer)
    assert verify_scores(Manifest([tampered], [True])) == ["a"]
    assert verify_scores(Manifest([tampered], [False])) == []

from __future__ import annotations

import numpy as np
import pytest

from conftest import rand_set
from consep.audio import SourceSet, Waveform
from consep.consistency import SciTuple, build_sci, mscm, scm
from consep.errors import DegenerateSignalError, ShapeError
from consep.metrics import si_snr


def test_scm_identical_and_swapped(rng):
    x = rand_set(rng, 2)
    assert scm(x, x) == 100.0
    assert scm(x, x.reordered([1, 0])) == 100.0


def test_scm_four_call_decomposition(rng):
    for _ in range(20):
        x, v = rand_set(rng, 2, 200), rand_set(rng, 2, 200)
        a = (si_snr(x[0], v[0]) + si_snr(x[1], v[1])) / 2
        b = (si_snr(x[0], v[1]) + si_snr(x[1], v[0])) / 2
        assert abs(scm(x, v) - max(a, b)) <= 1e-9


def test_scm_reference_orientation(rng):
    # SI-SNR is asymmetric; x must be the reference argument
    x = SourceSet([Waveform(rng.standard_normal(100), 8000)])
    v = SourceSet([Waveform(x[0].samples + rng.standard_normal(100) * 2, 8000)])
    assert scm(x, v) == si_snr(x[0], v[0])
    assert scm(x, v) != scm(v, x)


def test_scm_invariant_to_reviewer_order(rng):
    x, v = rand_set(rng, 3, 100), rand_set(rng, 3, 100)
    for order in ([1, 0, 2], [2, 1, 0], [1, 2, 0]):
        assert scm(x, v.reordered(order)) == pytest.approx(scm(x, v), abs=1e-12)


def test_mscm_average_and_symmetry(rng):
    y = Waveform(rng.standard_normal(300), 8000)
    x, v = rand_set(rng, 2, 300), rand_set(rng, 2, 300)
    vals = [si_snr(y, w) for w in (*x, *v)]
    assert abs(mscm(y, x, v) - sum(vals) / 4) <= 1e-9
    assert mscm(y, x, v) == mscm(y, v, x)


def test_mscm_extremes():
    y = Waveform(np.array([1.0, 0.0, 0.0, 0.0]), 8000)
    same = SourceSet([y, y])
    assert mscm(y, same, same) == 100.0
    orth = SourceSet([Waveform(np.array([0.0, 1.0, 0.0, 0.0]), 8000), Waveform(np.array([0.0, 0.0, 1.0, 1.0]), 8000)])
    assert mscm(y, orth, orth) == -100.0


def test_degenerate_and_shape_errors(rng):
    x = rand_set(rng, 2, 50)
    silent = SourceSet([Waveform(np.zeros(50), 8000), x[1]])
    with pytest.raises(DegenerateSignalError):
        scm(x, silent)
    with pytest.raises(ShapeError):
        scm(x, rand_set(rng, 3, 50))
    with pytest.raises(ShapeError):
        mscm(Waveform(np.ones(10), 8000), x, x)


def test_build_sci_matches_standalone(rng):
    y = Waveform(rng.standard_normal(100), 8000)
    x, v = rand_set(rng, 2, 100), rand_set(rng, 2, 100)
    t = build_sci("m1", y, x, v, "mix.wav", ["p1.wav", "p2.wav"], ["r1.wav", "r2.wav"])
    assert t.scm_db == scm(x, v) and t.mscm_db == mscm(y, x, v)
    assert [str(p) for p in t.seps] == ["p1.wav", "p2.wav"]
    assert t.origin == "primary"
    perfect = build_sci("m2", y, x, x, "mix.wav", ["a", "b"])
    assert perfect.scm_db == 100.0


def test_sci_tuple_validation():
    with pytest.raises(ValueError):
        SciTuple("a", 101.0, 0.0, "m", ["s"])
    with pytest.raises(ValueError):
        SciTuple("a", float("nan"), 0.0, "m", ["s"])
    with pytest.raises(ValueError):
        SciTuple("a", 1.0, 0.0, "m", ["s"], origin="other")
    t = SciTuple("a", 1.0, 2.0, "m", ["s1", "s2"])
    r = t.with_seps(["r1", "r2"], "reviewer")
    assert (r.id, r.scm_db, r.mscm_db, r.origin) == ("a", 1.0, 2.0, "reviewer")

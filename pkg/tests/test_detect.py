import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from entseg.core import GlobalStats, Region
from entseg.detect import (combined_decision, detect, detect_baseline, detect_combined,
                           detect_single, frame_to_boundary, pick_peak_per_region,
                           regions_above, star_decision)
from entseg.measures import compute_measures, corpus_stats
from entseg.optimize import PackedCorpus
from entseg.synth import SynthSpec, synth_corpus

from conftest import one_hot_pg, track


def scalar_route(t, th, gap_aligned=False):
    """Reference implementation: regions, one peak each, then frame -> gap."""
    peaks = pick_peak_per_region(t, regions_above(t, th))
    return sorted({frame_to_boundary(n, t, gap_aligned) for n in peaks})


def test_regions():
    assert regions_above(track([0, 2, 3, 1, 0]), 1) == [Region(1, 2)]
    assert regions_above(track([0, 2, 3, 1.5, 0]), 1) == [Region(1, 3)]
    assert regions_above(track([2, 0, 2]), 1) == [Region(0, 0), Region(2, 2)]
    # padding frames never join a region
    assert regions_above(track([5, 5, 5, 5], kind="d2", lo=1, hi=2), 1) == [Region(1, 2)]


def test_peak_per_region():
    t = track([0, 2, 3, 1, 0])
    assert pick_peak_per_region(t, [Region(1, 3)]) == [2]
    assert pick_peak_per_region(track([0, 3, 3, 3, 0]), [Region(1, 3)]) == [1]


def test_frame_to_boundary():
    assert frame_to_boundary(2, track([0, 1, 3, 2, 0])) == 2
    assert frame_to_boundary(2, track([0, 2, 3, 1, 0])) == 1
    assert frame_to_boundary(2, track([0, 2, 3, 2, 0])) == 2  # tie goes right
    t = track([9, 3, 1, 3, 9], kind="d2", lo=1, hi=3)
    assert frame_to_boundary(1, t) == 1  # left neighbour is padding
    assert frame_to_boundary(3, t) == 2  # right neighbour is padding
    assert frame_to_boundary(0, track([5, 1, 0])) == 0
    assert frame_to_boundary(2, track([0, 1, 5])) == 1
    assert frame_to_boundary(3, track([0, 0, 0, 1, 0], kind="ma", lo=1, hi=1), True) == 3


def test_star_decision_one_boundary_per_region():
    bs = star_decision(track([0, 2, 3, 1, 0, 0.5, 4, 0]), 1)
    assert bs.indices == (1, 5)


def test_two_local_maxima_in_one_region_give_one_candidate():
    # two nearby true boundaries whose entropy bumps merge above threshold
    t = track([0, 0.5, 3, 2, 2.5, 0.5, 0])
    assert len(regions_above(t, 1)) == 1
    assert len(star_decision(t, 1)) == 1


def test_threshold_above_max_gives_empty():
    assert len(star_decision(track([0, 1, 2, 1]), 10)) == 0


def test_first_derivative_has_no_rule():
    ms = compute_measures(one_hot_pg([0, 0, 1, 1, 2]))
    with pytest.raises(ValueError, match="first derivative"):
        detect_single("d1", ms, 0.0, GlobalStats(0, 1))
    with pytest.raises(ValueError, match="first derivative"):
        detect_combined(ms, 0.0, 0.0, "d1", {})


def test_entropy_gate_splits_region():
    e = track([1, 1, 0, 1, 1])
    second = track([0, 2, 1, 2, 0], kind="d2", lo=1, hi=3)
    assert combined_decision(e, second, 0.5, 0.5).indices == (1, 2)
    assert star_decision(second, 0.5).indices == (1,)


def test_baseline():
    assert detect_baseline(one_hot_pg([0, 0, 1, 1, 2])).indices == (1, 3)
    assert len(detect_baseline(one_hot_pg([0, 1] * 5, 2))) == 9
    assert len(detect_baseline(one_hot_pg([2] * 6))) == 0


def test_dispatcher():
    ms = compute_measures(one_hot_pg([0, 0, 0, 1, 1, 1, 2, 2]))
    stats = corpus_stats([ms])
    a = detect("e+ma", ms, stats, th=0.2, th1=-0.5)
    b = detect_combined(ms, -0.5, 0.2, "ma", stats)
    assert a == b
    with pytest.raises(ValueError):
        detect("baseline", ms, stats)


tracks = arrays(float, st.integers(2, 40), elements=st.integers(-3, 3).map(float))


@settings(max_examples=200, deadline=None)
@given(tracks, st.floats(-3, 3), st.booleans())
def test_vectorised_matches_scalar_route(v, th, aligned):
    t = track(v, kind="ma" if aligned else "entropy")
    assert list(star_decision(t, th, aligned).indices) == scalar_route(t, th, aligned)


@settings(max_examples=100, deadline=None)
@given(tracks, st.floats(-3, 3), st.floats(0, 2))
def test_regions_shrink_as_threshold_rises(v, th, dth):
    t = track(v)
    high = regions_above(t, th + dth)
    low = regions_above(t, th)
    covered = {n for r in low for n in range(r.start, r.end + 1)}
    assert all(n in covered for r in high for n in range(r.start, r.end + 1))


@settings(max_examples=100, deadline=None)
@given(tracks, st.floats(-3, 3))
def test_combined_with_open_gate_equals_single(v, th):
    second = track(v, kind="d2", lo=min(1, len(v) - 1), hi=max(len(v) - 2, 0))
    e = track(np.abs(v))
    assert combined_decision(e, second, -np.inf, th) == star_decision(second, th)


def test_packed_corpus_matches_per_utterance():
    utts = synth_corpus(SynthSpec(min_segments=3, max_segments=6, seed=3), 12)
    ms = [compute_measures(u.posteriorgram) for u in utts]
    stats = corpus_stats(ms)
    packed = PackedCorpus(list(zip(ms, [u.reference for u in utts])), ("e", "d2", "ma"))
    for m in ("e", "d2", "ma"):
        for r in (-0.5, 0.3, 1.2):
            th = stats[m].mean + r * stats[m].std
            got = packed.split(packed.single(m, th))
            want = [list(detect_single(m, x, r, stats).indices) for x in ms]
            assert got == want
    th1 = stats["e"].mean
    for second in ("d2", "ma"):
        th2 = stats[second].mean + 0.5 * stats[second].std
        got = packed.split(packed.combined(second, th1, th2))
        want = [list(detect_combined(x, 0.0, 0.5, second, stats).indices) for x in ms]
        assert got == want

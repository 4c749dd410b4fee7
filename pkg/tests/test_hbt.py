import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from superburst.core import TimeGrid
from superburst.hbt import (
    CoincidenceHistogram,
    JitterModel,
    MalformedRecord,
    NonMonotonicWithinGroup,
    PowerTrace,
    burst_trace,
    coincidences,
    ingest,
    normalize,
    pooled_g2,
    read_csv,
    synth_chaotic,
    synth_coherent,
)

FLAT = PowerTrace(np.arange(0.0, 60.0, 1.0), np.ones(60))


def test_ingest_compensates_delay_and_sorts():
    recs = [(0, 2, 105.0), (0, 1, 7.0), (0, 1, 3.0), (1, 2, 101.0)]
    with pytest.warns(NonMonotonicWithinGroup):
        tags = ingest(recs, delay_ns=100.0)
    assert tags.trial.tolist() == [0, 0, 0, 1]
    assert tags.channel.tolist() == [1, 1, 2, 2]
    np.testing.assert_allclose(tags.time, [3.0, 7.0, 5.0, 1.0])
    assert tags.n_trials == 2


def test_ingest_sorted_input_is_silent():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ingest([(0, 1, 1.0), (0, 1, 2.0), (0, 2, 0.5)])


@pytest.mark.parametrize("rec", [(0, 3, 1.0), (-1, 1, 1.0), (0, 1, float("nan")), (0.5, 1, 1.0)])
def test_ingest_rejects_malformed(rec):
    with pytest.raises(MalformedRecord):
        ingest([rec])


def test_window_drops_and_counts():
    tags = ingest([(0, 1, -5.0), (0, 1, 5.0), (0, 2, 150.0)], delay_ns=100.0, window=(0.0, 40.0))
    assert len(tags) == 1 and tags.dropped == 2


def test_single_fully_paired_trial():
    # two clicks per channel in one bin of one trial: n_c = 4, n1 = n2 = 2
    tags = ingest([(0, 1, 1.0), (0, 1, 2.0), (0, 2, 1.5), (0, 2, 2.5)])
    hist = coincidences(tags, TimeGrid(0, 3, 1))
    assert hist.n_c[0, 0] == 4
    assert normalize(hist).g2[0, 0] == 1.0


def test_no_cross_trial_pairs():
    tags = ingest([(0, 1, 1.0), (1, 2, 1.0)])
    assert coincidences(tags, TimeGrid(0, 3, 1)).n_c.sum() == 0


def test_missing_cells():
    hist = CoincidenceHistogram(
        TimeGrid(0, 2, 2), TimeGrid(0, 2, 2), np.array([[3, 0], [0, 0]]), np.array([3, 0]), np.array([3, 1]), 3
    )
    g = normalize(hist)
    assert g.missing.tolist() == [[False, True], [True, True]]
    assert math.isfinite(g.mean_g2())


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(1, 2), st.floats(0, 29.99)), max_size=60))
def test_pairing_completeness(recs):
    tags = ingest(sorted(recs), n_trials=10)
    hist = coincidences(tags, TimeGrid(0, 30, 5))
    c1, c2 = tags.counts_per_trial(1), tags.counts_per_trial(2)
    assert hist.n_c.sum() == int(np.dot(c1, c2))


def test_workers_do_not_change_counts():
    tags = ingest(synth_coherent(FLAT, 3.0, 5000, seed=1), 100.0)
    grid = TimeGrid(0, 60, 10)
    a = coincidences(tags, grid, workers=1, chunk_trials=700)
    b = coincidences(tags, grid, workers=3, chunk_trials=700)
    c = coincidences(tags, grid)
    assert np.array_equal(a.n_c, b.n_c) and np.array_equal(a.n_c, c.n_c)


def test_csv_roundtrip(tmp_path):
    raw = synth_coherent(FLAT, 1.0, 200, seed=3)
    path = tmp_path / "tags.csv"
    raw.to_csv(path)
    assert path.read_text(encoding="utf-8").splitlines()[0] == "trial,channel,time_ns"
    back = read_csv(path)
    assert np.array_equal(back.time, raw.time)
    assert np.array_equal(back.trial, raw.trial)


def test_bad_header(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b,c\n0,1,1.0\n")
    with pytest.raises(MalformedRecord):
        read_csv(path)


def test_zero_intensity_gives_no_events():
    assert len(synth_coherent(PowerTrace(np.arange(3.0), np.zeros(3)), 2.0, 100, seed=0)) == 0
    assert len(synth_coherent(FLAT, 0.0, 100, seed=0)) == 0


def test_mean_count_per_trial():
    n, mu = 20000, 1.7
    tags = synth_coherent(FLAT, mu, n, seed=4)
    counts = tags.counts_per_trial(1)
    assert abs(counts.mean() - mu) < 3 * math.sqrt(mu / n)


def test_delay_applied_to_channel_two_only():
    raw = synth_coherent(FLAT, 2.0, 500, seed=5, delay_ns=100.0)
    assert raw.time[raw.channel == 1].max() < 60
    assert raw.time[raw.channel == 2].min() >= 100


def test_synthesis_reproducible():
    a = synth_chaotic(FLAT, JitterModel(True, 2.0), 1.0, 3000, seed=8)
    b = synth_chaotic(FLAT, JitterModel(True, 2.0), 1.0, 3000, seed=8)
    assert np.array_equal(a.time, b.time)


def test_coherent_flat_at_one():
    tags = ingest(synth_coherent(FLAT, 2.0, 40000, seed=6), 100.0)
    hist = coincidences(tags, TimeGrid(0, 60, 6))
    g = normalize(hist)
    z = (g.g2 - 1) / g.stderr
    assert np.nanmax(np.abs(z)) < 4
    assert abs(pooled_g2(hist)[0] - 1) < 0.01


def test_chaotic_bunching_is_two():
    tags = ingest(synth_chaotic(FLAT, JitterModel(True, 0.0), 2.0, 40000, seed=7), 100.0)
    d = normalize(coincidences(tags, TimeGrid(0, 60, 6))).diagonal()
    assert np.all(np.abs(d - 2) < 0.15)


def test_symmetrized_grid_invariant_under_channel_swap():
    tags = ingest(synth_chaotic(FLAT, JitterModel(True, 5.0), 2.0, 5000, seed=9), 100.0)
    hist = coincidences(tags, TimeGrid(0, 60, 6))
    a = normalize(hist).symmetrized().g2
    b = normalize(hist.swap_channels()).symmetrized().g2
    np.testing.assert_array_equal(np.isnan(a), np.isnan(b))
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_coherent_convergence_with_trials():
    grid = TimeGrid(0, 60, 4)
    dev = []
    for n in (10_000, 100_000):
        g = normalize(coincidences(ingest(synth_coherent(FLAT, 2.0, n, seed=10), 100.0), grid))
        dev.append(np.nanmax(np.abs(g.g2 - 1)))
    assert dev[1] < dev[0]


def test_burst_trace_shape():
    tr = burst_trace()
    t_peak = tr.t[np.argmax(tr.power)]
    assert 5.0 < t_peak < 10.0
    assert 10.0 < tr.fwhm() < 20.0


def test_trace_from_csv(tmp_path):
    path = tmp_path / "flux.csv"
    path.write_text("t_ns,P_over_gamma\n0.0,1.0\n1.0,3.0\n2.0,1.0\n")
    tr = PowerTrace.from_csv(path)
    assert tr.dt == 1.0 and tr.total == 5.0


def test_negative_trace_rejected():
    with pytest.raises(ValueError):
        PowerTrace(np.arange(3.0), np.array([1.0, -1.0, 0.0]))

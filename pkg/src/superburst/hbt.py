"""Hanbury Brown-Twiss analysis of photon time tags.

The two HBT arms reach one detector, arm 2 delayed by a fiber. A record is
``(trial, channel, time_ns)`` where ``trial`` counts excitation pulses and
times are measured from the end of the pulse. Coincidences pair every
channel-1 event with every channel-2 event of the same trial.

Synthetic sources double as statistical oracles: ``synth_coherent`` gives
g2 = 1 everywhere, ``synth_chaotic`` with exponential intensity scaling
gives g2 = 2.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np
from scipy import sparse

from .core import CorrelationGrid, RngSpec, SuperburstError, TimeGrid

log = logging.getLogger(__name__)

CSV_HEADER = "trial,channel,time_ns"
SYNTH_CHUNK = 1_000_000


class MalformedRecord(SuperburstError, ValueError):
    pass


class NonMonotonicWithinGroup(UserWarning):
    pass


class TimeTagRecord(NamedTuple):
    trial: int
    channel: int
    time_ns: float


@dataclass(frozen=True)
class TagStream:
    """Columnar time-tag records; ``n_trials`` counts pulses, including
    those without detections."""

    trial: np.ndarray
    channel: np.ndarray
    time: np.ndarray
    n_trials: int
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.trial)

    def __iter__(self) -> Iterator[TimeTagRecord]:
        for tr, ch, t in zip(self.trial.tolist(), self.channel.tolist(), self.time.tolist()):
            yield TimeTagRecord(tr, ch, t)

    def counts_per_trial(self, channel: int) -> np.ndarray:
        sel = self.channel == channel
        return np.bincount(self.trial[sel], minlength=self.n_trials)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            for tr, ch, t in zip(self.trial.tolist(), self.channel.tolist(), self.time.tolist()):
                fh.write(f"{tr},{ch},{t!r}\n")


def read_csv(path: str | Path) -> TagStream:
    """Read a ``trial,channel,time_ns`` file (no delay compensation)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise MalformedRecord(f"expected header {CSV_HEADER!r}, got {header!r}")
        rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    if rows.size == 0:
        return TagStream(np.empty(0, np.int64), np.empty(0, np.int8), np.empty(0), 0)
    trial = rows[:, 0]
    if np.any(trial != np.round(trial)):
        raise MalformedRecord("non-integer trial id")
    trial = trial.astype(np.int64)
    return TagStream(trial, rows[:, 1].astype(np.int64), rows[:, 2], int(trial.max()) + 1 if len(trial) else 0)


def _as_columns(source) -> tuple[np.ndarray, np.ndarray, np.ndarray, int | None]:
    if isinstance(source, (str, Path)):
        source = read_csv(source)
    if isinstance(source, TagStream):
        return source.trial, source.channel, source.time, source.n_trials
    rows = list(source)
    if not rows:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0), None
    try:
        arr = np.array([(r[0], r[1], r[2]) for r in rows], dtype=float)
    except (TypeError, ValueError, IndexError) as exc:
        raise MalformedRecord(f"cannot parse records: {exc}") from exc
    if np.any(arr[:, 0] != np.round(arr[:, 0])) or np.any(arr[:, 1] != np.round(arr[:, 1])):
        raise MalformedRecord("trial and channel must be integers")
    return arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2], None


def ingest(
    source: TagStream | Iterable | str | Path,
    delay_ns: float = 0.0,
    window: tuple[float, float] | None = None,
    n_trials: int | None = None,
) -> TagStream:
    """Validate records, undo the channel-2 delay and group by trial.

    Events outside ``window`` (half-open, after compensation) are dropped
    and counted in ``dropped``. The result is sorted by (trial, channel,
    time); input that was not time-ordered within a (trial, channel) group
    triggers a :class:`NonMonotonicWithinGroup` warning.
    """
    trial, channel, time, known_trials = _as_columns(source)
    if np.any(trial < 0):
        raise MalformedRecord("negative trial id")
    bad = ~np.isin(channel, (1, 2))
    if np.any(bad):
        raise MalformedRecord(f"channel must be 1 or 2, got {np.unique(channel[bad]).tolist()}")
    if not np.all(np.isfinite(time)):
        raise MalformedRecord("non-finite detection time")

    time = np.where(channel == 2, time - delay_ns, time).astype(float)
    channel = channel.astype(np.int8)
    if n_trials is None:
        n_trials = known_trials if known_trials is not None else (int(trial.max()) + 1 if len(trial) else 0)
    if len(trial) and trial.max() >= n_trials:
        raise MalformedRecord(f"trial id {trial.max()} >= n_trials {n_trials}")

    order = np.lexsort((time, channel, trial))
    if len(order) > 1:
        same = (trial[1:] == trial[:-1]) & (channel[1:] == channel[:-1])
        if np.any(same & (time[1:] < time[:-1])):
            warnings.warn("records not time-ordered within a (trial, channel) group; sorted", NonMonotonicWithinGroup)
    trial, channel, time = trial[order], channel[order], time[order]

    dropped = 0
    if window is not None:
        keep = (time >= window[0]) & (time < window[1])
        dropped = int(np.count_nonzero(~keep))
        if dropped:
            log.info("dropped %d of %d events outside %s", dropped, len(keep), window)
        trial, channel, time = trial[keep], channel[keep], time[keep]
    return TagStream(trial, channel, time, int(n_trials), dropped)


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Coincidence counts ``n_c[i, j]`` of channel 1 in t1-bin i and channel 2
    in t2-bin j, plus per-channel singles."""

    t1: TimeGrid
    t2: TimeGrid
    n_c: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    n_trials: int

    def swap_channels(self) -> "CoincidenceHistogram":
        return CoincidenceHistogram(self.t2, self.t1, self.n_c.T.copy(), self.n2, self.n1, self.n_trials)


def _occupation(trial: np.ndarray, bins: np.ndarray, n_rows: int, n_bins: int) -> sparse.csr_matrix:
    ok = bins >= 0
    data = np.ones(np.count_nonzero(ok), dtype=np.int64)
    return sparse.csr_matrix((data, (trial[ok], bins[ok])), shape=(n_rows, n_bins))


def _partial(tags: TagStream, lo: int, hi: int, grid1: TimeGrid, grid2: TimeGrid):
    sel = (tags.trial >= lo) & (tags.trial < hi)
    trial = tags.trial[sel] - lo
    ch, t = tags.channel[sel], tags.time[sel]
    c1 = _occupation(trial[ch == 1], grid1.bin_index(t[ch == 1]), hi - lo, grid1.n_bins)
    c2 = _occupation(trial[ch == 2], grid2.bin_index(t[ch == 2]), hi - lo, grid2.n_bins)
    n_c = (c1.T @ c2).toarray().astype(np.int64)
    return n_c, np.asarray(c1.sum(axis=0)).ravel(), np.asarray(c2.sum(axis=0)).ravel()


def coincidences(
    tags: TagStream,
    grid1: TimeGrid,
    grid2: TimeGrid | None = None,
    workers: int = 1,
    chunk_trials: int = 1_000_000,
) -> CoincidenceHistogram:
    """Two-time coincidence histogram over all trials.

    Per trial, the occupation vectors of both channels form an outer product;
    summing over trials is a sparse ``C1.T @ C2``. Trial chunks are reduced
    by integer addition, so the result does not depend on ``workers``.
    """
    grid2 = grid1 if grid2 is None else grid2
    n_c = np.zeros((grid1.n_bins, grid2.n_bins), np.int64)
    n1 = np.zeros(grid1.n_bins, np.int64)
    n2 = np.zeros(grid2.n_bins, np.int64)
    bounds = [(lo, min(tags.n_trials, lo + chunk_trials)) for lo in range(0, max(tags.n_trials, 1), chunk_trials)]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda b: _partial(tags, b[0], b[1], grid1, grid2), bounds))
    else:
        parts = [_partial(tags, lo, hi, grid1, grid2) for lo, hi in bounds]
    for c, a, b in parts:
        n_c += c
        n1 += a
        n2 += b
    return CoincidenceHistogram(grid1, grid2, n_c, n1, n2, tags.n_trials)


def normalize(hist: CoincidenceHistogram) -> CorrelationGrid:
    """g2 = (n_c/n) / ((n1/n)(n2/n)) with Poisson errors.

    Cells without a coincidence, or with an empty singles bin, are missing.
    """
    if hist.n_trials <= 0:
        raise ValueError("normalization needs at least one trial")
    n = float(hist.n_trials)
    n_c = hist.n_c.astype(float)
    singles = np.outer(hist.n1, hist.n2).astype(float)
    valid = (n_c > 0) & (singles > 0)
    g2 = np.full(n_c.shape, np.nan)
    err = np.full(n_c.shape, np.nan)
    np.divide(n_c * n, singles, out=g2, where=valid)
    with np.errstate(divide="ignore"):
        rel = np.sqrt(1.0 / n_c + (1.0 / hist.n1.astype(float))[:, None] + (1.0 / hist.n2.astype(float))[None, :])
    err[valid] = g2[valid] * rel[valid]
    return CorrelationGrid(hist.t1, hist.t2, g2, G2=n_c / n, stderr=err, counts=hist.n_c)


def analyze(
    source, delay_ns: float, grid: TimeGrid, n_trials: int | None = None, workers: int = 1
) -> CorrelationGrid:
    tags = ingest(source, delay_ns, n_trials=n_trials)
    return normalize(coincidences(tags, grid, workers=workers))


# ---------------------------------------------------------------- synthesis


@dataclass(frozen=True)
class PowerTrace:
    """Piecewise-constant emission profile: ``power[i]`` on
    ``[t[i], t[i] + dt)`` with uniform sample spacing."""

    t: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        if len(self.t) != len(self.power) or len(self.t) < 2:
            raise ValueError("trace needs matching t and power arrays of length >= 2")
        if np.any(np.asarray(self.power) < 0):
            raise ValueError("power trace must be non-negative")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def total(self) -> float:
        return float(np.sum(self.power))

    def fwhm(self) -> float:
        """Full width at half maximum, from linear interpolation."""
        p = np.asarray(self.power, float)
        half = p.max() / 2
        above = np.nonzero(p >= half)[0]
        lo, hi = above[0], above[-1]
        t = np.asarray(self.t, float)
        left = t[lo] if lo == 0 else np.interp(half, [p[lo - 1], p[lo]], [t[lo - 1], t[lo]])
        right = t[hi] if hi == len(p) - 1 else np.interp(half, [p[hi + 1], p[hi]], [t[hi + 1], t[hi]])
        return float(right - left)

    @classmethod
    def from_csv(cls, path: str | Path) -> "PowerTrace":
        """First column time (ns), second column power; header line skipped."""
        rows = np.loadtxt(path, delimiter=",", skiprows=1, usecols=(0, 1), ndmin=2)
        return cls(rows[:, 0], rows[:, 1])

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        cdf = np.cumsum(self.power, dtype=float)
        cdf /= cdf[-1]
        idx = np.searchsorted(cdf, rng.random(n), side="right")
        idx = np.minimum(idx, len(cdf) - 1)
        return np.asarray(self.t, float)[idx] + self.dt * rng.random(n)


@dataclass(frozen=True)
class JitterModel:
    """Per-trial fluctuations of a burst-like source.

    ``intensity_scale``: multiply the whole trace by an Exp(1) variable.
    ``delay_jitter_ns``: shift the trace by a Gaussian delay of this std.
    """

    intensity_scale: bool = True
    delay_jitter_ns: float = 0.0


def _synth(
    trace: PowerTrace,
    mean_photons_per_trial: float,
    n_trials: int,
    seed: int,
    delay_ns: float,
    jitter: JitterModel | None,
) -> TagStream:
    trials, channels, times = [], [], []
    zero = trace.total <= 0 or mean_photons_per_trial <= 0
    for chunk, lo in enumerate(range(0, n_trials, SYNTH_CHUNK)):
        if zero:
            break
        hi = min(n_trials, lo + SYNTH_CHUNK)
        m = hi - lo
        rng = RngSpec(seed, chunk).generator()
        scale = np.ones(m)
        shift = np.zeros(m)
        if jitter is not None:
            if jitter.intensity_scale:
                scale = rng.exponential(1.0, m)
            if jitter.delay_jitter_ns > 0:
                shift = rng.normal(0.0, jitter.delay_jitter_ns, m)
        for ch in (1, 2):
            counts = rng.poisson(mean_photons_per_trial * scale)
            tr = np.repeat(np.arange(lo, hi), counts)
            t = trace.sample(rng, len(tr)) + np.repeat(shift, counts)
            if ch == 2:
                t = t + delay_ns
            trials.append(tr)
            channels.append(np.full(len(tr), ch, np.int8))
            times.append(t)
    if trials:
        trial, channel, time = np.concatenate(trials), np.concatenate(channels), np.concatenate(times)
        order = np.lexsort((time, channel, trial))
        trial, channel, time = trial[order], channel[order], time[order]
    else:
        trial, channel, time = np.empty(0, np.int64), np.empty(0, np.int8), np.empty(0)
    return TagStream(trial.astype(np.int64), channel, time, n_trials)


def synth_coherent(
    trace: PowerTrace, mean_photons_per_trial: float, n_trials: int, seed: int, delay_ns: float = 100.0
) -> TagStream:
    """Raw tags of a pulse with fixed intensity: independent Poisson
    processes per channel with rate proportional to ``trace``.

    ``mean_photons_per_trial`` is per channel. Channel-2 times include the
    fiber delay, as recorded before compensation.
    """
    return _synth(trace, mean_photons_per_trial, n_trials, seed, delay_ns, None)


def synth_chaotic(
    trace: PowerTrace,
    jitter: JitterModel,
    mean_photons_per_trial: float,
    n_trials: int,
    seed: int,
    delay_ns: float = 100.0,
) -> TagStream:
    """Raw tags of a fluctuating source: per trial both channels share one
    intensity realization (scaled and shifted ``trace``), then are thinned
    independently."""
    return _synth(trace, mean_photons_per_trial, n_trials, seed, delay_ns, jitter)


def burst_trace(t_max_ns: float = 120.0, dt_ns: float = 0.25, n_dicke: int = 9, tau_ns: float = 30.5) -> PowerTrace:
    """Burst-shaped trace from the symmetric Dicke model (peak near 7.5 ns
    for the defaults)."""
    from .dicke import evolve

    grid = TimeGrid.from_width(0.0, t_max_ns, dt_ns)
    sol = evolve(n_dicke, 1.0 / tau_ns, grid)
    return PowerTrace(grid.times, sol.flux_over_gamma)


def max_abs_deviation(grid: CorrelationGrid, target: float = 1.0) -> float:
    valid = ~grid.missing
    return float(np.max(np.abs(grid.g2[valid] - target))) if np.any(valid) else math.nan


def pooled_g2(hist: CoincidenceHistogram, mask: np.ndarray | None = None) -> tuple[float, float]:
    """Count-weighted global g2 over ``mask`` cells (all by default).

    The plain mean over non-missing cells is biased upward: dropping
    cells with zero coincidences keeps exactly the low-count cells that
    fluctuated high. Pooling counts before dividing avoids that selection.
    """
    mask = np.ones(hist.n_c.shape, bool) if mask is None else mask
    nc = float(hist.n_c[mask].sum())
    singles = np.outer(hist.n1, hist.n2).astype(float)[mask].sum()
    if nc == 0 or singles == 0:
        return math.nan, math.nan
    g = nc * hist.n_trials / singles
    return g, g / math.sqrt(nc)

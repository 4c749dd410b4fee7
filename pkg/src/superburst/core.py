"""Shared parameter types, time grids and RNG streams.

Times are in nanoseconds at the API boundary. Solvers work internally in
the dimensionless time ``gamma * t``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

TAU_NS = 30.5
PULSE_NS = 4.0


class SuperburstError(Exception):
    """Base class for all package errors."""


class NonPositive(SuperburstError, ValueError):
    pass


class BetaAboveUnity(SuperburstError, ValueError):
    pass


class ConfigError(SuperburstError, ValueError):
    pass


@dataclass(frozen=True)
class EnsembleParams:
    """Atom chain coupled to a unidirectional guided mode.

    ``beta`` is either a scalar (homogeneous coupling) or one value per atom.
    ``gamma`` is the total single-atom decay rate in 1/ns.
    """

    n_atoms: int
    beta: float | tuple[float, ...] = 1.0
    gamma: float = 1.0 / TAU_NS
    pulse_area: float = math.pi
    pulse_duration: float = PULSE_NS
    n_thr: float | None = field(default=None, compare=False)

    @property
    def tau(self) -> float:
        return 1.0 / self.gamma

    @property
    def homogeneous(self) -> bool:
        return np.ndim(self.beta) == 0

    def beta_array(self) -> np.ndarray:
        """Per-atom coupling, expanded from a scalar if needed."""
        if self.homogeneous:
            return np.full(self.n_atoms, float(self.beta))
        return np.asarray(self.beta, dtype=float)

    @property
    def mean_beta(self) -> float:
        return float(np.mean(self.beta_array()))


def threshold_atom_number(beta: float) -> float:
    """Minimum chain length for a burst with imperfect coupling."""
    if not beta > 0:
        raise NonPositive(f"beta must be positive, got {beta}")
    return 1.0 + 1.0 / beta


def validate(params: EnsembleParams) -> EnsembleParams:
    """Check domain constraints and fill in the derived threshold.

    Idempotent: validating an already validated parameter set returns an
    equal object.
    """
    n = params.n_atoms
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise NonPositive(f"n_atoms must be a positive integer, got {n!r}")
    n = int(n)
    if not params.gamma > 0 or not math.isfinite(params.gamma):
        raise NonPositive(f"gamma must be positive, got {params.gamma}")
    if not params.pulse_duration >= 0:
        raise NonPositive(f"pulse_duration must be >= 0, got {params.pulse_duration}")
    if not math.isfinite(params.pulse_area):
        raise ConfigError(f"pulse_area must be finite, got {params.pulse_area}")

    if np.ndim(params.beta) == 0:
        beta: float | tuple[float, ...] = float(params.beta)
        values = np.array([beta])
    else:
        beta = tuple(float(b) for b in params.beta)
        if len(beta) != n:
            raise ConfigError(f"got {len(beta)} beta values for {n} atoms")
        values = np.array(beta)
    if not np.all(values > 0):
        raise NonPositive("every beta must be > 0")
    if np.any(values > 1):
        raise BetaAboveUnity(f"beta must be <= 1, got max {values.max()}")

    n_thr = threshold_atom_number(float(values.mean()))
    return replace(params, n_atoms=n, beta=beta, n_thr=n_thr)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform binning of ``[t_start, t_end)`` into ``n_bins`` bins.

    Solvers sample at the left bin edges (``times``); histograms use
    ``edges``.
    """

    t_start: float
    t_end: float
    n_bins: int

    def __post_init__(self):
        if int(self.n_bins) != self.n_bins or self.n_bins < 1:
            raise NonPositive(f"n_bins must be a positive integer, got {self.n_bins}")
        if not self.t_end > self.t_start:
            raise NonPositive(f"t_end ({self.t_end}) must exceed t_start ({self.t_start})")

    @classmethod
    def from_width(cls, t_start: float, t_end: float, width: float) -> "TimeGrid":
        """Grid with bins of exactly ``width``; ``t_end`` is rounded up to fit."""
        if not width > 0:
            raise NonPositive(f"bin width must be positive, got {width}")
        n = max(1, int(math.ceil((t_end - t_start) / width - 1e-9)))
        return cls(t_start, t_start + n * width, n)

    @property
    def bin_width(self) -> float:
        return (self.t_end - self.t_start) / self.n_bins

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.t_start, self.t_end, self.n_bins + 1)

    @property
    def times(self) -> np.ndarray:
        return self.edges[:-1]

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    def scaled(self, factor: float) -> "TimeGrid":
        """Same grid in a different time unit (e.g. ns -> gamma*t)."""
        return TimeGrid(self.t_start * factor, self.t_end * factor, self.n_bins)

    def bin_index(self, t: np.ndarray) -> np.ndarray:
        """Half-open bin index of each time; -1 outside the grid."""
        t = np.asarray(t, dtype=float)
        idx = np.floor((t - self.t_start) / self.bin_width).astype(np.int64)
        idx[(t < self.t_start) | (t >= self.t_end) | (idx >= self.n_bins)] = -1
        return idx


@dataclass(frozen=True)
class RngSpec:
    """One reproducible random stream: ``(seed, stream_id)`` -> generator."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))


CONFIG_KEYS = {"n_atoms", "beta", "tau_ns", "pulse_area_pi", "pulse_duration_ns", "seed"}


def params_from_config(cfg: dict[str, Any]) -> tuple[EnsembleParams, int]:
    """Build validated parameters and the seed from a JSON config mapping."""
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "n_atoms" not in cfg:
        raise ConfigError("config requires 'n_atoms'")
    beta = cfg.get("beta", 1.0)
    if isinstance(beta, Sequence) and not isinstance(beta, str):
        beta = tuple(beta)
    try:
        params = EnsembleParams(
            n_atoms=cfg["n_atoms"],
            beta=beta,
            gamma=1.0 / float(cfg.get("tau_ns", TAU_NS)),
            pulse_area=math.pi * float(cfg.get("pulse_area_pi", 1.0)),
            pulse_duration=float(cfg.get("pulse_duration_ns", PULSE_NS)),
        )
        params = validate(params)
    except (TypeError, ZeroDivisionError, NonPositive, BetaAboveUnity) as exc:
        raise ConfigError(str(exc)) from exc
    return params, int(cfg.get("seed", 0))


def load_config(path: str | Path) -> tuple[EnsembleParams, int]:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return params_from_config(cfg)


@dataclass(frozen=True)
class CorrelationGrid:
    """Binned two-time surface g2(t1, t2).

    Missing cells (zero flux, zero counts) hold NaN in ``g2`` and ``stderr``;
    use :attr:`missing` rather than testing for NaN downstream.
    """

    t1: TimeGrid
    t2: TimeGrid
    g2: np.ndarray
    G2: np.ndarray | None = None
    stderr: np.ndarray | None = None
    counts: np.ndarray | None = None

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.g2)

    def diagonal(self) -> np.ndarray:
        if self.t1 != self.t2:
            raise ValueError("diagonal requires identical t1 and t2 grids")
        return np.diagonal(self.g2).copy()

    def mean_g2(self) -> float:
        """Mean over valid cells; NaN only if every cell is missing."""
        valid = self.g2[~self.missing]
        return float(valid.mean()) if valid.size else math.nan

    def symmetrized(self) -> "CorrelationGrid":
        """Average of the grid and its transpose; a cell missing on one side
        takes the other side's value."""
        if self.t1 != self.t2:
            raise ValueError("symmetrizing requires identical t1 and t2 grids")
        g = np.stack([self.g2, self.g2.T])
        sym = _nanmean2(g)
        err = None
        if self.stderr is not None:
            e = np.stack([self.stderr, self.stderr.T])
            n = np.sum(~np.isnan(e), axis=0)
            with np.errstate(invalid="ignore"):
                err = np.sqrt(np.nansum(e**2, axis=0)) / np.where(n > 0, n, np.nan)
        counts = None if self.counts is None else self.counts + self.counts.T
        G2 = None if self.G2 is None else 0.5 * (self.G2 + self.G2.T)
        return CorrelationGrid(self.t1, self.t2, sym, G2=G2, stderr=err, counts=counts)


def _nanmean2(stacked: np.ndarray) -> np.ndarray:
    n = np.sum(~np.isnan(stacked), axis=0)
    total = np.nansum(stacked, axis=0)
    out = np.full(total.shape, np.nan)
    np.divide(total, n, out=out, where=n > 0)
    return out

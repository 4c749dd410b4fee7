"""Symmetric Dicke model: ladder populations, flux and two-time g2.

Starting from full inversion the density matrix stays diagonal in the
symmetric Dicke basis ``|k>`` (k excitations), so only the N+1 populations
are propagated. Two-time correlations follow from the quantum regression
theorem with the same generator.

Propagators are matrix exponentials (scipy, scaling and squaring) of the
bidiagonal generator. The generator has a degenerate, non-normal spectrum
(``s_k^2 = s_{N+1-k}^2``), which rules out eigendecomposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .core import CorrelationGrid, NonPositive, SuperburstError, TimeGrid

FLUX_FLOOR = 1e-300
TRACE_TOL = 1e-9
NEGATIVITY_TOL = 1e-10


class IntegrationFailure(SuperburstError, RuntimeError):
    pass


def ladder(N: int) -> np.ndarray:
    """Lowering amplitudes ``s_k = sqrt(k (N+1-k))`` for k = 0..N."""
    if N < 1:
        raise NonPositive(f"N must be >= 1, got {N}")
    k = np.arange(N + 1)
    return np.sqrt(k * (N + 1 - k))


def _ladder_squared(N: int) -> np.ndarray:
    # integer products avoid sqrt round-off in s_k^2
    k = np.arange(N + 1, dtype=np.float64)
    return k * (N + 1 - k)


def generator(N: int) -> np.ndarray:
    """(N+1)x(N+1) rate matrix for d rho_kk / d(gamma t).

    ``A[n, n] = -s_n^2`` and ``A[n, n+1] = s_{n+1}^2``; columns sum to zero.
    """
    if N < 1:
        raise NonPositive(f"N must be >= 1, got {N}")
    s2 = _ladder_squared(N)
    a0 = np.diag(-s2)
    a0[np.arange(N), np.arange(1, N + 1)] = s2[1:]
    return a0


class _Propagator:
    """Cache of ``expm(A * dt)`` keyed by dimensionless step length."""

    def __init__(self, a0: np.ndarray):
        self.a0 = a0
        self._cache: dict[float, np.ndarray] = {}

    def __call__(self, dt: float) -> np.ndarray:
        key = float(np.round(dt, 12))
        u = self._cache.get(key)
        if u is None:
            u = expm(self.a0 * key) if key > 0 else np.eye(len(self.a0))
            self._cache[key] = u
        return u

    def populations(self, rho0: np.ndarray, times: np.ndarray) -> np.ndarray:
        """Populations at sorted dimensionless ``times`` (first may be > 0)."""
        out = np.empty((len(times), len(rho0)))
        rho, t_prev = rho0, 0.0
        for i, t in enumerate(times):
            rho = self(t - t_prev) @ rho
            out[i] = rho
            t_prev = t
        return out


@dataclass(frozen=True)
class DickeSolution:
    """Populations on the symmetric ladder; ``times`` in ns."""

    grid: TimeGrid
    gamma: float
    rho: np.ndarray  # (n_bins, N+1)
    flux_over_gamma: np.ndarray  # P(t) / gamma = <S+ S>

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def n_atoms(self) -> int:
        return self.rho.shape[1] - 1

    @property
    def flux(self) -> np.ndarray:
        """Photon flux P(t) in photons per ns."""
        return self.gamma * self.flux_over_gamma


def _initial(N: int, initial: np.ndarray | None) -> np.ndarray:
    if initial is None:
        rho0 = np.zeros(N + 1)
        rho0[N] = 1.0
        return rho0
    rho0 = np.asarray(initial, dtype=float)
    if rho0.shape != (N + 1,) or np.any(rho0 < 0) or abs(rho0.sum() - 1) > 1e-12:
        raise ValueError("initial must be a probability vector of length N+1")
    return rho0


def _check(rho: np.ndarray) -> None:
    trace_err = np.max(np.abs(rho.sum(axis=1) - 1.0))
    if trace_err > TRACE_TOL:
        raise IntegrationFailure(f"trace drifted by {trace_err:.3g}")
    if rho.min() < -NEGATIVITY_TOL:
        raise IntegrationFailure(f"negative population {rho.min():.3g}")


def _populations(N: int, gamma: float, t_ns: np.ndarray, rho0: np.ndarray, prop: _Propagator) -> np.ndarray:
    t = np.asarray(t_ns, dtype=float) * gamma
    if np.any(t < 0):
        raise ValueError("Dicke evolution starts at t = 0; times must be >= 0")
    order = np.argsort(t, kind="stable")
    rho = np.empty((len(t), N + 1))
    rho[order] = prop.populations(rho0, t[order])
    _check(rho)
    return rho


def evolve(N: int, gamma: float, grid: TimeGrid, initial: np.ndarray | None = None) -> DickeSolution:
    """Ladder populations and flux at ``grid.times`` (ns, t = 0 at inversion)."""
    if not gamma > 0:
        raise NonPositive(f"gamma must be positive, got {gamma}")
    rho0 = _initial(N, initial)
    prop = _Propagator(generator(N))
    rho = _populations(N, gamma, grid.times, rho0, prop)
    return DickeSolution(grid, gamma, rho, rho @ _ladder_squared(N))


def two_time_g2(
    N: int,
    gamma: float,
    grid1: TimeGrid,
    grid2: TimeGrid | None = None,
    initial: np.ndarray | None = None,
) -> CorrelationGrid:
    """g2(t1, t2) = G2(t1, t2) / (P(t1) P(t2) / gamma^2) on ``grid1 x grid2``.

    G2 for t2 >= t1 propagates ``S rho(t1) S+`` by ``t2 - t1``; the other half
    uses the exchange symmetry, so identical grids give a bit-exactly
    symmetric result. Cells where the flux falls below ``FLUX_FLOOR`` are
    returned as NaN.
    """
    grid2 = grid1 if grid2 is None else grid2
    rho0 = _initial(N, initial)
    s2 = _ladder_squared(N)
    prop = _Propagator(generator(N))

    t1 = grid1.times
    t2 = grid2.times
    all_t = np.concatenate([t1, t2])
    rho = _populations(N, gamma, all_t, rho0, prop)
    flux = rho @ s2
    # v_n(t) = s_{n+1}^2 rho_{n+1}(t): diagonal of S rho S+
    v = np.zeros_like(rho)
    v[:, :-1] = s2[1:] * rho[:, 1:]

    n1 = len(t1)
    i_idx, j_idx = np.meshgrid(np.arange(n1), n1 + np.arange(len(t2)), indexing="ij")
    early = np.where(t1[:, None] <= t2[None, :], i_idx, j_idx)
    lag = np.abs(t2[None, :] - t1[:, None]) * gamma
    keys = np.round(lag, 12)
    uniq, inverse = np.unique(keys, return_inverse=True)
    inverse = inverse.reshape(keys.shape)

    G2 = np.empty(keys.shape)
    for u_i, dt in enumerate(uniq):
        row = s2 @ prop(dt)  # s^2-weighted propagator, one per distinct lag
        mask = inverse == u_i
        G2[mask] = v[early[mask]] @ row
    np.maximum(G2, 0.0, out=G2)  # round-off only; the propagator is non-negative
    if grid1 == grid2:
        # BLAS row blocking can differ in the last ulp between mirrored cells
        lower = np.tril_indices(n1, -1)
        G2[lower] = G2.T[lower]

    denom = np.outer(flux[:n1], flux[n1:])
    g2 = np.full(G2.shape, np.nan)
    ok = (flux[:n1, None] > FLUX_FLOOR) & (flux[None, n1:] > FLUX_FLOOR)
    np.divide(G2, denom, out=g2, where=ok)
    return CorrelationGrid(grid1, grid2, g2, G2=G2)


def equal_time_g2(N: int, gamma: float, grid: TimeGrid, initial: np.ndarray | None = None) -> np.ndarray:
    """g2(t, t) on ``grid.times``; only the diagonal is computed."""
    rho0 = _initial(N, initial)
    s2 = _ladder_squared(N)
    prop = _Propagator(generator(N))
    rho = _populations(N, gamma, grid.times, rho0, prop)
    flux = rho @ s2
    v = np.zeros_like(rho)
    v[:, :-1] = s2[1:] * rho[:, 1:]
    G2 = np.maximum(v @ s2, 0.0)
    out = np.full(len(flux), np.nan)
    np.divide(G2, flux**2, out=out, where=flux > FLUX_FLOOR)
    return out

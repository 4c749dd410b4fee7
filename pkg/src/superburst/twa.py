"""Discrete truncated Wigner simulation of a cascaded (chiral) atom chain.

Each atom carries classical spin symbols: a complex coherence ``sigma_k``
(symbol of the lowering operator) and an inversion ``z_k`` (+1 excited).
Initial symbols are sampled from the discrete Wigner distribution, then
evolved deterministically. Atom k is driven by the external pulse plus the
guided field radiated by all atoms j < k; nothing propagates backwards.

Equations, with time in units of 1/gamma::

    Omega_k  = Omega(t) - 2i sqrt(beta_k) * sum_{j<k} sqrt(beta_j) sigma_j
    dsigma_k = -sigma_k / 2 + (i/2) Omega_k z_k
    dz_k     = -(1 + z_k) + 2 Re(i conj(Omega_k) sigma_k)

The feed-forward constant ``-2i`` is the unique choice for which the loss of
excitation equals unguided decay plus the guided output flux (checked per
trajectory, see ``balance_residual``).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.special import ndtri

from .core import EnsembleParams, NonPositive, RngSpec, SuperburstError, TimeGrid, validate

# numba falls back to its OpenMP/workqueue layer when the system TBB is too old
warnings.filterwarnings("ignore", message="The TBB threading layer", category=nb.NumbaWarning)

CASCADE_COUPLING = -2j
BALANCE_TOL = 1e-3
DT_MAX = 0.002  # in 1/gamma
PULSE_STEPS_MIN = 40


class StepSizeTooLarge(SuperburstError, RuntimeError):
    pass


class InsufficientTrajectories(SuperburstError, ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryState:
    """Wigner symbols of one realization, plus its coupling realization."""

    sigma: np.ndarray  # complex, (N,)
    z: np.ndarray  # real, (N,)
    beta: np.ndarray  # (N,)


@dataclass(frozen=True)
class DriveProfile:
    """Resonant top-hat pulse on ``[-duration, 0)`` with total area ``area``."""

    area: float
    duration: float

    @property
    def amplitude(self) -> float:
        return self.area / self.duration if self.duration > 0 else 0.0

    def __call__(self, t: float) -> float:
        return self.amplitude if -self.duration <= t < 0 else 0.0

    @classmethod
    def from_params(cls, params: EnsembleParams) -> "DriveProfile":
        return cls(params.pulse_area, params.pulse_duration)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-grid-time output of one trajectory (times in ns)."""

    grid: TimeGrid
    field: np.ndarray  # E(t) = sum_k sqrt(beta_k) sigma_k
    z_total: np.ndarray
    power: np.ndarray  # guided photons per ns
    fourth: np.ndarray  # normally ordered <E+E+EE> estimator, gamma^2 units
    balance_residual: float
    sigma: np.ndarray | None = None  # (n_bins, N) when atoms are recorded
    z: np.ndarray | None = None


@dataclass(frozen=True)
class EnsembleObservables:
    grid: TimeGrid
    power: np.ndarray  # photons per ns into the forward mode
    power_err: np.ndarray
    g2_equal_time: np.ndarray
    g2_err: np.ndarray
    n_traj: int
    balance_residual: float


# ---------------------------------------------------------------- sampling


def _lognormal_beta(beta: np.ndarray, spread: float, u: np.ndarray) -> np.ndarray:
    if spread <= 0:
        return beta
    s2 = math.log1p(spread * spread)
    out = beta * np.exp(math.sqrt(s2) * ndtri(u) - 0.5 * s2)
    return np.clip(out, 1e-12, 1.0)


def sample_initial(
    params: EnsembleParams,
    rng: RngSpec,
    start: str = "ground",
    areas: np.ndarray | float | None = None,
    beta_spread: float = 0.0,
) -> TrajectoryState:
    """Draw one DTWA realization.

    In the ground-state body frame the transverse symbols are independent
    +-1 and the longitudinal one is -1. ``start="product"`` rotates each
    atom about x by its local area (``areas``, default the pulse area),
    giving the state ``cos(A/2)|g> - i sin(A/2)|e>`` per atom.

    Draws are made atom by atom, so atoms 0..k see identical random numbers
    regardless of how many atoms follow.
    """
    n = params.n_atoms
    u = rng.generator().random((n, 3))
    x = np.where(u[:, 0] < 0.5, -1.0, 1.0)
    y = np.where(u[:, 1] < 0.5, -1.0, 1.0)
    z = -np.ones(n)
    if start == "product":
        A = params.pulse_area if areas is None else areas
        A = np.broadcast_to(np.asarray(A, dtype=float), (n,))
        c, s = np.cos(A), np.sin(A)
        y, z = y * c - z * s, z * c + y * s
    elif start != "ground":
        raise ValueError(f"unknown start mode {start!r}")
    beta = _lognormal_beta(params.beta_array(), beta_spread, u[:, 2])
    return TrajectoryState(sigma=0.5 * (x - 1j * y), z=z, beta=beta)


# ---------------------------------------------------------------- dynamics


def drift(state: TrajectoryState, params: EnsembleParams, omega: complex) -> tuple[np.ndarray, np.ndarray]:
    """Time derivatives (per ns) of ``sigma`` and ``z``; ``omega`` in rad/ns.

    Plain numpy reference for the compiled integrator.
    """
    g = params.gamma
    sb = np.sqrt(state.beta)
    field = np.concatenate([[0j], np.cumsum(sb * state.sigma)[:-1]])
    om = omega + CASCADE_COUPLING * g * sb * field
    dsigma = -0.5 * g * state.sigma + 0.5j * om * state.z
    dz = -g * (1 + state.z) + 2 * np.real(1j * np.conj(om) * state.sigma)
    return dsigma, dz


@nb.njit(cache=True, fastmath=False)
def _rates(sig, z, omega, sqb, dsig, dz):
    """Dimensionless derivatives; returns (excitation, loss rate).

    loss = total decay + guided cross terms - work done by the drive, so that
    d(excitation)/dt = -loss holds exactly for the continuous dynamics.
    """
    f = 0j
    exc = 0.0
    loss = 0.0
    for k in range(sig.shape[0]):
        s = sig[k]
        zk = z[k]
        om = omega - 2j * sqb[k] * f
        dsig[k] = -0.5 * s + 0.5j * om * zk
        dz[k] = -(1.0 + zk) - 2.0 * (om.real * s.imag - om.imag * s.real)
        nk = 0.5 * (1.0 + zk)
        exc += nk
        # decay + guided interference - drive work (Re(i conj(Omega) s))
        loss += nk + 2.0 * sqb[k] * (s.real * f.real + s.imag * f.imag)
        loss -= -(omega.real * s.imag - omega.imag * s.real)
        f += sqb[k] * s
    return exc, loss


@nb.njit(cache=True)
def _observables(sig, z, beta, sqb):
    """Field E, total inversion, and the power / fourth-moment estimators.

    Single-site factors n_k = (1+z_k)/2 replace |sigma_k|^2 wherever an atom
    index repeats between creation and annihilation operators; cross terms
    use symbol products. Both are unbiased for product states.
    """
    E = 0j
    Q = 0j
    S2 = 0.0
    S4 = 0.0
    Ca = 0j
    B1 = 0.0
    B2 = 0.0
    Cb = 0.0
    Db = 0j
    ztot = 0.0
    for k in range(sig.shape[0]):
        a = sqb[k] * sig[k]
        ac = a.conjugate()
        w = a.real * a.real + a.imag * a.imag
        b = beta[k] * 0.5 * (1.0 + z[k])
        E += a
        Q += a * a
        S2 += w
        S4 += w * w
        Ca += w * ac
        B1 += b
        B2 += b * b
        Cb += b * w
        Db += b * ac
        ztot += z[k]
    e2 = E.real * E.real + E.imag * E.imag
    power = B1 + e2 - S2
    X = E * E - Q
    x2 = X.real * X.real + X.imag * X.imag
    y_self = S2 * (e2 - S2) + 2.0 * S4 - 2.0 * (E * Ca).real
    y_pop = B1 * (e2 - S2) + 2.0 * Cb - 2.0 * (E * Db).real
    z_self = S2 * S2 - S4
    z_pop = B1 * B1 - B2
    fourth = x2 - 4.0 * y_self - 2.0 * z_self + 4.0 * y_pop + 2.0 * z_pop
    return E, ztot, power, fourth


@nb.njit(cache=True)
def _rk4_segment(sig, z, omega, sqb, n_steps, dt, buf, exc0, loss0, n_atoms):
    """Advance ``n_steps`` RK4 steps at fixed drive.

    Returns the final (excitation, loss) and the integral of the loss rate by
    composite Simpson over the step endpoints (the last step of an odd count
    uses the three-point end formula).
    """
    k1s, k1z, k2s, k2z, k3s, k3z, k4s, k4z, ts, tz = buf
    exc = exc0
    loss = loss0
    l_prev2 = l_prev = loss0  # loss at the two previous step endpoints
    l_prev3 = loss0
    integral = 0.0
    for step in range(n_steps):
        # k1 already holds the derivative at the current state
        for i in range(n_atoms):
            ts[i] = sig[i] + 0.5 * dt * k1s[i]
            tz[i] = z[i] + 0.5 * dt * k1z[i]
        _rates(ts, tz, omega, sqb, k2s, k2z)
        for i in range(n_atoms):
            ts[i] = sig[i] + 0.5 * dt * k2s[i]
            tz[i] = z[i] + 0.5 * dt * k2z[i]
        _rates(ts, tz, omega, sqb, k3s, k3z)
        for i in range(n_atoms):
            ts[i] = sig[i] + dt * k3s[i]
            tz[i] = z[i] + dt * k3z[i]
        _rates(ts, tz, omega, sqb, k4s, k4z)
        for i in range(n_atoms):
            sig[i] += dt / 6.0 * (k1s[i] + 2.0 * k2s[i] + 2.0 * k3s[i] + k4s[i])
            z[i] += dt / 6.0 * (k1z[i] + 2.0 * k2z[i] + 2.0 * k3z[i] + k4z[i])
        exc, loss = _rates(sig, z, omega, sqb, k1s, k1z)
        if step % 2 == 1:
            integral += dt / 3.0 * (l_prev2 + 4.0 * l_prev + loss)
        l_prev3, l_prev2, l_prev = l_prev2, l_prev, loss
    if n_steps == 1:
        integral = 0.5 * dt * (loss0 + loss)
    elif n_steps % 2 == 1:
        integral += dt / 12.0 * (-l_prev3 + 8.0 * l_prev2 + 5.0 * l_prev)
    return exc, loss, integral


@nb.njit(cache=True, parallel=True)
def _integrate_batch(
    sig0, z0, beta, omega, n_pulse, dt_pulse, n_pre, dt_pre, n_bins, substeps, dt,
    rec_field, rec_z, rec_power, rec_fourth, residual, record_atoms, atoms_sig, atoms_z,
):
    n_traj, n_atoms = sig0.shape
    for t in nb.prange(n_traj):
        sig = sig0[t].copy()
        z = z0[t].copy()
        bt = beta[t]
        sqb = np.sqrt(bt)
        buf = (
            np.empty(n_atoms, np.complex128), np.empty(n_atoms),
            np.empty(n_atoms, np.complex128), np.empty(n_atoms),
            np.empty(n_atoms, np.complex128), np.empty(n_atoms),
            np.empty(n_atoms, np.complex128), np.empty(n_atoms),
            np.empty(n_atoms, np.complex128), np.empty(n_atoms),
        )
        worst = 0.0
        if n_pulse > 0:
            e0, l0 = _rates(sig, z, omega, sqb, buf[0], buf[1])
            e1, l1, integ = _rk4_segment(sig, z, omega, sqb, n_pulse, dt_pulse, buf, e0, l0, n_atoms)
            worst = max(worst, abs(e1 - e0 + integ) / (n_atoms * n_pulse * dt_pulse))
        zero = 0j
        e0, l0 = _rates(sig, z, zero, sqb, buf[0], buf[1])
        if n_pre > 0:
            e1, l1, integ = _rk4_segment(sig, z, zero, sqb, n_pre, dt_pre, buf, e0, l0, n_atoms)
            worst = max(worst, abs(e1 - e0 + integ) / (n_atoms * n_pre * dt_pre))
            e0, l0 = e1, l1
        for b in range(n_bins):
            if b > 0:
                e1, l1, integ = _rk4_segment(sig, z, zero, sqb, substeps, dt, buf, e0, l0, n_atoms)
                worst = max(worst, abs(e1 - e0 + integ) / (n_atoms * substeps * dt))
                e0, l0 = e1, l1
            E, ztot, pw, fo = _observables(sig, z, bt, sqb)
            rec_field[t, b] = E
            rec_z[t, b] = ztot
            rec_power[t, b] = pw
            rec_fourth[t, b] = fo
            if record_atoms:
                atoms_sig[t, b, :] = sig
                atoms_z[t, b, :] = z
        residual[t] = worst


@dataclass(frozen=True)
class _Schedule:
    omega: float  # dimensionless pulse amplitude
    n_pulse: int
    dt_pulse: float
    n_pre: int
    dt_pre: float
    substeps: int
    dt: float


def _schedule(params: EnsembleParams, grid: TimeGrid, start: str, dt: float | None) -> _Schedule:
    g = params.gamma
    if grid.t_start < 0:
        raise ValueError("grid must start at or after the end of the pulse (t >= 0)")
    t_pulse = params.pulse_duration * g
    dt_max = DT_MAX if dt is None else dt
    if start == "ground" and t_pulse > 0 and dt is None:
        dt_max = min(dt_max, t_pulse / PULSE_STEPS_MIN)
    n_pulse, dt_pulse, omega = 0, 0.0, 0.0
    if start == "ground" and t_pulse > 0:
        n_pulse = max(1, math.ceil(t_pulse / dt_max - 1e-9))
        dt_pulse = t_pulse / n_pulse
        omega = params.pulse_area / t_pulse
    t0 = grid.t_start * g
    n_pre = math.ceil(t0 / dt_max - 1e-9) if t0 > 0 else 0
    dt_pre = t0 / n_pre if n_pre else 0.0
    width = grid.bin_width * g
    substeps = max(1, math.ceil(width / dt_max - 1e-9))
    return _Schedule(omega, n_pulse, dt_pulse, n_pre, dt_pre, substeps, width / substeps)


def _run_kernel(sig0, z0, beta, sched: _Schedule, n_bins: int, record_atoms: bool):
    n_traj, n_atoms = sig0.shape
    rec_field = np.zeros((n_traj, n_bins), np.complex128)
    rec_z = np.zeros((n_traj, n_bins))
    rec_power = np.zeros((n_traj, n_bins))
    rec_fourth = np.zeros((n_traj, n_bins))
    residual = np.zeros(n_traj)
    shape = (n_traj, n_bins, n_atoms) if record_atoms else (1, 1, 1)
    atoms_sig = np.zeros(shape, np.complex128)
    atoms_z = np.zeros(shape)
    _integrate_batch(
        np.ascontiguousarray(sig0, dtype=np.complex128), np.ascontiguousarray(z0, dtype=np.float64),
        np.ascontiguousarray(beta, dtype=np.float64), complex(sched.omega),
        sched.n_pulse, sched.dt_pulse, sched.n_pre, sched.dt_pre, n_bins, sched.substeps, sched.dt,
        rec_field, rec_z, rec_power, rec_fourth, residual, record_atoms, atoms_sig, atoms_z,
    )
    return rec_field, rec_z, rec_power, rec_fourth, residual, atoms_sig, atoms_z


def integrate_trajectory(
    state: TrajectoryState,
    params: EnsembleParams,
    grid: TimeGrid,
    drive: DriveProfile | None = None,
    record_atoms: bool = False,
    dt: float | None = None,
) -> TrajectoryRecord:
    """Evolve one sampled state and record it at ``grid.times`` (ns).

    With a ``drive`` the state is taken at the start of the pulse
    (t = -duration) and the pulse is integrated first; absorption along the
    chain comes out of the feed-forward term. Without one, ``state`` is the
    state at t = 0. ``dt`` (units of 1/gamma) overrides the default step.
    """
    if drive is not None:
        params = EnsembleParams(params.n_atoms, params.beta, params.gamma, drive.area, drive.duration)
    start = "ground" if drive is not None else "product"
    sched = _schedule(params, grid, start, dt)
    out = _run_kernel(
        state.sigma[None, :], state.z[None, :], state.beta[None, :], sched, grid.n_bins, record_atoms
    )
    rec_field, rec_z, rec_power, rec_fourth, residual, atoms_sig, atoms_z = out
    if residual[0] > BALANCE_TOL:
        raise StepSizeTooLarge(f"excitation balance residual {residual[0]:.3g} per unit gamma*t")
    g = params.gamma
    return TrajectoryRecord(
        grid=grid,
        field=rec_field[0],
        z_total=rec_z[0],
        power=g * rec_power[0],
        fourth=rec_fourth[0],
        balance_residual=float(residual[0]),
        sigma=atoms_sig[0] if record_atoms else None,
        z=atoms_z[0] if record_atoms else None,
    )


# ---------------------------------------------------------------- ensembles


def _jackknife_ratio(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """mean(num)/mean(den)^2 with leave-one-out jackknife errors (axis 0)."""
    n = num.shape[0]
    sn, sd = num.sum(axis=0), den.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        est = (sn / n) / (sd / n) ** 2
        loo = ((sn - num) / (n - 1)) / ((sd - den) / (n - 1)) ** 2
        var = (n - 1) / n * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0)
    return est, np.sqrt(var)


def simulate(
    params: EnsembleParams,
    grid: TimeGrid,
    n_traj: int,
    seed: int,
    start: str = "product",
    beta_spread: float = 0.0,
    batch_size: int = 1000,
    dt: float | None = None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Per-trajectory power and fourth-moment estimators, shape (n_traj, n_bins).

    Trajectory i always uses stream ``RngSpec(seed, i)``; batches are
    reduced in trajectory order, so results do not depend on ``batch_size``
    or the number of worker threads.
    """
    params = validate(params)
    if start == "pulse":
        start = "ground"
    sched = _schedule(params, grid, start, dt)
    power = np.empty((n_traj, grid.n_bins))
    fourth = np.empty((n_traj, grid.n_bins))
    worst = 0.0
    for lo in range(0, n_traj, batch_size):
        hi = min(n_traj, lo + batch_size)
        states = [sample_initial(params, RngSpec(seed, i), start, beta_spread=beta_spread) for i in range(lo, hi)]
        sig0 = np.stack([s.sigma for s in states])
        z0 = np.stack([s.z for s in states])
        beta = np.stack([s.beta for s in states])
        _, _, pw, fo, res, _, _ = _run_kernel(sig0, z0, beta, sched, grid.n_bins, False)
        power[lo:hi] = pw
        fourth[lo:hi] = fo
        worst = max(worst, float(res.max()))
    if worst > BALANCE_TOL:
        raise StepSizeTooLarge(f"excitation balance residual {worst:.3g} per unit gamma*t")
    return power, fourth, worst


def run_ensemble(
    params: EnsembleParams,
    grid: TimeGrid,
    n_traj: int,
    seed: int,
    start: str = "product",
    beta_spread: float = 0.0,
    batch_size: int = 1000,
    dt: float | None = None,
) -> EnsembleObservables:
    """Ensemble power P(t) and equal-time g2(t,t) with one-sigma errors.

    ``start="product"`` begins at t = 0 in the rotated product state of
    area ``params.pulse_area``; ``start="pulse"`` begins in the ground state
    and integrates the excitation pulse, including its absorption.
    """
    if n_traj < 2:
        raise InsufficientTrajectories(f"need at least 2 trajectories, got {n_traj}")
    params = validate(params)
    power, fourth, worst = simulate(params, grid, n_traj, seed, start, beta_spread, batch_size, dt)
    g = params.gamma
    p_mean = power.mean(axis=0)
    p_err = power.std(axis=0, ddof=1) / math.sqrt(n_traj)
    g2, g2_err = _jackknife_ratio(fourth, power)
    bad = ~(p_mean > 0)
    g2[bad] = np.nan
    g2_err[bad] = np.nan
    return EnsembleObservables(grid, g * p_mean, g * p_err, g2, g2_err, n_traj, worst)


def sweep_pulse_area(
    params: EnsembleParams,
    A_grid: np.ndarray,
    n_traj: int,
    seed: int,
    start: str = "product",
    beta_spread: float = 0.0,
) -> tuple[np.ndarray, float]:
    """g2(0,0) versus pulse area.

    Returns rows ``(A/pi, g2_00, g2_00_err)`` and the area (in units of pi)
    of the largest g2(0,0).
    """
    if n_traj < 2:
        raise InsufficientTrajectories(f"need at least 2 trajectories, got {n_traj}")
    grid = TimeGrid(0.0, 1e-3, 1)
    rows = []
    for A in np.asarray(A_grid, dtype=float):
        p = validate(EnsembleParams(params.n_atoms, params.beta, params.gamma, float(A), params.pulse_duration))
        obs = run_ensemble(p, grid, n_traj, seed, start, beta_spread)
        rows.append((A / math.pi, obs.g2_equal_time[0], obs.g2_err[0]))
    table = np.array(rows).reshape(-1, 3)
    peak = float(table[np.nanargmax(table[:, 1]), 0]) if len(table) else math.nan
    return table, peak


def burst_present(power: np.ndarray, factor: float = 1.0) -> bool:
    """True if the power ever exceeds ``factor`` times its first sample."""
    return bool(np.nanmax(power) > factor * power[0])

"""Throughput of the compiled trajectory integrator in atom-steps per µs."""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

from superburst.core import EnsembleParams, TimeGrid, validate
from superburst.twa import DT_MAX, simulate


@dataclass(frozen=True)
class BenchConfig:
    n_atoms: int = 900
    beta: float = 0.01
    n_traj: int = 500
    t_max_ns: float = 30.5
    bins: int = 10


def bench(cfg: BenchConfig) -> float:
    params = validate(EnsembleParams(cfg.n_atoms, cfg.beta))
    grid = TimeGrid(0.0, cfg.t_max_ns, cfg.bins)
    simulate(params, grid, 2, seed=0)  # compile outside the timed region
    t0 = time.perf_counter()
    simulate(params, grid, cfg.n_traj, seed=1)
    elapsed = time.perf_counter() - t0
    steps = round(cfg.t_max_ns * params.gamma / DT_MAX)
    rate = cfg.n_atoms * steps * cfg.n_traj / (elapsed * 1e6)
    print(f"{cfg.n_traj} trajectories x {cfg.n_atoms} atoms x {steps} steps in {elapsed:.2f} s: {rate:.0f} atom-steps/us")
    return rate


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-atoms", type=int, default=900)
    ap.add_argument("--n-traj", type=int, default=500)
    a = ap.parse_args()
    bench(BenchConfig(n_atoms=a.n_atoms, n_traj=a.n_traj))

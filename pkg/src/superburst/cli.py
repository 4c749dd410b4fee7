"""Command-line front end.

Every subcommand writes CSV artifacts atomically plus a JSON manifest
(``<subcommand>_manifest.json`` next to the first output). Exit codes:
0 success, 1 computation failed, 2 usage error, 3 bad configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .core import TAU_NS, ConfigError, EnsembleParams, SuperburstError, TimeGrid, load_config, validate

SEED_ENV = "SUPERBURST_SEED"


class UsageError(SuperburstError):
    pass


@dataclass
class RunManifest:
    subcommand: str
    config_hash: str
    seed: int | None
    version: str = __version__
    duration_s: float = 0.0
    outputs: list[str] = field(default_factory=list)

    def write(self, path: Path) -> None:
        _atomic_write(path, json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def config_hash(config: dict[str, Any]) -> str:
    """sha256 of the canonical JSON form (sorted keys, repr floats)."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    _atomic_write(path, "\n".join(lines) + "\n")
    return Path(path)


def _grid_rows(grid) -> Iterable[tuple]:
    """Long-format rows (t1, t2, ...) of a CorrelationGrid."""
    t1, t2 = grid.t1.times, grid.t2.times
    for i in range(len(t1)):
        for j in range(len(t2)):
            yield i, j, t1[i], t2[j]


def parse_range(text: str) -> np.ndarray:
    """``start:stop:steps`` -> inclusive linspace."""
    try:
        start, stop, steps = text.split(":")
        n = int(steps)
        if n < 1:
            raise ValueError
        return np.linspace(float(start), float(stop), n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:steps, got {text!r}") from None


def _seed(config_seed: int) -> int:
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return config_seed
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _set_workers(n: int | None) -> None:
    if n is None:
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


# ------------------------------------------------------------ subcommands


def cmd_g2_initial(args) -> tuple[list[Path], dict, int | None]:
    from .analytic import g2_initial_table

    table = g2_initial_table(args.n, math.pi * args.a_grid)
    out = write_csv(args.out, ("A_over_pi", "g2_largeN", "g2_exact"), table)
    return [out], {"n": args.n, "a_grid": args.a_grid.tolist()}, None


def _dicke_outputs(n: int, gamma: float, t_max: float, bins: int, two_time: bool, out_dir: Path, prefix: str):
    from .dicke import equal_time_g2, evolve, two_time_g2

    grid = TimeGrid(0.0, t_max / gamma, bins)
    sol = evolve(n, gamma, grid)
    g2tt = equal_time_g2(n, gamma, grid)
    outs = [
        write_csv(
            out_dir / f"{prefix}_flux.csv",
            ("t_ns", "P_over_gamma", "g2_tt"),
            zip(grid.times, sol.flux_over_gamma, g2tt),
        )
    ]
    if two_time:
        g = two_time_g2(n, gamma, grid)
        rows = ((t1, t2, g.g2[i, j]) for i, j, t1, t2 in _grid_rows(g))
        outs.append(write_csv(out_dir / f"{prefix}_g2.csv", ("t1_ns", "t2_ns", "g2"), rows))
    return outs


def cmd_dicke(args):
    gamma = args.time_scale / args.tau_ns
    if not gamma > 0:
        raise ConfigError("tau-ns and time-scale must be positive")
    outs = _dicke_outputs(args.n, gamma, args.t_max, args.bins, args.two_time, args.out_dir, "dicke")
    cfg = {"n": args.n, "tau_ns": args.tau_ns, "time_scale": args.time_scale, "t_max": args.t_max, "bins": args.bins}
    return outs, cfg | {"two_time": args.two_time}, None


def _twa_table(params, grid, n_traj, seed, start, beta_spread):
    from .twa import run_ensemble

    obs = run_ensemble(params, grid, n_traj, seed, start=start, beta_spread=beta_spread)
    return zip(grid.times, obs.power, obs.power_err, obs.g2_equal_time, obs.g2_err)


TWA_HEADER = ("t_ns", "power", "power_err", "g2_tt", "g2_tt_err")


def cmd_twa(args):
    from .twa import sweep_pulse_area

    params, cfg_seed = load_config(args.config)
    seed = _seed(cfg_seed)
    cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    cfg.update(seed=seed, n_traj=args.n_traj, start=args.start, beta_spread=args.beta_spread)
    if args.sweep is not None:
        table, peak = sweep_pulse_area(params, math.pi * args.sweep, args.n_traj, seed, args.start, args.beta_spread)
        out = write_csv(args.out, ("A_over_pi", "g2_00", "g2_00_err"), table)
        print(f"peak g2(0,0) at A/pi = {peak!r}")
        return [out], cfg | {"sweep": args.sweep.tolist()}, seed
    t_max = args.t_max_ns if args.t_max_ns is not None else 2 * params.tau
    grid = TimeGrid(0.0, t_max, args.bins)
    rows = _twa_table(params, grid, args.n_traj, seed, args.start, args.beta_spread)
    out = write_csv(args.out, TWA_HEADER, rows)
    return [out], cfg | {"t_max_ns": t_max, "bins": args.bins}, seed


def cmd_hbt_analyze(args):
    from . import hbt

    grid = TimeGrid.from_width(0.0, args.t_max, args.bin_ns)
    tags = hbt.ingest(args.inp, args.delay_ns, n_trials=args.trials)
    res = hbt.normalize(hbt.coincidences(tags, grid, workers=args.workers or 1))
    rows = ((t1, t2, res.counts[i, j], res.g2[i, j], res.stderr[i, j]) for i, j, t1, t2 in _grid_rows(res))
    out = write_csv(args.out, ("t1_ns", "t2_ns", "n_c", "g2", "g2_err"), rows)
    cfg = {"in": str(args.inp), "delay_ns": args.delay_ns, "bin_ns": args.bin_ns, "t_max": args.t_max}
    return [out], cfg | {"n_trials": tags.n_trials}, None


def cmd_hbt_synth(args):
    from . import hbt

    trace = hbt.PowerTrace.from_csv(args.trace) if args.trace else hbt.burst_trace()
    seed = _seed(args.seed)
    if args.kind == "coherent":
        tags = hbt.synth_coherent(trace, args.mean_photons, args.trials, seed, args.delay_ns)
    else:
        jitter = hbt.JitterModel(not args.no_intensity_scale, args.delay_jitter_ns)
        tags = hbt.synth_chaotic(trace, jitter, args.mean_photons, args.trials, seed, args.delay_ns)
    out = Path(args.out)
    tags.to_csv(out)
    cfg = {k: getattr(args, k) for k in ("kind", "trials", "mean_photons", "delay_ns", "delay_jitter_ns")}
    cfg |= {"trace": str(args.trace), "intensity_scale": not args.no_intensity_scale, "seed": seed}
    return [out], cfg, seed


# ------------------------------------------------------------- reproduce


def _reproduce_fig2c(out_dir: Path, seed: int, n_traj: int):
    params = validate(EnsembleParams(900, 0.01))
    grid = TimeGrid(0.0, 40.0, 40)
    outs = [write_csv(out_dir / "fig2c_twa.csv", TWA_HEADER, _twa_table(params, grid, n_traj, seed, "product", 0.0))]
    outs += _dicke_outputs(9, 1.0 / TAU_NS, 40.0 / TAU_NS, 80, False, out_dir, "fig2c_dicke")
    return outs


def _reproduce_fig3(out_dir: Path, seed: int, n_traj: int):
    outs = []
    for n in (50, 400, 900):
        params = validate(EnsembleParams(n, 0.01))
        grid = TimeGrid(0.0, 2 * TAU_NS, 61)
        rows = _twa_table(params, grid, n_traj, seed, "product", 0.0)
        outs.append(write_csv(out_dir / f"fig3_N{n}.csv", TWA_HEADER, rows))
    return outs


def _reproduce_fig4b(out_dir: Path, seed: int, n_trials: int):
    from . import hbt

    trace = hbt.burst_trace()
    grid = TimeGrid.from_width(0.0, 120.0, 3.0)
    jitter = hbt.JitterModel(intensity_scale=True, delay_jitter_ns=trace.fwhm() / 2)
    outs = []
    for name, tags in (
        ("fig4b", hbt.synth_chaotic(trace, jitter, 2.0, n_trials, seed)),
        ("fig4d", hbt.synth_coherent(trace, 2.0, n_trials, seed + 1)),
    ):
        res = hbt.normalize(hbt.coincidences(hbt.ingest(tags, 100.0), grid)).symmetrized()
        rows = ((t1, t2, res.counts[i, j], res.g2[i, j], res.stderr[i, j]) for i, j, t1, t2 in _grid_rows(res))
        outs.append(write_csv(out_dir / f"{name}_g2_grid.csv", ("t1_ns", "t2_ns", "n_c", "g2", "g2_err"), rows))
    return outs


def _reproduce_sm(out_dir: Path, seed: int, n: int):
    outs = []
    for n_atoms in (9, 200):
        # a few burst delays, which scale as ln(N)/N in units of 1/gamma
        t_max = 6 * math.log(n_atoms + 1) / (n_atoms + 1)
        outs += _dicke_outputs(n_atoms, 1.0 / TAU_NS, t_max, 100, True, out_dir, f"sm_N{n_atoms}")
    return outs


RECIPES = {
    "fig2c": (_reproduce_fig2c, 2000),
    "fig3": (_reproduce_fig3, 1000),
    "fig4b": (_reproduce_fig4b, 100_000),
    "sm-fig": (_reproduce_sm, 0),
}


def cmd_reproduce(args):
    fn, default_n = RECIPES[args.figure]
    seed = _seed(args.seed)
    n = args.n if args.n is not None else default_n
    outs = fn(args.out_dir, seed, n)
    return outs, {"figure": args.figure, "n": n, "seed": seed}, seed


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="superburst", description="Superradiant burst solvers and HBT analysis.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--workers", type=int, default=None, help="cap on worker threads")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("g2-initial", help="g2(0,0) of a rotated product state")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--a-grid", type=parse_range, default=parse_range("0.5:1.5:101"), help="A/pi as start:stop:steps")
    g.add_argument("--out", type=Path, default=Path("g2_initial.csv"))
    g.set_defaults(func=cmd_g2_initial)

    d = sub.add_parser("dicke", help="symmetric Dicke model")
    d.add_argument("--n", type=int, default=9)
    d.add_argument("--tau-ns", type=float, default=TAU_NS)
    d.add_argument("--t-max", type=float, default=6.0, help="end time in units of the lifetime")
    d.add_argument("--bins", type=int, default=200)
    d.add_argument("--time-scale", type=float, default=1.0, help="multiplies the decay rate 1/tau")
    d.add_argument("--two-time", action="store_true")
    d.add_argument("--out-dir", type=Path, default=Path("."))
    d.set_defaults(func=cmd_dicke)

    t = sub.add_parser("twa", help="cascaded truncated-Wigner ensemble")
    t.add_argument("--config", type=Path, required=True)
    t.add_argument("--n-traj", type=int, default=10_000)
    t.add_argument("--out", type=Path, default=Path("twa.csv"))
    t.add_argument("--start", choices=("product", "pulse"), default="product")
    t.add_argument("--t-max-ns", type=float, default=None)
    t.add_argument("--bins", type=int, default=61)
    t.add_argument("--beta-spread", type=float, default=0.0)
    t.add_argument("--sweep", type=parse_range, default=None, help="A/pi grid; emits g2(0,0) versus area")
    t.set_defaults(func=cmd_twa)

    h = sub.add_parser("hbt", help="time-tag analysis and synthesis")
    hs = h.add_subparsers(dest="hbt_command", required=True, parser_class=_Parser)
    a = hs.add_parser("analyze")
    a.add_argument("--in", dest="inp", type=Path, required=True)
    a.add_argument("--delay-ns", type=float, default=100.0)
    a.add_argument("--bin-ns", type=float, default=3.0)
    a.add_argument("--t-max", type=float, default=120.0)
    a.add_argument("--trials", type=int, default=None, help="number of pulses, if the file omits empty trials")
    a.add_argument("--out", type=Path, default=Path("g2_grid.csv"))
    a.set_defaults(func=cmd_hbt_analyze)
    s = hs.add_parser("synth")
    s.add_argument("kind", choices=("coherent", "chaotic"))
    s.add_argument("--trace", type=Path, default=None, help="CSV with time and power columns")
    s.add_argument("--trials", type=int, default=100_000)
    s.add_argument("--mean-photons", type=float, default=2.0)
    s.add_argument("--delay-ns", type=float, default=100.0)
    s.add_argument("--delay-jitter-ns", type=float, default=0.0)
    s.add_argument("--no-intensity-scale", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", type=Path, default=Path("tags.csv"))
    s.set_defaults(func=cmd_hbt_synth)

    r = sub.add_parser("reproduce", help="desk-scale figure recipes")
    r.add_argument("figure", choices=sorted(RECIPES))
    r.add_argument("--out-dir", type=Path, default=Path("."))
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--n", type=int, default=None, help="trajectories or trials")
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"superburst: error: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        _set_workers(args.workers)
        outputs, cfg, seed = args.func(args)
    except ConfigError as exc:
        print(f"superburst: config error: {exc}", file=sys.stderr)
        return 3
    except (SuperburstError, ValueError, ArithmeticError, OSError) as exc:
        print(f"superburst: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    name = args.command if args.command != "hbt" else f"hbt-{args.hbt_command}"
    manifest = RunManifest(
        subcommand=name,
        config_hash=config_hash(cfg),
        seed=seed,
        duration_s=time.perf_counter() - t0,
        outputs=[str(p) for p in outputs],
    )
    manifest.write(Path(outputs[0]).parent / f"{name}_manifest.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())

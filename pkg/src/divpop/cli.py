"""Command-line entry point: ``divpop {train, ablate, bandit-bench, viz}``.

Exit codes: 0 success, 2 configuration error, 3 runtime or numerical error.
Set ``DIVPOP_LOG`` (DEBUG, INFO, WARNING, ...) to control log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bandit_bench as bb
from . import plotting
from .config import (ConfigError, build_ablation_grid, build_bench_config,
                     build_train_config, load_config)
from .mdp import MDPError
from .population import LatentPolicy, NumericalError, SimplexPopulation
from .trainer import TrainingRun, run_ablation, train

log = logging.getLogger("divpop")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def fmt(x) -> str:
    """Fixed CSV number format: integers verbatim, reals to 9 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".9g")
    return str(x)


def write_csv(path: Path, header, rows) -> int:
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
            n += 1
    return n


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- snapshots

def save_population(path: Path, pop, iteration: int, prior) -> None:
    if isinstance(pop, SimplexPopulation):
        body = {"kind": "simplex", "points": pop.points.tolist()}
    else:
        body = {"kind": "logits", "logits": pop.logits.tolist()}
    body.update(iteration=iteration, prior=np.asarray(prior.probs).tolist())
    path.write_text(json.dumps(body, indent=1) + "\n", encoding="utf-8")


def load_population(path: Path):
    body = json.loads(Path(path).read_text(encoding="utf-8"))
    if body["kind"] == "simplex":
        return SimplexPopulation(np.array(body["points"]))
    return LatentPolicy(np.array(body["logits"]))


# ---------------------------------------------------------------- train

def write_run(out: Path, run: TrainingRun) -> None:
    out.mkdir(parents=True, exist_ok=True)
    n = run.config.n_policies
    header = (["iteration", "selected_z", "bandit_reward", "mi", "f_sum"]
              + [f"score_{i}" for i in range(n)] + ["target_reached"])
    write_csv(out / "run.csv", header,
              ([r.iteration, r.selected_z, r.bandit_reward, r.mi, r.f_sum, *r.scores,
                r.target_reached] for r in run.records))
    S = run.config.mdp.n_states
    snaps = [(0, run.initial_occupancies)] + [(r.iteration, r.occupancies) for r in run.records]
    write_csv(out / "trajectory.csv", ["iteration", "policy"] + [f"p_{s}" for s in range(S)],
              ([it, i, *occ[i]] for it, occ in snaps for i in range(n)))
    save_population(out / "population.json", run.state.population, run.state.iteration,
                    run.state.prior)


def _train_one(cfg):
    return train(cfg)


def cmd_train(args) -> int:
    raw = load_config(args.config)
    cfg = build_train_config(raw)
    seeds = args.seeds if args.seeds else [cfg.seed]
    out = Path(args.out)
    configs = [replace(cfg, seed=s) for s in seeds]
    runs = _map(_train_one, configs, args.workers)
    for s, run in zip(seeds, runs):
        target = out if len(seeds) == 1 else out / f"seed-{s}"
        write_run(target, run)
        log.info("seed %d: %d iterations, I(s;z)=%.4f, target reached=%s", s,
                 len(run.records), run.records[-1].mi, run.records[-1].target_reached)
    return EXIT_OK


# ---------------------------------------------------------------- ablate

def write_ablation(out: Path, report) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "ablation.csv", ["selector", "N", "delta", "seed", "iteration", "objective"],
              report.rows())
    summary = report.summary()
    cols = ["selector", "N", "delta", "median_iterations_to_target",
            "final_objective_mean", "miss_fraction"]
    write_csv(out / "summary.csv", cols, ([row[c] for c in cols] for row in summary))
    render_ablation(out)


def cmd_ablate(args) -> int:
    raw = load_config(args.config)
    grid = build_ablation_grid(raw)
    if args.seeds:
        grid = replace(grid, seeds=tuple(args.seeds))
    report = run_ablation(grid, workers=args.workers)
    write_ablation(Path(args.out), report)
    for row in report.summary():
        log.info("%s N=%d delta=%g: median iterations %.1f, final objective %.4f",
                 row["selector"], row["N"], row["delta"],
                 row["median_iterations_to_target"], row["final_objective_mean"])
    return EXIT_OK


# ---------------------------------------------------------------- bandit bench

def _bench_job(item):
    key, seed, cfg = item
    env = bb.LinearBanditEnv(dim=cfg.dim, n_arms=cfg.n_arms, seed=seed)
    return bb.benchmark(key, env, cfg.rounds, alpha=cfg.alpha, epsilon=cfg.epsilon)


def cmd_bandit_bench(args) -> int:
    raw = load_config(args.config)
    cfg = build_bench_config(raw)
    if args.seeds:
        cfg = replace(cfg, seeds=tuple(args.seeds))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    items = [(k, s, cfg) for k in cfg.algorithms for s in cfg.seeds]
    curves = _map(_bench_job, items, args.workers)
    write_csv(out / "regret.csv", ["round", "cumulative_regret", "algorithm", "seed"],
              ([t, c[t - 1], k, s] for (k, s, _), c in zip(items, curves)
               for t in range(1, len(c) + 1)))
    by_algo = {}
    for (k, _, _), c in zip(items, curves):
        by_algo.setdefault(k, []).append(c)
    rows = []
    for k, cs in by_algo.items():
        mean = np.mean(cs, axis=0)
        slope = bb.loglog_slope(mean, min(1000, cfg.rounds // 10), cfg.rounds) \
            if mean[-1] > 0 else 0.0
        rows.append([k, cfg.rounds, mean[-1], slope])
    write_csv(out / "regret_summary.csv",
              ["algorithm", "rounds", "mean_final_regret", "loglog_slope"], rows)
    plotting.plot_regret(by_algo, out / "regret.svg")
    return EXIT_OK


# ---------------------------------------------------------------- viz

def _curve_stats(table: dict) -> dict:
    """``label -> list of per-seed traces`` into plot arrays, padded with last values."""
    curves = {}
    for label, traces in table.items():
        T = max(len(t) for t in traces)
        arr = np.array([np.pad(t, (0, T - len(t)), mode="edge") for t in traces])
        its = np.arange(1, T + 1)
        curves[label] = (its, arr.mean(axis=0), arr.min(axis=0), arr.max(axis=0))
    return curves


def _write_curves(out: Path, curves: dict) -> None:
    write_csv(out / "curves.csv", ["label", "iteration", "mean", "low", "high"],
              ([label, it, m, lo, hi] for label, (its, mean, low, high) in curves.items()
               for it, m, lo, hi in zip(its, mean, low, high)))


def render_ablation(out: Path) -> None:
    table = {}
    for row in read_csv(out / "ablation.csv"):
        label = f"{row['selector']} N={row['N']} delta={row['delta']}"
        table.setdefault(label, {}).setdefault(row["seed"], []).append(float(row["objective"]))
    curves = _curve_stats({k: list(v.values()) for k, v in table.items()})
    _write_curves(out, curves)
    plotting.plot_curves(curves, out / "curves.svg")


def render_run(run_dir: Path) -> list[str]:
    made = []
    rows = read_csv(run_dir / "run.csv")
    if rows:
        mi = np.array([float(r["mi"]) for r in rows])
        curves = _curve_stats({"I(s;z)": [mi]})
        _write_curves(run_dir, curves)
        plotting.plot_curves(curves, run_dir / "curves.svg")
        made.append("curves.svg")
    traj = read_csv(run_dir / "trajectory.csv")
    n_states = sum(1 for k in traj[0] if k.startswith("p_")) if traj else 0
    if n_states == 3:
        its = sorted({int(r["iteration"]) for r in traj})
        n = max(int(r["policy"]) for r in traj) + 1
        pts = np.zeros((len(its), n, 3))
        pos = {it: k for k, it in enumerate(its)}
        for r in traj:
            pts[pos[int(r["iteration"])], int(r["policy"])] = [float(r[f"p_{s}"]) for s in range(3)]
        avg = pts.mean(axis=1)
        xy = plotting.simplex_project(pts)
        axy = plotting.simplex_project(avg)
        write_csv(run_dir / "simplex_points.csv", ["iteration", "series", "x", "y"],
                  [[it, f"policy-{i}", *xy[k, i]] for k, it in enumerate(its) for i in range(n)]
                  + [[it, "average", *axy[k]] for k, it in enumerate(its)])
        plotting.plot_simplex(pts, avg, run_dir / "simplex.svg")
        made.append("simplex.svg")
    return made


def cmd_viz(args) -> int:
    run_dir = Path(args.run_dir)
    if (run_dir / "ablation.csv").exists():
        render_ablation(run_dir)
        return EXIT_OK
    if not (run_dir / "run.csv").exists() or not (run_dir / "trajectory.csv").exists():
        log.error("%s has neither run.csv/trajectory.csv nor ablation.csv", run_dir)
        return EXIT_RUNTIME
    render_run(run_dir)
    return EXIT_OK


# ---------------------------------------------------------------- plumbing

def _map(fn, items, workers: int):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _seed_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seeds expects comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="divpop", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, out=True):
        if config:
            p.add_argument("--config", required=True, metavar="PATH")
        if out:
            p.add_argument("--out", required=True, metavar="DIR")
        p.add_argument("--seeds", type=_seed_list, default=None, metavar="CSV")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1, metavar="INT")
        p.add_argument("--quiet", action="store_true")

    common(sub.add_parser("train", help="train one population (one run per seed)"))
    common(sub.add_parser("ablate", help="compare selectors over a grid of N and delta"))
    common(sub.add_parser("bandit-bench", help="regret curves on a synthetic linear bandit"))
    viz = sub.add_parser("viz", help="render SVG figures from a run or ablation directory")
    viz.add_argument("run_dir", metavar="RUN_DIR")
    common(viz, config=False, out=False)
    return parser


COMMANDS = {"train": cmd_train, "ablate": cmd_ablate, "bandit-bench": cmd_bandit_bench,
            "viz": cmd_viz}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = os.environ.get("DIVPOP_LOG", "WARNING" if args.quiet else "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, MDPError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

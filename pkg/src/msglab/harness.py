"""Experiment runner: multi-seed runs, CSV metrics, honesty sweep, oracle suite, CLI."""

import argparse
import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from msglab.config import ConfigError, ExperimentConfig, parse_config_text, parse_seeds
from msglab.learn.train import MetricsRow, train

AGGREGATE_FIELDS = ("episode_index", "n_seeds") + tuple(
    f"{name}_{stat}" for name in ("reward_sender", "reward_receiver", "social_welfare", "honesty",
                                  "min_constraint_slack") for stat in ("mean", "std"))
SWEEP_FIELDS = ("lambda", "epsilon", "honesty_mean", "honesty_std", "n_seeds")


class HarnessError(RuntimeError):
    pass


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows):
    """UTF-8, header row, '.' decimals, floats written at full precision."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_metrics_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != MetricsRow.FIELDS:
            raise HarnessError(f"{path}: unexpected columns {header}")
        return [MetricsRow(int(r[0]), int(r[1]), *map(float, r[2:])) for r in reader]


def prepare_output_dir(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".msglab_write_test"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise HarnessError(f"output directory {path} is not writable: {exc}") from exc
    return path


def run_seed(cfg, seed):
    """All metric rows of one seed; runs in a worker process when --jobs > 1."""
    return list(train(cfg.algorithm, cfg.env, cfg, seed))


def _map_seeds(cfg, seeds, jobs):
    if jobs <= 1 or len(seeds) <= 1:
        return [run_seed(cfg, s) for s in seeds]
    with ProcessPoolExecutor(max_workers=min(jobs, len(seeds))) as pool:
        return list(pool.map(run_seed, [cfg] * len(seeds), seeds))


def aggregate(per_seed):
    """Mean and population std per eval point over every seed (none dropped)."""
    by_episode = {}
    for rows in per_seed:
        for row in rows:
            by_episode.setdefault(row.episode_index, []).append(row)
    out = []
    for episode in sorted(by_episode):
        rows = by_episode[episode]
        line = [episode, len(rows)]
        for name in ("reward_sender", "reward_receiver", "social_welfare", "honesty",
                     "min_constraint_slack"):
            vals = np.array([getattr(r, name) for r in rows])
            line += [float(vals.mean()), float(vals.std())]
        out.append(line)
    return out


def final_mean(rows, name, fraction=0.1):
    """Mean of ``name`` over the last ``fraction`` of eval rows (at least one)."""
    if not rows:
        return float("nan")
    tail = rows[-max(1, int(round(len(rows) * fraction))):]
    return float(np.mean([getattr(r, name) for r in tail]))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seed_paths: dict = field(default_factory=dict)
    aggregate_path: Path = None
    rows: dict = field(default_factory=dict)

    def final(self, name, fraction=0.1):
        return {seed: final_mean(rows, name, fraction) for seed, rows in self.rows.items()}


def run_experiment(cfg, jobs=1, write=True):
    """Run every seed of ``cfg``; write ``<env>_<algo>_seed<k>.csv`` and an aggregate CSV."""
    cfg.validate()
    out = prepare_output_dir(cfg.output_dir) if write else None
    per_seed = _map_seeds(cfg, list(cfg.seeds), jobs)
    result = ExperimentResult(cfg)
    stem = f"{cfg.env}_{cfg.algorithm.value}"
    for seed, rows in zip(cfg.seeds, per_seed):
        result.rows[seed] = rows
        if write:
            path = out / f"{stem}_seed{seed}.csv"
            write_csv(path, MetricsRow.FIELDS, [r.as_tuple() for r in rows])
            result.seed_paths[seed] = path
    if write:
        result.aggregate_path = out / f"{stem}_aggregate.csv"
        write_csv(result.aggregate_path, AGGREGATE_FIELDS, aggregate(per_seed))
    return result


def run_honesty_sweep(base, lambda_grid, epsilon_grid, jobs=1, write=True, fraction=0.1):
    """Seed-mean final honesty for every (lambda, epsilon) cell; writes honesty_sweep.csv."""
    lambda_grid, epsilon_grid = list(lambda_grid), list(epsilon_grid)
    if not lambda_grid or not epsilon_grid:
        raise HarnessError("lambda and epsilon grids must be non-empty")
    cells = [base.replace(lam=float(lam), epsilon=float(eps))
             for lam in lambda_grid for eps in epsilon_grid]
    problems = [p for c in cells for p in c.errors()]
    if problems:
        raise ConfigError(sorted(set(problems)))
    out = prepare_output_dir(base.output_dir) if write else None
    rows = []
    for cell in cells:
        per_seed = _map_seeds(cell, list(cell.seeds), jobs)
        vals = np.array([final_mean(r, "honesty", fraction) for r in per_seed])
        rows.append((cell.lam, cell.epsilon, float(vals.mean()), float(vals.std()), len(vals)))
    if write:
        write_csv(out / "honesty_sweep.csv", SWEEP_FIELDS, rows)
    return rows


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<28} measured={self.measured:.3e}  ({self.tolerance})"


def run_oracle_suite(stream=None, lemma_steps=100_000, mc_steps=200_000, seed=0):
    """Oracle cross-checks; returns the list of ``CheckResult``."""
    from msglab import oracle

    stream = sys.stdout if stream is None else stream
    results = []

    def record(name, error, passed, tol):
        res = CheckResult(name, bool(passed), float(error), tol)
        results.append(res)
        print(res.line(), file=stream)

    game = oracle.recommendation_letter_game()
    scheme, value = oracle.solve_persuasion_lp(game)
    record("lp_value", abs(value - 2 / 3), abs(value - 2 / 3) <= 1e-9, "|v - 2/3| <= 1e-9")
    target = np.array([[0.5, 0.5], [0.0, 1.0]])
    err = float(np.abs(scheme.phi - target).max())
    record("lp_scheme", err, err <= 1e-6, "max |phi - phi*| <= 1e-6")

    reports = oracle.check_incentive_compatibility(game, scheme)
    worst = min(r.slack for r in reports)
    record("ic_lp_scheme", worst, all(r.follows for r in reports if r.reachable) and worst >= -1e-12,
           "every reachable signal obeyed")
    babble = oracle.check_incentive_compatibility(game, np.array([[0.0, 1.0], [0.0, 1.0]]))
    err = abs(babble[1].slack + 1 / 3)
    record("ic_rejects_uninformative", err, (not babble[1].follows) and err <= 1e-9,
           "hire slack = -1/3 within 1e-9")

    obedient = np.array([[1.0, 0.0], [0.0, 1.0]])
    regimes = [("uninformative", [[1.0, 0.0], [1.0, 0.0]], (0.0, 0.0)),
               ("honest", [[1.0, 0.0], [0.0, 1.0]], (1 / 3, 1 / 3))]
    for eps in (0.1, 0.25):
        regimes.append((f"optimal_eps{eps}", [[0.5 + eps, 0.5 - eps], [0.0, 1.0]],
                        (2 / 3 - 2 * eps / 3, 2 * eps / 3)))
    for name, phi, expect in regimes:
        vals = oracle.exact_msg_value(oracle.recommendation_letter_msg(), phi, obedient, 0.0)
        err = max(abs(vals.value_sender - expect[0]), abs(vals.value_receiver - expect[1]))
        record(f"exact_value_{name}", err, err <= 1e-9, "<= 1e-9")

    err = oracle.monte_carlo_value_error(mc_steps, seed)
    record("exact_vs_monte_carlo", err, err <= 5 * np.sqrt(2 / 9 / mc_steps), "<= 5 standard errors")

    rel_sg, rel_pg = oracle.signaling_gradient_check(lemma_steps, seed)
    record("signaling_gradient_unbiased", rel_sg, rel_sg <= 0.02, "rel. L2 <= 2%")
    record("pg_gradient_biased", rel_pg, rel_pg > 0.10, "rel. L2 > 10%")
    return results


def _config(args):
    """Config file, then --set lines, then the named flags (flags win)."""
    over = {"algorithm": args.algo, "env": args.env, "lam": args.lam, "epsilon": args.epsilon,
            "output_dir": args.out}
    if args.seeds is not None:
        over["seeds"] = parse_seeds(args.seeds)
    text = Path(args.config).read_text(encoding="utf-8") if args.config else ""
    text += "\n" + "\n".join(args.set or [])
    return parse_config_text(text, over)


def build_parser():
    parser = argparse.ArgumentParser(prog="msglab", description="Markov signaling game experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--algo", choices=["sgoc", "sg", "pg", "pgoc", "dial", "frozen"])
        p.add_argument("--env", choices=["recletter", "goals3", "goals5"])
        p.add_argument("--seeds", help="a..b inclusive, or a comma list")
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out", help="output directory (default: $MSGLAB_OUT or ./msglab_out)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="any other config key, repeatable")

    run = sub.add_parser("run", help="train every seed and write metrics CSVs")
    common(run)
    sweep = sub.add_parser("sweep", help="honesty heatmap over a lambda x epsilon grid")
    common(sweep)
    sweep.add_argument("--lambda-grid", required=True, help="comma-separated values")
    sweep.add_argument("--epsilon-grid", required=True, help="comma-separated values")
    oracle = sub.add_parser("oracle", help="run the exact-solution cross-checks")
    oracle.add_argument("--steps", type=int, default=100_000, help="Monte-Carlo steps")
    oracle.add_argument("--seed", type=int, default=0)
    return parser


def _grid(text):
    return [float(v) for v in text.split(",") if v.strip()]


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "oracle":
            results = run_oracle_suite(lemma_steps=args.steps, seed=args.seed)
            failed = [r.name for r in results if not r.passed]
            if failed:
                print("failed checks: " + ", ".join(failed), file=sys.stderr)
                return 1
            return 0
        cfg = _config(args)
        if args.command == "run":
            result = run_experiment(cfg, jobs=args.jobs)
            final = result.final("reward_sender")
            print(f"wrote {len(result.seed_paths)} seed files and {result.aggregate_path}")
            if final:
                vals = np.array(list(final.values()))
                print(f"final sender reward: mean {vals.mean():.4f} std {vals.std():.4f}")
            return 0
        rows = run_honesty_sweep(cfg, _grid(args.lambda_grid), _grid(args.epsilon_grid),
                                 jobs=args.jobs)
        for lam, eps, mean, std, n in rows:
            print(f"lambda={lam:g} epsilon={eps:g} honesty={mean:.4f} (std {std:.4f}, {n} seeds)")
        print(f"wrote {Path(cfg.output_dir) / 'honesty_sweep.csv'}")
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

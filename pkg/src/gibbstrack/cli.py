"""Command-line entry point: ``gibbstrack run|oracle|validate|preset``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .errors import GibbsTrackError
from .estimate import mse_table
from .harness import TRACKERS, build_model, config_hash, load_scenario, preset_scenario, run_scenario
from .model import IidGaussianModel, popcounts
from .oracle import brute_force_optimum, exact_gibbs_distribution, mean_active_curve


def _add_config(p, required=True):
    p.add_argument("--config", type=Path, required=required, help="scenario file (JSON or YAML)")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gibbstrack", description="Gibbs-sampling sensor selection simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write per-seed metrics")
    _add_config(run)
    run.add_argument("--out", type=Path, default=Path("out"))
    run.add_argument("--seed", type=int, help="first seed (overrides the scenario)")
    run.add_argument("--seeds", type=int, help="number of consecutive seeds starting at --seed")
    run.add_argument("--slots", type=int)
    run.add_argument("--tracker", choices=TRACKERS)
    run.add_argument("--workers", type=int, default=1, help="processes for seed-level parallelism")

    oracle = sub.add_parser("oracle", help="dump the exact Gibbs law and the mean-active curve as CSV")
    _add_config(oracle, required=False)
    oracle.add_argument("--n", type=int, default=4, help="sensors for a random f table (no --config)")
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--beta", type=float, default=1.0)
    oracle.add_argument("--lam", type=float, default=0.0)
    oracle.add_argument("--lambda-grid", type=float, nargs=3, metavar=("LO", "HI", "COUNT"),
                        default=(0.0, 1.0, 11))
    oracle.add_argument("--out", type=Path, help="directory for pi.csv and g.csv (default: stdout)")

    validate = sub.add_parser("validate", help="check a scenario without simulating")
    _add_config(validate)

    preset = sub.add_parser("preset", help="emit a reference scenario")
    preset.add_argument("name", choices=("iid", "markov"))
    preset.add_argument("--out", type=Path)
    return parser


def _emit(payload: dict, out: Path | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _cmd_run(args) -> int:
    sc = load_scenario(args.config)
    changes = {}
    if args.seed is not None or args.seeds is not None:
        first = sc.seeds[0] if args.seed is None else args.seed
        changes["seeds"] = list(range(first, first + (args.seeds or 1)))
    if args.slots is not None:
        changes["slots"] = args.slots
    if args.tracker is not None:
        changes["tracker"] = args.tracker
    if changes:
        sc = sc.replace(**changes)
    summary = run_scenario(sc, args.out, workers=args.workers)
    print(f"wrote {len(sc.seeds)} trace(s) to {args.out} (config {summary['config_hash'][:12]})")
    if "mse_avg_mean" in summary:
        print(f"mean time-averaged MSE {summary['mse_avg_mean']:.6g}, "
              f"mean active {summary['active_avg_mean']:.4f}")
    return 0


def _oracle_tables(f: np.ndarray, lam: float, beta: float, grid: np.ndarray) -> tuple[str, str]:
    n = int(f.size).bit_length() - 1
    dist = exact_gibbs_distribution(f, lam, beta)
    h = f + lam * popcounts(n)
    pi_csv = io.StringIO()
    w = csv.writer(pi_csv, lineterminator="\n")
    w.writerow(["index", "bits", "active", "f", "h", "pi"])
    for b in range(f.size):
        bits = "".join(str(b >> k & 1) for k in range(n))
        w.writerow([b, bits, bits.count("1"), f"{f[b]:.12g}", f"{h[b]:.12g}", f"{dist.probs[b]:.12g}"])
    g_csv = io.StringIO()
    w = csv.writer(g_csv, lineterminator="\n")
    w.writerow(["lambda", "g", "argmin_active"])
    for lam_i, g in zip(grid, mean_active_curve(f, grid, beta)):
        card = min(popcounts(n)[list(brute_force_optimum(f, lam_i))])
        w.writerow([f"{lam_i:.12g}", f"{g:.12g}", int(card)])
    return pi_csv.getvalue(), g_csv.getvalue()


def _cmd_oracle(args) -> int:
    if args.config is not None:
        sc = load_scenario(args.config)
        model = build_model(sc.model)
        if not isinstance(model, IidGaussianModel):
            raise GibbsTrackError("the oracle needs an i.i.d. model (exact f table)")
        f = mse_table(model)
    else:
        f = np.random.default_rng(args.seed).uniform(0.0, 1.0, size=1 << args.n)
    lo, hi, count = args.lambda_grid
    pi_text, g_text = _oracle_tables(f, args.lam, args.beta, np.linspace(lo, hi, int(count)))
    if args.out is None:
        sys.stdout.write(pi_text + "\n" + g_text)
    else:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "pi.csv").write_text(pi_text)
        (args.out / "g.csv").write_text(g_text)
        print(f"wrote {args.out / 'pi.csv'} and {args.out / 'g.csv'}")
    return 0


def _cmd_validate(args) -> int:
    sc = load_scenario(args.config)
    print(f"ok {sc.tracker} config {config_hash(sc)}")
    return 0


def _cmd_preset(args) -> int:
    _emit(preset_scenario(args.name).to_dict(), args.out)
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "oracle": _cmd_oracle, "validate": _cmd_validate, "preset": _cmd_preset}
    try:
        return handler[args.command](args)
    except (GibbsTrackError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command line: ``vefl simulate | sweep | verify | export-plots``.

Exit codes: 0 success, 1 failed checks, 2 configuration error, 3 every
round skipped because no participation plan was feasible.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, describe_keys, load_config
from .export import IoError, export_metrics, read_rounds_csv

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3

# short names accepted by ``sweep --param``
ALIASES = {"lambda": "fl.lambda", "λ": "fl.lambda", "lambda_bar": "fl.lambda_bar", "λ̄": "fl.lambda_bar",
           "u_max": "fleet.u_max", "budget": "budget.money", "C": "lyapunov.control"}


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _parse_value(v)
    return out


def _run(cfg, out):
    from .harness import run_simulation

    records = run_simulation(cfg)
    export_metrics(records, out, meta={"mode": cfg["mode"], "seed": cfg["seed"], "rounds": cfg["rounds"]})
    n_ok = sum(r.status == "ok" for r in records)
    return records, n_ok


def cmd_simulate(args):
    cfg = load_config(args.config, _overrides(args.set))
    records, n_ok = _run(cfg, args.out)
    print(f"{cfg['mode']}: {n_ok}/{len(records)} rounds, final accuracy {records[-1].accuracy:.4f} -> {args.out}")
    return EXIT_OK if n_ok else EXIT_INFEASIBLE


def cmd_sweep(args):
    key = ALIASES.get(args.param, args.param)
    base = load_config(args.config, _overrides(args.set))
    out = Path(args.out)
    rows = []
    any_ok = False
    for text in args.values:
        value = _parse_value(text)
        cfg = base.update({key: value})
        run_dir = out / f"{key}={text}"
        records, n_ok = _run(cfg, run_dir)
        any_ok |= n_ok > 0
        rows.append([key, text, records[-1].accuracy, n_ok, len(records)])
        print(f"{key}={text}: final accuracy {records[-1].accuracy:.4f}")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["param", "value", "final_accuracy", "rounds_ok", "rounds"])
        w.writerows([[r[0], r[1], repr(float(r[2])), r[3], r[4]] for r in rows])
    return EXIT_OK if any_ok else EXIT_INFEASIBLE


def cmd_verify(args):
    from .verify import run_checks

    results = run_checks(args.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_CHECKS


def cmd_export_plots(args):
    """Charts from a finished run directory. Uses matplotlib when it is
    installed; otherwise writes whitespace-separated .dat series for an
    external plotting tool."""
    run = Path(args.run)
    out = Path(args.out or run / "plots")
    out.mkdir(parents=True, exist_ok=True)
    rows = read_rounds_csv(run / "rounds.csv")
    with open(run / "summary.json") as fh:
        summ = json.load(fh)
    series = {
        "accuracy": [(r["k"], r["accuracy"]) for r in rows],
        "success_ccdf": [tuple(p) for p in summ["success_ccdf"]],
        "cost_cdf": [tuple(p) for p in summ["cost_cdf"]],
    }
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        for name, pts in series.items():
            with open(out / f"{name}.dat", "w") as fh:
                fh.writelines(f"{x!r} {y!r}\n" for x, y in pts)
        print(f"matplotlib not installed; wrote .dat series to {out}")
        return EXIT_OK
    labels = {"accuracy": ("round", "test accuracy"), "success_ccdf": ("p_suc", "P[p_suc > x]"),
              "cost_cdf": ("round cost", "P[cost <= x]")}
    for name, pts in series.items():
        fig, ax = plt.subplots(figsize=(5, 3.5))
        if pts:
            x, y = zip(*pts)
            ax.step(x, y, where="post") if name != "accuracy" else ax.plot(x, y)
        ax.set_xlabel(labels[name][0])
        ax.set_ylabel(labels[name][1])
        fig.tight_layout()
        fig.savefig(out / f"{name}.png", dpi=120)
        plt.close(fig)
    print(f"wrote plots to {out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="vefl", description="Vehicular edge federated learning simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one configuration and export its metrics")
    s.add_argument("--config", help="YAML or JSON file with flat dotted keys")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run one configuration per value of a parameter")
    s.add_argument("--param", required=True, help="dotted key or alias (lambda, lambda_bar, u_max, budget, C)")
    s.add_argument("--values", required=True, nargs="+")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("verify", help="run the quick property checks")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("export-plots", help="static charts from a run directory")
    s.add_argument("--run", required=True, help="directory written by simulate")
    s.add_argument("--out", help="chart directory (default <run>/plots)")
    s.set_defaults(func=cmd_export_plots)

    s = sub.add_parser("config-keys", help="list every config key with its default")
    s.set_defaults(func=lambda a: print(describe_keys()) or EXIT_OK)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IoError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CHECKS


if __name__ == "__main__":
    sys.exit(main())

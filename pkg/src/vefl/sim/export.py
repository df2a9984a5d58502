"""Metric files: rounds.csv, slots.jsonl and summary.json.

rounds.csv is RFC-4180 CSV with one row per round. Floats are written with
``repr`` so they read back bit-exactly; list-valued cells (selected ids,
iterations, per-vehicle success probabilities and charges) are joined with
``;``. slots.jsonl holds one JSON object per transmitted slot. summary.json
carries the final accuracy, the success-probability CCDF and the charge CDF.
NaN and infinities become ``null`` in the JSON files.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from ..errors import VeflError

SCHEMA_VERSION = {"rounds": 1, "slots": 1, "summary": 1}

COLUMNS = [
    ("k", int), ("status", str), ("reason", str), ("pool_size", int), ("n_selected", int),
    ("n_participants", int), ("n_success", int), ("all_delivered", int),
    ("min_p_success", float), ("mean_p_success", float), ("budget", float), ("planned_cost", float),
    ("total_cost", float), ("accuracy", float), ("train_loss", float), ("beta_bar", float),
    ("tx_slots", int), ("lemma_gap", float), ("theorem_lhs", float), ("theorem_rhs", float),
    ("clamped", int), ("max_delay", float), ("total_energy", float),
    ("selected", "ints"), ("iters", "ints"), ("p_success", "floats"), ("costs", "floats"),
]


class IoError(VeflError):
    pass


def _f(x):
    return repr(float(x))


def round_row(rec):
    """Flat dict of one ``RoundRecord`` with the CSV column types."""
    plan = rec.plan
    ps = list(rec.p_success)
    sel = [int(rec.pool[i]) for i in np.flatnonzero(plan.selected)] if plan is not None else []
    iters = [int(plan.iters[i]) for i in np.flatnonzero(plan.selected)] if plan is not None else []
    return {
        "k": int(rec.k), "status": rec.status, "reason": rec.reason, "pool_size": len(rec.pool),
        "n_selected": len(sel), "n_participants": len(rec.participants), "n_success": rec.n_success,
        "all_delivered": int(rec.all_delivered),
        "min_p_success": float(min(ps)) if ps else float("nan"),
        "mean_p_success": float(np.mean(ps)) if ps else float("nan"),
        "budget": float(rec.budget), "planned_cost": float(rec.planned_cost),
        "total_cost": rec.total_cost, "accuracy": float(rec.accuracy), "train_loss": float(rec.train_loss),
        "beta_bar": float(rec.beta_bar), "tx_slots": int(rec.tx_slots), "lemma_gap": float(rec.lemma_gap),
        "theorem_lhs": float(rec.theorem_lhs), "theorem_rhs": float(rec.theorem_rhs),
        "clamped": int(rec.clamped),
        "max_delay": float(max(rec.delays)) if rec.delays else float("nan"),
        "total_energy": float(sum(rec.energies)),
        "selected": sel, "iters": iters, "p_success": [float(p) for p in ps],
        "costs": [float(c) for c in rec.costs],
    }


def _cell(value, kind):
    if kind == "ints":
        return ";".join(str(int(v)) for v in value)
    if kind == "floats":
        return ";".join(_f(v) for v in value)
    if kind is float:
        return _f(value)
    return str(value)


def _parse(text, kind):
    if kind == "ints":
        return [int(v) for v in text.split(";")] if text else []
    if kind == "floats":
        return [float(v) for v in text.split(";")] if text else []
    return kind(text)


def write_rounds_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow([name for name, _ in COLUMNS])
        for row in rows:
            w.writerow([_cell(row[name], kind) for name, kind in COLUMNS])


def read_rounds_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        names = [name for name, _ in COLUMNS]
        if header != names:
            raise IoError(f"unexpected rounds.csv header in {path}")
        kinds = dict(COLUMNS)
        return [{n: _parse(v, kinds[n]) for n, v in zip(names, line)} for line in reader]


def aggregates(rows):
    """Run-level numbers derived from round rows (in memory or re-imported)."""
    ok = [r for r in rows if r["status"] == "ok"]
    ps = [p for r in ok for p in r["p_success"]]
    total = sum(r["total_cost"] for r in ok)
    return {
        "rounds": len(rows),
        "skipped": len(rows) - len(ok),
        "final_accuracy": rows[-1]["accuracy"] if rows else float("nan"),
        "mean_accuracy": float(np.mean([r["accuracy"] for r in rows])) if rows else float("nan"),
        "delivered_rounds": sum(r["all_delivered"] for r in ok),
        "mean_p_success": float(np.mean(ps)) if ps else float("nan"),
        "total_cost": float(total),
        "max_cost_ratio": max((r["total_cost"] / r["budget"] for r in ok if r["budget"] > 0), default=float("nan")),
        "participations": sum(r["n_participants"] for r in ok),
    }


def ccdf_points(values):
    """(x, P[X > x]) at every distinct sample value."""
    v = np.sort(np.asarray(values, float))
    if v.size == 0:
        return []
    xs = np.unique(v)
    return [[float(x), float(np.mean(v > x))] for x in xs]


def cdf_points(values):
    """(x, P[X <= x]) at every distinct sample value."""
    v = np.sort(np.asarray(values, float))
    if v.size == 0:
        return []
    xs = np.unique(v)
    return [[float(x), float(np.mean(v <= x))] for x in xs]


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def summary(records, rows=None, meta=None):
    rows = [round_row(r) for r in records] if rows is None else rows
    ok = [r for r in rows if r["status"] == "ok"]
    beta = [r["beta_bar"] for r in ok]
    mass = [sum(r["p_success"]) for r in ok]
    corr = float("nan")
    if len(ok) > 2 and np.std(beta) > 0 and np.std(mass) > 0:
        corr = float(np.corrcoef(beta, mass)[0, 1])
    out = {
        "schema_version": SCHEMA_VERSION,
        "aggregates": aggregates(rows),
        "accuracy": [r["accuracy"] for r in rows],
        "success_ccdf": ccdf_points([p for r in ok for p in r["p_success"]]),
        "cost_cdf": cdf_points([r["total_cost"] for r in ok]),
        "efficiency_success_correlation": corr,
        "max_bound_gap": max((r["lemma_gap"] for r in ok), default=float("nan")),
    }
    if meta:
        out["meta"] = meta
    return _clean(out)


def export_metrics(records, path, meta=None):
    """Write the three metric files into directory ``path``; returns their paths."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        rows = [round_row(r) for r in records]
        write_rounds_csv(rows, out / "rounds.csv")
        with open(out / "slots.jsonl", "w") as fh:
            for r in records:
                for s in r.slots:
                    fh.write(json.dumps(_clean(s), sort_keys=True, allow_nan=False) + "\n")
        with open(out / "summary.json", "w") as fh:
            json.dump(summary(records, rows, meta), fh, indent=2, sort_keys=True, allow_nan=False)
    except OSError as exc:
        raise IoError(f"cannot write metrics to {out}: {exc}") from exc
    return {n: out / n for n in ("rounds.csv", "slots.jsonl", "summary.json")}

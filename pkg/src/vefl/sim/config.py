"""Flat, namespaced run configuration.

A config file (YAML or JSON) is a single mapping of dotted keys such as
``radio.prb_count`` or ``sla.energy_budget``; nested mappings are flattened
the same way, so ``{radio: {prb_count: 10}}`` is accepted too. Every key is
listed in ``DEFAULTS`` below together with its meaning.
"""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import VeflError

MODES = ("FDPC", "PDPC", "FedProxBaseline", "EqualPowerBaseline")


class ConfigError(VeflError):
    pass


# key -> (default, help)
DEFAULTS = {
    "seed": (0, "master seed; VEFL_SEED overrides it"),
    "mode": ("PDPC", "one of FDPC, PDPC, FedProxBaseline, EqualPowerBaseline"),
    "rounds": (100, "number of FL rounds K"),
    "round.duration": (5.0, "round deadline t_th in seconds"),
    "round.slots": (None, "slots per round; None derives duration / radio.tti"),
    # mobility
    "fleet.u_max": (20.12, "maximum speed m/s"),
    "fleet.coverage_radius": (500.0, "coverage disk radius m"),
    "fleet.lanes": (2, "number of lanes crossing the disk"),
    "fleet.lane_width": (3.5, "m"),
    "fleet.lane_offset": (0.0, "y of the first lane, m"),
    "fleet.two_way": (True, "alternate lane directions"),
    "fleet.arrival_rate": (None, "Poisson arrivals per second; None keeps ~target_size in coverage"),
    "fleet.target_size": (30, "vehicles in coverage at steady state"),
    "fleet.dt": (0.1, "mobility sub-step s"),
    # radio
    "radio.prb_count": (10, "Z"),
    "radio.prb_bandwidth": (1.8e6, "Hz per pRB"),
    "radio.antennas": (4, "N base station antennas"),
    "radio.tti": (0.5e-3, "slot length kappa s"),
    "radio.overhead_fraction": (1.0 / 14.0, "pilot share of a slot"),
    "radio.pathloss_exponent": (3.5, ""),
    "radio.pathloss_ref_db": (34.0, "loss at 1 m"),
    "radio.shadowing_db": (4.0, "log-normal sigma"),
    "radio.worst_quantile": (0.05, "fading quantile behind the worst-case SNR"),
    "radio.fpp_bits": (32, "bits per model coordinate"),
    # SLA generators, uniform ranges
    "sla.eta_min": ([1e3, 5e3], "Hz"),
    "sla.eta_max": ([1.9e9, 2.8e9], "Hz"),
    "sla.energy_budget": ([20.0, 30.0], "J per round"),
    "sla.cycles_per_bit": ([20.0, 30.0], "c"),
    "sla.energy_price": ([5.0, 10.0], "phi, money per J"),
    "sla.fee": ([10.0, 20.0], "phi bar, money per round"),
    "sla.p_max": (0.2, "W"),
    "sla.reference_joules": (3.0, "energy of reference_iters passes at eta_max on an average dataset"),
    "sla.reference_iters": (5, ""),
    # data
    "data.n_features": (99, "d; model size is (d + 1) K"),
    "data.n_classes": (10, "K"),
    "data.samples_per_vehicle": (100, "mean local dataset size"),
    "data.test_samples": (2000, ""),
    "data.alpha": (0.1, "Dirichlet concentration"),
    "data.separation": (0.5, "class mean spread"),
    "data.condition": (30.0, "feature scale spread; >1 slows gradient descent"),
    "data.noise": (1.0, "within-class spread"),
    "data.bits_per_sample": (4.0e5, "storage bits per sample, sets D"),
    # budget
    "budget.money": (1000.0, "fixed Xi(k) per round; null switches to per_vehicle"),
    "budget.per_vehicle": (25.0, "Xi(k) = per_vehicle x pool size, used when budget.money is null"),
    # learning and selection
    "fl.lambda": (1.0, "sojourn share in the aggregation weights"),
    "fl.lambda_bar": (0.5, "sojourn share in the selection weights"),
    "fl.subset_fraction": (1.0 / 3.0, "|C_k| / V for partial participation"),
    "fl.subset_size": (None, "fixed |C_k|; overrides subset_fraction"),
    "fl.prox_mu": (0.01, "proximal weight"),
    "fl.step_scale": (0.1, "step size = step_scale / L"),
    "fl.iter_min": (1, "l_min"),
    "fl.iter_max": (20, "l_max"),
    "fl.desired_iters": (1, "l_des"),
    # per-slot allocation
    "lyapunov.control": ("auto", "C; auto = kappa x payload"),
    "lyapunov.penalty_base": (10.0, "theta_0 of the penalty schedule"),
    "lyapunov.max_iters": (20, ""),
    "lyapunov.tol": (1e-4, ""),
    # round planning
    "solver.penalty_base": (10.0, "theta_0 of the selection penalty schedule"),
    "solver.max_iters": (30, ""),
    "solver.tol": (1e-6, ""),
    "solver.model": ("exact", "exact or taylor"),
    # output
    "output.slot_log": (True, "keep per-slot allocation records"),
    "output.check_bounds": (True, "evaluate the drift bound every slot"),
}


def flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: v[0] for k, v in DEFAULTS.items()})

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def replace(self, **updates):
        """Copy with dotted-key updates (``radio__tti=...`` also accepted)."""
        vals = dict(self.values)
        for k, v in updates.items():
            vals[k.replace("__", ".")] = v
        cfg = RunConfig(vals)
        cfg.validate()
        return cfg

    def update(self, mapping):
        vals = dict(self.values)
        vals.update(flatten(mapping))
        cfg = RunConfig(vals)
        cfg.validate()
        return cfg

    @property
    def slots_per_round(self):
        if self["round.slots"] is not None:
            return int(self["round.slots"])
        return int(round(self["round.duration"] / self["radio.tti"]))

    def validate(self):
        unknown = sorted(set(self.values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        v = self.values
        if v["mode"] not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {v['mode']!r}")
        if not isinstance(v["rounds"], int) or v["rounds"] < 1:
            raise ConfigError("rounds must be an integer >= 1")
        for key in ("round.duration", "radio.tti", "radio.prb_bandwidth", "fleet.u_max",
                    "fleet.coverage_radius", "fleet.dt", "sla.p_max", "data.bits_per_sample",
                    "fl.prox_mu", "fl.step_scale", "data.alpha", "sla.reference_joules", "data.condition",
                    "budget.per_vehicle"):
            if not _is_num(v[key]) or v[key] <= 0:
                raise ConfigError(f"{key} must be a positive number")
        for key in ("radio.prb_count", "radio.antennas", "fleet.lanes", "data.n_features",
                    "data.n_classes", "data.samples_per_vehicle", "data.test_samples",
                    "fl.iter_max", "fleet.target_size", "sla.reference_iters"):
            if not isinstance(v[key], int) or v[key] < 1:
                raise ConfigError(f"{key} must be a positive integer")
        if not 1 <= v["fl.iter_min"] <= v["fl.iter_max"]:
            raise ConfigError("need 1 <= fl.iter_min <= fl.iter_max")
        for key in ("fl.lambda", "fl.lambda_bar"):
            if not _is_num(v[key]) or not 0 <= v[key] <= 1:
                raise ConfigError(f"{key} must lie in [0, 1]")
        if not 0 < v["fl.subset_fraction"] <= 1:
            raise ConfigError("fl.subset_fraction must lie in (0, 1]")
        if not 0 <= v["radio.overhead_fraction"] < 1:
            raise ConfigError("radio.overhead_fraction must lie in [0, 1)")
        if not 0 < v["radio.worst_quantile"] < 1:
            raise ConfigError("radio.worst_quantile must lie in (0, 1)")
        if v["radio.fpp_bits"] not in (32, 64):
            raise ConfigError("radio.fpp_bits must be 32 or 64")
        if v["solver.model"] not in ("exact", "taylor"):
            raise ConfigError("solver.model must be exact or taylor")
        for key in ("sla.eta_min", "sla.eta_max", "sla.energy_budget", "sla.cycles_per_bit",
                    "sla.energy_price", "sla.fee"):
            r = v[key]
            if not (isinstance(r, (list, tuple)) and len(r) == 2 and all(_is_num(x) for x in r)
                    and 0 <= r[0] <= r[1]):
                raise ConfigError(f"{key} must be a range [lo, hi] with 0 <= lo <= hi")
        if v["sla.eta_min"][1] > v["sla.eta_max"][0]:
            raise ConfigError("sla.eta_min range overlaps sla.eta_max range")
        c = v["lyapunov.control"]
        if c != "auto" and not (_is_num(c) and c > 0):
            raise ConfigError("lyapunov.control must be 'auto' or a positive number")
        if v["round.slots"] is not None and (not isinstance(v["round.slots"], int) or v["round.slots"] < 1):
            raise ConfigError("round.slots must be a positive integer")
        for key in ("budget.money", "fleet.arrival_rate", "fl.subset_size"):
            if v[key] is not None and not (_is_num(v[key]) and v[key] > 0):
                raise ConfigError(f"{key} must be positive or null")
        return self


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def load_config(path=None, overrides=None, env=None):
    """Defaults, then the file, then ``overrides``, then VEFL_SEED."""
    env = os.environ if env is None else env
    vals = {k: v[0] for k, v in DEFAULTS.items()}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        try:
            raw = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot parse config {p}: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping")
        vals.update(flatten(raw))
    if overrides:
        vals.update(flatten(overrides))
    if env.get("VEFL_SEED") not in (None, ""):
        try:
            vals["seed"] = int(env["VEFL_SEED"])
        except ValueError as exc:
            raise ConfigError("VEFL_SEED must be an integer") from exc
    return RunConfig(vals).validate()


def describe_keys():
    """Key, default and meaning for every option, one per line."""
    return "\n".join(f"{k} = {v[0]!r}  # {v[1]}" if v[1] else f"{k} = {v[0]!r}"
                     for k, v in DEFAULTS.items())

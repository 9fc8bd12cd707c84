"""Simulation scenarios, solver sweeps and result files.

Four scenario families are supported:

* ``fig3a``: ten devices on a line 2.5 m to 5.2 m away, swept over the
  path-loss exponent;
* ``fig3b``: the same line shifted so that its mean distance is ``d_A``;
* ``fig4`` / ``fig5``: seeded random placements swept over ``N``;
* ``custom``: random placements at user-chosen ``N`` values.

Random placements draw from numpy's PCG64 generator.  Draw ``k`` of a sweep
uses the child stream ``SeedSequence(seed, spawn_key=(k,))`` and takes the
``N`` distances first, then the ``N`` weights.
"""

import csv
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .admm import AdmmConfig, run
from .errors import InvalidInputError, ScenarioError
from .exact import ENUMERATION_CAP, default_workers, enumerate_optimal, local_only, offloading_only
from .model import (ChannelModel, SystemParams, _CHANNEL_KEYS, _SYSTEM_KEYS, _num,
                    _reject_unknown, instance_from_distances)

KINDS = ("fig3a", "fig3b", "fig4", "fig5", "custom")

D_E_GRID = tuple(round(2.0 + 0.2 * i, 1) for i in range(11))
D_A_GRID = (3.85, 4.35, 4.85, 5.35, 5.85, 6.35, 6.85)
N_GRID = tuple(range(10, 31, 2))

SPACING = 0.3
NEAREST = 2.5
FARTHEST = 5.2
OPTIMAL_MAX_N = 14

CSV_HEADER = ("sweep_var", "rate_admm", "rate_optimal", "rate_offload_only", "rate_local_only",
              "iters_mean", "iters_sd", "seed")
_SWEEP_VAR = {"fig3a": "d_e", "fig3b": "d_A", "fig4": "N", "fig5": "N", "custom": "N"}


# ---------------------------------------------------------------------------
# placements


def deterministic_placement(N=10):
    if N < 1:
        raise InvalidInputError(f"N must be >= 1, got {N!r}")
    return [NEAREST + SPACING * i for i in range(N)]


def centered_placement(d_A, N=10):
    """Evenly spaced line of ``N`` devices whose mean distance is ``d_A``."""
    half = round(SPACING * (N - 1) / 2, 12)
    if not d_A > half:
        raise InvalidInputError(f"d_A must exceed {half:g} m so every distance is positive, "
                                f"got {d_A!r}")
    return [d_A - half + SPACING * i for i in range(N)]


def alternating_weights(N):
    """Weight 1 for odd-numbered devices (1-based) and 2 for even ones."""
    return [1.0 if i % 2 == 0 else 2.0 for i in range(N)]


def draw_generator(seed, k):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k,))))


def random_scenario(N, seed, draw=0):
    """Distances uniform on [2.5, 5.2] m and weights 1 or 2 with equal odds."""
    if N < 1:
        raise InvalidInputError(f"N must be >= 1, got {N!r}")
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise InvalidInputError(f"seed must be a non-negative integer, got {seed!r}")
    rng = draw_generator(int(seed), int(draw))
    distances = rng.uniform(NEAREST, FARTHEST, size=N)
    weights = rng.integers(1, 3, size=N).astype(float)
    return distances.tolist(), weights.tolist()


# ---------------------------------------------------------------------------
# scenario description


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    N: int = 10
    d_e: float = 2.8
    d_A: float = 3.85
    seed: int = 0
    draws: int = 20
    channel: ChannelModel = field(default_factory=ChannelModel)
    system: SystemParams = field(default_factory=SystemParams)
    grid: Optional[tuple] = None
    optimal_max_n: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"kind must be one of {', '.join(KINDS)}, got {self.kind!r}")
        if int(self.N) < 1:
            raise InvalidInputError(f"N must be >= 1, got {self.N!r}")
        if int(self.draws) < 1:
            raise InvalidInputError(f"draws must be >= 1, got {self.draws!r}")
        if int(self.seed) < 0 or int(self.seed) >= 2 ** 64:
            raise InvalidInputError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.grid is not None:
            object.__setattr__(self, "grid", tuple(self.grid))
        for v in self.points:
            self._check_point(v)

    def _check_point(self, v):
        if self.kind == "fig3a" and not 2.0 <= v <= 4.0:
            raise InvalidInputError(f"fig3a: d_e must lie in [2, 4], got {v!r}")
        if self.kind == "fig3b":
            centered_placement(v, self.N)
        if self.kind in ("fig4", "fig5") and not 10 <= v <= 30:
            raise InvalidInputError(f"{self.kind}: N must lie in [10, 30], got {v!r}")
        if self.kind == "custom" and (int(v) != v or v < 1):
            raise InvalidInputError(f"custom: N must be a positive integer, got {v!r}")

    @property
    def sweep_var(self):
        return _SWEEP_VAR[self.kind]

    @property
    def random(self):
        return self.kind in ("fig4", "fig5", "custom")

    @property
    def points(self):
        if self.grid is not None:
            return self.grid
        return {"fig3a": D_E_GRID, "fig3b": D_A_GRID, "fig4": N_GRID, "fig5": N_GRID,
                "custom": (self.N,)}[self.kind]

    @property
    def optimal_cap(self):
        if self.optimal_max_n is not None:
            return int(self.optimal_max_n)
        return OPTIMAL_MAX_N if self.random else ENUMERATION_CAP

    def instance(self, value, draw=0):
        """Problem instance for one sweep point (and draw, for random kinds)."""
        if self.kind == "fig3a":
            channel = replace(self.channel, d_e=float(value))
            return instance_from_distances(deterministic_placement(self.N),
                                           alternating_weights(self.N), self.system, channel)
        channel = replace(self.channel, d_e=float(self.d_e))
        if self.kind == "fig3b":
            return instance_from_distances(centered_placement(float(value), self.N),
                                           alternating_weights(self.N), self.system, channel)
        d, w = random_scenario(int(value), self.seed, draw)
        return instance_from_distances(d, w, self.system, channel)


_SPEC_KEYS = {"kind", "N", "d_e", "d_A", "seed", "draws", "channel", "system", "grid",
              "optimal_max_n"}


def _int(doc, key):
    val = doc[key]
    if isinstance(val, bool) or not isinstance(val, int):
        raise InvalidInputError(f"scenario.{key}: expected an integer, got {val!r}")
    return val


def spec_from_dict(doc):
    _reject_unknown(doc, _SPEC_KEYS, "scenario")
    if "kind" not in doc:
        raise InvalidInputError("scenario: 'kind' is required")
    kw = {"kind": doc["kind"]}
    for key in ("N", "seed", "draws", "optimal_max_n"):
        if key in doc:
            kw[key] = _int(doc, key)
    for key in ("d_e", "d_A"):
        if key in doc:
            kw[key] = _num(doc, key, "scenario")
    if "channel" in doc:
        _reject_unknown(doc["channel"], _CHANNEL_KEYS, "channel")
        kw["channel"] = ChannelModel(**{k: _num(doc["channel"], k, "channel")
                                        for k in doc["channel"]})
    if "system" in doc:
        _reject_unknown(doc["system"], _SYSTEM_KEYS, "system")
        kw["system"] = SystemParams(**{k: _num(doc["system"], k, "system")
                                       for k in doc["system"]})
    if "grid" in doc:
        grid = doc["grid"]
        if not isinstance(grid, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in grid):
            raise InvalidInputError("scenario.grid: expected an array of numbers")
        kw["grid"] = tuple(grid)
    return ScenarioSpec(**kw)


def load_spec(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: malformed JSON ({exc})") from exc
    return spec_from_dict(doc)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepResult:
    kind: str
    sweep_var: str
    values: list
    rate_admm: list
    rate_optimal: list  # None where enumeration was skipped
    rate_offload_only: list
    rate_local_only: list
    iters_mean: list
    iters_sd: list
    seed: int
    draws: list = field(default_factory=list)  # per point, one dict per draw

    def to_dict(self):
        return {k: getattr(self, k) for k in ("kind", "sweep_var", "values", "rate_admm",
                                              "rate_optimal", "rate_offload_only",
                                              "rate_local_only", "iters_mean", "iters_sd",
                                              "seed", "draws")}

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


def _evaluate(task):
    spec, cfg, value, draw, with_optimal = task
    try:
        inst = spec.instance(value, draw)
        admm = run(inst, cfg)
        out = {
            "admm": admm.objective,
            "admm_raw": admm.raw_objective,
            "iterations": admm.iterations,
            "converged": admm.converged,
            "modes": admm.mode_bits,
            "offload_only": offloading_only(inst).objective,
            "local_only": local_only(inst).objective,
            "optimal": None,
        }
        if with_optimal:
            out["optimal"] = enumerate_optimal(inst, workers=1).objective
        return out
    except Exception as exc:  # re-raised with the sweep point attached
        where = f"{spec.kind} {spec.sweep_var}={value}" + (f" draw={draw}" if spec.random else "")
        raise ScenarioError(f"{where}: {type(exc).__name__}: {exc}") from exc


def _mean(xs):
    return math.fsum(xs) / len(xs)


def run_sweep(spec, cfg=None, workers=None):
    """Run ADMM, both baselines and (when small enough) enumeration on every point.

    Random kinds average ``spec.draws`` placements per point.  Work items
    are independent, and results are collected by index, so the output does
    not depend on ``workers``.
    """
    cfg = cfg or AdmmConfig()
    workers = default_workers() if workers is None else max(1, int(workers))
    n_draws = int(spec.draws) if spec.random else 1
    tasks = []
    for v in spec.points:
        n = int(v) if spec.random else spec.N
        tasks += [(spec, cfg, v, k, n <= spec.optimal_cap) for k in range(n_draws)]
    if workers == 1 or len(tasks) == 1:
        rows = list(map(_evaluate, tasks))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_evaluate, tasks))

    res = SweepResult(spec.kind, spec.sweep_var, [], [], [], [], [], [], [], int(spec.seed))
    for j, v in enumerate(spec.points):
        block = rows[j * n_draws:(j + 1) * n_draws]
        iters = [r["iterations"] for r in block]
        res.values.append(v)
        res.rate_admm.append(_mean([r["admm"] for r in block]))
        opt = [r["optimal"] for r in block]
        res.rate_optimal.append(None if opt[0] is None else _mean(opt))
        res.rate_offload_only.append(_mean([r["offload_only"] for r in block]))
        res.rate_local_only.append(_mean([r["local_only"] for r in block]))
        res.iters_mean.append(_mean(iters))
        res.iters_sd.append(statistics.stdev(iters) if len(iters) > 1 else 0.0)
        res.draws.append(block)
    return res


# ---------------------------------------------------------------------------
# output


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def write_results(result, path, fmt="csv"):
    """Write ``result`` as CSV (one row per sweep point) or as JSON."""
    if fmt not in ("csv", "json"):
        raise InvalidInputError(f"format must be csv or json, got {fmt!r}")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            if fmt == "json":
                json.dump(result.to_dict(), fh, indent=2)
                fh.write("\n")
                return
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for j, v in enumerate(result.values):
                writer.writerow([_fmt(v), _fmt(result.rate_admm[j]), _fmt(result.rate_optimal[j]),
                                 _fmt(result.rate_offload_only[j]),
                                 _fmt(result.rate_local_only[j]), _fmt(result.iters_mean[j]),
                                 _fmt(result.iters_sd[j]), _fmt(result.seed)])
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def read_results(path):
    with open(path, encoding="utf-8") as fh:
        return SweepResult.from_dict(json.load(fh))

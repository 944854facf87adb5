"""Monte Carlo sweeps: MSE and empirical bias of the estimators versus noise.

Every trial draws its errors from its own generator seeded with
``(seed, point_key, n_ris, trial_index)``. ``point_key`` is a checksum of the
sweep axis and value, so a point's result does not depend on where it sits in
the sweep, and trials can be split into chunks (or threads) freely.
"""

from __future__ import annotations

import csv
import json
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bias as bias_mod
from .baseline import geometry_estimate_batch
from .estimator import NOT_CONVERGED, OK, EstimatorConfig, estimate_batch
from .geometry import Scenario, default_scenario, true_parameters
from .measurement import NoiseModel, trial_rng

AXES = ("sigma_a", "sigma_t", "snr_db")
ALGORITHMS = ("tswls", "geometry")
SCHEMA_VERSION = 1
CHUNK = 4096

CSV_COLUMNS = [
    "axis_name", "axis_value", "n_ris", "algorithm", "trials", "mse",
    "bias_x", "bias_y", "bias_z", "theo_bias_x", "theo_bias_y", "theo_bias_z",
    "clamp_rate", "failures",
    # extra diagnostics, after the fixed columns
    "mse_se", "bias_se_x", "bias_se_y", "bias_se_z", "mse_all", "mean_iterations", "max_iterations",
]


class AllTrialsFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    axis: str
    values: tuple
    sigma_a: float = 1e-2
    sigma_t: float = 1e-2
    ris_subsets: tuple = (3,)
    trials: int = 10000
    seed: int = 0
    algorithms: tuple = ("tswls",)
    bias_validation: bool = False
    refined_theory: bool = False
    scenario: Scenario = field(default_factory=default_scenario)
    max_iters: int = 10
    tol: float = 1e-10

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "ris_subsets", tuple(int(m) for m in self.ris_subsets))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if not self.values:
            raise ValueError("sweep needs at least one axis value")
        if self.axis != "snr_db" and any(not v > 0 for v in self.values):
            raise ValueError("sigma axis values must be positive")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("axis values must be finite")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.ris_subsets:
            raise ValueError("ris_subsets must not be empty")
        for m in self.ris_subsets:
            if not 2 <= m <= self.scenario.n_ris:
                raise ValueError(f"RIS subset size {m} outside 2..{self.scenario.n_ris}")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad or not self.algorithms:
            raise ValueError(f"algorithms must be a non-empty subset of {ALGORITHMS}")
        if not (self.sigma_a > 0 and self.sigma_t > 0):
            raise ValueError("fixed sigmas must be positive")

    def noise_at(self, value, n_ris) -> NoiseModel:
        if self.axis == "sigma_a":
            return NoiseModel.isotropic(value, self.sigma_t, n_ris)
        if self.axis == "sigma_t":
            return NoiseModel.isotropic(self.sigma_a, value, n_ris)
        return snr_to_sigmas(value, NoiseModel.isotropic(self.sigma_a, self.sigma_t, n_ris))

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "SweepConfig":
        d = dict(d)
        version = d.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        sc = d.pop("scenario", None)
        if sc is None:
            scenario = default_scenario()
        elif isinstance(sc, str):
            path = Path(sc)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            scenario = Scenario.load(path)
        else:
            scenario = Scenario.from_dict(sc)
        if "mu" in d:
            scenario = scenario.with_mu(d.pop("mu"))
        known = {f for f in cls.__dataclass_fields__} - {"scenario"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "axis" not in d or "values" not in d:
            raise ValueError("config needs 'axis' and 'values'")
        return cls(scenario=scenario, **d)

    @classmethod
    def load(cls, path) -> "SweepConfig":
        path = Path(path)
        with open(path) as f:
            return cls.from_dict(json.load(f), base_dir=path.parent)


@dataclass(frozen=True)
class SweepResult:
    axis_name: str
    axis_value: float
    n_ris: int
    algorithm: str
    trials: int
    mse: float
    bias: tuple
    theo_bias: tuple | None
    clamp_rate: float
    failures: int
    mse_se: float = float("nan")
    bias_se: tuple = (float("nan"),) * 3
    mse_all: float = float("nan")
    mean_iterations: float = float("nan")
    max_iterations: int = 0

    @property
    def used(self):
        """Number of trials entering the MSE and bias."""
        return self.trials - self.failures

    def bias_z_scores(self):
        if self.theo_bias is None:
            return None
        return tuple((t - e) / s for t, e, s in zip(self.theo_bias, self.bias, self.bias_se))

    def to_row(self) -> dict:
        tb = self.theo_bias if self.theo_bias is not None else ("",) * 3
        vals = [self.axis_name, self.axis_value, self.n_ris, self.algorithm, self.trials, self.mse,
                *self.bias, *tb, self.clamp_rate, self.failures,
                self.mse_se, *self.bias_se, self.mse_all, self.mean_iterations, self.max_iterations]
        return {k: (repr(v) if isinstance(v, float) else str(v)) for k, v in zip(CSV_COLUMNS, vals)}

    @classmethod
    def from_row(cls, row: dict) -> "SweepResult":
        f = lambda k: float(row[k])
        tb = None if row["theo_bias_x"] == "" else (f("theo_bias_x"), f("theo_bias_y"), f("theo_bias_z"))
        return cls(
            axis_name=row["axis_name"], axis_value=f("axis_value"), n_ris=int(row["n_ris"]),
            algorithm=row["algorithm"], trials=int(row["trials"]), mse=f("mse"),
            bias=(f("bias_x"), f("bias_y"), f("bias_z")), theo_bias=tb,
            clamp_rate=f("clamp_rate"), failures=int(row["failures"]),
            mse_se=f("mse_se"), bias_se=(f("bias_se_x"), f("bias_se_y"), f("bias_se_z")),
            mse_all=f("mse_all"), mean_iterations=f("mean_iterations"),
            max_iterations=int(row["max_iterations"]),
        )


def snr_to_sigmas(snr_db, ref: NoiseModel) -> NoiseModel:
    """Scale every sigma of the 0 dB reference by ``10**(-snr_db/20)``."""
    if np.any(ref.sigmas <= 0):
        raise ValueError("reference sigmas must be positive")
    return ref.scaled(10.0 ** (-float(snr_db) / 20.0))


def point_key(axis_name, axis_value) -> int:
    return zlib.crc32(f"{axis_name}={float(axis_value)!r}".encode())


def _chunk_errors(scenario, noise, start, stop, seed, stream, algorithms, est_config):
    params = true_parameters(scenario)
    m = scenario.n_ris
    z = np.empty((stop - start, 3 * m))
    for i, t in enumerate(range(start, stop)):
        z[i] = trial_rng(seed, *stream, t).standard_normal(3 * m)
    z *= noise.sigmas
    th = params.theta + z[:, :m]
    ph = params.phi + z[:, m:2 * m]
    rb = params.range_diffs + z[:, 2 * m:]
    out = {}
    if "tswls" in algorithms:
        with np.errstate(all="ignore"):
            be = estimate_batch(th, ph, rb, scenario, noise, est_config)
        best = np.where(np.isfinite(be.q_hat), be.q_hat, be.u_breve[:, :3])
        out["tswls"] = dict(err=be.q_hat - scenario.mu, ok=be.status == OK, best=best - scenario.mu,
                            clamped=be.clamped.any(axis=1), iters=be.iterations)
    if "geometry" in algorithms:
        q = geometry_estimate_batch(th, ph, scenario)
        ok = np.all(np.isfinite(q), axis=1)
        out["geometry"] = dict(err=q - scenario.mu, ok=ok, best=q - scenario.mu,
                               clamped=np.zeros(len(q), dtype=bool), iters=np.zeros(len(q), dtype=int))
    return out


def run_point(scenario: Scenario, noise: NoiseModel, trials: int, seed: int,
              algorithms=("tswls",), stream=(0,), threads: int = 1,
              est_config: EstimatorConfig | None = None, theo_bias=None,
              axis_name="point", axis_value=float("nan")) -> dict:
    """Run ``trials`` Monte Carlo trials at one noise level.

    All algorithms see the same measurement realizations. Returns a dict
    mapping algorithm name to ``SweepResult``. ``theo_bias`` (a 3-vector)
    is attached to the TSWLS result when given.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    est_config = est_config or EstimatorConfig()
    bounds = [(a, min(a + CHUNK, trials)) for a in range(0, trials, CHUNK)]
    job = lambda ab: _chunk_errors(scenario, noise, ab[0], ab[1], seed, stream, algorithms, est_config)
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(job, bounds))
    else:
        parts = [job(ab) for ab in bounds]

    results = {}
    for alg in algorithms:
        cat = {k: np.concatenate([p[alg][k] for p in parts]) for k in parts[0][alg]}
        results[alg] = _aggregate(cat, alg, trials, axis_name, axis_value, scenario.n_ris,
                                  theo_bias if alg == "tswls" else None)
    return results


def _aggregate(c, alg, trials, axis_name, axis_value, n_ris, theo_bias):
    ok = c["ok"]
    n = int(ok.sum())
    if n == 0:
        raise AllTrialsFailed(f"all {trials} trials failed for {alg} at {axis_name}={axis_value}")
    e = c["err"][ok]
    sq = np.sum(e * e, axis=1)
    mse = float(np.sum(sq) / n)
    bias = np.sum(e, axis=0) / n
    if n > 1:
        mse_se = float(np.std(sq, ddof=1) / math.sqrt(n))
        bias_se = np.std(e, axis=0, ddof=1) / math.sqrt(n)
    else:
        mse_se, bias_se = float("nan"), np.full(3, np.nan)
    best = c["best"]
    fin = np.all(np.isfinite(best), axis=1)
    mse_all = float(np.sum(best[fin] ** 2) / fin.sum()) if fin.any() else float("nan")
    iters = c["iters"]
    return SweepResult(
        axis_name=axis_name, axis_value=float(axis_value), n_ris=int(n_ris), algorithm=alg,
        trials=int(trials), mse=mse, bias=tuple(float(b) for b in bias),
        theo_bias=None if theo_bias is None else tuple(float(b) for b in theo_bias),
        clamp_rate=float(c["clamped"][ok].mean()), failures=int(trials - n),
        mse_se=mse_se, bias_se=tuple(float(s) for s in bias_se), mse_all=mse_all,
        mean_iterations=float(iters.mean()) if alg == "tswls" else 0.0,
        max_iterations=int(iters.max()) if alg == "tswls" else 0,
    )


def run_sweep(config: SweepConfig, threads: int = 1, progress=None) -> list:
    """One result per (n_ris, axis value, algorithm), in that nesting order."""
    est_config = EstimatorConfig(config.max_iters, config.tol)
    out = []
    for m in config.ris_subsets:
        scenario = config.scenario.subset(m)
        for value in config.values:
            noise = config.noise_at(value, m)
            theo = None
            if config.bias_validation:
                theo = bias_mod.predict(scenario, noise, refined=config.refined_theory).bias_q
            res = run_point(scenario, noise, config.trials, config.seed, config.algorithms,
                            stream=(point_key(config.axis, value), m), threads=threads,
                            est_config=est_config, theo_bias=theo,
                            axis_name=config.axis, axis_value=value)
            for alg in config.algorithms:
                out.append(res[alg])
                if progress is not None:
                    progress(res[alg])
    return out


def write_csv(results, path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in results:
            w.writerow(r.to_row())


def read_csv(path) -> list:
    with open(path, newline="") as f:
        return [SweepResult.from_row(row) for row in csv.DictReader(f)]


def format_summary(results) -> str:
    head = f"{'axis':>8} {'value':>10} {'M':>2} {'algorithm':>9} {'mse':>11} {'|bias|':>11} {'|theory|':>11} {'fail':>6} {'clamp':>7}"
    lines = [head, "-" * len(head)]
    for r in results:
        tb = "" if r.theo_bias is None else f"{np.linalg.norm(r.theo_bias):.4e}"
        lines.append(f"{r.axis_name:>8} {r.axis_value:>10.4g} {r.n_ris:>2} {r.algorithm:>9} {r.mse:>11.4e} "
                     f"{np.linalg.norm(r.bias):>11.4e} {tb:>11} {r.failures:>6} {r.clamp_rate:>7.4f}")
    return "\n".join(lines)


def threads_from_env(default=1) -> int:
    raw = os.environ.get("TSWLS_THREADS")
    if raw is None or raw.strip() == "":
        return default
    n = int(raw)
    if n < 1:
        raise ValueError("TSWLS_THREADS must be >= 1")
    return n

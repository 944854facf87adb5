"""Gaussian AOA/TDOA error model and noisy measurement synthesis."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .geometry import TrueParams


def _as_sigma(value, n_ris: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n_ris, float(arr))
    if arr.shape != (n_ris,):
        raise ValueError(f"{name} must be a scalar or have length {n_ris}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"{name} must be finite and non-negative")
    return arr


@dataclass(frozen=True)
class NoiseModel:
    """Per-RIS standard deviations: azimuth ``sigma_n``, elevation ``sigma_omega`` (rad)
    and range difference ``sigma_nu`` (m).

    Zero entries are accepted so that the noiseless limit can be expressed, but the
    estimator weights need all of them strictly positive.
    """

    sigma_n: np.ndarray
    sigma_omega: np.ndarray
    sigma_nu: np.ndarray

    def __post_init__(self):
        n = np.atleast_1d(np.asarray(self.sigma_n, dtype=float)).shape[0]
        for name in ("sigma_n", "sigma_omega", "sigma_nu"):
            arr = _as_sigma(getattr(self, name), n, name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def isotropic(cls, sigma_a, sigma_t, n_ris: int) -> "NoiseModel":
        """Same angle error ``sigma_a`` for azimuth and elevation, ``sigma_t`` for ranges."""
        a = _as_sigma(sigma_a, n_ris, "sigma_a")
        return cls(a, a.copy(), _as_sigma(sigma_t, n_ris, "sigma_t"))

    @classmethod
    def from_dict(cls, d: dict, n_ris: int) -> "NoiseModel":
        """Build from ``{"sigma_a": ..., "sigma_t": ...}``; optional ``sigma_n`` /
        ``sigma_omega`` override the shared angle value."""
        try:
            sigma_a = d.get("sigma_a")
            sigma_n = d.get("sigma_n", sigma_a)
            sigma_omega = d.get("sigma_omega", sigma_a)
            sigma_t = d["sigma_t"]
        except KeyError as exc:
            raise ValueError(f"noise model is missing key {exc}") from None
        if sigma_n is None or sigma_omega is None:
            raise ValueError("noise model needs sigma_a (or both sigma_n and sigma_omega)")
        return cls(
            _as_sigma(sigma_n, n_ris, "sigma_n"),
            _as_sigma(sigma_omega, n_ris, "sigma_omega"),
            _as_sigma(sigma_t, n_ris, "sigma_t"),
        )

    @classmethod
    def load(cls, path, n_ris: int) -> "NoiseModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), n_ris)

    @property
    def n_ris(self) -> int:
        return self.sigma_n.shape[0]

    @property
    def sigmas(self) -> np.ndarray:
        """Stacked standard deviations in ``[n, omega, nu]`` order (length 3M)."""
        return np.concatenate([self.sigma_n, self.sigma_omega, self.sigma_nu])

    @property
    def is_zero(self) -> bool:
        return not np.any(self.sigmas)

    def scaled(self, factor: float) -> "NoiseModel":
        return NoiseModel(self.sigma_n * factor, self.sigma_omega * factor, self.sigma_nu * factor)

    def subset(self, n_ris: int) -> "NoiseModel":
        return NoiseModel(self.sigma_n[:n_ris], self.sigma_omega[:n_ris], self.sigma_nu[:n_ris])

    def to_dict(self) -> dict:
        return {
            "sigma_n": self.sigma_n.tolist(),
            "sigma_omega": self.sigma_omega.tolist(),
            "sigma_t": self.sigma_nu.tolist(),
        }


@dataclass(frozen=True)
class Measurements:
    theta_hat: np.ndarray
    phi_hat: np.ndarray
    rb_hat: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(getattr(self, k), dtype=float).reshape(-1) for k in ("theta_hat", "phi_hat", "rb_hat")]
        if len({a.shape[0] for a in arrs}) != 1:
            raise ValueError("measurement vectors must have equal length")
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise ValueError("measurements must be finite")
        for k, a in zip(("theta_hat", "phi_hat", "rb_hat"), arrs):
            a.setflags(write=False)
            object.__setattr__(self, k, a)

    @property
    def n_ris(self) -> int:
        return self.theta_hat.shape[0]

    @classmethod
    def exact(cls, params: TrueParams) -> "Measurements":
        return cls(params.theta, params.phi, params.range_diffs)


def covariance_blocks(model: NoiseModel):
    """Diagonal covariances ``(Q_n, Q_omega, Q_nu)``, each M x M."""
    return np.diag(model.sigma_n**2), np.diag(model.sigma_omega**2), np.diag(model.sigma_nu**2)


def stacked_covariance(model: NoiseModel) -> np.ndarray:
    """Block-diagonal covariance of ``z = [n; omega; nu]`` (3M x 3M)."""
    return block_diag(*covariance_blocks(model))


def trial_rng(seed: int, *stream) -> np.random.Generator:
    """Independent generator keyed by ``seed`` and any further integers (point, trial, ...)."""
    return np.random.default_rng([int(seed), *(int(s) for s in stream)])


def draw_errors(model: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """One realization of ``z = [n; omega; nu]``."""
    return rng.standard_normal(3 * model.n_ris) * model.sigmas


def perturb(params: TrueParams, z) -> Measurements:
    m = params.n_ris
    z = np.asarray(z, dtype=float)
    return Measurements(params.theta + z[:m], params.phi + z[m : 2 * m], params.range_diffs + z[2 * m :])


def synthesize(params: TrueParams, model: NoiseModel, seed) -> Measurements:
    """Noisy measurements for ``params``; ``seed`` may be an int, a sequence of ints or a Generator."""
    if params.n_ris != model.n_ris:
        raise ValueError(f"noise model has {model.n_ris} RISs, parameters have {params.n_ris}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return perturb(params, draw_errors(model, rng))

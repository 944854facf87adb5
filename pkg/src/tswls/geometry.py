"""Noise-free geometry: AOAs at the RISs, link distances and range differences.

Azimuths are measured from the y-axis in the x-o-y plane, elevations from the
x-o-y plane. Both are chosen so that the horizontal range
``sin(theta)*dx + cos(theta)*dy`` is positive, which is what the pseudolinear
rows in :mod:`tswls.estimator` rely on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DegenerateGeometryError

_EPS = 1e-12


@dataclass(frozen=True)
class Scenario:
    """BS position ``bs``, RIS centres ``ris`` (M x 3) and true MU position ``mu``."""

    bs: np.ndarray
    ris: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        bs = np.asarray(self.bs, dtype=float).reshape(3)
        ris = np.atleast_2d(np.asarray(self.ris, dtype=float))
        mu = np.asarray(self.mu, dtype=float).reshape(3)
        if ris.ndim != 2 or ris.shape[1] != 3:
            raise ValueError(f"ris must be M x 3, got shape {ris.shape}")
        if ris.shape[0] < 2:
            raise ValueError("at least two RISs are required")
        if not (np.all(np.isfinite(bs)) and np.all(np.isfinite(ris)) and np.all(np.isfinite(mu))):
            raise ValueError("scenario coordinates must be finite")
        scale = scene_scale(bs, ris, mu)
        if distance(mu, bs) <= _EPS * scale:
            raise DegenerateGeometryError("MU coincides with the BS")
        if np.any(np.linalg.norm(ris - mu, axis=1) <= _EPS * scale):
            raise DegenerateGeometryError("MU coincides with a RIS")
        for name, value in (("bs", bs), ("ris", ris), ("mu", mu)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_ris(self) -> int:
        return self.ris.shape[0]

    def subset(self, n_ris: int) -> "Scenario":
        """Scenario restricted to the first ``n_ris`` RISs."""
        if not 2 <= n_ris <= self.n_ris:
            raise ValueError(f"n_ris must lie in [2, {self.n_ris}], got {n_ris}")
        return Scenario(self.bs, self.ris[:n_ris], self.mu)

    def with_mu(self, mu) -> "Scenario":
        return Scenario(self.bs, self.ris, mu)

    def translated(self, offset) -> "Scenario":
        offset = np.asarray(offset, dtype=float)
        return Scenario(self.bs + offset, self.ris + offset, self.mu + offset)

    def to_dict(self) -> dict:
        return {"bs": self.bs.tolist(), "ris": self.ris.tolist(), "mu": self.mu.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            return cls(d["bs"], d["ris"], d["mu"])
        except KeyError as exc:
            raise ValueError(f"scenario is missing key {exc}") from None

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class TrueParams:
    theta: np.ndarray  # azimuth per RIS, rad
    phi: np.ndarray  # elevation per RIS, rad
    r_bu: float  # MU-BS distance
    r_ru: np.ndarray  # MU-RIS distances
    range_diffs: np.ndarray  # r_ru - r_bu

    @property
    def n_ris(self) -> int:
        return self.theta.shape[0]


def scene_scale(bs, ris, mu) -> float:
    pts = np.vstack([np.reshape(bs, (1, 3)), np.reshape(ris, (-1, 3)), np.reshape(mu, (1, 3))])
    return max(1.0, float(np.max(np.abs(pts))))


def default_scenario() -> Scenario:
    """Three-RIS layout shipped with the package (MU at [0, 0, 40] m)."""
    path = Path(__file__).with_name("data") / "default_scenario.json"
    return Scenario.load(path)


def distance(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def aoa_azimuth(q, s) -> float:
    """Azimuth of the MU seen from the RIS at ``s``, measured from the y-axis.

    Satisfies ``cos(t)*dx - sin(t)*dy == 0`` and ``sin(t)*dx + cos(t)*dy > 0``
    with ``d = q - s``. The result lies in (-pi, pi].
    """
    d = np.asarray(q, dtype=float) - np.asarray(s, dtype=float)
    if np.hypot(d[0], d[1]) <= _EPS * max(1.0, float(np.max(np.abs(d)))):
        raise DegenerateGeometryError("MU lies on the vertical line through the RIS; azimuth undefined")
    return float(np.arctan2(d[0], d[1]))


def aoa_elevation(q, s, theta=None) -> float:
    """Elevation of the MU seen from ``s`` given the azimuth ``theta`` (computed if omitted)."""
    d = np.asarray(q, dtype=float) - np.asarray(s, dtype=float)
    if theta is None:
        theta = aoa_azimuth(q, s)
    horiz = np.sin(theta) * d[0] + np.cos(theta) * d[1]
    if horiz <= _EPS * max(1.0, float(np.max(np.abs(d)))):
        raise DegenerateGeometryError("projected range is not positive; elevation undefined")
    return float(np.arctan(d[2] / horiz))


def range_difference(q, s, p) -> float:
    return distance(q, s) - distance(q, p)


def true_parameters(scenario: Scenario) -> TrueParams:
    q, p = scenario.mu, scenario.bs
    theta = np.array([aoa_azimuth(q, s) for s in scenario.ris])
    phi = np.array([aoa_elevation(q, s, t) for s, t in zip(scenario.ris, theta)])
    r_bu = distance(q, p)
    r_ru = np.linalg.norm(scenario.ris - q, axis=1)
    return TrueParams(theta=theta, phi=phi, r_bu=r_bu, r_ru=r_ru, range_diffs=r_ru - r_bu)

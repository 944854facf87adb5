"""AOA-only "geometry" baseline: unweighted least squares on the azimuth and
elevation pseudolinear rows, ignoring TDOA entirely."""

import numpy as np

from .estimator import azimuth_row, elevation_row
from .exceptions import SingularSystemError


def geometry_estimate(measurements, scenario):
    """Position from the 2M AOA rows by ordinary least squares (3 unknowns)."""
    if measurements.n_ris != scenario.n_ris:
        raise ValueError("measurement / scenario RIS count mismatch")
    A = np.vstack([
        azimuth_row(measurements.theta_hat)[:, :3],
        elevation_row(measurements.theta_hat, measurements.phi_hat)[:, :3],
    ])
    s = np.vstack([scenario.ris, scenario.ris])
    b = np.sum(A * s, axis=1)
    x, _, rank, sv = np.linalg.lstsq(A, b, rcond=None)
    if rank < 3:
        raise SingularSystemError("AOA rows are rank deficient", cond=np.inf)
    return x


def geometry_estimate_batch(theta_hat, phi_hat, scenario):
    """Vectorized ``geometry_estimate`` over rows of (T, M) angle arrays.

    Returns (T, 3) positions; rank-deficient trials come back as NaN rows.
    """
    th = np.atleast_2d(np.asarray(theta_hat, dtype=float))
    ph = np.atleast_2d(np.asarray(phi_hat, dtype=float))
    s = scenario.ris
    A = np.concatenate([azimuth_row(th)[..., :3], elevation_row(th, ph)[..., :3]], axis=1)
    b = np.einsum("tjk,jk->tj", A, np.vstack([s, s]))
    Qf, R = np.linalg.qr(A)
    d = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    good = d.min(axis=-1) > 1e-13 * d.max(axis=-1)
    R = np.where(good[:, None, None], R, np.eye(3))
    x = np.linalg.solve(R, np.einsum("tji,tj->ti", Qf, b)[..., None])[..., 0]
    x[~good] = np.nan
    return x

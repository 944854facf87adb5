"""Two-stage weighted least squares (TSWLS) position estimator.

Stage 1 solves the stacked AOA/TDOA pseudolinear system for
``u = [x_q, y_q, z_q, R_BU]`` with iteratively refreshed weights. Stage 2
exploits the dependence between ``R_BU`` and ``q`` by estimating
``xi = (q - p)**2`` elementwise, and the final step restores signs from the
Stage-1 solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateGeometryError, SingularSystemError
from .geometry import Scenario, scene_scale
from .measurement import Measurements, NoiseModel, stacked_covariance

# Reciprocal condition number below which a whitened regressor is treated as rank deficient.
_RCOND = 1e-13
# Relative tolerance (times scene scale) under which a Stage-2 scaling entry counts as zero.
EPS_B = 1e-9

G1 = np.vstack([np.eye(3), np.ones((1, 3))])


@dataclass(frozen=True)
class EstimatorConfig:
    max_iters: int = 10
    tol: float = 1e-10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class PseudolinearSystem:
    """``h_hat - G_hat @ u = B_r @ z`` with rows [azimuth; elevation; TDOA]."""

    G_hat: np.ndarray
    h_hat: np.ndarray
    Q_r: np.ndarray | None = None

    @property
    def n_ris(self) -> int:
        return self.G_hat.shape[0] // 3


@dataclass(frozen=True)
class Stage1Result:
    u_breve: np.ndarray
    W_r: np.ndarray  # diagonal of the weight used for u_breve
    Omega_u: np.ndarray
    iterations_used: int
    converged: bool
    history: list = field(default_factory=list, repr=False)

    @property
    def W_r_matrix(self) -> np.ndarray:
        return np.diag(self.W_r)


@dataclass(frozen=True)
class Stage2Result:
    xi_breve: np.ndarray
    W1_hat: np.ndarray
    h1_hat: np.ndarray
    B1_hat: np.ndarray
    Omega_xi: np.ndarray


@dataclass(frozen=True)
class FinalEstimate:
    xi_breve: np.ndarray
    Pi: np.ndarray
    q_hat: np.ndarray
    clamped_components: tuple
    stage1: Stage1Result | None = None
    stage2: Stage2Result | None = None

    @property
    def u_breve(self):
        return None if self.stage1 is None else self.stage1.u_breve

    @property
    def converged(self) -> bool:
        return self.stage1 is None or self.stage1.converged

    def to_dict(self) -> dict:
        out = {
            "q_hat": self.q_hat.tolist(),
            "xi_breve": self.xi_breve.tolist(),
            "Pi": np.diag(self.Pi).tolist(),
            "clamped_components": list(self.clamped_components),
        }
        if self.stage1 is not None:
            out["u_breve"] = self.stage1.u_breve.tolist()
            out["iterations"] = self.stage1.iterations_used
            out["converged"] = self.stage1.converged
        return out


# -- pseudolinear rows -------------------------------------------------------


def azimuth_row(theta_hat):
    """``[-cos t, sin t, 0, 0]``; vectorizes over an array of azimuths (rows)."""
    t = np.asarray(theta_hat, dtype=float)
    z = np.zeros_like(t)
    return np.stack([-np.cos(t), np.sin(t), z, z], axis=-1)


def elevation_row(theta_hat, phi_hat):
    t = np.asarray(theta_hat, dtype=float)
    f = np.asarray(phi_hat, dtype=float)
    sf = np.sin(f)
    return np.stack([sf * np.sin(t), sf * np.cos(t), -np.cos(f), np.zeros_like(sf * t)], axis=-1)


def tdoa_row(rb_hat, s, p):
    """TDOA regressor row and target: ``(-[s - p, rb], -|s|^2/2 + |p|^2/2 + rb^2/2)``.

    Vectorizes over ``rb_hat`` of shape (M,) with ``s`` of shape (M, 3).
    """
    rb = np.asarray(rb_hat, dtype=float)
    s = np.asarray(s, dtype=float)
    p = np.asarray(p, dtype=float)
    g = -np.concatenate([s - p, rb[..., None]], axis=-1)
    h = -0.5 * np.sum(s * s, axis=-1) + 0.5 * np.dot(p, p) + 0.5 * rb**2
    return g, h


def assemble(measurements: Measurements, scenario: Scenario, noise: NoiseModel | None = None) -> PseudolinearSystem:
    m = scenario.n_ris
    if measurements.n_ris != m:
        raise ValueError(f"measurements cover {measurements.n_ris} RISs, scenario has {m}")
    if noise is not None and noise.n_ris != m:
        raise ValueError(f"noise model covers {noise.n_ris} RISs, scenario has {m}")
    s = scenario.ris
    g_th = azimuth_row(measurements.theta_hat)
    g_ph = elevation_row(measurements.theta_hat, measurements.phi_hat)
    g_t, h_t = tdoa_row(measurements.rb_hat, s, scenario.bs)
    # AOA targets: the 3-vector part of each row dotted with its RIS position
    h_th = np.sum(g_th[:, :3] * s, axis=1)
    h_ph = np.sum(g_ph[:, :3] * s, axis=1)
    G = np.vstack([g_th, g_ph, g_t])
    h = np.concatenate([h_th, h_ph, h_t])
    Q = None if noise is None else stacked_covariance(noise)
    return PseudolinearSystem(G, h, Q)


def scaling_matrix(r_ru, phi) -> np.ndarray:
    """Residual scaling ``B_r = diag(-R cos(phi), -R, +R)`` (3M x 3M)."""
    r = np.asarray(r_ru, dtype=float)
    if np.any(r <= 0):
        raise DegenerateGeometryError("ranges must be positive")
    return np.diag(scaling_diagonal(r, r * np.cos(phi)))


def scaling_diagonal(r_ru, horiz) -> np.ndarray:
    return np.concatenate([-np.asarray(horiz, dtype=float), -np.asarray(r_ru, dtype=float), np.asarray(r_ru, dtype=float)])


def _scaling_from_position(x, scenario: Scenario) -> np.ndarray:
    d = x[None, :3] - scenario.ris
    return scaling_diagonal(np.linalg.norm(d, axis=1), np.hypot(d[:, 0], d[:, 1]))


# -- weighted least squares --------------------------------------------------


def wls_solve(G, h, W, return_cov=False):
    """Minimize ``(h - G u)^T W (h - G u)``.

    ``W`` is either a full SPD matrix or a 1-D array holding a diagonal. The
    problem is whitened with a Cholesky factor of ``W`` and solved by QR.
    With ``return_cov`` the inverse normal matrix ``(G^T W G)^-1`` is also returned.
    """
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        if np.any(~np.isfinite(W)) or np.any(W <= 0):
            raise SingularSystemError("diagonal weight must be finite and positive")
        sw = np.sqrt(W)
        A = G * sw[:, None]
        b = h * sw
    else:
        try:
            L = np.linalg.cholesky(W)
        except np.linalg.LinAlgError:
            raise SingularSystemError("weight matrix is not positive definite") from None
        A = L.T @ G
        b = L.T @ h
    Qf, R = np.linalg.qr(A)
    d = np.abs(np.diag(R))
    rc = d.min() / d.max() if d.max() > 0 else 0.0
    if not rc > _RCOND:
        # column-pivot-free QR only gives a rough estimate; report the true condition number
        cond = np.linalg.cond(A)
        raise SingularSystemError(f"normal equations are singular (cond={cond:.3g})", cond=cond)
    u = _solve_upper(R, Qf.T @ b)
    if not return_cov:
        return u
    Rinv = _solve_upper(R, np.eye(R.shape[0]))
    return u, Rinv @ Rinv.T


def _solve_upper(R, b):
    from scipy.linalg import solve_triangular

    return solve_triangular(R, b, lower=False, check_finite=False)


# -- stages ------------------------------------------------------------------


def _weight_variances(var):
    # Noiseless data are solved exactly by any positive weights, so an
    # all-zero model falls back to unit variances; a partly zero one cannot
    # be weighted consistently.
    if np.all(var == 0):
        return np.ones_like(var)
    if np.any(var <= 0):
        raise ValueError("all noise standard deviations must be positive to form weights")
    return var


def stage1(system: PseudolinearSystem, scenario: Scenario, noise: NoiseModel | None = None,
           max_iters: int = 10, tol: float = 1e-10) -> Stage1Result:
    """Iteratively reweighted Stage-1 solve, starting from unit weights.

    After each solve the MU-RIS ranges (and horizontal ranges) are recomputed
    from the current position estimate, the scaling ``B_r`` rebuilt and the
    weights set to ``(B_r Q_r B_r^T)^-1``. Stops once the update is below
    ``tol * max(1, |u|)`` or after ``max_iters`` solves.
    """
    if noise is not None:
        var = noise.sigmas**2
    elif system.Q_r is not None:
        var = np.diag(system.Q_r).copy()
    else:
        raise ValueError("stage1 needs a noise model (or a system carrying Q_r)")
    var = _weight_variances(var)

    G, h = system.G_hat, system.h_hat
    w = np.ones(G.shape[0])
    u_prev = None
    history = []
    converged = False
    for k in range(1, max_iters + 1):
        u, cov = wls_solve(G, h, w, return_cov=True)
        history.append(u)
        w_used = w
        if u_prev is not None and np.linalg.norm(u - u_prev) <= tol * max(1.0, np.linalg.norm(u)):
            converged = True
            break
        u_prev = u
        b = _scaling_from_position(u, scenario)
        if np.any(np.abs(b) <= 1e-12 * scene_scale(scenario.bs, scenario.ris, scenario.mu)):
            raise SingularSystemError("Stage-1 estimate coincides with a RIS; weights undefined")
        w = 1.0 / (b * b * var)
    return Stage1Result(u_breve=u, W_r=w_used, Omega_u=cov, iterations_used=k,
                        converged=converged, history=history)


def stage2(s1: Stage1Result, system: PseudolinearSystem, p) -> Stage2Result:
    p = np.asarray(p, dtype=float)
    u = s1.u_breve
    diff = u - np.append(p, 0.0)
    scale = max(1.0, float(np.max(np.abs(np.append(p, u)))))
    if np.any(np.abs(diff) < EPS_B * scale):
        bad = np.flatnonzero(np.abs(diff) < EPS_B * scale).tolist()
        raise DegenerateGeometryError(f"Stage-1 estimate is level with the BS on axes {bad}; B_1 singular")
    h1 = diff * diff
    b1 = 2.0 * diff
    P_r = system.G_hat.T @ (s1.W_r[:, None] * system.G_hat)
    W1 = P_r / np.outer(b1, b1)
    W1 = 0.5 * (W1 + W1.T)
    xi, cov = wls_solve(G1, h1, W1, return_cov=True)
    return Stage2Result(xi_breve=xi, W1_hat=W1, h1_hat=h1, B1_hat=np.diag(b1), Omega_xi=cov)


def finalize(xi_breve, u_breve, p) -> FinalEstimate:
    """``q_hat = sign(u[:3] - p) * sqrt(max(xi, 0)) + p``; clamped axes are reported."""
    xi = np.asarray(xi_breve, dtype=float)
    p = np.asarray(p, dtype=float)
    signs = np.sign(np.asarray(u_breve, dtype=float)[:3] - p)
    clamped = tuple(int(i) for i in np.flatnonzero(xi < 0))
    q_hat = signs * np.sqrt(np.maximum(xi, 0.0)) + p
    return FinalEstimate(xi_breve=xi, Pi=np.diag(signs), q_hat=q_hat, clamped_components=clamped)


def estimate(measurements: Measurements, scenario: Scenario, noise: NoiseModel,
             config: EstimatorConfig | None = None) -> FinalEstimate:
    """Full TSWLS pipeline: assemble, Stage 1, Stage 2, sign/sqrt recovery."""
    config = config or EstimatorConfig()
    system = assemble(measurements, scenario, noise)
    s1 = stage1(system, scenario, noise, config.max_iters, config.tol)
    s2 = stage2(s1, system, scenario.bs)
    fin = finalize(s2.xi_breve, s1.u_breve, scenario.bs)
    return FinalEstimate(fin.xi_breve, fin.Pi, fin.q_hat, fin.clamped_components, stage1=s1, stage2=s2)


# -- vectorized batch ---------------------------------------------------------

OK, SINGULAR, DEGENERATE, NOT_CONVERGED = 0, 1, 2, 3


@dataclass(frozen=True)
class BatchEstimate:
    """Per-trial outputs of ``estimate_batch``; rows of failed trials hold NaN
    (``u_breve`` keeps the last Stage-1 iterate where one exists)."""

    q_hat: np.ndarray
    u_breve: np.ndarray
    xi_breve: np.ndarray
    clamped: np.ndarray
    iterations: np.ndarray
    status: np.ndarray

    @property
    def ok(self):
        return self.status == OK


def _batch_wls_diag(G, h, w):
    sw = np.sqrt(w)
    A = G * sw[..., None]
    b = h * sw
    Qf, R = np.linalg.qr(A)
    d = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    good = d.min(axis=-1) > _RCOND * d.max(axis=-1)
    y = np.einsum("tji,tj->ti", Qf, b)
    R = np.where(good[:, None, None], R, np.eye(R.shape[-1]))
    u = np.linalg.solve(R, y[..., None])[..., 0]
    return u, good


def estimate_batch(theta_hat, phi_hat, rb_hat, scenario: Scenario, noise: NoiseModel,
                   config: EstimatorConfig | None = None) -> BatchEstimate:
    """Vectorized TSWLS over T trials (measurement arrays of shape (T, M)).

    Mirrors ``estimate`` step for step, but reports failures per trial via a
    status code instead of raising.
    """
    config = config or EstimatorConfig()
    th = np.atleast_2d(np.asarray(theta_hat, dtype=float))
    ph = np.atleast_2d(np.asarray(phi_hat, dtype=float))
    rb = np.atleast_2d(np.asarray(rb_hat, dtype=float))
    T, m = th.shape
    if m != scenario.n_ris or noise.n_ris != m:
        raise ValueError("RIS count mismatch")
    var = _weight_variances(noise.sigmas**2)
    s, p = scenario.ris, scenario.bs
    scale = scene_scale(scenario.bs, scenario.ris, scenario.mu)

    g_th = azimuth_row(th)
    g_ph = elevation_row(th, ph)
    g_t, h_t = tdoa_row(rb, np.broadcast_to(s, (T, m, 3)), p)
    G = np.concatenate([g_th, g_ph, g_t], axis=1)
    h = np.concatenate([np.einsum("tmk,mk->tm", g_th[..., :3], s),
                        np.einsum("tmk,mk->tm", g_ph[..., :3], s), h_t], axis=1)

    status = np.zeros(T, dtype=int)
    iters = np.zeros(T, dtype=int)
    w = np.ones((T, 3 * m))
    w_used = w.copy()
    u = np.full((T, 4), np.nan)
    u_prev = np.full((T, 4), np.nan)
    active = np.ones(T, dtype=bool)
    for k in range(1, config.max_iters + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        uk, good = _batch_wls_diag(G[idx], h[idx], w[idx])
        status[idx[~good]] = SINGULAR
        u[idx[good]] = uk[good]
        iters[idx] = k
        w_used[idx] = w[idx]
        still = idx[good]
        if k > 1:
            step = np.linalg.norm(u[still] - u_prev[still], axis=1)
            done = step <= config.tol * np.maximum(1.0, np.linalg.norm(u[still], axis=1))
            still = still[~done]
        active[:] = False
        active[still] = True
        if k == config.max_iters:
            break
        u_prev[still] = u[still]
        d = u[still, None, :3] - s[None]
        r = np.linalg.norm(d, axis=2)
        hz = np.hypot(d[..., 0], d[..., 1])
        b = np.concatenate([-hz, -r, r], axis=1)
        bad = np.any(np.abs(b) <= 1e-12 * scale, axis=1)
        status[still[bad]] = SINGULAR
        active[still[bad]] = False
        with np.errstate(divide="ignore"):
            w[still] = 1.0 / (b * b * var)
    status[active & (status == OK)] = NOT_CONVERGED

    xi = np.full((T, 3), np.nan)
    q_hat = np.full((T, 3), np.nan)
    clamped = np.zeros((T, 3), dtype=bool)
    # non-converged trials still carry their last iterate through Stage 2
    idx = np.flatnonzero((status == OK) | (status == NOT_CONVERGED))
    if idx.size:
        diff = u[idx] - np.append(p, 0.0)
        lim = EPS_B * np.maximum(1.0, np.max(np.abs(np.concatenate([np.broadcast_to(p, (idx.size, 3)), u[idx]], axis=1)), axis=1))
        degen = np.any(np.abs(diff) < lim[:, None], axis=1)
        status[idx[degen]] = DEGENERATE
        idx, diff = idx[~degen], diff[~degen]
        Gi = G[idx]
        P_r = np.einsum("tji,tj,tjk->tik", Gi, w_used[idx], Gi)
        b1 = 2.0 * diff
        W1 = P_r / (b1[:, :, None] * b1[:, None, :])
        W1 = 0.5 * (W1 + np.swapaxes(W1, 1, 2))
        # 4x3 regressor; normal equations through a Cholesky factor of W1
        try:
            L = np.linalg.cholesky(W1)
            pd = np.ones(idx.size, dtype=bool)
        except np.linalg.LinAlgError:
            pd = np.array([_is_pd(x) for x in W1])
            L = np.zeros_like(W1)
            L[pd] = np.linalg.cholesky(W1[pd])
        status[idx[~pd]] = SINGULAR
        idx, diff, L = idx[pd], diff[pd], L[pd]
        A = np.einsum("tji,jk->tik", L, G1)
        bb = np.einsum("tji,tj->ti", L, diff * diff)
        Qf, R = np.linalg.qr(A)
        dd = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
        good = dd.min(axis=-1) > _RCOND * dd.max(axis=-1)
        R = np.where(good[:, None, None], R, np.eye(3))
        x = np.linalg.solve(R, np.einsum("tji,tj->ti", Qf, bb)[..., None])[..., 0]
        status[idx[~good]] = SINGULAR
        idx, x, diff = idx[good], x[good], diff[good]
        xi[idx] = x
        clamped[idx] = x < 0
        q_hat[idx] = np.sign(diff[:, :3]) * np.sqrt(np.maximum(x, 0.0)) + p
    return BatchEstimate(q_hat, u, xi, clamped, iters, status)


def _is_pd(a):
    try:
        np.linalg.cholesky(a)
        return True
    except np.linalg.LinAlgError:
        return False

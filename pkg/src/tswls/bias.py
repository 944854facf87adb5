"""Second-order bias prediction for the TSWLS estimator.

Everything is evaluated at the true geometry. Noise enters the Stage-1
system in two ways: through the residual scaling ``B_r`` (first order) and
through the perturbed regressor ``G_hat = G_r + sum_x diag(1_3 kron x) Gbar_x``,
with one error-direction matrix per noise type x in {n, omega, nu}. The
expectations of products of two first-order terms reduce to Hadamard products
with the stacked covariance blocks ``Qbar_x = 1_3 kron Q_x``.

``refined=True`` adds two second-order contributions that the base
expansion leaves out (see ``bias_stage1`` and ``bias_stage2``). By default
the base expansion is returned.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .estimator import G1, azimuth_row, elevation_row, scaling_diagonal, tdoa_row
from .exceptions import DegenerateGeometryError, SingularSystemError
from .geometry import Scenario, TrueParams, true_parameters
from .measurement import NoiseModel, covariance_blocks

NOISE_TYPES = ("n", "omega", "nu")


@dataclass(frozen=True)
class DecomposedSystem:
    G_r: np.ndarray
    G_bar: dict  # noise type -> 3M x 4 error-direction matrix
    B_r_true: np.ndarray
    W_r_true: np.ndarray
    P_r: np.ndarray
    H_r: np.ndarray
    u_true: np.ndarray
    params: TrueParams
    Q: dict  # noise type -> M x M covariance

    @property
    def n_ris(self):
        return self.G_r.shape[0] // 3

    @property
    def G_bar_n(self):
        return self.G_bar["n"]

    @property
    def G_bar_omega(self):
        return self.G_bar["omega"]

    @property
    def G_bar_nu(self):
        return self.G_bar["nu"]

    def B_block(self, x):
        """Columns of ``B_r`` multiplying noise type ``x`` (3M x M)."""
        m = self.n_ris
        k = NOISE_TYPES.index(x)
        return self.B_r_true[:, k * m:(k + 1) * m]

    def Q_bar(self, x):
        # 3M x M: one copy of Q_x per row block, so that it conforms with
        # W_r @ B_block(x) and with any (3M x 4)(4 x 3M)(3M x M) product.
        return np.kron(np.ones((3, 1)), self.Q[x])


@dataclass(frozen=True)
class BiasReport:
    bias_u: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    E3: np.ndarray
    bias_xi: np.ndarray
    bias_q: np.ndarray
    Omega_u: np.ndarray
    Omega_xi: np.ndarray
    Omega_q: np.ndarray

    def to_dict(self) -> dict:
        return {k: np.asarray(v).tolist() for k, v in asdict(self).items()}


def _error_directions(theta, phi):
    """Derivatives of the pseudolinear rows w.r.t. the noise entering them."""
    st, ct, sf, cf = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    z = np.zeros_like(theta)
    g1n = np.stack([st, ct, z, z], axis=1)             # d(azimuth row)/d theta
    g2n = np.stack([sf * ct, -sf * st, z, z], axis=1)  # d(elevation row)/d theta
    gw = np.stack([cf * st, cf * ct, sf, z], axis=1)   # d(elevation row)/d phi
    gv = np.tile([0.0, 0.0, 0.0, -1.0], (len(theta), 1))  # d(TDOA row)/d R_B
    return g1n, g2n, gw, gv


def decompose(params: TrueParams, scenario: Scenario, noise: NoiseModel) -> DecomposedSystem:
    m = scenario.n_ris
    if params.n_ris != m or noise.n_ris != m:
        raise ValueError("params / scenario / noise RIS counts differ")
    theta, phi = params.theta, params.phi
    g_t, _ = tdoa_row(params.range_diffs, scenario.ris, scenario.bs)
    G = np.vstack([azimuth_row(theta), elevation_row(theta, phi), g_t])

    g1n, g2n, gw, gv = _error_directions(theta, phi)
    O = np.zeros((m, 4))
    G_bar = {
        "n": np.vstack([g1n, g2n, O]),
        "omega": np.vstack([O, gw, O]),
        "nu": np.vstack([O, O, gv]),
    }
    b = scaling_diagonal(params.r_ru, params.r_ru * np.cos(phi))
    Qn, Qw, Qv = covariance_blocks(noise)
    var = np.concatenate([np.diag(Qn), np.diag(Qw), np.diag(Qv)])
    if np.any(var <= 0):
        raise ValueError("bias expansion needs all sigmas positive")
    W = np.diag(1.0 / (b * b * var))
    P = G.T @ W @ G
    if np.linalg.cond(P) > 1e13:
        raise SingularSystemError("P_r is singular", cond=np.linalg.cond(P))
    H = np.linalg.solve(P, G.T @ W)
    u = np.append(scenario.mu, params.r_bu)
    return DecomposedSystem(G, G_bar, np.diag(b), W, P, H, u, params, {"n": Qn, "omega": Qw, "nu": Qv})


def _hadamard_sum(d: DecomposedSystem, left, right, Q=None):
    """``sum_x left(x)^T ((right(x)) * Qbar_x) 1`` for x over noise types."""
    total = np.zeros(4)
    for x in NOISE_TYPES:
        Qbar = d.Q_bar(x) if Q is None else np.kron(np.ones((3, 1)), Q[x])
        total += left(x).T @ ((right(x) * Qbar) @ np.ones(d.n_ris))
    return total


def _noise_blocks(d, noise):
    if noise is None:
        return d.Q
    return dict(zip(NOISE_TYPES, covariance_blocks(noise)))


def _elevation_curvature(d: DecomposedSystem, Q):
    """Expected second-order azimuth-noise term of the elevation residuals."""
    p = d.params
    m = d.n_ris
    out = np.zeros(3 * m)
    out[m:2 * m] = 0.5 * p.r_ru * np.sin(p.phi) * np.cos(p.phi) * np.diag(Q["n"])
    return out


def bias_stage1(d: DecomposedSystem, noise: NoiseModel | None = None, refined=False):
    """Stage-1 bias ``E1 + E2 + E3`` and covariance ``Omega_u = P_r^-1``.

    ``refined`` adds the expected curvature of the elevation residuals
    (``R sin(phi) cos(phi) n^2 / 2`` per row) to E2. The noise covariances
    come from ``noise`` when given, else from the model ``d`` was built with;
    the weights are always those of ``d``.
    """
    m = d.n_ris
    G, W, H, P = d.G_r, d.W_r_true, d.H_r, d.P_r
    Q = _noise_blocks(d, noise)
    E1 = np.zeros(4)  # H_r B_r E[r] with zero-mean noise
    q_u = np.zeros(3 * m)
    q_u[2 * m:] = np.diag(Q["nu"])
    eta = 0.5 * q_u
    if refined:
        eta = eta + _elevation_curvature(d, Q)
    E2 = H @ eta
    GH = G @ H
    E31 = np.linalg.solve(P, _hadamard_sum(d, lambda x: d.G_bar[x], lambda x: W @ d.B_block(x), Q))
    E32 = np.linalg.solve(P, _hadamard_sum(d, lambda x: d.G_bar[x], lambda x: W @ GH @ d.B_block(x), Q))
    # W is diagonal, so W (A * Q) = (W A) * Q and W can sit inside the product
    E33 = np.linalg.solve(P, _hadamard_sum(d, lambda x: G, lambda x: W @ d.G_bar[x] @ H @ d.B_block(x), Q))
    E3 = E31 - E32 - E33
    Omega_u = np.linalg.inv(P)
    Omega_u = 0.5 * (Omega_u + Omega_u.T)
    return E1 + E2 + E3, E1, E2, E3, Omega_u


def _stage2_matrices(d: DecomposedSystem, scenario: Scenario):
    diff = d.u_true - np.append(scenario.bs, 0.0)
    if np.any(diff == 0):
        raise DegenerateGeometryError("B_1 singular: MU level with BS on some axis")
    b1 = 2.0 * diff
    B1 = np.diag(b1)
    B1i = np.diag(1.0 / b1)
    W1 = B1i @ d.P_r @ B1i
    P1 = G1.T @ W1 @ G1
    if np.linalg.cond(P1) > 1e13:
        raise SingularSystemError("P_1 is singular", cond=np.linalg.cond(P1))
    H1 = np.linalg.solve(P1, G1.T @ W1)
    P2 = np.eye(4) - G1 @ H1
    return B1, B1i, W1, P1, H1, P2


def bias_stage2(d: DecomposedSystem, stage1_bias, scenario: Scenario, refined=False):
    """Stage-2 bias ``E[xi~]`` and covariance ``Omega_xi = P_1^-1``.

    ``stage1_bias`` is the tuple from ``bias_stage1`` (or just E[u~] and
    Omega_u as a pair). ``refined`` adds the effect of the Stage-1 weights
    being rebuilt from the Stage-1 estimate, which perturbs ``W_1``
    alongside the scaling ``B_1``.
    """
    bias_u, Omega_u = stage1_bias[0], stage1_bias[-1]
    B1, B1i, W1, P1, H1, P2 = _stage2_matrices(d, scenario)
    G, W, H = d.G_r, d.W_r_true, d.H_r
    c_u = np.diag(Omega_u).copy()
    P3 = B1i @ P2 @ B1 @ H
    P4 = P2 @ B1 @ Omega_u
    a1 = B1i @ (_hadamard_sum(d, lambda x: d.G_bar[x], lambda x: W @ G @ P3 @ d.B_block(x))
                + _hadamard_sum(d, lambda x: G, lambda x: W @ d.G_bar[x] @ P3 @ d.B_block(x)))
    a2 = -2.0 * W1 @ B1i @ np.diag(P4)
    a3 = -2.0 * B1i @ np.diag(W1 @ P4)
    a = a1 + a2 + a3
    if refined:
        a = a + _weight_refresh_term(d, scenario, B1, B1i, P2, Omega_u)
    bias_xi = H1 @ (B1 @ bias_u + c_u) + np.linalg.solve(P1, G1.T @ a)
    Omega_xi = np.linalg.inv(P1)
    return bias_xi, 0.5 * (Omega_xi + Omega_xi.T)


def _weight_refresh_term(d, scenario, B1, B1i, P2, Omega_u):
    # W_r = diag(1/(b^2 var)) with b rebuilt from u: W~_r = -2 W_r diag(J u~ / b).
    # Its contribution to E[W~_1 P_2 B_1 u~] is B_1^-1 G^T E[W~_r K u~],
    # K = G B_1^-1 P_2 B_1, whose j-th entry is -2 W_jj (J Omega_u K^T)_jj / b_j.
    b = np.diag(d.B_r_true)
    J = _scaling_jacobian(d.u_true[:3], scenario)
    K = d.G_r @ B1i @ P2 @ B1
    e = np.einsum("jk,kl,jl->j", J, Omega_u, K)
    return B1i @ d.G_r.T @ (-2.0 * np.diag(d.W_r_true) * e / b)


def _scaling_jacobian(q, scenario):
    """Jacobian of the diagonal of ``B_r`` (built from a position) w.r.t. u (3M x 4)."""
    dv = q[None, :] - scenario.ris
    r = np.linalg.norm(dv, axis=1)
    hz = np.hypot(dv[:, 0], dv[:, 1])
    dr = dv / r[:, None]
    dh = np.column_stack([dv[:, 0] / hz, dv[:, 1] / hz, np.zeros(len(r))])
    J = np.vstack([-dh, -dr, dr])
    return np.hstack([J, np.zeros((J.shape[0], 1))])


def bias_final(bias_xi, Omega_xi, scenario: Scenario):
    """Final position bias ``B_q^-1 (E[xi~] - c_q)`` and its covariance ``Omega_q``."""
    diff = np.asarray(scenario.mu) - np.asarray(scenario.bs)
    if np.any(diff == 0):
        raise DegenerateGeometryError("B_q singular: MU level with BS on some axis")
    Bqi = np.diag(1.0 / (2.0 * diff))
    Omega_q = Bqi @ Omega_xi @ Bqi
    Omega_q = 0.5 * (Omega_q + Omega_q.T)
    c_q = np.diag(Omega_q)
    return Bqi @ (np.asarray(bias_xi) - c_q), Omega_q


def predict(scenario: Scenario, noise: NoiseModel, params: TrueParams | None = None, refined=False) -> BiasReport:
    """Full theoretical bias report at the true parameters of ``scenario``."""
    m = scenario.n_ris
    if noise.is_zero:
        # exact zero-noise limit; the weights themselves are undefined there
        z4, z3 = np.zeros(4), np.zeros(3)
        return BiasReport(z4, z4, z4, z4, z3, z3, np.zeros((4, 4)), np.zeros((3, 3)), np.zeros((3, 3)))
    params = params or true_parameters(scenario)
    d = decompose(params, scenario, noise)
    s1 = bias_stage1(d, noise, refined=refined)
    bias_xi, Omega_xi = bias_stage2(d, s1, scenario, refined=refined)
    bias_q, Omega_q = bias_final(bias_xi, Omega_xi, scenario)
    assert m == d.n_ris
    return BiasReport(s1[0], s1[1], s1[2], s1[3], bias_xi, bias_q, s1[4], Omega_xi, Omega_q)


def predict_at_estimate(q_hat, scenario: Scenario, noise: NoiseModel, refined=False) -> BiasReport:
    """Same report evaluated at an estimated MU position (for field use,
    where the truth is unknown)."""
    return predict(scenario.with_mu(q_hat), noise, refined=refined)


def hadamard_diag_identity(a, b):
    """``a * b`` computed as ``diag(a) @ b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("need two vectors of equal length")
    return np.diag(a) @ b

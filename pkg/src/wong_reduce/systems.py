"""Finite-dimensional mechanical systems with a compact symmetry group.

A system is a bundle of evaluatable fields over a flat chart: metric G(Q),
Killing fields K(Q), gauge constraints chi(Q), invariant potential V(Q).
All built-in systems satisfy the one global equivariance convention

    [K_mu, K_nu] = EQUIVARIANCE_SIGN * c^sigma_{mu nu} K_sigma

which is asserted by tests and validated end-to-end against the full-space
trajectory oracle and the Kaluza-Klein connection oracle.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import numdiff
from .algebra import LieAlgebraSpec, so3
from .errors import ChartOutOfRange, NotOnSigma, NoConvergence, SingularFP

# Sign convention of the Killing-field commutators relative to the structure
# constants.  +1 matches the right-action frame in which the vertical fields
# obey [L_a, L_b] = +c^g_ab L_g; fixed by the Kaluza-Klein curvature oracle.
EQUIVARIANCE_SIGN = +1.0

TOL_SIGMA = 1e-10
TOL_KILLING = 1e-7
COND_LIMIT = 1e12


@dataclass(frozen=True)
class MechanicalSystem:
    """Evaluatable description of a symmetric mechanical system.

    Immutable; pointwise evaluations are pure and safe to run concurrently.
    Analytic derivative callables are optional; consumers fall back to
    4th-order finite differences with step fd_step.
    """

    name: str
    n_p: int
    algebra: LieAlgebraSpec
    metric: Callable[[np.ndarray], np.ndarray]          # q -> (n_p, n_p)
    killing: Callable[[np.ndarray], np.ndarray]         # q -> (n_p, n_g), columns K_mu
    constraint: Callable[[np.ndarray], np.ndarray]      # q -> (n_chi,)
    constraint_jac: Callable[[np.ndarray], np.ndarray]  # q -> (n_chi, n_p)
    potential: Callable[[np.ndarray], float]
    n_chi: int
    derivative_mode: str = "fd"                          # "analytic" | "fd"
    fd_step: float = numdiff.DEFAULT_STEP
    metric_grad: Optional[Callable] = None               # q -> (n_p, n_p, n_p), [C,A,B] = d_C G_AB
    killing_grad: Optional[Callable] = None              # q -> (n_p, n_p, n_g), [C,A,mu] = d_C K^A_mu
    potential_grad: Optional[Callable] = None            # q -> (n_p,)
    exp_action: Optional[Callable] = None                # (xi, q) -> q, finite flow of K_xi
    gauge_fix: Optional[Callable] = None                 # q -> (q_star, transport (n_p,n_p))
    invariant_scalars: Optional[Callable] = None         # q -> group-invariant scalars
    sample_chart: Optional[Callable] = None              # rng -> valid chart point
    metric_is_flat: bool = False
    tol_sigma: float = TOL_SIGMA
    cond_limit: float = COND_LIMIT

    @property
    def n_g(self) -> int:
        return self.algebra.dim

    def grad_potential(self, q) -> np.ndarray:
        if self.potential_grad is not None:
            return np.asarray(self.potential_grad(q), dtype=float)
        return numdiff.grad_scalar(self.potential, q, h=self.fd_step)


@dataclass(frozen=True)
class PointOnSigma:
    """Chart point satisfying the gauge constraints to tol_sigma."""

    q: np.ndarray


def point_on_sigma(sys: MechanicalSystem, q) -> PointOnSigma:
    q = np.asarray(q, dtype=float)
    chi = sys.constraint(q)
    if chi.size and np.max(np.abs(chi)) >= sys.tol_sigma:
        raise NotOnSigma(f"|chi| = {np.max(np.abs(chi)):.3e} exceeds {sys.tol_sigma}")
    return PointOnSigma(q=q)


# ---------------------------------------------------------------------------
# so(3) matrix helpers (exponential chart)
# ---------------------------------------------------------------------------

def hat(v):
    """hat(v) w = v x w."""
    v = np.asarray(v, dtype=float)
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def exp_so3(theta):
    """Rodrigues rotation exp(hat(theta))."""
    th = np.asarray(theta, dtype=float)
    phi = np.linalg.norm(th)
    H = hat(th)
    if phi < 1e-3:
        # series branches avoid the 1-cos cancellation under finite differencing
        p2 = phi * phi
        a = 1.0 - p2 / 6.0 + p2 * p2 / 120.0
        b = 0.5 - p2 / 24.0 + p2 * p2 / 720.0
    else:
        a = np.sin(phi) / phi
        b = (1.0 - np.cos(phi)) / phi**2
    return np.eye(3) + a * H + b * (H @ H)


def log_so3(R):
    """Inverse of exp_so3 on the chart ||theta|| < pi."""
    tr = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    phi = np.arccos(tr)
    w = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if phi < 1e-8:
        return w  # w = sin(phi)*axis ~ theta to O(phi^3)
    if phi > np.pi - 1e-6:
        raise ChartOutOfRange(f"rotation angle {phi:.6f} at the chart boundary")
    return (phi / np.sin(phi)) * w


def mc_left_so3(theta):
    """Left Maurer-Cartan coefficient matrix: g^{-1} dg = mc_left(theta) dtheta."""
    th = np.asarray(theta, dtype=float)
    phi = np.linalg.norm(th)
    H = hat(th)
    if phi < 1e-3:
        p2 = phi * phi
        a = 0.5 - p2 / 24.0 + p2 * p2 / 720.0
        b = 1.0 / 6.0 - p2 / 120.0 + p2 * p2 / 5040.0
    else:
        a = (1.0 - np.cos(phi)) / phi**2
        b = (phi - np.sin(phi)) / phi**3
    return np.eye(3) - a * H + b * (H @ H)


# ---------------------------------------------------------------------------
# Built-in system: two vectors in R^3 under the diagonal SO(3) action
# ---------------------------------------------------------------------------

def _two_vector_killing_tensor():
    # K[3s+i, mu] = -eps_{i mu k} x^{(s) k}; constant derivative tensor.
    eps = np.zeros((3, 3, 3))
    for i, j, k in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
        eps[i, j, k] = 1.0
        eps[i, k, j] = -1.0
    # dK[C, A, mu] with C = 3t+l, A = 3s+i: -delta_st eps_{i mu l}
    dK = np.zeros((6, 6, 3))
    for s in range(2):
        for i in range(3):
            for mu in range(3):
                for l in range(3):
                    dK[3 * s + l, 3 * s + i, mu] = -eps[i, mu, l]
    return dK


_TWO_VECTOR_DK = _two_vector_killing_tensor()


def builtin_two_vector_so3(potential_coeffs=(0.5, 0.5, 0.0)) -> MechanicalSystem:
    """Two linearly independent vectors in R^3 with the diagonal SO(3) action.

    Metric is the identity; gauge constraints pin the first vector to the
    z-axis and the second to the x-z half-plane.  The potential is a linear
    combination of the invariant scalars (|x1|^2, |x2|^2, x1.x2) with the
    given coefficients (default harmonic).
    """
    a1, a2, a3 = (float(c) for c in potential_coeffs)
    alg = so3()
    eye6 = np.eye(6)
    dK = _TWO_VECTOR_DK
    chi_jac = np.zeros((3, 6))
    chi_jac[0, 0] = chi_jac[1, 1] = chi_jac[2, 4] = 1.0

    def metric(q):
        return eye6

    def killing(q):
        K = np.empty((6, 3))
        for s in range(2):
            x = q[3 * s:3 * s + 3]
            # rows i, cols mu of -eps_{i mu k} x^k  ==  -hat(x)^T ... spelled out:
            K[3 * s:3 * s + 3, :] = hat(x)  # hat(x)[i, mu] = -eps_{i mu k} x^k
        return K

    def constraint(q):
        return np.array([q[0], q[1], q[4]])

    def potential(q):
        x1, x2 = q[:3], q[3:]
        return a1 * (x1 @ x1) + a2 * (x2 @ x2) + a3 * (x1 @ x2)

    def potential_grad(q):
        x1, x2 = q[:3], q[3:]
        return np.concatenate([2.0 * a1 * x1 + a3 * x2, 2.0 * a2 * x2 + a3 * x1])

    def exp_action(xi, q):
        R = exp_so3(-np.asarray(xi, dtype=float))
        return np.concatenate([R @ q[:3], R @ q[3:]])

    def gauge_fix(q):
        x1, x2 = q[:3], q[3:]
        cross = np.cross(x1, x2)
        n1, nc = np.linalg.norm(x1), np.linalg.norm(cross)
        if n1 < 1e-12 or nc < 1e-12 * max(1.0, n1 * np.linalg.norm(x2)):
            raise SingularFP("gauge fix undefined for (near-)collinear vectors")
        u3 = x1 / n1
        u2 = cross / nc
        u1 = np.cross(u2, u3)
        R = np.vstack([u1, u2, u3])
        T = np.zeros((6, 6))
        T[:3, :3] = R
        T[3:, 3:] = R
        return T @ q, T

    def invariant_scalars(q):
        x1, x2 = q[:3], q[3:]
        return np.array([x1 @ x1, x2 @ x2, x1 @ x2])

    def sample_chart(rng):
        while True:
            q = rng.normal(size=6)
            x1, x2 = q[:3], q[3:]
            n1, n2 = np.linalg.norm(x1), np.linalg.norm(x2)
            if 0.5 < n1 < 2.5 and 0.5 < n2 < 2.5 and \
                    np.linalg.norm(np.cross(x1, x2)) > 0.3 * n1 * n2:
                return q

    return MechanicalSystem(
        name="two_vector_so3",
        n_p=6,
        algebra=alg,
        metric=metric,
        killing=killing,
        constraint=constraint,
        constraint_jac=lambda q: chi_jac,
        potential=potential,
        n_chi=3,
        derivative_mode="analytic",
        metric_grad=lambda q: np.zeros((6, 6, 6)),
        killing_grad=lambda q: dK,
        potential_grad=potential_grad,
        exp_action=exp_action,
        gauge_fix=gauge_fix,
        invariant_scalars=invariant_scalars,
        sample_chart=sample_chart,
        metric_is_flat=True,
    )


# ---------------------------------------------------------------------------
# Built-in system: Kaluza-Klein oracle over a flat base with group SO(3)
# ---------------------------------------------------------------------------

CHART_LIMIT = 0.95 * np.pi


def builtin_kaluza_klein(connection, base_dim, base_potential=None) -> MechanicalSystem:
    """Product chart M x SO(3) whose mechanical connection is known by construction.

    `connection` maps a base point x (length base_dim) to the coefficient
    matrix A[mu, a].  The metric is h_ab dx dx + k_hat_{mu nu} w^mu w^nu with
    w = Ad_{g^-1} A dx + g^{-1} dg, so the computed mechanical connection on
    the identity section must reproduce A exactly.
    """
    alg = so3()
    m = int(base_dim)
    if m < 1:
        raise ValueError("base_dim must be >= 1")
    n_p = m + 3
    khat = alg.k_hat

    def split(q):
        theta = q[m:]
        if np.linalg.norm(theta) >= CHART_LIMIT:
            raise ChartOutOfRange(f"|theta| = {np.linalg.norm(theta):.3f} outside the exponential chart")
        return q[:m], theta

    def metric(q):
        x, theta = split(q)
        A = np.asarray(connection(x), dtype=float)
        W = exp_so3(theta).T @ A          # Ad_{g^{-1}} A
        lam = mc_left_so3(theta)
        G = np.empty((n_p, n_p))
        G[:m, :m] = np.eye(m) + W.T @ khat @ W
        G[:m, m:] = W.T @ khat @ lam
        G[m:, :m] = G[:m, m:].T
        G[m:, m:] = lam.T @ khat @ lam
        return G

    def killing(q):
        _, theta = split(q)
        K = np.zeros((n_p, 3))
        K[m:, :] = np.linalg.inv(mc_left_so3(theta))
        return K

    def constraint(q):
        return q[m:].copy()

    chi_jac = np.zeros((3, n_p))
    chi_jac[:, m:] = np.eye(3)

    def potential(q):
        if base_potential is None:
            return 0.0
        return float(base_potential(q[:m]))

    def exp_action(xi, q):
        x, theta = split(q)
        R = exp_so3(theta) @ exp_so3(xi)
        return np.concatenate([x, log_so3(R)])

    def sample_chart(rng):
        x = rng.normal(size=m)
        theta = 0.2 * rng.normal(size=3)
        return np.concatenate([x, theta])

    return MechanicalSystem(
        name="kaluza_klein",
        n_p=n_p,
        algebra=alg,
        metric=metric,
        killing=killing,
        constraint=constraint,
        constraint_jac=lambda q: chi_jac,
        potential=potential,
        n_chi=3,
        derivative_mode="fd",
        exp_action=exp_action,
        sample_chart=sample_chart,
    )


def builtin_orbit_so3() -> MechanicalSystem:
    """Degenerate pure-orbit system: the chart is a single SO(3) orbit.

    K spans the whole tangent space, so the horizontal metric and projector
    vanish identically.
    """
    alg = so3()
    khat = alg.k_hat

    def metric(q):
        lam = mc_left_so3(q)
        return lam.T @ khat @ lam

    return MechanicalSystem(
        name="orbit_so3",
        n_p=3,
        algebra=alg,
        metric=metric,
        killing=lambda q: np.linalg.inv(mc_left_so3(q)),
        constraint=lambda q: q.copy(),
        constraint_jac=lambda q: np.eye(3),
        potential=lambda q: 0.0,
        n_chi=3,
        derivative_mode="fd",
        exp_action=lambda xi, q: log_so3(exp_so3(q) @ exp_so3(xi)),
        sample_chart=lambda rng: 0.2 * rng.normal(size=3),
    )


# ---------------------------------------------------------------------------
# Constraint restoration
# ---------------------------------------------------------------------------

def fp_matrix(sys: MechanicalSystem, q) -> np.ndarray:
    """Faddeev-Popov matrix Phi^beta_mu = K^A_mu d chi^beta / d Q^A."""
    return sys.constraint_jac(q) @ sys.killing(q)


def project_to_sigma(sys: MechanicalSystem, q, tol=None, max_iter=60) -> PointOnSigma:
    """Newton-restore the gauge constraints by moving along the group orbit.

    Each update moves along K * (-Phi^{-1} chi); when the system provides the
    finite group flow (exp_action) the orbit is preserved exactly, otherwise
    the linearized motion is applied.
    """
    tol = sys.tol_sigma if tol is None else tol
    q = np.asarray(q, dtype=float).copy()
    if sys.n_chi == 0:
        return PointOnSigma(q=q)
    best = np.inf
    for it in range(max_iter):
        chi = sys.constraint(q)
        resid = np.max(np.abs(chi))
        if resid < tol:
            return PointOnSigma(q=q)
        phi = fp_matrix(sys, q)
        if np.linalg.cond(phi) > sys.cond_limit:
            raise SingularFP(f"FP matrix condition {np.linalg.cond(phi):.3e} exceeds {sys.cond_limit}")
        xi = -np.linalg.solve(phi, chi)
        if sys.exp_action is not None:
            q = sys.exp_action(xi, q)
        else:
            q = q + sys.killing(q) @ xi
        best = min(best, resid)
    raise NoConvergence(f"constraint restoration stalled at |chi| = {best:.3e}",
                        iterations=max_iter, residual=best)


# ---------------------------------------------------------------------------
# System self-checks
# ---------------------------------------------------------------------------

def check_system(sys: MechanicalSystem, points, h=None) -> dict:
    """Max residuals of the defining invariants over the given chart points.

    Checks the Killing property (Lie derivative of G along each K_mu), the
    equivariance convention [K_mu, K_nu] = EQUIVARIANCE_SIGN c K, and the
    invariance of the potential.
    """
    h = sys.fd_step if h is None else h
    c = sys.algebra.c
    out = {"killing": 0.0, "equivariance": 0.0, "potential_invariance": 0.0}
    for q in points:
        q = np.asarray(q, dtype=float)
        K = sys.killing(q)
        G = sys.metric(q)
        if sys.metric_grad is not None:
            dG = sys.metric_grad(q)
        else:
            dG = numdiff.field_grad(sys.metric, q, h=h)
        if sys.killing_grad is not None:
            dK = sys.killing_grad(q)
        else:
            dK = numdiff.field_grad(sys.killing, q, h=h)

        # Lie derivative: K^C d_C G_AB + G_CB d_A K^C + G_AC d_B K^C
        lie = (np.einsum("cm,cab->abm", K, dG)
               + np.einsum("cb,acm->abm", G, dK)
               + np.einsum("ac,bcm->abm", G, dK))
        out["killing"] = max(out["killing"], float(np.max(np.abs(lie))))

        # [K_mu, K_nu]^A = K^B_mu d_B K^A_nu - (mu <-> nu)
        comm = np.einsum("bm,ban->amn", K, dK)
        comm = comm - np.swapaxes(comm, 1, 2)
        target = EQUIVARIANCE_SIGN * np.einsum("smn,as->amn", c, K)
        out["equivariance"] = max(out["equivariance"], float(np.max(np.abs(comm - target))))

        dV = sys.grad_potential(q)
        out["potential_invariance"] = max(out["potential_invariance"],
                                          float(np.max(np.abs(K.T @ dV))))
    return out

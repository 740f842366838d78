"""Pointwise bundle geometry on the gauge surface.

Evaluates, at a chart point, the Faddeev-Popov matrix, the three projectors
(P_perp, N, Pi), the orbit metric and its inverse, the mechanical connection,
its curvature, the horizontal metric with its Christoffel symbols, and the
covariant derivative of the orbit metric.  All fields are defined chart-wide,
so the derivative-based objects are obtained by differentiating in the ambient
chart and evaluating on the surface.
"""

from dataclasses import dataclass

import numpy as np

from . import numdiff
from .errors import NotOnSigma, SingularFP
from .systems import MechanicalSystem, PointOnSigma, point_on_sigma

# Relative singular-value cutoff when pseudo-inverting the (rank-deficient)
# horizontal metric.
GH_PINV_CUTOFF = 1e-10


@dataclass(frozen=True)
class GeometryAtPoint:
    """All pointwise bundle data evaluated on the gauge surface."""

    q: PointOnSigma
    K: np.ndarray              # Killing columns K^A_mu
    G: np.ndarray
    G_inv: np.ndarray
    chi_jac: np.ndarray
    Phi: np.ndarray            # FP matrix Phi^beta_mu
    Phi_inv: np.ndarray
    P_perp: np.ndarray
    N_proj: np.ndarray
    Pi_proj: np.ndarray
    gamma: np.ndarray
    gamma_inv: np.ndarray
    A_conn: np.ndarray         # mechanical connection A^nu_P (n_g x n_p)
    G_H: np.ndarray
    F_curv: np.ndarray = None          # F^alpha_{EP}
    christoffel_H: np.ndarray = None   # HGamma^A_{CD}
    D_gamma: np.ndarray = None         # D_E gamma_{ab}, indexed [E, a, b]
    D_gamma_inv: np.ndarray = None     # D_E gamma^{ab}


class _Core:
    """Algebraic (derivative-free) geometry at a point."""

    __slots__ = ("q", "K", "G", "G_inv", "chi_jac", "Phi", "Phi_inv",
                 "gamma", "gamma_inv", "A_conn", "Pi", "N", "n_p", "n_g")

    def __init__(self, sys: MechanicalSystem, q, check_cond=True):
        self.q = q
        self.K = np.asarray(sys.killing(q), dtype=float)
        self.G = np.asarray(sys.metric(q), dtype=float)
        self.chi_jac = np.asarray(sys.constraint_jac(q), dtype=float)
        self.n_p, self.n_g = self.K.shape

        self.gamma = self.K.T @ self.G @ self.K
        if check_cond and np.linalg.cond(self.gamma) > sys.cond_limit:
            raise SingularFP(f"orbit metric condition {np.linalg.cond(self.gamma):.3e} "
                             f"exceeds {sys.cond_limit} (non-free point?)")
        self.gamma_inv = np.linalg.inv(self.gamma)
        self.G_inv = np.linalg.inv(self.G)
        self.A_conn = self.gamma_inv @ self.K.T @ self.G
        self.Pi = np.eye(self.n_p) - self.K @ self.A_conn

        if self.chi_jac.shape[0]:
            self.Phi = self.chi_jac @ self.K
            if check_cond and np.linalg.cond(self.Phi) > sys.cond_limit:
                raise SingularFP(f"FP matrix condition {np.linalg.cond(self.Phi):.3e} "
                                 f"exceeds {sys.cond_limit}")
            self.Phi_inv = np.linalg.inv(self.Phi)
            self.N = np.eye(self.n_p) - self.K @ self.Phi_inv @ self.chi_jac
        else:
            # Trivial constraint block: the whole chart is the surface.
            self.Phi = np.zeros((0, self.n_g))
            self.Phi_inv = np.zeros((self.n_g, 0))
            self.N = np.eye(self.n_p)

    def p_perp(self):
        # (P_perp)^A_B = delta - chi^T (chi chi^T)^{-1} chi with the
        # metric-raised transpose chi^T = G^{-1} chi_jac^T gamma; the gamma
        # weight cancels in the sandwich.
        if not self.chi_jac.shape[0]:
            return np.eye(self.n_p)
        chiT = self.G_inv @ self.chi_jac.T @ self.gamma
        w = self.chi_jac @ chiT
        return np.eye(self.n_p) - chiT @ np.linalg.solve(w, self.chi_jac)

    def g_h(self):
        return self.Pi.T @ self.G @ self.Pi


def _gamma_field(sys):
    def f(q):
        K = sys.killing(q)
        return K.T @ sys.metric(q) @ K
    return f


def _aconn_field(sys):
    def f(q):
        K = sys.killing(q)
        G = sys.metric(q)
        return np.linalg.solve(K.T @ G @ K, K.T @ G)
    return f


def _gh_field(sys):
    def f(q):
        K = sys.killing(q)
        G = sys.metric(q)
        Pi = np.eye(K.shape[0]) - K @ np.linalg.solve(K.T @ G @ K, K.T @ G)
        return Pi.T @ G @ Pi
    return f


def _chart_derivatives(sys: MechanicalSystem, core: _Core):
    """d_E of (gamma, A_conn, G_H) at the point, leading index E.

    Uses the chain rule through the analytic metric/Killing gradients when the
    system provides them, otherwise 4th-order finite differences of the
    composite fields.
    """
    q = core.q
    if sys.derivative_mode == "analytic" and sys.metric_grad is not None \
            and sys.killing_grad is not None:
        K, G = core.K, core.G
        dK = np.asarray(sys.killing_grad(q), dtype=float)   # [E, A, mu]
        dG = np.asarray(sys.metric_grad(q), dtype=float)    # [E, A, B]
        GK = G @ K
        d_gamma = (np.einsum("eam,an->emn", dK, GK)
                   + np.einsum("am,eab,bn->emn", K, dG, K)
                   + np.einsum("am,ean->emn", GK, dK))
        # d(gamma^-1) = -gamma^-1 dgamma gamma^-1
        gi = core.gamma_inv
        d_gamma_inv = -np.einsum("mn,enk,kl->eml", gi, d_gamma, gi)
        # A = gamma^-1 K^T G
        KtG = K.T @ G
        d_A = (np.einsum("emn,np->emp", d_gamma_inv, KtG)
               + np.einsum("mn,ean,ap->emp", gi, dK, G)
               + np.einsum("mn,an,eap->emp", gi, K, dG))
        # Pi = I - K A
        d_Pi = -(np.einsum("eam,mb->eab", dK, core.A_conn)
                 + np.einsum("am,emb->eab", K, d_A))
        Pi = core.Pi
        GPi = G @ Pi
        d_GH = (np.einsum("eca,cb->eab", d_Pi, GPi)
                + np.einsum("ca,ecd,db->eab", Pi, dG, Pi)
                + np.einsum("ca,ecb->eab", GPi, d_Pi))
        return d_gamma, d_gamma_inv, d_A, d_GH

    h = sys.fd_step
    d_gamma = numdiff.field_grad(_gamma_field(sys), q, h=h)
    gi = core.gamma_inv
    d_gamma_inv = -np.einsum("mn,enk,kl->eml", gi, d_gamma, gi)
    d_A = numdiff.field_grad(_aconn_field(sys), q, h=h)
    d_GH = numdiff.field_grad(_gh_field(sys), q, h=h)
    return d_gamma, d_gamma_inv, d_A, d_GH


def _curvature_from(dA, A_conn, c):
    """F^a_{EP} = d_E A^a_P - d_P A^a_E + c^a_{ns} A^n_E A^s_P."""
    grad = np.einsum("evp->vep", dA)
    return grad - grad.transpose(0, 2, 1) + np.einsum("ans,ne,sp->aep", c, A_conn, A_conn)


def covariant_gamma_from(d_gamma, A_conn, gamma, c):
    """D_E gamma_ab = d_E gamma_ab - c^s_ma A^m_E gamma_sb - c^s_mb A^m_E gamma_sa."""
    t = np.einsum("sma,me,sb->eab", c, A_conn, gamma)
    return d_gamma - t - t.transpose(0, 2, 1)


def _christoffel_from(G_H, d_GH, N):
    """Solve G^H HGamma = 1/2 (G^H_{AC,D} + G^H_{AD,C} - G^H_{CD,A}).

    The horizontal metric is rank-deficient, so the defining system is solved
    by pseudo-inversion (singular values below GH_PINV_CUTOFF * smax dropped)
    and the upper index projected with N.
    """
    # rhs[A, C, D] = 1/2 (dGH[D,A,C] + dGH[C,A,D] - dGH[A,C,D]), with d_GH
    # indexed [E, A, B].
    rhs = 0.5 * (d_GH.transpose(1, 2, 0) + d_GH.transpose(1, 0, 2) - d_GH)
    pinv = np.linalg.pinv(G_H, rcond=GH_PINV_CUTOFF, hermitian=True)
    gamma_h = np.einsum("ba,acd->bcd", pinv, rhs)
    return np.einsum("ab,bcd->acd", N, gamma_h)


def evaluate_geometry(sys: MechanicalSystem, q, derivatives=True,
                      require_on_sigma=True) -> GeometryAtPoint:
    """Evaluate every geometric object at a point of the gauge surface."""
    if isinstance(q, PointOnSigma):
        pt = q
    elif require_on_sigma:
        pt = point_on_sigma(sys, q)
    else:
        pt = PointOnSigma(q=np.asarray(q, dtype=float))
    core = _Core(sys, pt.q)

    F = christ = Dg = Dginv = None
    if derivatives:
        d_gamma, d_gamma_inv, d_A, d_GH = _chart_derivatives(sys, core)
        c = sys.algebra.c
        F = _curvature_from(d_A, core.A_conn, c)
        christ = _christoffel_from(core.g_h(), d_GH, core.N)
        Dg = covariant_gamma_from(d_gamma, core.A_conn, core.gamma, c)
        Dginv = -np.einsum("mn,enk,kl->eml", core.gamma_inv, Dg, core.gamma_inv)

    return GeometryAtPoint(
        q=pt, K=core.K, G=core.G, G_inv=core.G_inv, chi_jac=core.chi_jac,
        Phi=core.Phi, Phi_inv=core.Phi_inv, P_perp=core.p_perp(),
        N_proj=core.N, Pi_proj=core.Pi, gamma=core.gamma,
        gamma_inv=core.gamma_inv, A_conn=core.A_conn, G_H=core.g_h(),
        F_curv=F, christoffel_H=christ, D_gamma=Dg, D_gamma_inv=Dginv)


def curvature(sys: MechanicalSystem, q) -> np.ndarray:
    """Curvature F^alpha_{EP} of the mechanical connection at q."""
    geo = evaluate_geometry(sys, q, derivatives=True, require_on_sigma=False)
    return geo.F_curv


def christoffel_horizontal(sys: MechanicalSystem, q) -> np.ndarray:
    """Horizontal Christoffel symbols HGamma^A_{CD} at q."""
    return evaluate_geometry(sys, q, derivatives=True, require_on_sigma=False).christoffel_H


def covariant_derivative_gamma(sys: MechanicalSystem, q):
    """(D_E gamma, D_E gamma^{-1}) at q."""
    geo = evaluate_geometry(sys, q, derivatives=True, require_on_sigma=False)
    return geo.D_gamma, geo.D_gamma_inv


# ---------------------------------------------------------------------------
# Metric block representations and their pseudo-inverse
# ---------------------------------------------------------------------------

def metric_blocks(geo: GeometryAtPoint) -> np.ndarray:
    """Adapted-coordinate representation of the metric on the identity section."""
    n_p, n_g = geo.K.shape
    P, G, K = geo.P_perp, geo.G, geo.K
    out = np.empty((n_p + n_g, n_p + n_g))
    out[:n_p, :n_p] = P.T @ G @ P
    out[:n_p, n_p:] = P.T @ G @ K
    out[n_p:, :n_p] = out[:n_p, n_p:].T
    out[n_p:, n_p:] = geo.gamma
    return out


def pseudoinverse_blocks(geo: GeometryAtPoint) -> np.ndarray:
    """Pseudo-inverse block matrix of the adapted metric on the identity section."""
    n_p = geo.K.shape[0]
    n_g = geo.K.shape[1]
    N, Gi = geo.N_proj, geo.G_inv
    FC = geo.Phi_inv @ geo.chi_jac        # (Phi^{-1} chi)^nu_B
    out = np.empty((n_p + n_g, n_p + n_g))
    out[:n_p, :n_p] = N @ Gi @ N.T
    out[:n_p, n_p:] = N @ Gi @ FC.T
    out[n_p:, :n_p] = out[:n_p, n_p:].T
    out[n_p:, n_p:] = FC @ Gi @ FC.T
    return out


def pseudoinverse_orthogonality(geo: GeometryAtPoint):
    """Residual of pinv-blocks @ metric-blocks against diag(P_perp, identity)."""
    n_p, n_g = geo.K.shape
    prod = pseudoinverse_blocks(geo) @ metric_blocks(geo)
    target = np.zeros_like(prod)
    target[:n_p, :n_p] = geo.P_perp
    target[n_p:, n_p:] = np.eye(n_g)
    return prod, float(np.max(np.abs(prod - target)))


# ---------------------------------------------------------------------------
# Invariant residual report
# ---------------------------------------------------------------------------

def dual_basis_residuals(geo: GeometryAtPoint) -> dict:
    """Contract the reconstructed dual basis with the horizontal frame at a = e."""
    n_p, n_g = geo.K.shape
    N, P, A = geo.N_proj, geo.P_perp, geo.A_conn
    # H_B columns in the (Q, a) chart; L_beta columns likewise.
    H = np.vstack([N, -(A @ N)])
    L = np.vstack([np.zeros((n_p, n_g)), np.eye(n_g)])
    omega_A = np.hstack([P, np.zeros((n_p, n_g))])
    omega_a = np.hstack([A @ P, np.eye(n_g)])
    return {
        "omegaA_H_minus_N": float(np.max(np.abs(omega_A @ H - N))),
        "omega_alpha_H": float(np.max(np.abs(omega_a @ H))),
        "omega_alpha_L_minus_delta": float(np.max(np.abs(omega_a @ L - np.eye(n_g)))),
        "omegaA_L": float(np.max(np.abs(omega_A @ L))),
    }


def invariant_residuals(geo: GeometryAtPoint) -> dict:
    """Max residuals of the defining projector/connection identities at a point."""
    K, N, P, Pi = geo.K, geo.N_proj, geo.P_perp, geo.Pi_proj
    out = {
        "N_idempotent": np.max(np.abs(N @ N - N)),
        "N_kills_K": np.max(np.abs(N @ K)),
        "Pperp_N_minus_N": np.max(np.abs(P @ N - N)),
        "N_Pperp_minus_Pperp": np.max(np.abs(N @ P - P)),
        "Pi_N_minus_Pi": np.max(np.abs(Pi @ N - Pi)),
        "N_Pi_minus_N": np.max(np.abs(N @ Pi - N)),
        "A_kills_Pi": np.max(np.abs(geo.A_conn @ Pi)),
        "A_K_minus_delta": np.max(np.abs(geo.A_conn @ K - np.eye(K.shape[1]))),
        "gamma_symmetry": np.max(np.abs(geo.gamma - geo.gamma.T)),
        "GH_kills_K": np.max(np.abs(geo.G_H @ K)),
        "pseudoinverse_orthogonality": pseudoinverse_orthogonality(geo)[1],
    }
    out.update(dual_basis_residuals(geo))
    if geo.F_curv is not None:
        out["F_antisymmetry"] = np.max(np.abs(geo.F_curv + geo.F_curv.transpose(0, 2, 1)))
    if geo.christoffel_H is not None:
        ch = geo.christoffel_H
        out["christoffel_symmetry"] = np.max(np.abs(ch - ch.transpose(0, 2, 1)))
    if geo.D_gamma is not None:
        # D is a derivation: D(gamma gamma^-1) = 0
        resid = (np.einsum("eab,bc->eac", geo.D_gamma, geo.gamma_inv)
                 + np.einsum("ab,ebc->eac", geo.gamma, geo.D_gamma_inv))
        out["D_gamma_derivation"] = np.max(np.abs(resid))
    return {k: float(v) for k, v in out.items()}

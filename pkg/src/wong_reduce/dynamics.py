"""Reduced equations of motion and the unreduced trajectory oracle.

The reduced state holds the gauge-surface point, its surface-tangent velocity
and the internal momentum p.  The velocity of the gauge-fixed image of a full
trajectory is tangent to the surface but in general not metric-horizontal, so
tangency (not horizontality) is the maintained state invariant; the connection
contraction A q_dot is logged as a diagnostic.
"""

from dataclasses import dataclass, field

import numpy as np

from . import numdiff
from .errors import BlowUp, StepFailure, WongReduceError
from .geometry import _Core, _chart_derivatives, _christoffel_from, \
    _curvature_from, covariant_gamma_from
from .systems import MechanicalSystem, PointOnSigma, point_on_sigma, project_to_sigma


@dataclass
class ReducedState:
    q: np.ndarray          # point on the gauge surface
    q_dot: np.ndarray      # surface-tangent velocity
    p: np.ndarray          # internal momentum
    t: float = 0.0

    def copy(self):
        return ReducedState(self.q.copy(), self.q_dot.copy(), self.p.copy(), self.t)


@dataclass
class Trajectory:
    """Time-ordered reduced samples plus per-sample invariant logs."""

    t: np.ndarray
    q: np.ndarray
    q_dot: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    chi_max: np.ndarray
    a_qdot_max: np.ndarray
    p_norm: np.ndarray

    def state(self, i) -> ReducedState:
        return ReducedState(self.q[i].copy(), self.q_dot[i].copy(), self.p[i].copy(),
                            float(self.t[i]))


def make_state(sys: MechanicalSystem, q, q_dot, p, t=0.0) -> ReducedState:
    """Validate and assemble a reduced state (q on the surface, q_dot tangent)."""
    pt = point_on_sigma(sys, q)
    q_dot = np.asarray(q_dot, dtype=float)
    p = np.asarray(p, dtype=float)
    chiJ = sys.constraint_jac(pt.q)
    if chiJ.shape[0]:
        tang = np.max(np.abs(chiJ @ q_dot))
        if tang > 1e-8 * max(1.0, float(np.max(np.abs(q_dot)))):
            raise WongReduceError(f"velocity not tangent to the gauge surface: |chi_B qdot| = {tang:.3e}")
    return ReducedState(pt.q.copy(), q_dot, p, t)


class _RHS:
    """Reduced right-hand side evaluator.

    For systems with a constant metric and analytic Killing gradients the
    geometry contractions are assembled directly against q_dot and p, which
    avoids building the full Christoffel/curvature tensors in the integration
    loop.  Other systems fall back to the general geometry path.
    """

    def __init__(self, sys: MechanicalSystem):
        self.sys = sys
        self.c = sys.algebra.c
        self.fast = (sys.metric_is_flat and sys.derivative_mode == "analytic"
                     and sys.killing_grad is not None)
        self._const = None

    def _constants(self, q):
        if self._const is None:
            sys = self.sys
            G = np.asarray(sys.metric(q), dtype=float)
            self._const = {
                "G": G, "G_inv": np.linalg.inv(G),
                "chiJ": np.asarray(sys.constraint_jac(q), dtype=float),
            }
        return self._const

    def frame(self, q):
        """Connection/projector data at q, reusing constant system blocks."""
        sys = self.sys
        if not self.fast:
            core = _Core(sys, q, check_cond=False)
            return {"K": core.K, "G": core.G, "G_inv": core.G_inv,
                    "gamma": core.gamma, "gamma_inv": core.gamma_inv,
                    "A": core.A_conn, "N": core.N, "Pi": core.Pi,
                    "chiJ": core.chi_jac}
        cst = self._constants(q)
        K = np.asarray(sys.killing(q), dtype=float)
        GK = cst["G"] @ K
        gamma = K.T @ GK
        gamma_inv = np.linalg.inv(gamma)
        A = gamma_inv @ GK.T
        chiJ = cst["chiJ"]
        if chiJ.shape[0]:
            N = np.eye(K.shape[0]) - K @ np.linalg.solve(chiJ @ K, chiJ)
        else:
            N = np.eye(K.shape[0])
        return {"K": K, "G": cst["G"], "G_inv": cst["G_inv"], "gamma": gamma,
                "gamma_inv": gamma_inv, "A": A, "N": N,
                "Pi": np.eye(K.shape[0]) - K @ A, "chiJ": chiJ}

    def __call__(self, q, q_dot, p):
        if self.fast:
            return self._call_fast(q, q_dot, p)
        return self._call_general(q, q_dot, p)

    def _call_fast(self, q, q_dot, p):
        sys = self.sys
        fr = self.frame(q)
        K, G, G_inv = fr["K"], fr["G"], fr["G_inv"]
        gamma_inv, A, N = fr["gamma_inv"], fr["A"], fr["N"]
        c = self.c

        dK = np.asarray(sys.killing_grad(q), dtype=float)      # [E, A, mu]
        GK = G @ K
        t = np.tensordot(dK, GK, axes=([1], [0]))              # dK^a_Em GK_an -> [E,m,n]
        d_gamma = t + t.transpose(0, 2, 1)
        d_gamma_inv = -(gamma_inv[None] @ d_gamma @ gamma_inv[None])
        d_A = d_gamma_inv @ GK.T + gamma_inv[None] @ (G[None] @ dK).transpose(0, 2, 1)
        d_Pi = -(dK @ A + K @ d_A)
        GPi = G @ fr["Pi"]
        d_GH = d_Pi.transpose(0, 2, 1) @ GPi + GPi.T[None] @ d_Pi

        # Christoffel term contracted with q_dot twice.
        t1 = np.tensordot(d_GH, q_dot, axes=([2], [0]))        # [E, A]
        vec_gamma = t1.T @ q_dot - 0.5 * (t1 @ q_dot)
        GH = GPi.T @ fr["Pi"]
        acc = -np.linalg.pinv(GH, rcond=1e-10, hermitian=True) @ vec_gamma

        GNT = G_inv @ N.T
        # Curvature term: F^n_EF qdot^E p_n with F = dA - dA^T + c A A.
        m1 = np.tensordot(d_A, p, axes=([1], [0]))             # [E, F]
        w = A @ q_dot
        cm = np.tensordot(c, p, axes=([0], [0]))               # [n1, n2]
        vec_F = (q_dot @ m1) - (m1 @ q_dot) + (w @ cm) @ A
        acc -= GNT @ vec_F

        # Momentum-quadratic term: 1/2 (D gamma^{-1})^{ks} p_s p_k contracted.
        u = gamma_inv @ p
        dd = (d_gamma @ u) @ u                                 # u . d_gamma[E] . u
        cv = np.tensordot(c, p, axes=([0], [0])).T @ u         # c^s_ma p_s u^a -> [m]
        dginv_pp = -(dd - 2.0 * (A.T @ cv))
        acc -= 0.5 * (GNT @ dginv_pp)

        acc -= G_inv @ sys.grad_potential(q)
        acc = N @ acc

        p_dot = (w - u) @ cm
        return acc, p_dot

    def _call_general(self, q, q_dot, p):
        sys = self.sys
        core = _Core(sys, q, check_cond=False)
        d_gamma, d_gamma_inv, d_A, d_GH = _chart_derivatives(sys, core)
        c = self.c
        F = _curvature_from(d_A, core.A_conn, c)
        christ = _christoffel_from(core.g_h(), d_GH, core.N)
        Dg = covariant_gamma_from(d_gamma, core.A_conn, core.gamma, c)
        Dginv = -np.einsum("mn,enk,kl->eml", core.gamma_inv, Dg, core.gamma_inv)
        dV = sys.grad_potential(q)
        GNT = core.G_inv @ core.N.T

        acc = -np.einsum("abc,b,c->a", christ, q_dot, q_dot)
        acc -= np.einsum("af,nef,e,n->a", GNT, F, q_dot, p)
        acc -= 0.5 * np.einsum("ae,eks,s,k->a", GNT, Dginv, p, p)
        acc -= core.G_inv @ dV
        acc = core.N @ acc

        w = core.A_conn @ q_dot
        u = core.gamma_inv @ p
        p_dot = np.einsum("kms,k,m->s", c, p, w - u)
        return acc, p_dot


def wong_rhs(sys: MechanicalSystem, state: ReducedState):
    """Right-hand side (q_ddot, p_dot) of the reduced equations at a state."""
    return _RHS(sys)(state.q, state.q_dot, state.p)


def energy(sys: MechanicalSystem, state: ReducedState) -> float:
    """E = 1/2 G^H(qdot, qdot) + 1/2 gamma^{-1}(p, p) + V."""
    core = _Core(sys, state.q, check_cond=False)
    gh = core.g_h()
    return float(0.5 * state.q_dot @ gh @ state.q_dot
                 + 0.5 * state.p @ core.gamma_inv @ state.p
                 + sys.potential(state.q))


def _log_sample(sys, st, out):
    core = _Core(sys, st.q, check_cond=False)
    chi = sys.constraint(st.q)
    out["energy"].append(0.5 * st.q_dot @ core.g_h() @ st.q_dot
                         + 0.5 * st.p @ core.gamma_inv @ st.p + sys.potential(st.q))
    out["chi_max"].append(float(np.max(np.abs(chi))) if chi.size else 0.0)
    out["a_qdot_max"].append(float(np.max(np.abs(core.A_conn @ st.q_dot))))
    out["p_norm"].append(float(np.sqrt(st.p @ sys.algebra.k_hat_inv @ st.p)))


BLOWUP_LIMIT = 1e12


def integrate(sys: MechanicalSystem, state0: ReducedState, t_end, dt,
              method="rk4", store_every=1) -> Trajectory:
    """Integrate the reduced equations with post-step constraint restoration.

    Classical RK4 with a uniform step; after each full step the point is
    projected back to the gauge surface along the orbit and the velocity
    re-tangentialized with N.  For the built-in systems the constraints are
    linear, so both corrections act at roundoff level.
    """
    if method != "rk4":
        raise ValueError(f"unknown integration method {method!r}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    rhs = _RHS(sys)
    st = state0.copy()
    n_steps = int(round((t_end - st.t) / dt))

    samples = {"t": [st.t], "q": [st.q.copy()], "q_dot": [st.q_dot.copy()],
               "p": [st.p.copy()], "energy": [], "chi_max": [], "a_qdot_max": [],
               "p_norm": []}
    _log_sample(sys, st, samples)

    for i in range(n_steps):
        try:
            st = _rk4_step(rhs, st, dt)
            pt = project_to_sigma(sys, st.q)
            st.q = pt.q
            core = _Core(sys, st.q, check_cond=False)
            st.q_dot = core.N @ st.q_dot
        except WongReduceError as err:
            raise StepFailure(st.t, repr(err)) from err
        if max(np.max(np.abs(st.q)), np.max(np.abs(st.q_dot)), np.max(np.abs(st.p))) > BLOWUP_LIMIT:
            raise BlowUp(f"state norm exceeded {BLOWUP_LIMIT:g} at t={st.t}")
        if (i + 1) % store_every == 0 or i == n_steps - 1:
            samples["t"].append(st.t)
            samples["q"].append(st.q.copy())
            samples["q_dot"].append(st.q_dot.copy())
            samples["p"].append(st.p.copy())
            _log_sample(sys, st, samples)

    return Trajectory(
        t=np.array(samples["t"]),
        q=np.array(samples["q"]),
        q_dot=np.array(samples["q_dot"]),
        p=np.array(samples["p"]),
        energy=np.array(samples["energy"]),
        chi_max=np.array(samples["chi_max"]),
        a_qdot_max=np.array(samples["a_qdot_max"]),
        p_norm=np.array(samples["p_norm"]))


def _rk4_step(rhs, st: ReducedState, dt) -> ReducedState:
    q, v, p = st.q, st.q_dot, st.p
    a1, pd1 = rhs(q, v, p)
    k1 = (v, a1, pd1)
    a2, pd2 = rhs(q + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1], p + 0.5 * dt * k1[2])
    k2 = (v + 0.5 * dt * a1, a2, pd2)
    a3, pd3 = rhs(q + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1], p + 0.5 * dt * k2[2])
    k3 = (v + 0.5 * dt * a2, a3, pd3)
    a4, pd4 = rhs(q + dt * k3[0], v + dt * k3[1], p + dt * k3[2])
    k4 = (v + dt * a3, a4, pd4)
    q_new = q + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    v_new = v + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    p_new = p + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    return ReducedState(q_new, v_new, p_new, st.t + dt)


# ---------------------------------------------------------------------------
# Full-space oracle
# ---------------------------------------------------------------------------

@dataclass
class FullTrajectory:
    t: np.ndarray
    q: np.ndarray
    q_dot: np.ndarray


def _full_rhs(sys: MechanicalSystem):
    if sys.metric_is_flat:
        def rhs(q, v):
            G = sys.metric(q)
            return -np.linalg.solve(G, sys.grad_potential(q))
        return rhs

    def rhs(q, v):
        G = sys.metric(q)
        if sys.metric_grad is not None:
            dG = sys.metric_grad(q)
        else:
            dG = numdiff.field_grad(sys.metric, q, h=sys.fd_step)
        # Gamma^A_BC v^B v^C = G^{AD} (d_B G_DC - 1/2 d_D G_BC) v^B v^C
        rhs_low = (np.einsum("bdc,b,c->d", dG, v, v)
                   - 0.5 * np.einsum("dbc,b,c->d", dG, v, v))
        return -np.linalg.solve(G, rhs_low + sys.grad_potential(q))
    return rhs


def integrate_full(sys: MechanicalSystem, q0, q0_dot, t_end, dt) -> FullTrajectory:
    """Integrate the unreduced geodesic-with-potential equations in the chart."""
    rhs = _full_rhs(sys)
    q = np.asarray(q0, dtype=float).copy()
    v = np.asarray(q0_dot, dtype=float).copy()
    n_steps = int(round(t_end / dt))
    ts = [0.0]
    qs = [q.copy()]
    vs = [v.copy()]
    for i in range(n_steps):
        a1 = rhs(q, v)
        a2 = rhs(q + 0.5 * dt * v, v + 0.5 * dt * a1)
        a3 = rhs(q + 0.5 * dt * (v + 0.5 * dt * a1), v + 0.5 * dt * a2)
        a4 = rhs(q + dt * (v + 0.5 * dt * a2), v + dt * a3)
        q = q + dt / 6.0 * (v + 2 * (v + 0.5 * dt * a1) + 2 * (v + 0.5 * dt * a2) + (v + dt * a3))
        v = v + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        ts.append((i + 1) * dt)
        qs.append(q.copy())
        vs.append(v.copy())
        if np.max(np.abs(q)) > BLOWUP_LIMIT:
            raise BlowUp(f"full-space state exceeded {BLOWUP_LIMIT:g}")
    return FullTrajectory(t=np.array(ts), q=np.array(qs), q_dot=np.array(vs))


def deriv_series(arr, dt):
    """4th-order time derivative of a sampled series, one-sided at the edges."""
    arr = np.asarray(arr, dtype=float)
    out = np.empty_like(arr)
    out[2:-2] = (-arr[4:] + 8 * arr[3:-1] - 8 * arr[1:-3] + arr[:-4]) / (12 * dt)
    stencils = {0: (-25, 48, -36, 16, -3), 1: (-3, -10, 18, -6, 1)}
    for i, cs in stencils.items():
        out[i] = sum(c * arr[i0] for i0, c in enumerate(cs)) / (12 * dt)
        out[-1 - i] = -sum(c * arr[-1 - i0] for i0, c in enumerate(cs)) / (12 * dt)
    return out


def gauge_fix_state(sys: MechanicalSystem, q, q_dot):
    """Map a full-space state to (q_star, momentum p) on the gauge surface.

    Requires the system's canonical gauge-fix map: p is the momentum map
    contracted at the gauge-fixed point with the transported velocity.
    """
    if sys.gauge_fix is None:
        raise WongReduceError(f"system {sys.name!r} provides no canonical gauge fix")
    q_star, T = sys.gauge_fix(np.asarray(q, dtype=float))
    v_star = T @ np.asarray(q_dot, dtype=float)
    K = sys.killing(q_star)
    G = sys.metric(q_star)
    return q_star, K.T @ G @ v_star


def full_space_oracle(sys: MechanicalSystem, q0, q0_dot, t_end, dt):
    """Unreduced trajectory plus its gauge-fixed image (q*, q*_dot, p).

    The gauge-fixed velocity is the time derivative of the gauge-fixed curve
    (4th-order stencils on the samples); p is exact per sample.
    """
    full = integrate_full(sys, q0, q0_dot, t_end, dt)
    n = len(full.t)
    q_star = np.empty_like(full.q)
    p = np.empty((n, sys.n_g))
    for i in range(n):
        q_star[i], p[i] = gauge_fix_state(sys, full.q[i], full.q_dot[i])
    v_star = deriv_series(q_star, dt)
    reduced = Trajectory(
        t=full.t.copy(), q=q_star, q_dot=v_star, p=p,
        energy=np.zeros(n), chi_max=np.zeros(n), a_qdot_max=np.zeros(n),
        p_norm=np.sqrt(np.einsum("ia,ab,ib->i", p, sys.algebra.k_hat_inv, p)))
    return full, reduced


def reduced_initial_from_full(sys: MechanicalSystem, q0, q0_dot) -> ReducedState:
    """Matched reduced initial data for a full-space initial condition."""
    q0 = np.asarray(q0, dtype=float)
    q0_dot = np.asarray(q0_dot, dtype=float)
    q_star, p = gauge_fix_state(sys, q0, q0_dot)

    def fixed(qq):
        return sys.gauge_fix(qq)[0]

    h = 1e-6 / max(1.0, float(np.max(np.abs(q0_dot))))
    v_star = (-fixed(q0 + 2 * h * q0_dot) + 8 * fixed(q0 + h * q0_dot)
              - 8 * fixed(q0 - h * q0_dot) + fixed(q0 - 2 * h * q0_dot)) / (12 * h)
    return make_state(sys, q_star, v_star, p)

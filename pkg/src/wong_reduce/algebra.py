"""Compact semisimple Lie algebras given by structure constants.

The algebra is represented purely numerically: a rank-3 array c[gamma, alpha, beta]
holding c^gamma_{alpha beta}, the Cartan-Killing form k_{alpha beta} contracted
from it, and the positive-definite rescaling k_hat = -k / kk_scale used by every
metric construction downstream (k_hat is the identity for so(3)/su(2)).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import IndefiniteKilling, JacobiViolation, NotAntisymmetric

# Absolute tolerance for algebraic identity checks on unit-normalized structure
# constants.
IDENTITY_TOL = 1e-12


@dataclass(frozen=True)
class LieAlgebraSpec:
    """Structure constants plus the Cartan-Killing data derived from them.

    Immutable after construction; safe to share across concurrent evaluations.
    """

    dim: int
    c: np.ndarray        # c[gamma, alpha, beta] = c^gamma_{alpha beta}
    k: np.ndarray        # k[alpha, beta] = c^tau_{mu alpha} c^mu_{tau beta}
    k_inv: np.ndarray
    kk_scale: float      # s > 0 with k_hat = -k/s positive definite
    k_hat: np.ndarray = field(repr=False, default=None)
    k_hat_inv: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.k_hat is None:
            object.__setattr__(self, "k_hat", -self.k / self.kk_scale)
        if self.k_hat_inv is None:
            object.__setattr__(self, "k_hat_inv", np.linalg.inv(self.k_hat))


def killing_form(c: np.ndarray) -> np.ndarray:
    """k_{alpha beta} = c^tau_{mu alpha} c^mu_{tau beta}."""
    return np.einsum("tma,mtb->ab", c, c)


def make_algebra(c, kk_scale=None) -> LieAlgebraSpec:
    """Build a LieAlgebraSpec from structure constants.

    Rejects input that is not antisymmetric in the lower indices, violates the
    Jacobi identity, or whose Killing form is not negative definite.  The
    identity checks are applied to c normalized by its largest entry so the
    tolerance is scale-free.

    kk_scale defaults to mean(diag(-k)), which gives 2 for so(3)/su(2) and
    makes k_hat the identity there.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 3 or len(set(c.shape)) != 1:
        raise ValueError(f"structure constants must be a cubic rank-3 array, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("structure constants must be finite")
    n = c.shape[0]

    scale = np.max(np.abs(c))
    if scale == 0.0:
        # Abelian: k = 0, caught below, but the normalized checks need a scale.
        scale = 1.0
    cn = c / scale

    anti = np.max(np.abs(cn + np.swapaxes(cn, 1, 2)))
    if anti > IDENTITY_TOL:
        raise NotAntisymmetric(f"max |c^g_ab + c^g_ba| = {anti:.3e} exceeds {IDENTITY_TOL}")

    # Jacobi: sum_mu (c^mu_ab c^s_mg + c^mu_bg c^s_ma + c^mu_ga c^s_mb) = 0
    jac = (np.einsum("mab,smg->sabg", cn, cn)
           + np.einsum("mbg,sma->sabg", cn, cn)
           + np.einsum("mga,smb->sabg", cn, cn))
    jmax = np.max(np.abs(jac))
    if jmax > IDENTITY_TOL:
        raise JacobiViolation(f"max Jacobi residual = {jmax:.3e} exceeds {IDENTITY_TOL}")

    k = killing_form(c)
    eigs = np.linalg.eigvalsh(-k)
    if eigs.min() <= scale**2 * IDENTITY_TOL:
        raise IndefiniteKilling(
            f"-k is not positive definite (min eigenvalue {eigs.min():.3e}); "
            "only compact semisimple algebras are supported")

    if kk_scale is None:
        kk_scale = float(np.mean(np.diag(-k)))
    if kk_scale <= 0:
        raise ValueError("kk_scale must be positive")

    return LieAlgebraSpec(dim=n, c=c, k=k, k_inv=np.linalg.inv(k), kk_scale=float(kk_scale))


def ad_antisymmetry_check(spec: LieAlgebraSpec) -> bool:
    """Verify c^mu_{sigma nu} k^{nu eps} = -c^eps_{sigma nu} k^{nu mu}.

    This is the contraction identity that makes eigenvectors of k gamma^{-1}
    solve the vertical equilibrium equation.
    """
    m = np.einsum("msn,ne->sme", spec.c, spec.k_inv)
    resid = np.max(np.abs(m + np.swapaxes(m, 1, 2)))
    scale = max(1.0, np.max(np.abs(spec.c)) * np.max(np.abs(spec.k_inv)))
    return bool(resid / scale < IDENTITY_TOL)


def levi_civita() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    for i, j, kk in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
        eps[i, j, kk] = 1.0
        eps[i, kk, j] = -1.0
    return eps


def so3() -> LieAlgebraSpec:
    """so(3) in the Levi-Civita basis: c^g_ab = eps_gab, k = -2 I, k_hat = I."""
    return make_algebra(levi_civita())


_NAMED = {"so3": so3, "su2": so3}


def algebra_from_config(cfg) -> LieAlgebraSpec:
    """Load an algebra from a config value.

    Accepts a registered name ("so3") or a mapping with key "c" holding the
    structure constants as nested lists, plus optional "kk_scale".
    """
    if isinstance(cfg, str):
        try:
            return _NAMED[cfg]()
        except KeyError:
            raise ValueError(f"unknown algebra name {cfg!r}; known: {sorted(set(_NAMED))}") from None
    if isinstance(cfg, dict):
        unknown = set(cfg) - {"c", "kk_scale"}
        if unknown:
            raise ValueError(f"unknown algebra config keys: {sorted(unknown)}")
        return make_algebra(np.array(cfg["c"], dtype=float), kk_scale=cfg.get("kk_scale"))
    raise ValueError("algebra config must be a name or a mapping with structure constants")

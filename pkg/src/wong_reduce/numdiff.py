"""Finite-difference derivatives of fields over a flat chart.

Default scheme is 4th-order central differences with step 1e-5 on unit-scaled
coordinates; every consumer accepts analytic overrides instead.
"""

import numpy as np

DEFAULT_STEP = 1e-5

# 4th-order central stencil: f' ~ (-f2 + 8 f1 - 8 f-1 + f-2) / 12h
_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


def directional(f, q, direction, h=DEFAULT_STEP):
    """Directional derivative of an array-valued field along a chart axis."""
    q = np.asarray(q, dtype=float)
    acc = None
    for off, w in zip(_OFFSETS, _WEIGHTS):
        qs = q.copy()
        qs[direction] += off * h
        val = w * np.asarray(f(qs), dtype=float)
        acc = val if acc is None else acc + val
    return acc / h


def field_grad(f, q, h=DEFAULT_STEP):
    """Derivative of an array-valued field along every chart axis.

    Returns an array of shape (n,) + f(q).shape with the derivative direction
    as the leading index.
    """
    q = np.asarray(q, dtype=float)
    rows = [directional(f, q, d, h=h) for d in range(q.size)]
    return np.stack(rows, axis=0)


def grad_scalar(f, q, h=DEFAULT_STEP):
    """Gradient of a scalar field as a 1-d array."""
    return np.array([directional(lambda x: float(f(x)), q, d, h=h) for d in range(np.size(q))])


def jacobian(f, q, h=DEFAULT_STEP):
    """Jacobian J[i, d] = d f_i / d q_d of a vector-valued field."""
    return field_grad(f, q, h=h).T

"""Minkowski tensor algebra on R x T^3.

Signature is fixed to (-,+,+,+), coordinates to x^0 = t and spatial
coordinates on [0, 2pi)^3.  The background is flat, so covariant
derivatives reduce to partial derivatives everywhere in this package.

All functions accept arrays with arbitrary leading batch dimensions:
a four-vector is shape (..., 4), a rank-two tensor (..., 4, 4).  Index
variance is tracked by convention in the calling code (and in names:
``_dd`` both down, ``_uu`` both up, ``_ud`` mixed first-up-second-down);
contractions are only ever formed through the helpers below, which pair
one up index with one down index.
"""

from __future__ import annotations

import numpy as np

from .errors import NotUnitTimelike

# Metric components; diag(-1, 1, 1, 1) is its own inverse.
METRIC = np.diag([-1.0, 1.0, 1.0, 1.0])
METRIC_INV = METRIC.copy()

#: diag of the metric, handy for cheap index raising/lowering
_DIAG = np.array([-1.0, 1.0, 1.0, 1.0])

UNIT_NORM_TOL = 1e-12


def lower(v):
    """Lower the last index of ``v`` (shape (..., 4))."""
    return v * _DIAG


def raise_(v):
    """Raise the last index of ``v`` (shape (..., 4))."""
    return v * _DIAG


def inner(v, w):
    """Minkowski inner product g_{ab} v^a w^b for (..., 4) arrays."""
    return np.einsum("...a,...a->...", v, w * _DIAG)


def classify(v, tol=UNIT_NORM_TOL):
    """Classify a four-vector as 'timelike', 'null', or 'spacelike'.

    The null band is |v.v| <= tol.
    """
    s = inner(v, v)
    if np.ndim(s) == 0:
        if abs(s) <= tol:
            return "null"
        return "timelike" if s < 0 else "spacelike"
    out = np.where(s < -tol, "timelike", np.where(s > tol, "spacelike", "null"))
    return out


def check_unit_timelike(u, tol=UNIT_NORM_TOL):
    """Raise NotUnitTimelike unless u.u = -1 within ``tol`` and u^0 > 0."""
    defect = np.abs(inner(u, u) + 1.0)
    if np.any(defect > tol):
        raise NotUnitTimelike(f"max |u.u + 1| = {np.max(defect):.3e} > {tol:.1e}")
    if np.any(u[..., 0] <= 0):
        raise NotUnitTimelike("u^0 must be positive (future-directed)")


def projector_dd(u, tol=UNIT_NORM_TOL):
    """Projector orthogonal to u, both indices down: Pi_{ab} = g_{ab} + u_a u_b."""
    check_unit_timelike(u, tol)
    ud = lower(u)
    return METRIC + ud[..., :, None] * ud[..., None, :]


def projector_uu(u, tol=UNIT_NORM_TOL):
    """Projector with both indices up: Pi^{ab} = g^{ab} + u^a u^b."""
    check_unit_timelike(u, tol)
    return METRIC_INV + u[..., :, None] * u[..., None, :]


def projector_ud(u, tol=UNIT_NORM_TOL):
    """Mixed projector Pi^a_b = delta^a_b + u^a u_b (first index up)."""
    check_unit_timelike(u, tol)
    ud = lower(u)
    return np.eye(4) + u[..., :, None] * ud[..., None, :]


def boost_velocity(v3):
    """Unit timelike four-velocity from a spatial 3-velocity (|v| < 1).

    Accepts shape (..., 3); returns (..., 4) with u^0 = gamma, u^i = gamma v^i.
    """
    v3 = np.asarray(v3, dtype=float)
    v2 = np.einsum("...i,...i->...", v3, v3)
    if np.any(v2 >= 1.0):
        raise NotUnitTimelike("3-velocity magnitude must be below 1")
    gamma = 1.0 / np.sqrt(1.0 - v2)
    u = np.empty(v3.shape[:-1] + (4,))
    u[..., 0] = gamma
    u[..., 1:] = gamma[..., None] * v3
    return u

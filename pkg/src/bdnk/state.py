"""Fluid state: transport model, extended first-order variables, and the
energy-momentum tensor.

The extended state bundles the 30 quantities

    Psi = (A, Q^a, S^a, S_0^b, S_1^b, S_2^b, S_3^b, theta, u^a)

built pointwise from the temperature and four-velocity together with their
first derivatives.  A is the expansion-weighted temperature scalar, Q the
heat-flux-like vector, S^a the acceleration, and S_a^b the u-orthogonal
velocity gradient (first index down, second up).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor
from .errors import DegenerateCoefficient, InvalidTransportModel, NonPositiveDensity

# Flattened component layout of the extended state vector.
IDX_A = 0
IDX_Q = slice(1, 5)
IDX_SVEC = slice(5, 9)
IDX_STEN = slice(9, 25)      # row-major: component 9 + 4*a + b holds S_a^b
IDX_THETA = 25
IDX_U = slice(26, 30)
NCOMP = 30

COMPONENT_NAMES = (
    ["A"]
    + [f"Q{a}" for a in range(4)]
    + [f"S{a}" for a in range(4)]
    + [f"St{a}{b}" for a in range(4) for b in range(4)]
    + ["theta"]
    + [f"u{a}" for a in range(4)]
)

_COEFF_FLOOR = 1e-300


def _power_law(eta0: float, power: float):
    def eta(theta):
        return eta0 * np.asarray(theta, dtype=float) ** power

    def eta_prime(theta):
        return power * eta0 * np.asarray(theta, dtype=float) ** (power - 1.0)

    return eta, eta_prime


@dataclass(frozen=True)
class TransportModel:
    """Conformal transport coefficients eta, chi = a1*eta, lambda = a2*eta.

    ``eps0`` is the constant in eps = eps0 * theta^4.  The default viscosity
    law is eta(theta) = eta0 * theta^3 (the conformal scaling); any positive
    analytic law can be supplied through ``eta_law``/``eta_prime_law``.

    Admissibility (a1 > 4 and a2 >= 3*a1/(a1-1)) is enforced at construction
    unless ``validate=False``; the causality scan deliberately constructs
    inadmissible models to map out the failure region.
    """

    eps0: float = 1.0
    eta0: float = 1.0
    a1: float = 6.0
    a2: float = 4.0
    eta_law: Callable = None
    eta_prime_law: Callable = None
    eta_law_name: str = "theta3"
    validate: bool = True

    def __post_init__(self):
        if self.eps0 <= 0:
            raise InvalidTransportModel("eps0 must be positive")
        if self.validate:
            if not self.a1 > 4:
                raise InvalidTransportModel(f"a1 = {self.a1} must exceed 4")
            bound = 3.0 * self.a1 / (self.a1 - 1.0)
            if self.a2 < bound * (1.0 - 1e-14):
                raise InvalidTransportModel(
                    f"a2 = {self.a2} must be >= 3*a1/(a1-1) = {bound}"
                )
        if (self.eta_law is None) != (self.eta_prime_law is None):
            raise InvalidTransportModel("supply eta_law and eta_prime_law together")
        if self.eta_law is None:
            law, dlaw = _power_law(self.eta0, 3.0)
            object.__setattr__(self, "eta_law", law)
            object.__setattr__(self, "eta_prime_law", dlaw)

    def eta(self, theta):
        return self.eta_law(theta)

    def eta_prime(self, theta):
        return self.eta_prime_law(theta)

    def chi(self, theta):
        return self.a1 * self.eta(theta)

    def lam(self, theta):
        return self.a2 * self.eta(theta)

    def admissibility_bound(self) -> float:
        return 3.0 * self.a1 / (self.a1 - 1.0)

    def is_admissible(self) -> bool:
        return self.a1 > 4 and self.a2 >= self.admissibility_bound() * (1 - 1e-14)

    def guard_coefficients(self, theta):
        """Raise DegenerateCoefficient if theta or a coefficient underflows."""
        theta = np.asarray(theta)
        eta = np.asarray(self.eta(theta))
        if np.any(theta < _COEFF_FLOOR) or np.any(eta < _COEFF_FLOOR):
            raise DegenerateCoefficient("theta or eta underflowed")


def theta_from_eps(eps, model: TransportModel):
    """Temperature from energy density via eps = eps0 * theta^4."""
    eps = np.asarray(eps, dtype=float)
    if np.any(eps <= 0):
        raise NonPositiveDensity(f"min eps = {np.min(eps):.3e} <= 0")
    return (eps / model.eps0) ** 0.25


def eps_from_theta(theta, model: TransportModel):
    return model.eps0 * np.asarray(theta, dtype=float) ** 4


@dataclass
class ExtendedState:
    """The 30-component first-order state, batched over leading dimensions.

    Shapes: A (...,), Q (..., 4), S_vec (..., 4), S_ten (..., 4, 4) with
    S_ten[..., a, b] = S_a^b (first index down, second up), theta (...,),
    u (..., 4).
    """

    A: np.ndarray
    Q: np.ndarray
    S_vec: np.ndarray
    S_ten: np.ndarray
    theta: np.ndarray
    u: np.ndarray

    @property
    def batch_shape(self):
        return np.shape(self.A)

    def to_vector(self):
        """Flatten into shape (..., 30) in the fixed component order."""
        out = np.empty(self.batch_shape + (NCOMP,))
        out[..., IDX_A] = self.A
        out[..., IDX_Q] = self.Q
        out[..., IDX_SVEC] = self.S_vec
        out[..., IDX_STEN] = self.S_ten.reshape(self.batch_shape + (16,))
        out[..., IDX_THETA] = self.theta
        out[..., IDX_U] = self.u
        return out

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=float)
        bs = vec.shape[:-1]
        return cls(
            A=vec[..., IDX_A],
            Q=vec[..., IDX_Q],
            S_vec=vec[..., IDX_SVEC],
            S_ten=vec[..., IDX_STEN].reshape(bs + (4, 4)),
            theta=vec[..., IDX_THETA],
            u=vec[..., IDX_U],
        )

    def to_field(self):
        """Component-major grid layout (30, ...)."""
        return np.moveaxis(self.to_vector(), -1, 0)

    @classmethod
    def from_field(cls, fld):
        return cls.from_vector(np.moveaxis(np.asarray(fld, dtype=float), 0, -1))

    def orthogonality_defects(self):
        """Max-norm violations of the built-in constraints.

        Returns dict with keys 'uu' (|u.u + 1|), 'qu' (|Q.u|), 'su' (|S.u|),
        'stu' (max of |u^a S_a^b| and |S_a^b u_b|).
        """
        ud = tensor.lower(self.u)
        uu = np.abs(tensor.inner(self.u, self.u) + 1.0)
        qu = np.abs(tensor.inner(self.Q, self.u))
        su = np.abs(tensor.inner(self.S_vec, self.u))
        left = np.abs(np.einsum("...a,...ab->...b", self.u, self.S_ten)).max(axis=-1)
        right = np.abs(np.einsum("...ab,...b->...a", self.S_ten, ud)).max(axis=-1)
        stu = np.maximum(left, right)
        return {
            "uu": float(np.max(uu)),
            "qu": float(np.max(qu)),
            "su": float(np.max(su)),
            "stu": float(np.max(stu)),
        }

    def validate(self, tol=1e-10):
        """Assert the orthogonality/normalization invariants to ``tol``."""
        defects = self.orthogonality_defects()
        bad = {k: v for k, v in defects.items() if v > tol}
        if np.any(np.asarray(self.theta) <= 0):
            bad["theta"] = float(np.min(self.theta))
        if bad:
            raise ValueError(f"extended-state invariants violated: {bad}")
        return defects


def equilibrium_state(model: TransportModel, theta=1.0, batch_shape=()):
    """Constant rest state: theta given, u = (1,0,0,0), all gradients zero."""
    th = np.broadcast_to(np.asarray(theta, dtype=float), batch_shape).copy()
    u = np.zeros(batch_shape + (4,))
    u[..., 0] = 1.0
    return ExtendedState(
        A=np.zeros(batch_shape),
        Q=np.zeros(batch_shape + (4,)),
        S_vec=np.zeros(batch_shape + (4,)),
        S_ten=np.zeros(batch_shape + (4, 4)),
        theta=th,
        u=u,
    )


def extend(theta, u, d_theta, d_u, model: TransportModel, tol=1e-10):
    """Build the extended state from (theta, u) and their first derivatives.

    ``d_theta[..., a]`` holds d_a theta and ``d_u[..., a, b]`` holds d_a u^b
    over all four coordinate directions.  The output satisfies the
    orthogonality invariants to machine precision whenever u is exactly
    unit-timelike.
    """
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u, dtype=float)
    d_theta = np.asarray(d_theta, dtype=float)
    d_u = np.asarray(d_u, dtype=float)
    tensor.check_unit_timelike(u, tol=max(tol, tensor.UNIT_NORM_TOL))

    chi = model.chi(theta)
    lam = model.lam(theta)
    ud = tensor.lower(u)
    pi_ud = np.eye(4) + u[..., :, None] * ud[..., None, :]

    dlog = d_theta / theta[..., None]
    div_u = np.einsum("...aa->...", d_u)
    u_dlog = np.einsum("...a,...a->...", u, dlog)

    A = 3.0 * chi * (u_dlog + div_u / 3.0)
    # S^b = u^a d_a u^b ; S_a^b = Pi_a^m d_m u^b
    S_vec = np.einsum("...a,...ab->...b", u, d_u)
    S_ten = np.einsum("...ma,...mb->...ab", pi_ud, d_u)
    # Q_a = lam * (Pi_a^m dlog_m + u^m d_m u_a); return Q^a
    acc_dn = tensor.lower(S_vec)
    Q_dn = lam[..., None] * (np.einsum("...ma,...m->...a", pi_ud, dlog) + acc_dn)
    Q = tensor.raise_(Q_dn)

    return ExtendedState(A=A, Q=Q, S_vec=S_vec, S_ten=S_ten, theta=theta.copy(), u=u.copy())


def reconstruct_gradients(psi: ExtendedState, model: TransportModel):
    """Invert the extended-variable definitions for the first derivatives.

    Returns (grad_log_theta, grad_u) with grad_log_theta[..., a] =
    theta^{-1} d_a theta and grad_u[..., a, b] = d_a u^b, reconstructed
    algebraically from Psi:

        theta^{-1} d_a theta = -u_a A/(3 chi) + Q_a/lam + u_a tr(S)/3 - Pi_{am} S^m
        d_a u^b              = -u_a S^b + S_a^b
    """
    theta = psi.theta
    chi = model.chi(theta)
    lam = model.lam(theta)
    ud = tensor.lower(psi.u)
    trS = np.einsum("...aa->...", psi.S_ten)
    S_dn = tensor.lower(psi.S_vec)  # Pi_{am} S^m = S_a for u-orthogonal S
    Q_dn = tensor.lower(psi.Q)

    grad_log_theta = (
        -ud * (psi.A / (3.0 * chi))[..., None]
        + Q_dn / lam[..., None]
        + ud * (trS / 3.0)[..., None]
        - S_dn
    )
    grad_u = -ud[..., :, None] * psi.S_vec[..., None, :] + psi.S_ten
    return grad_log_theta, grad_u


def shear(psi: ExtendedState):
    """Shear tensor sigma_{ab}, symmetric, traceless, u-orthogonal.

    Built from the extended variables: sigma_{ab} = S_{ab} + S_{ba}
    - (2/3) Pi_{ab} tr(S), with S_{ab} = S_a^c g_{cb}.
    """
    ud = tensor.lower(psi.u)
    pi_dd = tensor.METRIC + ud[..., :, None] * ud[..., None, :]
    S_dd = psi.S_ten * tensor._DIAG  # lower the second index
    trS = np.einsum("...aa->...", psi.S_ten)
    return S_dd + np.swapaxes(S_dd, -1, -2) - (2.0 / 3.0) * pi_dd * trS[..., None, None]


def energy_momentum(psi: ExtendedState, model: TransportModel):
    """Energy-momentum tensor T_{ab} (both indices down).

    T_{ab} = (eps + A)(u_a u_b + Pi_{ab}/3) - eta sigma_{ab} + u_a Q_b + u_b Q_a
    with eps = eps0 * theta^4.
    """
    eps = eps_from_theta(psi.theta, model)
    eta = model.eta(psi.theta)
    ud = tensor.lower(psi.u)
    Q_dn = tensor.lower(psi.Q)
    pi_dd = tensor.METRIC + ud[..., :, None] * ud[..., None, :]
    uu = ud[..., :, None] * ud[..., None, :]
    uQ = ud[..., :, None] * Q_dn[..., None, :]
    return (
        (eps + psi.A)[..., None, None] * (uu + pi_dd / 3.0)
        - eta[..., None, None] * shear(psi)
        + uQ
        + np.swapaxes(uQ, -1, -2)
    )

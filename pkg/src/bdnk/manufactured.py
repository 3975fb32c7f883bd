"""Manufactured analytic fields with exact derivatives.

A manufactured field supplies (theta, u) as explicit trigonometric
polynomials of the spacetime point, together with exact first and second
derivatives.  Two independent evaluation routes are built on top:

  * ``psi_at``/``dpsi_at`` feed the first-order machinery (extended state
    and its exact coordinate derivatives), and
  * ``direct_equations`` evaluates the two projected divergence equations
    straight from the raw field derivatives.

On any such field the first-order residual A^alpha d_alpha Psi + R must
equal (direct scalar, 3 * direct vector, 0, ..., 0); this is the gate that
pins the B tensor, the block layout, and the closed-form source terms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor
from .state import ExtendedState, TransportModel, eps_from_theta, extend

_DIAG = tensor._DIAG


@dataclass
class TrigScalar:
    """base + sum_m amp_m * sin(k_m . X + phase_m) with exact derivatives."""

    base: float
    amps: np.ndarray      # (m,)
    waves: np.ndarray     # (m, 4) covector wave numbers (k_0 = frequency)
    phases: np.ndarray    # (m,)

    def value(self, X):
        ph = np.einsum("ma,...a->...m", self.waves, np.asarray(X, dtype=float))
        return self.base + np.einsum("m,...m->...", self.amps, np.sin(ph + self.phases))

    def grad(self, X):
        ph = np.einsum("ma,...a->...m", self.waves, np.asarray(X, dtype=float))
        return np.einsum("m,ma,...m->...a", self.amps, self.waves,
                         np.cos(ph + self.phases))

    def hess(self, X):
        ph = np.einsum("ma,...a->...m", self.waves, np.asarray(X, dtype=float))
        return -np.einsum("m,ma,mb,...m->...ab", self.amps, self.waves, self.waves,
                          np.sin(ph + self.phases))


@dataclass
class ManufacturedField:
    """Temperature and spatial velocity profiles; u^0 from the unit norm."""

    theta: TrigScalar
    u_spatial: tuple      # three TrigScalar for u^1, u^2, u^3

    def theta_all(self, X):
        return self.theta.value(X), self.theta.grad(X), self.theta.hess(X)

    def u_all(self, X):
        """u^b, d_a u^b, d_a d_b u^c with u^0 = sqrt(1 + sum_i (u^i)^2)."""
        X = np.asarray(X, dtype=float)
        bs = X.shape[:-1]
        u = np.zeros(bs + (4,))
        du = np.zeros(bs + (4, 4))
        ddu = np.zeros(bs + (4, 4, 4))
        for i, f in enumerate(self.u_spatial):
            u[..., 1 + i] = f.value(X)
            du[..., :, 1 + i] = f.grad(X)
            ddu[..., :, :, 1 + i] = f.hess(X)
        u0 = np.sqrt(1.0 + np.einsum("...i,...i->...", u[..., 1:], u[..., 1:]))
        u[..., 0] = u0
        du0 = np.einsum("...i,...ai->...a", u[..., 1:], du[..., :, 1:]) / u0[..., None]
        du[..., :, 0] = du0
        ddu[..., :, :, 0] = (
            np.einsum("...bi,...ai->...ab", du[..., :, 1:], du[..., :, 1:])
            + np.einsum("...i,...abi->...ab", u[..., 1:], ddu[..., :, :, 1:])
            - du0[..., :, None] * du0[..., None, :]
        ) / u0[..., None, None]
        return u, du, ddu


def random_field(rng, theta_amp=0.06, u_amp=0.08, n_modes=2, max_wave=2):
    """Small-amplitude random trigonometric field (integer wavevectors)."""
    def scalar(base, amp):
        waves = rng.integers(-max_wave, max_wave + 1, size=(n_modes, 4)).astype(float)
        for m in range(n_modes):
            if not np.any(waves[m]):
                waves[m, 1 + rng.integers(0, 3)] = 1.0
        return TrigScalar(
            base=base,
            amps=amp * (0.3 + 0.7 * rng.random(n_modes)) / n_modes,
            waves=waves,
            phases=2.0 * np.pi * rng.random(n_modes),
        )

    return ManufacturedField(
        theta=scalar(1.0, theta_amp),
        u_spatial=tuple(scalar(0.0, u_amp) for _ in range(3)),
    )


def psi_at(field: ManufacturedField, X, model: TransportModel) -> ExtendedState:
    """Extended state at spacetime points X (..., 4)."""
    th, dth, _ = field.theta_all(X)
    u, du, _ = field.u_all(X)
    return extend(th, u, dth, du, model)


def _building_blocks(field, X, model):
    th, dth, ddth = field.theta_all(X)
    u, du, ddu = field.u_all(X)
    ud = u * _DIAG
    dud = du * _DIAG
    ddud = ddu * _DIAG
    eta = model.eta(th)
    etap = model.eta_prime(th)
    chi, lam = model.a1 * eta, model.a2 * eta
    chip, lamp = model.a1 * etap, model.a2 * etap
    return th, dth, ddth, u, du, ddu, ud, dud, ddud, eta, etap, chi, chip, lam, lamp


def dpsi_at(field: ManufacturedField, X, model: TransportModel):
    """Exact coordinate derivatives d_c Psi, shape (..., 4, 30)."""
    (th, dth, ddth, u, du, ddu, ud, dud, ddud,
     eta, etap, chi, chip, lam, lamp) = _building_blocks(field, X, model)
    bs = th.shape

    pi_ud = np.eye(4) + u[..., :, None] * ud[..., None, :]          # Pi_a^m at [m, a]?
    # NOTE index convention: pi_ud[..., m, a] = Pi^m_a = delta^m_a + u^m u_a
    dpi_ud = (du[..., :, :, None] * ud[..., None, None, :]
              + u[..., None, :, None] * dud[..., :, None, :])
    # dpi_ud[..., c, m, a] = d_c Pi^m_a

    divu = np.einsum("...aa->...", du)
    ddivu = np.einsum("...caa->...c", ddu)
    udth = np.einsum("...m,...m->...", u, dth)
    dudth = (np.einsum("...cm,...m->...c", du, dth)
             + np.einsum("...m,...cm->...c", u, ddth))

    inner = udth / th + divu / 3.0
    A = 3.0 * chi * inner
    dA = (3.0 * chip[..., None] * dth * inner[..., None]
          + 3.0 * chi[..., None] * (dudth / th[..., None]
                                    - (udth / th**2)[..., None] * dth
                                    + ddivu / 3.0))

    S = np.einsum("...m,...mb->...b", u, du)
    dS = (np.einsum("...cm,...mb->...cb", du, du)
          + np.einsum("...m,...cmb->...cb", u, ddu))

    St = np.einsum("...ma,...mb->...ab", pi_ud, du)
    dSt = (np.einsum("...cma,...mb->...cab", dpi_ud, du)
           + np.einsum("...ma,...cmb->...cab", pi_ud, ddu))

    acc_dn = np.einsum("...m,...ma->...a", u, dud)
    dacc_dn = (np.einsum("...cm,...ma->...ca", du, dud)
               + np.einsum("...m,...cma->...ca", u, ddud))
    W = np.einsum("...ma,...m->...a", pi_ud, dth) / th[..., None] + acc_dn
    dW = (np.einsum("...cma,...m->...ca", dpi_ud, dth) / th[..., None, None]
          + np.einsum("...ma,...cm->...ca", pi_ud, ddth) / th[..., None, None]
          - np.einsum("...ma,...m->...a", pi_ud, dth)[..., None, :]
          * (dth / th[..., None] ** 2)[..., :, None]
          + dacc_dn)
    Q_dn = lam[..., None] * W
    dQ_dn = lamp[..., None, None] * dth[..., :, None] * W[..., None, :] \
        + lam[..., None, None] * dW
    dQ_up = dQ_dn * _DIAG

    out = np.zeros(bs + (4, 30))
    out[..., :, 0] = dA
    out[..., :, 1:5] = dQ_up
    out[..., :, 5:9] = dS
    out[..., :, 9:25] = dSt.reshape(bs + (4, 16))
    out[..., :, 25] = dth
    out[..., :, 26:30] = du
    return out


def direct_equations(field: ManufacturedField, X, model: TransportModel):
    """Direct second-order evaluation of the projected divergence equations.

    Returns (scalar, vector) where scalar is the u-projection and vector
    the (raised) orthogonal projection, both built from raw derivatives of
    (theta, u) only.  Valid for any positive analytic viscosity law.
    """
    (th, dth, ddth, u, du, ddu, ud, dud, ddud,
     eta, etap, chi, chip, lam, lamp) = _building_blocks(field, X, model)
    eps = eps_from_theta(th, model)

    pi_uu = tensor.METRIC_INV + u[..., :, None] * u[..., None, :]
    dpi_uu = (du[..., :, :, None] * u[..., None, None, :]
              + u[..., None, :, None] * du[..., :, None, :])
    # dpi_uu[..., c, a, b] = d_c Pi^{ab}

    divu = np.einsum("...aa->...", du)
    ddivu = np.einsum("...caa->...c", ddu)

    # A and its gradient (same chain rule as the extended construction)
    udth = np.einsum("...m,...m->...", u, dth)
    dudth = (np.einsum("...cm,...m->...c", du, dth)
             + np.einsum("...m,...cm->...c", u, ddth))
    inner = udth / th + divu / 3.0
    A = 3.0 * chi * inner
    dA = (3.0 * chip[..., None] * dth * inner[..., None]
          + 3.0 * chi[..., None] * (dudth / th[..., None]
                                    - (udth / th**2)[..., None] * dth
                                    + ddivu / 3.0))

    # Q^a and its derivatives
    acc_dn = np.einsum("...m,...ma->...a", u, dud)
    dacc_dn = (np.einsum("...cm,...ma->...ca", du, dud)
               + np.einsum("...m,...cma->...ca", u, ddud))
    pi_ud = np.eye(4) + u[..., :, None] * ud[..., None, :]
    dpi_ud = (du[..., :, :, None] * ud[..., None, None, :]
              + u[..., None, :, None] * dud[..., :, None, :])
    W = np.einsum("...ma,...m->...a", pi_ud, dth) / th[..., None] + acc_dn
    dW = (np.einsum("...cma,...m->...ca", dpi_ud, dth) / th[..., None, None]
          + np.einsum("...ma,...cm->...ca", pi_ud, ddth) / th[..., None, None]
          - np.einsum("...ma,...m->...a", pi_ud, dth)[..., None, :]
          * (dth / th[..., None] ** 2)[..., :, None]
          + dacc_dn)
    Q_dn = lam[..., None] * W
    Q_up = Q_dn * _DIAG
    dQ_up = (lamp[..., None, None] * dth[..., :, None] * W[..., None, :]
             + lam[..., None, None] * dW) * _DIAG

    # shear (both up) and its divergence
    pdu = np.einsum("...am,...mb->...ab", pi_uu, du)      # Pi^{am} d_m u^b
    sig_uu = pdu + np.swapaxes(pdu, -1, -2) \
        - (2.0 / 3.0) * pi_uu * divu[..., None, None]
    dpdu = (np.einsum("...cam,...mb->...cab", dpi_uu, du)
            + np.einsum("...am,...cmb->...cab", pi_uu, ddu))
    dsig = (dpdu + np.swapaxes(dpdu, -1, -2)
            - (2.0 / 3.0) * (dpi_uu * divu[..., None, None, None]
                             + pi_uu[..., None, :, :] * ddivu[..., :, None, None]))
    div_sigma = np.einsum("...aab->...b", dsig)

    sig_dd = _DIAG[:, None] * _DIAG[None, :] * sig_uu
    sig2 = np.einsum("...ab,...ab->...", sig_uu, sig_dd)

    S_up = np.einsum("...m,...mb->...b", u, du)
    S_dn = S_up * _DIAG

    # u-projection (scalar equation)
    scalar = (
        np.einsum("...m,...m->...", u, dA)
        + (4.0 / 3.0) * A * divu
        + np.einsum("...mm->...", dQ_up)
        + np.einsum("...a,...a->...", Q_dn, S_up)
        - 0.5 * eta * sig2
        + (4.0 / 3.0) * eps / chi * A
    )

    # orthogonal projection (vector equation, index up)
    St = np.einsum("...ma,...mb->...ab", pi_ud, du)
    QdotS = np.einsum("...a,...a->...", Q_dn, S_up)
    vector = (
        np.einsum("...mb,...b->...m", pi_uu, dA) / 3.0
        + np.einsum("...a,...am->...m", u, dQ_up)
        + (4.0 / 3.0) * A[..., None] * S_up
        + (4.0 / 3.0) * (eps / lam)[..., None] * Q_up
        - eta[..., None] * div_sigma
        + 0.5 * (eta * sig2)[..., None] * u
        + (etap * th)[..., None] * (
            np.einsum("...ma,...a->...m", sig_uu, S_dn)
            - np.einsum("...ma,...a->...m", sig_uu, Q_dn) / lam[..., None]
        )
        + divu[..., None] * Q_up
        - QdotS[..., None] * u
        + np.einsum("...a,...am->...m", Q_up, St)
    )
    return scalar, vector


def first_order_target(field: ManufacturedField, X, model: TransportModel):
    """What A^alpha d_alpha Psi + R must equal on this field: rows (..., 30)."""
    scalar, vector = direct_equations(field, X, model)
    out = np.zeros(scalar.shape + (30,))
    out[..., 0] = scalar
    out[..., 1:5] = 3.0 * vector
    return out

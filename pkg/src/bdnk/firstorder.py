"""Assembly of the quasilinear first-order system.

The evolution system is  A^alpha d_alpha Psi + R(Psi) = 0  for the
30-component extended state.  This module assembles the four 30x30
principal matrices, the viscous coupling tensor B, and the closed-form
lower-order source R = (r1, r2, r3, r4, r5, r6).

The r_i closed forms were derived once by expanding the divergence
equations and the derivative-commutation identities in the extended
variables; they contain no derivatives of the state.  Their correctness
is pinned by the manufactured-field equivalence tests: on any extended
field the first-order residual must reproduce the direct second-order
evaluation of the equations of motion (rows 1-5) and vanish identically
(rows 6-30).
"""

from __future__ import annotations

import numpy as np

from . import tensor
from .errors import NearSingularA0
from .state import (
    ExtendedState,
    IDX_A,
    IDX_Q,
    IDX_STEN,
    IDX_SVEC,
    IDX_THETA,
    IDX_U,
    NCOMP,
    TransportModel,
    eps_from_theta,
    shear,
)

_EYE4 = np.eye(4)


def assemble_B(psi: ExtendedState, model: TransportModel):
    """Viscous coupling tensor B with layout B[..., nu, alpha, mu, lam].

    B_nu^{alpha mu lam} = -3 eta (delta_nu^alpha Pi^{mu lam}
                                  + delta_nu^lam Pi^{alpha mu}
                                  - (2/3) delta_nu^mu Pi^{alpha lam})
    """
    eta = np.asarray(model.eta(psi.theta))
    pi_uu = tensor.METRIC_INV + psi.u[..., :, None] * psi.u[..., None, :]
    bs = psi.batch_shape
    d_na = _EYE4.reshape((1,) * len(bs) + (4, 4, 1, 1))
    d_nl = _EYE4.reshape((1,) * len(bs) + (4, 1, 1, 4))
    d_nm = _EYE4.reshape((1,) * len(bs) + (4, 1, 4, 1))
    p_ml = pi_uu[..., None, None, :, :]
    p_am = pi_uu[..., None, :, :, None]
    p_al = pi_uu[..., None, :, None, :]
    out = d_na * p_ml + d_nl * p_am - (2.0 / 3.0) * d_nm * p_al
    out *= -3.0 * eta.reshape(bs + (1, 1, 1, 1))
    return out


def assembly_parts(psi: ExtendedState, model: TransportModel):
    """State-dependent pieces shared by the four principal matrices."""
    theta = psi.theta
    u = psi.u
    ud = tensor.lower(u)
    return {
        "theta": theta,
        "u": u,
        "chi": model.chi(theta),
        "lam": model.lam(theta),
        "pi_uu": tensor.METRIC_INV + u[..., :, None] * u[..., None, :],
        "pi_ud": _EYE4 + u[..., :, None] * ud[..., None, :],
        "B": assemble_B(psi, model),
    }


def assemble_A(psi: ExtendedState, model: TransportModel, alpha: int, parts=None):
    """Principal matrix A^alpha (..., 30, 30) for a coordinate direction."""
    if parts is None:
        parts = assembly_parts(psi, model)
    theta = parts["theta"]
    u = parts["u"]
    bs = psi.batch_shape
    chi = parts["chi"]
    lam = parts["lam"]
    pi_uu = parts["pi_uu"]
    pi_ud = parts["pi_ud"]
    B = parts["B"]

    ua = u[..., alpha]
    M = np.zeros(bs + (NCOMP, NCOMP))

    # row 0: u^al dA + delta^al_nu dQ^nu
    M[..., 0, 0] = ua
    M[..., 0, 1 + alpha] = 1.0

    # rows 1-4 (free mu): Pi^{mu al} dA + 3 u^al dQ^mu + B_nu^{mu lam al} dS_lam^nu
    M[..., 1:5, 0] = pi_uu[..., :, alpha]
    for mu in range(4):
        M[..., 1 + mu, 1 + mu] = 3.0 * ua
    # column 9 + 4*lam + nu multiplies dS_lam^nu
    M[..., 1:5, 9:25] = B[..., :, :, :, alpha].transpose(
        tuple(range(len(bs))) + (len(bs) + 1, len(bs) + 2, len(bs))
    ).reshape(bs + (4, 16))

    # rows 5-8: -Pi^{mu al}/chi dA + (3 u^al / lam) dQ^mu - 3 u^al dS^mu
    #           + Pi^{mu al} dS_nu^nu
    M[..., 5:9, 0] = -pi_uu[..., :, alpha] / chi[..., None]
    for mu in range(4):
        M[..., 5 + mu, 1 + mu] = 3.0 * ua / lam
        M[..., 5 + mu, 5 + mu] = -3.0 * ua
        for nu in range(4):
            M[..., 5 + mu, 9 + 4 * nu + nu] = pi_uu[..., mu, alpha]

    # rows 9-24: u^al dS_l^nu - Pi^al_l dS^nu
    for ell in range(4):
        for nu in range(4):
            r = 9 + 4 * ell + nu
            M[..., r, 5 + nu] = -pi_ud[..., alpha, ell]
            M[..., r, r] = ua

    # row 25: (u^al / theta) dtheta + (1/3) du^al
    M[..., 25, 25] = ua / theta
    M[..., 25, 26 + alpha] = 1.0 / 3.0

    # rows 26-29: (Pi^{mu al} / theta) dtheta + u^al du^mu
    M[..., 26:30, 25] = pi_uu[..., :, alpha] / theta[..., None]
    for mu in range(4):
        M[..., 26 + mu, 26 + mu] = ua

    return M


def assemble_symbol(psi: ExtendedState, model: TransportModel, xi):
    """Contracted principal symbol A^alpha Xi_alpha for a covector Xi."""
    xi = np.asarray(xi, dtype=float)
    out = None
    for alpha in range(4):
        coeff = xi[..., alpha]
        if np.ndim(coeff) == 0 and coeff == 0.0:
            continue
        term = assemble_A(psi, model, alpha)
        term *= np.asarray(coeff)[..., None, None]
        out = term if out is None else out + term
    if out is None:
        out = np.zeros(psi.batch_shape + (NCOMP, NCOMP))
    return out


def lower_order(psi: ExtendedState, model: TransportModel):
    """Closed-form source vector R(Psi), shape (..., 30).

    Component groups follow the state layout: r1 (scalar), r2 (4), r3 (4),
    r4 (16), r5 (scalar), r6 (4).  Purely algebraic in Psi.
    """
    theta = psi.theta
    model.guard_coefficients(theta)
    eta = model.eta(theta)
    etap = model.eta_prime(theta)
    chi = model.chi(theta)
    lam = model.lam(theta)
    eps = eps_from_theta(theta, model)

    u = psi.u
    ud = tensor.lower(u)
    A = psi.A
    Q = psi.Q
    Qd = tensor.lower(Q)
    S = psi.S_vec
    Sd = tensor.lower(S)
    St = psi.S_ten                      # S_a^b
    S_un = St * tensor._DIAG[..., :, None]  # S^{ab} = g^{ac} S_c^b

    trS = np.einsum("...aa->...", St)
    QdotS = np.einsum("...a,...a->...", Qd, S)
    SdotS = np.einsum("...a,...a->...", Sd, S)
    sig_dd = shear(psi)
    sig_uu = tensor._DIAG[:, None] * tensor._DIAG[None, :] * sig_dd
    sig2 = np.einsum("...ab,...ab->...", sig_uu, sig_dd)
    SSt = np.einsum("...ab,...ba->...", St, St)

    out = np.empty(psi.batch_shape + (NCOMP,))

    # r1
    out[..., IDX_A] = (
        (4.0 / 3.0) * eps / chi * A + (4.0 / 3.0) * A * trS + QdotS - 0.5 * eta * sig2
    )

    # r2^mu
    sigS = np.einsum("...ma,...a->...m", sig_uu, Sd)
    sigQ = np.einsum("...ma,...a->...m", sig_uu, Qd)
    QSt = np.einsum("...a,...am->...m", Q, St)       # Q^a S_a^mu
    SSt_vec = np.einsum("...am,...a->...m", St, S)   # S_a^mu S^a
    StS = np.einsum("...am,...a->...m", St, S)
    visc_low = -3.0 * eta[..., None] * (
        SSt_vec
        + u * SSt[..., None]
        - (2.0 / 3.0) * (trS**2)[..., None] * u
        - (2.0 / 3.0) * trS[..., None] * S
    )
    out[..., IDX_Q] = (
        4.0 * A[..., None] * S
        + (4.0 * eps / lam)[..., None] * Q
        + 1.5 * (eta * sig2)[..., None] * u
        + 3.0 * (etap * theta)[..., None] * sigS
        - (3.0 * etap * theta / lam)[..., None] * sigQ
        + 3.0 * trS[..., None] * Q
        - 3.0 * QdotS[..., None] * u
        + 3.0 * QSt
        + visc_low
    )

    # r3^a
    P = A / (3.0 * chi) - trS / 3.0
    lam_ratio = etap * theta / (model.a2 * eta**2)   # lam'(theta)*theta / lam^2
    chi_ratio = etap * theta / (model.a1 * eta**2)   # chi'(theta)*theta / chi^2
    QS_un = np.einsum("...a,...ma->...m", Qd, S_un)  # Q_b S^{mb}
    SS_un = np.einsum("...a,...ma->...m", Sd, S_un)
    out[..., IDX_SVEC] = 3.0 * (
        -P[..., None] * S
        + SdotS[..., None] * u
        - (QdotS / lam)[..., None] * u
        - (lam_ratio * P)[..., None] * Q
        + (A * chi_ratio / 3.0)[..., None] * (Q / lam[..., None] - S)
        + QS_un / lam[..., None]
        - SS_un
    )

    # r4_a^b = S_m^b S_a^m - S_a S^b - u_a S_m^b S^m
    StSt = np.einsum("...mb,...am->...ab", St, St)
    StS_b = np.einsum("...mb,...m->...b", St, S)     # S_m^b S^m
    r4 = (
        StSt
        - Sd[..., :, None] * S[..., None, :]
        - ud[..., :, None] * StS_b[..., None, :]
    )
    out[..., IDX_STEN] = r4.reshape(psi.batch_shape + (16,))

    # r5, r6
    out[..., IDX_THETA] = -A / (3.0 * chi)
    out[..., IDX_U] = -Q / lam[..., None]

    return out


def principal_action(psi: ExtendedState, model: TransportModel, d_psi):
    """A^alpha d_alpha Psi for derivative stack d_psi[..., alpha, comp]."""
    d_psi = np.asarray(d_psi, dtype=float)
    acc = np.zeros(psi.batch_shape + (NCOMP,))
    for alpha in range(4):
        M = assemble_A(psi, model, alpha)
        acc += np.einsum("...ij,...j->...i", M, d_psi[..., alpha, :])
    return acc


def first_order_residual(psi: ExtendedState, model: TransportModel, d_psi):
    """A^alpha d_alpha Psi + R(Psi); zero on exact solutions."""
    return principal_action(psi, model, d_psi) + lower_order(psi, model)


def min_singular_value_A0(psi: ExtendedState, model: TransportModel):
    """Smallest singular value of A^0 over the batch (for regime monitoring)."""
    A0 = assemble_A(psi, model, 0)
    svals = np.linalg.svd(A0, compute_uv=False)
    return float(np.min(svals[..., -1]))


def reduced_rhs(
    psi: ExtendedState,
    model: TransportModel,
    spatial_d_psi,
    check_singular: bool = True,
    singular_floor: float = 1e-8,
):
    """Right-hand side of the reduced system d_t Psi = -(A^0)^{-1}(A^i d_i Psi + R).

    ``spatial_d_psi[..., i, comp]`` holds d_i Psi for i = 1..3 (stack index
    0..2).  ``check_singular`` performs the batched singular-value guard on
    A^0; the evolution loop disables it per stage and instead monitors at
    the diagnostic cadence.
    """
    spatial_d_psi = np.asarray(spatial_d_psi, dtype=float)
    parts = assembly_parts(psi, model)
    v = lower_order(psi, model)
    for i in range(3):
        Ai = assemble_A(psi, model, i + 1, parts=parts)
        v += np.einsum("...ij,...j->...i", Ai, spatial_d_psi[..., i, :])
    A0 = assemble_A(psi, model, 0, parts=parts)
    if check_singular:
        svals = np.linalg.svd(A0, compute_uv=False)
        smin = float(np.min(svals[..., -1]))
        if smin < singular_floor:
            raise NearSingularA0(
                f"min singular value of A^0 = {smin:.3e} < {singular_floor:.1e}"
            )
    try:
        rhs = -np.linalg.solve(A0, v[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:  # exactly singular somewhere
        raise NearSingularA0(str(exc)) from None
    return rhs


def divT_residual(psi_states, times, model: TransportModel, spectral_derivative,
                  time_order: int = 4):
    """Numeric divergence d_alpha T^alpha_beta along a trajectory.

    ``psi_states`` is a sequence of ExtendedState on the same spatial grid
    at uniformly spaced ``times``; ``spectral_derivative(f, i)``
    differentiates a scalar grid array along spatial axis i.  Time
    derivatives use central differences of the requested order (2 or 4);
    snapshots too close to the ends for the stencil get NaN.  Returns an
    array (n_times, 4, ...) of the four divergence components.
    """
    from .state import energy_momentum

    times = np.asarray(times, dtype=float)
    nts = len(psi_states)
    half = time_order // 2
    if time_order not in (2, 4):
        raise ValueError("time_order must be 2 or 4")
    if nts < 2 * half + 1:
        raise ValueError("not enough snapshots for the time stencil")
    dts = np.diff(times)
    dt = dts[0]
    if np.max(np.abs(dts - dt)) > 1e-10 * max(abs(dt), 1e-30):
        raise ValueError("divT residual requires uniform snapshot spacing")

    # T^alpha_beta = g^{alpha c} T_{c beta}; [..., alpha, beta]
    T_mixed = np.asarray(
        [tensor._DIAG[:, None] * energy_momentum(psi, model) for psi in psi_states]
    )

    out = np.full((nts, 4) + psi_states[0].batch_shape, np.nan)
    for n in range(half, nts - half):
        T0 = T_mixed[..., 0, :]  # (nt, ..., beta)
        if time_order == 2:
            dT0 = (T0[n + 1] - T0[n - 1]) / (2.0 * dt)
        else:
            dT0 = (8.0 * (T0[n + 1] - T0[n - 1]) - (T0[n + 2] - T0[n - 2])) / (12.0 * dt)
        div = dT0.copy()
        for i in range(3):
            Ti = T_mixed[n][..., i + 1, :]
            for beta in range(4):
                div[..., beta] += spectral_derivative(Ti[..., beta], i)
        out[n] = np.moveaxis(div, -1, 0)
    return out

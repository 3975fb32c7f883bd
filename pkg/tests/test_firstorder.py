import numpy as np
import pytest

from bdnk import firstorder, manufactured, tensor
from bdnk.errors import DegenerateCoefficient, NearSingularA0
from bdnk.firstorder import (
    assemble_A,
    assemble_B,
    assemble_symbol,
    first_order_residual,
    lower_order,
    principal_action,
    reduced_rhs,
)
from bdnk.state import ExtendedState, TransportModel, equilibrium_state


def _structural_mask(model):
    """Entries of A^alpha that can ever be nonzero, from random states."""
    rng = np.random.default_rng(1)
    mask = np.zeros((30, 30), dtype=bool)
    for _ in range(8):
        psi = equilibrium_state(model, theta=0.5 + rng.random())
        psi.u[:] = tensor.boost_velocity(rng.uniform(-0.5, 0.5, 3))
        for alpha in range(4):
            mask |= assemble_A(psi, model, alpha) != 0.0
    return mask


def test_B_rest_frame_value(model):
    m = TransportModel(eps0=1.0, eta0=1.0, a1=6.0, a2=4.0)
    psi = equilibrium_state(m, theta=1.0)  # eta(1) = 1
    B = assemble_B(psi, m)
    # at rest Pi^{ab} = diag(0,1,1,1): B_0^{011} = -3 (only the first term fires)
    assert B[0, 0, 1, 1] == pytest.approx(-3.0, abs=1e-15)
    # eta = 0 kills B entirely
    m0 = TransportModel(eps0=1.0, eta0=0.0, a1=6.0, a2=4.0)
    psi0 = equilibrium_state(m0, theta=1.0)
    assert np.all(assemble_B(psi0, m0) == 0.0)


def test_B_u_contraction_two_routes(model, rng):
    # B_nu^{a mu lam} u_a = -3 eta u_nu Pi^{mu lam} since Pi^{a.} u_a = 0
    psi = equilibrium_state(model, theta=1.4)
    psi.u[:] = tensor.boost_velocity([0.3, -0.2, 0.4])
    B = assemble_B(psi, model)
    ud = tensor.lower(psi.u)
    lhs = np.einsum("naml,a->nml", B, ud)
    eta = float(model.eta(psi.theta))
    pi_uu = tensor.projector_uu(psi.u)
    rhs = -3.0 * eta * ud[:, None, None] * pi_uu[None, :, :]
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_A_block_sparsity(model, rng):
    mask = _structural_mask(model)
    for _ in range(5):
        psi = equilibrium_state(model, theta=0.5 + rng.random())
        psi.u[:] = tensor.boost_velocity(rng.uniform(-0.6, 0.6, 3))
        for alpha in range(4):
            M = assemble_A(psi, model, alpha)
            assert np.all(M[~mask] == 0.0)
    # the structurally-zero region is exactly the complement of the printed
    # blocks; spot-check a few always-zero couplings
    assert not mask[0, 25]       # scalar row never couples to theta
    assert not mask[0, 5]        # nor to the acceleration block
    assert not mask[25, 0]       # theta row never couples to A
    assert not mask[9, 1]        # S-block rows never couple to Q


def test_A0_rest_equilibrium_determinant(model):
    for theta in (1.0, 0.7, 1.9):
        psi = equilibrium_state(model, theta=theta)
        A0 = assemble_A(psi, model, 0)
        det = np.linalg.det(A0)
        assert det == pytest.approx(6561.0 / theta, rel=1e-10)


def test_A_rest_equilibrium_S_rows(model):
    psi = equilibrium_state(model, theta=1.0)
    A0 = assemble_A(psi, model, 0)
    # S-block rows: u^0 I on the diagonal, -Pi^0_l = 0 coupling at rest
    assert np.allclose(A0[9:25, 9:25], np.eye(16), atol=1e-15)
    assert np.all(A0[9:25, 5:9] == 0.0)


def test_symbol_invertible_timelike(model, rng):
    for _ in range(10):
        psi = equilibrium_state(model, theta=0.5 + 1.5 * rng.random())
        psi.u[:] = tensor.boost_velocity(rng.uniform(-0.55, 0.55, 3))
        xi = np.array([1.0, *rng.uniform(-0.4, 0.4, 3)])  # timelike covector
        M = assemble_symbol(psi, model, xi)
        s = np.linalg.svd(M, compute_uv=False)
        assert s[-1] > 1e-6
        assert np.isfinite(s[0] / s[-1])


def test_lower_order_equilibrium_zero(model):
    psi = equilibrium_state(model, theta=1.3)
    assert np.max(np.abs(lower_order(psi, model))) == 0.0


def test_lower_order_pure_A(model):
    # rest state with only A nonzero: r1 = (4/(3 chi)) eps0 theta^4 A,
    # r5 = -A/(3 chi), everything else zero
    psi = equilibrium_state(model, theta=1.2)
    psi.A = np.asarray(0.61)
    r = lower_order(psi, model)
    chi = float(model.chi(1.2))
    eps = float(model.eps0) * 1.2**4
    assert r[0] == pytest.approx(4.0 / 3.0 * eps / chi * 0.61, rel=1e-13)
    assert np.max(np.abs(r[1:25])) == 0.0
    assert r[25] == pytest.approx(-0.61 / (3.0 * chi), rel=1e-13)
    assert np.max(np.abs(r[26:])) == 0.0


def test_lower_order_degenerate_coefficient(model):
    psi = equilibrium_state(model, theta=1e-200)  # eta = theta^3 underflows
    with pytest.raises(DegenerateCoefficient):
        lower_order(psi, model)


def test_reduction_equivalence(model, rng):
    """First-order residual == direct second-order evaluation (the core gate)."""
    worst = 0.0
    for _ in range(5):
        field = manufactured.random_field(rng)
        X = rng.uniform(0, 2 * np.pi, size=(10, 4))
        psi = manufactured.psi_at(field, X, model)
        dpsi = manufactured.dpsi_at(field, X, model)
        res = first_order_residual(psi, model, dpsi)
        target = manufactured.first_order_target(field, X, model)
        worst = max(worst, float(np.max(np.abs(res - target))))
    assert worst < 1e-8


def test_reduction_equivalence_general_eta(rng):
    law = lambda th: 0.3 * (np.asarray(th) ** 2 + np.asarray(th) ** 4)
    dlaw = lambda th: 0.3 * (2 * np.asarray(th) + 4 * np.asarray(th) ** 3)
    model = TransportModel(eps0=1.1, a1=7.0, a2=4.5, eta_law=law,
                           eta_prime_law=dlaw, eta_law_name="mixed")
    field = manufactured.random_field(rng)
    X = rng.uniform(0, 2 * np.pi, size=(10, 4))
    psi = manufactured.psi_at(field, X, model)
    dpsi = manufactured.dpsi_at(field, X, model)
    res = first_order_residual(psi, model, dpsi)
    target = manufactured.first_order_target(field, X, model)
    assert np.max(np.abs(res - target)) < 1e-8


def test_projection_rows_vanish_identically(model, rng):
    # rows derived from the variable definitions and commutation identities
    # are identities on extended fields
    field = manufactured.random_field(rng)
    X = rng.uniform(0, 2 * np.pi, size=(15, 4))
    psi = manufactured.psi_at(field, X, model)
    dpsi = manufactured.dpsi_at(field, X, model)
    res = first_order_residual(psi, model, dpsi)
    assert np.max(np.abs(res[..., 5:])) < 1e-10


def test_principal_part_linear_in_derivatives(model, rng):
    field = manufactured.random_field(rng)
    X = rng.uniform(0, 2 * np.pi, size=(6, 4))
    psi = manufactured.psi_at(field, X, model)
    dpsi = manufactured.dpsi_at(field, X, model)
    assert np.array_equal(
        principal_action(psi, model, 2.0 * dpsi),
        2.0 * principal_action(psi, model, dpsi),
    )


def test_reduced_rhs_equilibrium_and_roundtrip(model, rng):
    psi = equilibrium_state(model, theta=1.0, batch_shape=(4,))
    zeros = np.zeros((4, 3, 30))
    assert np.max(np.abs(reduced_rhs(psi, model, zeros))) == 0.0

    field = manufactured.random_field(rng)
    X = rng.uniform(0, 2 * np.pi, size=(8, 4))
    psi = manufactured.psi_at(field, X, model)
    dpsi = manufactured.dpsi_at(field, X, model)
    d_spatial = dpsi[..., 1:, :]
    rhs = reduced_rhs(psi, model, d_spatial)
    # definitional round-trip: A^0 rhs + A^i d_i Psi + R = 0
    back = np.einsum("...ij,...j->...i", assemble_A(psi, model, 0), rhs)
    back += lower_order(psi, model)
    for i in range(3):
        Ai = assemble_A(psi, model, i + 1)
        back += np.einsum("...ij,...j->...i", Ai, d_spatial[..., i, :])
    assert np.max(np.abs(back)) < 1e-10


def test_reduced_rhs_singular_guard(model):
    psi = equilibrium_state(model, theta=1.0, batch_shape=(2,))
    zeros = np.zeros((2, 3, 30))
    with pytest.raises(NearSingularA0):
        reduced_rhs(psi, model, zeros, singular_floor=1e6)


def test_divT_negative_control(model, rng):
    # a manufactured non-solution has O(1) divergence, not small
    from bdnk.grid import TorusGrid, spectral_derivative

    N = 16
    grid = TorusGrid(N)
    field = manufactured.random_field(rng, theta_amp=0.2, u_amp=0.2)
    X4 = np.zeros((N, N, N, 4))
    X4[..., 1], X4[..., 2], X4[..., 3] = grid.coordinate_mesh()
    dt = 0.01
    states, times = [], []
    for n in range(5):
        Xt = X4.copy()
        Xt[..., 0] = n * dt
        states.append(manufactured.psi_at(field, Xt, model))
        times.append(n * dt)
    res = firstorder.divT_residual(
        states, times, model, lambda f, i: spectral_derivative(f, i, grid),
        time_order=4,
    )
    mid = res[2]
    assert np.max(np.abs(mid)) > 1e-2

import numpy as np
import pytest
import scipy.linalg as sla

from bdnk import characteristics as ch
from bdnk import firstorder, tensor
from bdnk.errors import ComplexRoots, DefectiveCluster
from bdnk.state import TransportModel, equilibrium_state


def _boosted(model, theta, v):
    psi = equilibrium_state(model, theta=theta)
    psi.u[:] = tensor.boost_velocity(v)
    return psi


def test_projections_rest_frame(model):
    u = np.array([1.0, 0, 0, 0])
    p = ch.projections(u, np.array([1.0, 0, 0, 0]))
    assert p.b == pytest.approx(1.0) and np.max(np.abs(p.a_up)) == 0.0
    p = ch.projections(u, np.array([0.0, 1, 0, 0]))
    assert p.b == 0.0 and p.a_sq == pytest.approx(1.0)


def test_projection_identity_boosted(rng):
    s = 0.5
    u = np.array([np.cosh(s), np.sinh(s), 0.0, 0.0])
    for _ in range(20):
        Xi = rng.standard_normal(4)
        p = ch.projections(u, Xi)
        xi_sq = float(np.sum(tensor.raise_(Xi) * Xi))
        assert p.a_sq == pytest.approx(xi_sq + p.b**2, abs=1e-12 * (1 + abs(p.a_sq)))


def test_factor_identity_H_contraction(model, rng):
    for _ in range(20):
        psi = _boosted(model, 0.5 + 1.5 * rng.random(), rng.uniform(-0.5, 0.5, 3))
        Xi = rng.standard_normal(4)
        q = ch.factor_quantities(psi.u, psi.theta, model, Xi)
        lam = float(model.lam(psi.theta))
        eta = float(model.eta(psi.theta))
        lhs = float(q.H_dn @ q.a_up)
        rhs = (lam + eta) / lam * q.F * q.a_sq + q.kappa
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_det_symbol_rest_equilibrium(model):
    psi = equilibrium_state(model, theta=1.0)
    assert ch.det_symbol(psi, model, np.array([1.0, 0, 0, 0])) == pytest.approx(
        6561.0, rel=1e-12
    )
    # purely spatial Xi at rest: b = 0 kills the determinant
    assert ch.det_symbol(psi, model, np.array([0.0, 1, 0, 0])) == 0.0


def test_det_symbol_matches_numeric(model, rng):
    worst = 0.0
    for _ in range(50):
        a1 = 4.0 + 6.0 * rng.random()
        a2 = 3.0 * a1 / (a1 - 1.0) + 4.0 * rng.random()
        m = TransportModel(eps0=1.0, eta0=0.5 + rng.random(), a1=a1, a2=a2)
        psi = _boosted(m, 0.5 + 1.5 * rng.random(), 0.5 * rng.uniform(-1, 1, 3))
        Xi = rng.standard_normal(4)
        closed = ch.det_symbol(psi, m, Xi)
        sign, logabs = np.linalg.slogdet(firstorder.assemble_symbol(psi, m, Xi))
        assert np.sign(closed) == sign
        worst = max(worst, abs(np.log(abs(closed)) - logabs))
    assert worst < 1e-8


def test_quartic_ratios_examples():
    # boundary model: a2 = 3 a1/(a1-1) with a1 = 5 -> fastest ratio exactly 1
    lo, hi = ch.quartic_ratios(TransportModel(a1=5.0, a2=3.75))
    assert hi == pytest.approx(1.0, abs=1e-12)
    # reference model (eta, chi, lam) = (1, 6, 4)
    lo, hi = ch.quartic_ratios(TransportModel(a1=6.0, a2=4.0))
    assert lo == pytest.approx(0.03852, abs=1e-5)
    assert hi == pytest.approx(0.96148, abs=1e-5)
    # independent oracle: roots of the printed quadratic in b^2/a.a
    eta, chi, lam = 1.0, 6.0, 4.0
    poly = np.roots([9 * lam * chi, -6 * (lam + 2 * eta) * chi,
                     lam * (chi - 4 * eta)])
    assert sorted(poly) == pytest.approx(sorted([lo, hi]), rel=1e-12)


def test_characteristic_roots_rest_frame(model):
    psi = equilibrium_state(model, theta=1.0)
    for k in (1.0, 1.5):
        pair = ch.CovectorPair(zeta=np.array([0.0, k, 0, 0]))
        roots = ch.characteristic_roots(psi, model, pair)
        assert roots.lambda1 == pytest.approx(0.0, abs=1e-15)
        assert roots.lambda2[1] == pytest.approx(k / np.sqrt(3.0), rel=1e-12)
        assert roots.lambda2[0] == pytest.approx(-k / np.sqrt(3.0), rel=1e-12)
        assert roots.lambda3[1] == pytest.approx(k * 0.5, rel=1e-12)  # sqrt(1/4)
        mults = sum(m for _, m in roots.all_roots())
        assert mults == 30


def test_roots_match_pencil_boosted(model, rng):
    worst = 0.0
    for _ in range(25):
        a1 = 4.0 + 6.0 * rng.random()
        a2 = 3.0 * a1 / (a1 - 1.0) + 4.0 * rng.random()
        m = TransportModel(eta0=0.5 + rng.random(), a1=a1, a2=a2)
        v = rng.uniform(-1, 1, 3)
        v *= 0.9 * rng.random() / max(np.linalg.norm(v), 1e-12)
        psi = _boosted(m, 0.5 + 1.5 * rng.random(), v)
        z = rng.standard_normal(3)
        z /= np.linalg.norm(z)
        pair = ch.CovectorPair(zeta=np.array([0.0, *z]))
        closed = ch.characteristic_roots(psi, m, pair).flattened()
        A0 = firstorder.assemble_A(psi, m, 0)
        Az = firstorder.assemble_symbol(psi, m, pair.zeta)
        ev = sla.eig(Az, -A0, right=False)
        assert np.max(np.abs(ev.imag)) < 1e-9 * (1 + np.max(np.abs(ev.real)))
        pencil = np.sort(ev.real)
        worst = max(worst, np.max(np.abs(closed - pencil) / (1 + np.abs(closed))))
    assert worst < 1e-9


def test_check_causality_examples():
    rep = ch.check_causality(TransportModel(a1=3.0, a2=10.0, validate=False))
    assert not rep.admissible
    assert any("chi > 4 eta" in f for f in rep.failures)

    rep = ch.check_causality(TransportModel(a1=5.0, a2=3.75))
    assert rep.admissible
    assert rep.max_speed_ratio == pytest.approx(1.0, abs=1e-10)

    rep = ch.check_causality(TransportModel(a1=6.0, a2=4.0))
    assert rep.admissible
    assert rep.max_speed_ratio == pytest.approx(0.96148, abs=1e-5)


def test_causality_boundary_strictness(rng):
    # strictly above the bound: max ratio strictly below 1
    for _ in range(20):
        a1 = 4.0 + 6.0 * rng.random()
        bound = 3.0 * a1 / (a1 - 1.0)
        rep = ch.check_causality(TransportModel(a1=a1, a2=bound * 1.05))
        assert rep.admissible and rep.max_speed_ratio < 1.0 - 1e-12
        rep_b = ch.check_causality(TransportModel(a1=a1, a2=bound))
        assert rep_b.max_speed_ratio == pytest.approx(1.0, abs=1e-10)


def test_rest_frame_speeds_examples():
    speeds = ch.rest_frame_speeds(TransportModel(a1=6.0, a2=4.0))
    assert speeds == pytest.approx([0.0, 0.19627, 0.5, 0.57735, 0.98055], abs=1e-5)
    assert max(ch.rest_frame_speeds(TransportModel(a1=5.0, a2=3.75))) == pytest.approx(
        1.0, abs=1e-12
    )
    # eta/lam = 1/3 merges the shear and sound families
    degen = ch.rest_frame_speeds(TransportModel(a1=13.0, a2=3.0, validate=False))
    assert len(degen) == 4


def test_complex_roots_guard():
    u = np.array([1.0, 0, 0, 0])
    pair = ch.CovectorPair()
    with pytest.raises(ComplexRoots):
        ch.beta_family_roots(u, pair, -1.0)


def test_diagonalize_rest_frame_multiplicities(model):
    psi = equilibrium_state(model, theta=1.0)
    res = ch.diagonalize(psi, model, ch.CovectorPair())
    mults = sorted((round(val, 6), m) for val, m, _ in res.clusters)
    assert [m for _, m in mults] == [1, 1, 3, 1, 18, 1, 3, 1, 1]
    assert res.residual < 1e-8
    assert res.min_singular_value > 1e-8
    methods = {meth for _, m, meth in res.clusters if m == 18}
    assert methods == {"closed-form-18"}
    shear_methods = {meth for _, m, meth in res.clusters if m == 3}
    assert shear_methods == {"closed-form-shear"}


def test_diagonalize_similarity(model):
    psi = _boosted(model, 1.2, [0.25, -0.15, 0.1])
    res = ch.diagonalize(psi, model, ch.CovectorPair(zeta=np.array([0.0, 0.6, 0.8, 0.0])))
    D2 = res.S @ res.A_tilde @ np.linalg.inv(res.S)
    off = D2 - np.diag(np.diag(D2))
    assert np.max(np.abs(off)) < 1e-7
    assert np.max(np.abs(np.diag(D2) - res.eigenvalues)) < 1e-7


def test_diagonalize_eigenvalues_match_roots(model):
    psi = _boosted(model, 1.0, [0.4, 0.0, 0.0])
    pair = ch.CovectorPair(zeta=np.array([0.0, 1.0, 0.0, 0.0]))
    roots = ch.characteristic_roots(psi, model, pair)
    res = ch.diagonalize(psi, model, pair)
    assert np.sort(res.eigenvalues) == pytest.approx(
        np.sort(-roots.flattened()), rel=1e-10, abs=1e-10
    )


def test_diagonalize_degenerate_merge():
    m = TransportModel(a1=13.0, a2=3.0, validate=False)
    psi = equilibrium_state(m, theta=1.0)
    res = ch.diagonalize(psi, m, ch.CovectorPair())
    mults = [mult for _, mult, _ in res.clusters]
    assert sum(mults) == 30
    assert 4 in mults            # shear+sound merged cluster
    assert res.residual < 1e-8
    assert res.min_singular_value > 1e-8


def test_nullspace_defective_guard():
    with pytest.raises(DefectiveCluster):
        ch._nullspace(np.eye(30), 1)


def test_covector_pair_validation():
    with pytest.raises(ValueError):
        ch.CovectorPair(xi=np.array([0.0, 1, 0, 0]))
    with pytest.raises(ValueError):
        ch.CovectorPair(zeta=np.array([1.0, 0, 0, 0]))


def test_max_speed_vs_dense_sampling(model, rng):
    psi = _boosted(model, 1.0, [0.5, 0.2, -0.3])
    s26 = ch.max_characteristic_speed(psi.u, psi.theta, model)
    phi = rng.uniform(0, 2 * np.pi, 2000)
    cz = rng.uniform(-1, 1, 2000)
    sz = np.sqrt(1 - cz**2)
    dirs = np.stack([sz * np.cos(phi), sz * np.sin(phi), cz], axis=1)
    dense = ch.max_characteristic_speed(psi.u, psi.theta, model, directions=dirs)
    assert abs(s26 - dense) <= 0.05 * dense

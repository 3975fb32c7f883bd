"""Closed-form characteristic analysis of the first-order system.

For a covector Xi = zeta + Lambda*xi the principal symbol A^alpha Xi_alpha
has determinant

    (9 b^18 / theta) G^3 F (F G - F (lam+eta)/lam a.a - kappa)

in terms of the projections b = u^alpha Xi_alpha and a^alpha = Pi^{alpha mu}
Xi_mu.  Setting it to zero yields four root families:

  * Lambda_1 (b = 0), multiplicity 18,
  * Lambda_2+- (sound type, b^2 = a.a/3), multiplicity 1 each,
  * Lambda_3+- (shear type, b^2 = (eta/lam) a.a), multiplicity 3 each,
  * four quartic roots with b^2/a.a the two roots of
    9 lam chi t^2 - 6 (lam+2 eta) chi t + lam (chi - 4 eta) = 0.

All of these reduce to the same quadratic in Lambda, b^2 = beta * a.a,
solved here in closed form.  Causality of the model is equivalent to all
beta ratios lying in (0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor
from .errors import ComplexRoots, DefectiveCluster
from .firstorder import assemble_A, assemble_B, assemble_symbol
from .state import ExtendedState, TransportModel, equilibrium_state

_DISCRIMINANT_TOL = 1e-12
CLUSTER_RTOL = 1e-8


@dataclass(frozen=True)
class CovectorPair:
    """Timelike direction xi and spacelike direction zeta (covectors)."""

    xi: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    zeta: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0, 0.0]))

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        zeta = np.asarray(self.zeta, dtype=float)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "zeta", zeta)
        if tensor.classify(tensor.raise_(xi)) != "timelike":
            raise ValueError("xi must be timelike")
        if tensor.classify(tensor.raise_(zeta)) != "spacelike":
            raise ValueError("zeta must be spacelike")

    def covector(self, lam):
        """Xi = zeta + Lambda * xi for scalar or array Lambda."""
        lam = np.asarray(lam, dtype=float)
        return self.zeta + lam[..., None] * self.xi


@dataclass
class ProjectionScalars:
    """Projections of a covector Xi along and orthogonal to u."""

    a_up: np.ndarray     # a^alpha = Pi^{alpha mu} Xi_mu
    b: np.ndarray        # b = u^alpha Xi_alpha
    a_sq: np.ndarray     # a^mu a_mu = Pi^{mu nu} Xi_mu Xi_nu


def projections(u, xi_cov) -> ProjectionScalars:
    """Split a covector into u-parallel and u-orthogonal parts."""
    xi_cov = np.asarray(xi_cov, dtype=float)
    pi_uu = tensor.projector_uu(u)
    a_up = np.einsum("...am,...m->...a", pi_uu, xi_cov)
    b = np.einsum("...a,...a->...", u, xi_cov)
    a_sq = np.einsum("...am,...a,...m->...", pi_uu, xi_cov, xi_cov)
    return ProjectionScalars(a_up=a_up, b=b, a_sq=a_sq)


@dataclass
class FactorQuantities:
    """Scalars and small tensors entering the determinant factorization."""

    b: np.ndarray
    a_up: np.ndarray
    a_dn: np.ndarray
    a_sq: np.ndarray
    F: np.ndarray
    G: np.ndarray
    kappa: np.ndarray
    E_ud: np.ndarray     # E^mu_nu
    d_dn: np.ndarray     # d_nu
    c_up: np.ndarray     # c^mu
    h_ud: np.ndarray     # h^mu_nu
    H_dn: np.ndarray     # H_nu


def factor_quantities(u, theta, model: TransportModel, xi_cov) -> FactorQuantities:
    """Evaluate the auxiliary quantities of the determinant factorization."""
    proj = projections(u, xi_cov)
    a_up, b, a_sq = proj.a_up, proj.b, proj.a_sq
    a_dn = tensor.lower(a_up)
    eta = model.eta(theta)
    lam = model.lam(theta)
    chi = model.chi(theta)
    xi_cov = np.asarray(xi_cov, dtype=float)

    F = 3.0 * b**2 - a_sq
    G = 3.0 * (b**2 - a_sq * eta / lam)
    kappa = 4.0 * eta * (lam + chi) / (lam * chi) * a_sq**2
    eye = np.eye(4)
    E_ud = -3.0 * eta[..., None, None] * (
        a_sq[..., None, None] * eye
        + a_up[..., :, None] * xi_cov[..., None, :]
        - (2.0 / 3.0) * a_up[..., :, None] * a_dn[..., None, :]
    )
    d_dn = -2.0 * eta[..., None] * a_sq[..., None] * (a_dn - 3.0 * xi_cov)
    c_up = ((lam + chi) / (lam * chi))[..., None] * a_up
    h_ud = (
        3.0 * (b**2)[..., None, None] * eye
        - a_up[..., :, None] * a_dn[..., None, :]
        + E_ud / lam[..., None, None]
    )
    H_dn = F[..., None] * (
        ((lam - 2.0 * eta) / lam)[..., None] * a_dn
        + (3.0 * eta / lam)[..., None] * xi_cov
    ) + ((lam + chi) / (lam * chi))[..., None] * d_dn
    return FactorQuantities(
        b=b, a_up=a_up, a_dn=a_dn, a_sq=a_sq, F=F, G=G, kappa=kappa,
        E_ud=E_ud, d_dn=d_dn, c_up=c_up, h_ud=h_ud, H_dn=H_dn,
    )


def det_symbol(psi: ExtendedState, model: TransportModel, xi_cov):
    """Closed-form determinant of the contracted symbol A^alpha Xi_alpha."""
    q = factor_quantities(psi.u, psi.theta, model, xi_cov)
    eta = model.eta(psi.theta)
    lam = model.lam(psi.theta)
    tail = q.F * q.G - q.F * (lam + eta) / lam * q.a_sq - q.kappa
    return 9.0 * q.b**18 / psi.theta * q.G**3 * q.F * tail


def quartic_ratios(model: TransportModel):
    """The two values of b^2/a.a solving the quartic factor (theta-free).

    Roots of 9 a2 a1 t^2 - 6 (a2 + 2) a1 t + a2 (a1 - 4) = 0, i.e.

        t = ((a2 + 2) a1 +- 2 sqrt(a1 (a2^2 + a1 + a2 a1))) / (3 a2 a1).
    """
    a1, a2 = model.a1, model.a2
    disc = a1 * (a2**2 + a1 + a2 * a1)
    if disc < 0:
        raise ComplexRoots("negative discriminant in quartic speed ratios")
    root = 2.0 * np.sqrt(disc)
    return (
        ((a2 + 2.0) * a1 - root) / (3.0 * a2 * a1),
        ((a2 + 2.0) * a1 + root) / (3.0 * a2 * a1),
    )


def beta_family_roots(u, pair: CovectorPair, beta):
    """The two roots of b(Lambda)^2 = beta * a(Lambda).a(Lambda).

    With b = u.zeta + Lambda u.xi and a.a = Xi.Xi + b^2 this is the
    quadratic (1-beta) b^2 = beta Xi.Xi in Lambda, solved exactly:

        [(1-b) (u.xi)^2 - b xi.xi] L^2
        + 2 [(1-b) (u.xi)(u.zeta) - b xi.zeta] L
        + (1-b) (u.zeta)^2 - b zeta.zeta = 0.

    Returns (minus, plus); raises ComplexRoots when the discriminant is
    negative beyond tolerance (inadmissible beta).
    """
    xi, zeta = pair.xi, pair.zeta
    u_xi = np.einsum("...a,...a->...", u, xi)
    u_zeta = np.einsum("...a,...a->...", u, zeta)
    xi_xi = np.einsum("...a,...a->...", tensor.raise_(xi), xi)
    zz = np.einsum("...a,...a->...", tensor.raise_(zeta), zeta)
    xz = np.einsum("...a,...a->...", tensor.raise_(xi), zeta)

    A = (1.0 - beta) * u_xi**2 - beta * xi_xi
    Bh = (1.0 - beta) * u_xi * u_zeta - beta * xz      # half the linear coeff
    C = (1.0 - beta) * u_zeta**2 - beta * zz
    delta = Bh**2 - A * C
    scale = np.maximum(1.0, np.abs(A) * np.maximum(1.0, np.abs(C)))
    if np.any(delta < -_DISCRIMINANT_TOL * scale):
        raise ComplexRoots(f"negative discriminant {np.min(delta):.3e} for beta={beta}")
    delta = np.maximum(delta, 0.0)
    sqrt_d = np.sqrt(delta)
    return (-Bh - sqrt_d) / A, (-Bh + sqrt_d) / A


@dataclass
class RootFamilies:
    """All 30 characteristic roots grouped by family."""

    lambda1: float          # multiplicity 18
    lambda2: tuple          # (minus, plus), beta = 1/3, multiplicity 1 each
    lambda3: tuple          # (minus, plus), beta = eta/lam, multiplicity 3 each
    lambda4: tuple          # four quartic roots, multiplicity 1 each
    betas: dict             # family -> beta ratio b^2/a.a

    def all_roots(self):
        """(root, multiplicity) pairs; multiplicities sum to 30."""
        out = [(self.lambda1, 18)]
        out += [(v, 1) for v in self.lambda2]
        out += [(v, 3) for v in self.lambda3]
        out += [(v, 1) for v in self.lambda4]
        return out

    def flattened(self):
        """All 30 roots with multiplicity, sorted ascending."""
        vals = []
        for v, m in self.all_roots():
            vals.extend([v] * m)
        return np.sort(np.asarray(vals))


def characteristic_roots(psi: ExtendedState, model: TransportModel,
                         pair: CovectorPair) -> RootFamilies:
    """All characteristic roots Lambda for the state's (u, theta)."""
    u = psi.u
    u_xi = np.einsum("...a,...a->...", u, pair.xi)
    u_zeta = np.einsum("...a,...a->...", u, pair.zeta)
    lam1 = -u_zeta / u_xi

    beta_shear = 1.0 / model.a2          # eta / lam
    q_lo, q_hi = quartic_ratios(model)
    lam2 = beta_family_roots(u, pair, 1.0 / 3.0)
    lam3 = beta_family_roots(u, pair, beta_shear)
    lam4_lo = beta_family_roots(u, pair, q_lo)
    lam4_hi = beta_family_roots(u, pair, q_hi)
    return RootFamilies(
        lambda1=float(lam1),
        lambda2=(float(lam2[0]), float(lam2[1])),
        lambda3=(float(lam3[0]), float(lam3[1])),
        lambda4=(float(lam4_lo[0]), float(lam4_lo[1]),
                 float(lam4_hi[0]), float(lam4_hi[1])),
        betas={"sound": 1.0 / 3.0, "shear": beta_shear,
               "quartic_minus": q_lo, "quartic_plus": q_hi},
    )


@dataclass
class CausalityReport:
    """Admissibility of a transport model and its speed ratios."""

    admissible: bool
    conditions: dict        # inequality name -> bool
    ratios: dict            # family -> b^2/a.a ratio
    max_speed_ratio: float  # largest ratio (squared rest-frame speed)
    failures: list


def check_causality(model: TransportModel) -> CausalityReport:
    """Check chi > 4 eta and lam >= 3 chi eta / (chi - eta), plus all
    speed ratios in (0, 1].  Never raises: inadmissible models yield
    ``admissible=False`` with diagnostics.
    """
    a1, a2 = model.a1, model.a2
    conditions = {
        "chi > 4 eta": a1 > 4.0,
        "lam >= 3 chi eta / (chi - eta)": a1 > 1.0 and a2 >= 3.0 * a1 / (a1 - 1.0) * (1 - 1e-14),
    }
    ratios = {"sound": 1.0 / 3.0, "shear": 1.0 / a2}
    failures = [name for name, ok in conditions.items() if not ok]
    try:
        q_lo, q_hi = quartic_ratios(model)
        ratios["quartic_minus"], ratios["quartic_plus"] = q_lo, q_hi
    except ComplexRoots:
        failures.append("quartic ratios complex")
    for name, val in ratios.items():
        if not (0.0 < val <= 1.0 + 1e-14):
            failures.append(f"ratio {name} = {val:.6g} outside (0, 1]")
    admissible = not failures
    max_ratio = max(ratios.values()) if ratios else float("nan")
    return CausalityReport(
        admissible=admissible,
        conditions=conditions,
        ratios=ratios,
        max_speed_ratio=float(max_ratio),
        failures=failures,
    )


def rest_frame_speeds(model: TransportModel):
    """Distinct rest-frame propagation speeds, sorted ascending.

    {0, sqrt(eta/lam), 1/sqrt(3), sqrt(quartic ratios)}; coincident
    families are merged.
    """
    q_lo, q_hi = quartic_ratios(model)
    speeds = [0.0, np.sqrt(1.0 / model.a2), 1.0 / np.sqrt(3.0),
              np.sqrt(max(q_lo, 0.0)), np.sqrt(max(q_hi, 0.0))]
    speeds.sort()
    out = [speeds[0]]
    for s in speeds[1:]:
        if s - out[-1] > 1e-10 * (1.0 + s):
            out.append(s)
    return out


# ---------------------------------------------------------------------------
# eigenvector construction and full diagonalization
# ---------------------------------------------------------------------------


@dataclass
class DiagonalizationResult:
    """Complete eigendecomposition of A_tilde = (A^0)^{-1} A^i zeta_i.

    Eigenvalues are those of A_tilde (equal to -Lambda for the symbol
    roots).  Columns of V are the eigenvectors; S = V^{-1} satisfies
    S A_tilde = D S with D = diag(eigenvalues).
    """

    eigenvalues: np.ndarray
    clusters: list                  # list of (eigenvalue, multiplicity, method)
    V: np.ndarray
    S: np.ndarray
    D: np.ndarray
    A_tilde: np.ndarray
    residual: float                 # max |A_tilde V - V D| / max |A_tilde|
    min_singular_value: float       # of V, scaled by its largest
    condition_number: float


def _nullspace(M, dim, rtol=1e-8):
    """Orthonormal basis of the ``dim``-dimensional (near-)nullspace of M."""
    _, s, Vh = np.linalg.svd(M)
    smax = s[0] if s.size else 0.0
    rank_expected = M.shape[1] - dim
    if 0 <= rank_expected < s.size and smax > 0:
        if s[rank_expected] > rtol * smax * 1e4:
            raise DefectiveCluster(
                f"nullspace dimension below {dim}: "
                f"sigma = {s[rank_expected]:.3e} vs max {smax:.3e}"
            )
    return Vh[-dim:].T.copy()


def _lambda1_eigenvectors(psi, model, pair, lam1):
    """The 18 eigenvectors of the multiplicity-18 root, in closed form."""
    xi_cov = pair.covector(np.asarray(lam1))
    u = psi.u
    # w-space: vectors with Xi_nu w^nu = 0 (contains u since b = 0)
    w1 = u / np.linalg.norm(u)
    # complete with the nullspace of [Xi; w1(euclidean)]
    rows = np.vstack([xi_cov, w1])
    w_rest = _nullspace(rows, 2)
    W = np.column_stack([w1, w_rest])
    vecs = []
    for j in range(3):
        v = np.zeros(30)
        v[1:5] = W[:, j]
        vecs.append(v)
    for j in range(3):
        v = np.zeros(30)
        v[26:30] = W[:, j]
        vecs.append(v)
    # f-family: chi f^l_l a^mu + D_nu^{mu l} f_l^nu = 0  (4 x 16 constraint)
    proj = projections(u, xi_cov)
    a_up = proj.a_up
    chi = float(model.chi(psi.theta))
    B = assemble_B(psi, model)                  # [nu, alpha, mu, lam]
    D = np.einsum("naml,l->nam", B, xi_cov)     # D_nu^{alpha mu} = B_nu^{alpha mu l} Xi_l
    C = np.zeros((4, 16))
    for mu in range(4):
        for ell in range(4):
            for nu in range(4):
                col = 4 * ell + nu
                C[mu, col] = D[nu, mu, ell]
                if ell == nu:
                    C[mu, col] += chi * a_up[mu]
    F = _nullspace(C, 12)
    for j in range(12):
        f = F[:, j]
        v = np.zeros(30)
        v[0] = chi * (f[0] + f[5] + f[10] + f[15])  # chi * f^l_l
        v[9:25] = f
        vecs.append(v)
    return vecs


def _lambda3_eigenvectors(psi, model, pair, lam3):
    """The 3 eigenvectors of a shear-type root, in closed form.

    For each admissible e (3-dim constraint nullspace) the eigenvector is
    (C, D^mu, e^mu, a_0 e/b, a_1 e/b, a_2 e/b, a_3 e/b, 0, 0) where C and D
    solve the first and third block rows and the scalar constraint

        (lam+chi)/(lam chi) C b - (3 eta/lam) Xi.e + (2 eta - lam)/lam a.e = 0

    closes the second block row.
    """
    xi_cov = pair.covector(np.asarray(lam3))
    proj = projections(psi.u, xi_cov)
    a_up, b, a_sq = proj.a_up, float(proj.b), proj.a_sq
    a_dn = tensor.lower(a_up)
    theta = float(psi.theta)
    eta = float(model.eta(theta))
    chi = float(model.chi(theta))
    lam = float(model.lam(theta))

    # C(e) = coefficient vector: C = cxi * (Xi.e) + ca * (a.e)
    pref = 3.0 * eta * chi * lam / (b * (3.0 * eta * chi + lam**2))
    cxi = -pref
    ca = pref * lam / (3.0 * eta)
    # constraint functional ell(e) = (lam+chi)/(lam chi) * b * C(e)
    #                                - (3 eta/lam) Xi.e + (2 eta - lam)/lam a.e
    fac = (lam + chi) / (lam * chi) * b
    row = (fac * cxi - 3.0 * eta / lam) * xi_cov + (fac * ca + (2.0 * eta - lam) / lam) * a_dn
    E = _nullspace(row[None, :], 3)
    vecs = []
    for j in range(3):
        e = E[:, j]
        xi_e = float(xi_cov @ e)
        a_e = float(a_dn @ e)
        Cval = cxi * xi_e + ca * a_e
        Dvec = (lam / (3.0 * b * chi)) * a_up * Cval + lam * e \
            - (lam * a_e / (3.0 * b**2)) * a_up
        v = np.zeros(30)
        v[0] = Cval
        v[1:5] = Dvec
        v[5:9] = e
        v[9:25] = np.outer(a_dn, e).reshape(16) / b
        vecs.append(v)
    return vecs


def diagonalize(psi: ExtendedState, model: TransportModel,
                pair: CovectorPair = None, rtol=CLUSTER_RTOL) -> DiagonalizationResult:
    """Eigen-decompose the reduced symbol with closed-form clusters.

    The multiplicity-18 and shear clusters use the analytic eigenvector
    constructions; sound and quartic roots (and any merged clusters) use
    numeric nullspaces of the contracted symbol.
    """
    if pair is None:
        pair = CovectorPair()
    roots = characteristic_roots(psi, model, pair)

    # cluster the roots by value
    entries = roots.all_roots()
    entries.sort(key=lambda t: t[0])
    clusters = []
    for val, mult in entries:
        if clusters and abs(val - clusters[-1][0][-1]) <= rtol * (1.0 + abs(val)):
            clusters[-1][0].append(val)
            clusters[-1][1].append(mult)
        else:
            clusters.append(([val], [mult]))

    A_xi = assemble_symbol(psi, model, pair.xi)
    Azeta = assemble_symbol(psi, model, pair.zeta)
    A_tilde = np.linalg.solve(A_xi, Azeta)

    lam3_set = set(roots.lambda3)
    columns = []
    eigenvalues = []
    cluster_info = []
    for vals, mults in clusters:
        val = float(np.mean(vals))
        mult = int(np.sum(mults))
        if mult == 18 and len(vals) == 1:
            method = "closed-form-18"
            vecs = _lambda1_eigenvectors(psi, model, pair, val)
        elif mult == 3 and len(vals) == 1 and vals[0] in lam3_set:
            method = "closed-form-shear"
            vecs = _lambda3_eigenvectors(psi, model, pair, val)
        else:
            method = "nullspace"
            symbol = Azeta + val * A_xi
            basis = _nullspace(symbol, mult)
            vecs = [basis[:, j] for j in range(mult)]
        for v in vecs:
            n = np.linalg.norm(v)
            if n == 0:
                raise DefectiveCluster(f"zero eigenvector in cluster {val}")
            columns.append(v / n)
            eigenvalues.append(-val)     # A_tilde eigenvalue is -Lambda
        cluster_info.append((val, mult, method))

    V = np.column_stack(columns)
    evals = np.asarray(eigenvalues)
    D = np.diag(evals)
    resid = np.max(np.abs(A_tilde @ V - V @ D))
    scale = np.max(np.abs(A_tilde))
    svals = np.linalg.svd(V, compute_uv=False)
    if svals[-1] <= 1e-12 * svals[0]:
        raise DefectiveCluster("eigenvector matrix numerically rank-deficient")
    S = np.linalg.inv(V)
    return DiagonalizationResult(
        eigenvalues=evals,
        clusters=cluster_info,
        V=V,
        S=S,
        D=D,
        A_tilde=A_tilde,
        residual=float(resid / max(scale, 1e-300)),
        min_singular_value=float(svals[-1] / svals[0]),
        condition_number=float(svals[0] / svals[-1]),
    )


def max_characteristic_speed(u, theta, model: TransportModel, directions=None):
    """Largest |Lambda| over spatial unit covector directions.

    ``u``/``theta`` may carry batch dimensions; directions default to the
    26-point stencil of unit covectors from {-1,0,1}^3 offsets.
    """
    if directions is None:
        offs = [
            (i, j, k)
            for i in (-1, 0, 1)
            for j in (-1, 0, 1)
            for k in (-1, 0, 1)
            if (i, j, k) != (0, 0, 0)
        ]
        directions = np.array(offs, dtype=float)
        directions /= np.linalg.norm(directions, axis=1)[:, None]
    directions = np.asarray(directions, dtype=float)

    u = np.asarray(u, dtype=float)
    betas = [1.0 / 3.0, 1.0 / model.a2, *quartic_ratios(model)]

    zeta = np.zeros(directions.shape[:1] + (4,))
    zeta[:, 1:] = directions                    # (ndir, 4)

    # xi = (1,0,0,0): u.xi = u^0, xi.xi = -1, xi.zeta = 0 (zeta spatial)
    u_xi = u[..., 0:1]                          # (..., 1) broadcasts over dirs
    u_zeta = np.einsum("...a,da->...d", u, zeta)
    zz = np.einsum("da,da->d", zeta * tensor._DIAG, zeta)

    best = np.abs(u_zeta / u_xi)               # advection family
    for beta in betas:
        A = (1.0 - beta) * u_xi**2 + beta
        Bh = (1.0 - beta) * u_xi * u_zeta
        C = (1.0 - beta) * u_zeta**2 - beta * zz
        delta = np.maximum(Bh**2 - A * C, 0.0)
        r1 = np.abs((-Bh - np.sqrt(delta)) / A)
        r2 = np.abs((-Bh + np.sqrt(delta)) / A)
        best = np.maximum(best, np.maximum(r1, r2))
    return float(np.max(best))

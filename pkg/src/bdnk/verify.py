"""Seeded property suites for the characteristic machinery.

Random admissible samples (model, boosted state, direction) drive three
families of checks:

  * eigenstructure: closed-form roots vs. the generalized eigenvalue
    pencil (A^i zeta_i, -A^0), eigenvector residuals, completeness rank;
  * determinant: closed-form factorization vs. a dense numeric
    determinant, compared in log scale with matching signs;
  * algebraic identities: a.a = Xi.Xi + b^2 and the H-contraction.

Everything is deterministic for a fixed seed.  ``corrupt_b`` injects a
relative error into the viscous coupling block to demonstrate the suite's
sensitivity (it must then fail).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import characteristics as ch
from . import firstorder, tensor
from .state import ExtendedState, TransportModel, equilibrium_state

ROOT_TOL = 1e-9
EIGVEC_TOL = 1e-8
DET_LOG_TOL = 1e-8
IDENTITY_TOL = 1e-10


@dataclass
class SampleDraw:
    model: TransportModel
    psi: ExtendedState
    pair: ch.CovectorPair


def draw_sample(rng, max_boost=0.9) -> SampleDraw:
    """One admissible random (model, state, direction) sample."""
    a1 = 4.0 + 6.0 * rng.random()            # a1 in (4, 10]
    a2 = 3.0 * a1 / (a1 - 1.0) + 4.0 * rng.random()
    model = TransportModel(eps0=0.5 + rng.random(), eta0=0.5 + rng.random(),
                           a1=a1, a2=a2)
    theta = 0.5 + 1.5 * rng.random()
    v = rng.uniform(-1.0, 1.0, 3)
    norm = np.linalg.norm(v)
    if norm > 0:
        v *= max_boost * rng.random() / norm
    psi = equilibrium_state(model, theta=theta)
    psi.u[:] = tensor.boost_velocity(v)
    z = rng.standard_normal(3)
    z /= np.linalg.norm(z)
    pair = ch.CovectorPair(zeta=np.array([0.0, *z]))
    return SampleDraw(model=model, psi=psi, pair=pair)


def _corrupted_symbol(psi, model, covector, rel=1e-3):
    """Principal symbol with the viscous coupling block perturbed."""
    M = firstorder.assemble_symbol(psi, model, covector)
    M[..., 1:5, 9:25] *= 1.0 + rel
    return M


@dataclass
class VerificationReport:
    samples: int
    seed: int
    worst_root_error: float = 0.0
    worst_eigvec_residual: float = 0.0
    worst_rank_margin: float = np.inf   # min sv(V)/max sv(V) over samples
    worst_det_log_error: float = 0.0
    det_sign_mismatches: int = 0
    worst_identity_error: float = 0.0
    failures: list = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures


def run_verification(samples: int, seed: int, corrupt_b: bool = False,
                     check_eigenvectors: bool = True) -> VerificationReport:
    """Run the full property suite over ``samples`` seeded draws."""
    rng = np.random.default_rng(seed)
    report = VerificationReport(samples=samples, seed=seed)
    t0 = time.time()
    for idx in range(samples):
        s = draw_sample(rng)
        psi, model, pair = s.psi, s.model, s.pair

        # --- closed-form roots vs pencil -------------------------------
        roots = ch.characteristic_roots(psi, model, pair)
        closed = roots.flattened()
        if corrupt_b:
            Az = _corrupted_symbol(psi, model, pair.zeta)
        else:
            Az = firstorder.assemble_symbol(psi, model, pair.zeta)
        A0 = firstorder.assemble_A(psi, model, 0)
        ev = sla.eig(Az, -A0, right=False)
        imag_scale = np.max(np.abs(ev.imag)) / (1.0 + np.max(np.abs(ev.real)))
        pencil = np.sort(ev.real)
        root_err = float(np.max(np.abs(closed - pencil) / (1.0 + np.abs(closed))))
        root_err = max(root_err, float(imag_scale))
        report.worst_root_error = max(report.worst_root_error, root_err)
        if root_err > ROOT_TOL:
            report.failures.append(
                f"sample {idx}: root mismatch {root_err:.3e} > {ROOT_TOL:.1e}"
            )

        # --- determinant factorization ---------------------------------
        lam_probe = float(rng.uniform(-2.0, 2.0))
        Xi = pair.covector(np.asarray(lam_probe))
        closed_det = float(ch.det_symbol(psi, model, Xi))
        M = _corrupted_symbol(psi, model, Xi) if corrupt_b \
            else firstorder.assemble_symbol(psi, model, Xi)
        sign, logabs = np.linalg.slogdet(M)
        if closed_det == 0.0 or sign == 0.0:
            log_err = 0.0 if closed_det == float(sign) else np.inf
        else:
            log_err = abs(np.log(abs(closed_det)) - logabs)
            if np.sign(closed_det) != sign:
                report.det_sign_mismatches += 1
                report.failures.append(f"sample {idx}: determinant sign mismatch")
        report.worst_det_log_error = max(report.worst_det_log_error, log_err)
        if log_err > DET_LOG_TOL:
            report.failures.append(
                f"sample {idx}: det log error {log_err:.3e} > {DET_LOG_TOL:.1e}"
            )

        # --- projection / factor identities ----------------------------
        proj = ch.projections(psi.u, Xi)
        xi_sq = float(np.sum(tensor.raise_(Xi) * Xi))
        ident1 = abs(proj.a_sq - (xi_sq + proj.b**2)) / (1.0 + abs(proj.a_sq))
        q = ch.factor_quantities(psi.u, psi.theta, model, Xi)
        lam = float(model.lam(psi.theta))
        eta = float(model.eta(psi.theta))
        lhs = float(q.H_dn @ q.a_up)
        rhs = (lam + eta) / lam * q.F * q.a_sq + q.kappa
        ident2 = abs(lhs - rhs) / (1.0 + abs(rhs))
        worst_ident = max(float(ident1), float(ident2))
        report.worst_identity_error = max(report.worst_identity_error, worst_ident)
        if worst_ident > IDENTITY_TOL:
            report.failures.append(
                f"sample {idx}: identity error {worst_ident:.3e} > {IDENTITY_TOL:.1e}"
            )

        # --- eigenvectors and completeness ------------------------------
        if check_eigenvectors:
            try:
                res = ch.diagonalize(psi, model, pair)
            except Exception as exc:  # defective cluster etc.
                report.failures.append(f"sample {idx}: diagonalize failed: {exc}")
                continue
            report.worst_eigvec_residual = max(report.worst_eigvec_residual,
                                               res.residual)
            report.worst_rank_margin = min(report.worst_rank_margin,
                                           res.min_singular_value)
            if res.residual > EIGVEC_TOL:
                report.failures.append(
                    f"sample {idx}: eigenvector residual {res.residual:.3e}"
                )
            if res.min_singular_value <= 1e-8:
                report.failures.append(f"sample {idx}: eigenvectors not complete")
    report.elapsed = time.time() - t0
    return report


def format_report(report: VerificationReport) -> str:
    lines = [
        f"samples: {report.samples}  seed: {report.seed}  "
        f"elapsed: {report.elapsed:.2f}s",
        f"worst root error          : {report.worst_root_error:.3e}  (tol {ROOT_TOL:.0e})",
        f"worst eigenvector residual: {report.worst_eigvec_residual:.3e}  (tol {EIGVEC_TOL:.0e})",
        f"worst rank margin         : {report.worst_rank_margin:.3e}",
        f"worst det log error       : {report.worst_det_log_error:.3e}  (tol {DET_LOG_TOL:.0e})",
        f"det sign mismatches       : {report.det_sign_mismatches}",
        f"worst identity error      : {report.worst_identity_error:.3e}  (tol {IDENTITY_TOL:.0e})",
        f"result: {'PASS' if report.passed else 'FAIL'}",
    ]
    if report.failures:
        lines.append(f"first failures ({min(len(report.failures), 5)} of "
                     f"{len(report.failures)}):")
        lines.extend(f"  {f}" for f in report.failures[:5])
    return "\n".join(lines)

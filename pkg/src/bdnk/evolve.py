"""Initial-data preparation and method-of-lines evolution of the reduced
system  d_t Psi = -(A^0)^{-1} (A^i d_i Psi + R)  on the periodic grid.

Time integration is classical RK4 with a CFL-limited step recomputed from
the evolving state; spatial derivatives are spectral.  The unit-norm and
orthogonality constraints are monitored, not re-imposed (an optional
four-velocity renormalization exists but is off by default): their drift
is the primary discretization-quality signal.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import grid as gridmod
from .characteristics import max_characteristic_speed
from .errors import DensityFloorViolated, NearSingularA0, NonFiniteState
from .firstorder import assemble_A, divT_residual, reduced_rhs
from .grid import TorusGrid, sobolev_norm, spatial_gradient, spectral_derivative
from .state import (
    ExtendedState,
    NCOMP,
    TransportModel,
    eps_from_theta,
    extend,
    theta_from_eps,
)

SNAPSHOT_MAGIC = b"CBDNK1"


@dataclass
class EvolveConfig:
    """Evolution controls; CFL factor must lie in (0, 1)."""

    N: int = 16
    cfl: float = 0.25
    t_end: float = 0.5
    integrator: str = "rk4"
    dealias: bool = True
    cadence: float = 0.1            # diagnostic/snapshot time interval
    r: float = 4.0                  # Sobolev order for norm diagnostics
    density_floor: float = 1e-8
    constraint_tol: float = 1e-4    # monitor threshold on |u.u + 1|
    blowup_factor: float = 1e6
    singular_floor: float = 1e-8
    renormalize_u: bool = False

    def __post_init__(self):
        if not 0.0 < self.cfl < 1.0:
            raise ValueError("CFL factor must lie in (0, 1)")
        if self.t_end <= 0.0:
            raise ValueError("t_end must be positive")
        if self.integrator != "rk4":
            raise ValueError("only the rk4 integrator is available")


@dataclass
class InitialData:
    """Cauchy data: density, its time derivative, and the spatial velocity
    components and their time derivatives (each component-major)."""

    eps0: np.ndarray        # (N, N, N), must stay >= density_floor
    eps1: np.ndarray        # (N, N, N)
    u0: np.ndarray          # (3, N, N, N) spatial velocity u^i
    u1: np.ndarray          # (3, N, N, N) d_t u^i


@dataclass
class Trajectory:
    """Snapshot series with diagnostics.

    ``diagnostics`` maps column name -> list (one value per snapshot);
    columns: constraint_drift, qu_drift, su_drift, stu_drift, min_eps,
    divT_res, norm_r, minsv_A0.  ``monitor`` records a tripped runtime
    monitor as (name, time, grid_index) or None.
    """

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    monitor: tuple | None = None

    def field_array(self):
        """All snapshots as one array (n_times, 30, N, N, N)."""
        return np.asarray([s.to_field() for s in self.states])


def prepare_initial_psi(data: InitialData, model: TransportModel,
                        grid: TorusGrid, density_floor: float = 1e-8) -> ExtendedState:
    """Extended state at t = 0 from the Cauchy data of the main theorem.

    u^0 and its derivatives come from the unit-norm constraint, theta and
    d_t theta from eps = eps0 * theta^4, and spatial derivatives are
    spectral.
    """
    eps0 = gridmod.validate_field(data.eps0)
    eps1 = gridmod.validate_field(data.eps1)
    u0 = gridmod.validate_field(data.u0)
    u1 = gridmod.validate_field(data.u1)
    if np.min(eps0) < density_floor:
        raise DensityFloorViolated(
            f"min eps = {np.min(eps0):.3e} below floor {density_floor:.3e}"
        )

    shape = eps0.shape
    theta = theta_from_eps(eps0, model)
    dt_theta = eps1 / (4.0 * model.eps0 * theta**3)

    u = np.zeros(shape + (4,))
    u[..., 1:] = np.moveaxis(u0, 0, -1)
    usq = np.einsum("...i,...i->...", u[..., 1:], u[..., 1:])
    u[..., 0] = np.sqrt(1.0 + usq)

    dt_u = np.zeros(shape + (4,))
    dt_u[..., 1:] = np.moveaxis(u1, 0, -1)
    dt_u[..., 0] = np.einsum("...i,...i->...", u[..., 1:], dt_u[..., 1:]) / u[..., 0]

    # derivative stacks d_theta[..., a], d_u[..., a, b]
    d_theta = np.zeros(shape + (4,))
    d_theta[..., 0] = dt_theta
    d_u = np.zeros(shape + (4, 4))
    d_u[..., 0, :] = dt_u
    for i in range(3):
        d_theta[..., 1 + i] = spectral_derivative(theta, i, grid)
        for j in range(3):
            d_u[..., 1 + i, 1 + j] = spectral_derivative(u[..., 1 + j], i, grid)
        d_u[..., 1 + i, 0] = (
            np.einsum("...j,...j->...", u[..., 1:], d_u[..., 1 + i, 1:]) / u[..., 0]
        )
    return extend(theta, u, d_theta, d_u, model)


def cfl_dt(psi: ExtendedState, model: TransportModel, h: float, cfl: float) -> float:
    """CFL-limited step from the largest characteristic speed on the grid."""
    smax = max_characteristic_speed(psi.u, psi.theta, model)
    return cfl * h / max(smax, 1e-6)


def _rhs_field(Y, model, grid, use_dealias):
    """Reduced-system right-hand side for a field Y of shape (30, N,N,N)."""
    psi = ExtendedState.from_field(Y)
    dY = np.stack([
        np.stack([spectral_derivative(Y[c], i, grid) for c in range(NCOMP)])
        for i in range(3)
    ])  # (3, 30, N,N,N)
    d_spatial = np.moveaxis(dY, (0, 1), (-2, -1))  # (N,N,N, 3, 30)
    rhs = reduced_rhs(psi, model, d_spatial, check_singular=False)
    out = np.moveaxis(rhs, -1, 0)
    if use_dealias:
        out = gridmod.dealias(out, grid)
    return out


def step(Y, dt, model: TransportModel, config: EvolveConfig, grid: TorusGrid):
    """One classical RK4 step of the reduced system (field in, field out)."""
    k1 = _rhs_field(Y, model, grid, config.dealias)
    k2 = _rhs_field(Y + 0.5 * dt * k1, model, grid, config.dealias)
    k3 = _rhs_field(Y + 0.5 * dt * k2, model, grid, config.dealias)
    k4 = _rhs_field(Y + dt * k3, model, grid, config.dealias)
    out = Y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState("non-finite value after RK4 step")
    if config.renormalize_u:
        psi = ExtendedState.from_field(out)
        norm = np.sqrt(np.maximum(-_minkowski_sq(psi.u), 1e-300))
        psi.u /= norm[..., None]
        out = psi.to_field()
    return out


def _minkowski_sq(u):
    return -u[..., 0] ** 2 + np.einsum("...i,...i->...", u[..., 1:], u[..., 1:])


def _snapshot_diagnostics(psi, model, config, grid):
    defects = psi.orthogonality_defects()
    min_eps = float(np.min(eps_from_theta(psi.theta, model)))
    norm_r = sobolev_norm(psi.to_field(), config.r, grid)
    A0 = assemble_A(psi, model, 0)
    svals = np.linalg.svd(A0, compute_uv=False)
    minsv = float(np.min(svals[..., -1]))
    return defects, min_eps, norm_r, minsv


def evolve(data: InitialData, model: TransportModel, config: EvolveConfig) -> Trajectory:
    """Evolve the Cauchy data until t_end or a tripped monitor.

    Snapshots and diagnostics are recorded at the configured cadence
    (always including t = 0 and the final time).  The singular-value and
    constraint monitors run at snapshot times; the divT residual series is
    filled post-run when enough snapshots exist.
    """
    grid = TorusGrid(config.N)
    psi0 = prepare_initial_psi(data, model, grid, config.density_floor)
    Y = psi0.to_field()
    sup0 = float(np.max(np.abs(Y)))

    traj = Trajectory(diagnostics={
        k: [] for k in ("constraint_drift", "qu_drift", "su_drift", "stu_drift",
                        "min_eps", "divT_res", "norm_r", "minsv_A0")
    })

    def record(t, Y):
        psi = ExtendedState.from_field(Y.copy())
        defects, min_eps, norm_r, minsv = _snapshot_diagnostics(psi, model, config, grid)
        traj.times.append(t)
        traj.states.append(psi)
        d = traj.diagnostics
        d["constraint_drift"].append(defects["uu"])
        d["qu_drift"].append(defects["qu"])
        d["su_drift"].append(defects["su"])
        d["stu_drift"].append(defects["stu"])
        d["min_eps"].append(min_eps)
        d["divT_res"].append(np.nan)  # filled post-run
        d["norm_r"].append(norm_r)
        d["minsv_A0"].append(minsv)
        # runtime monitors
        if defects["uu"] > config.constraint_tol:
            return ("constraint_drift", t, None)
        if min_eps < config.density_floor:
            return ("min_eps", t, None)
        if minsv < config.singular_floor:
            return ("near_singular_A0", t, None)
        if float(np.max(np.abs(Y))) > config.blowup_factor * max(sup0, 1e-300):
            return ("blowup", t, None)
        return None

    t = 0.0
    next_output = config.cadence
    traj.monitor = record(t, Y)
    while t < config.t_end - 1e-12 and traj.monitor is None:
        psi = ExtendedState.from_field(Y)
        dt = cfl_dt(psi, model, grid.h, config.cfl)
        t_target = min(next_output, config.t_end)
        dt = min(dt, t_target - t)
        try:
            Y = step(Y, dt, model, config, grid)
        except (NonFiniteState, NearSingularA0) as exc:
            traj.monitor = (type(exc).__name__, t, None)
            break
        t += dt
        if t >= t_target - 1e-12:
            trip = record(t, Y)
            if trip is not None:
                traj.monitor = trip
            if t >= next_output - 1e-12:
                next_output = round(next_output / config.cadence + 1) * config.cadence

    # divT residual series over recorded snapshots (uniform cadence only)
    if len(traj.states) >= 3:
        try:
            res = divT_residual(
                traj.states, traj.times, model,
                lambda f, i: spectral_derivative(f, i, grid), time_order=2,
            )
            traj.diagnostics["divT_res"] = [
                float(np.max(np.abs(res[n]))) if np.all(np.isfinite(res[n])) else np.nan
                for n in range(len(traj.states))
            ]
        except ValueError:
            pass  # nonuniform snapshot spacing (early stop): leave NaNs
    return traj


# ---------------------------------------------------------------------------
# snapshot and diagnostics serialization
# ---------------------------------------------------------------------------

DIAGNOSTIC_COLUMNS = (
    "t", "constraint_drift", "qu_drift", "su_drift", "stu_drift",
    "min_eps", "divT_res", "norm_r", "minsv_A0",
)


def write_snapshot(path, field_array, time: float):
    """Binary snapshot: magic, N (u64 LE), component count (u64 LE),
    time (f64 LE), then each component as N^3 f64 LE values, x fastest."""
    field_array = np.ascontiguousarray(field_array, dtype="<f8")
    ncomp, N = field_array.shape[0], field_array.shape[1]
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<QQd", N, ncomp, time))
        np.ascontiguousarray(field_array.transpose(0, 3, 2, 1)).tofile(fh)


def read_snapshot(path):
    """Inverse of write_snapshot; returns (field (ncomp,N,N,N), time)."""
    with open(path, "rb") as fh:
        magic = fh.read(6)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic {magic!r}")
        N, ncomp, time = struct.unpack("<QQd", fh.read(24))
        data = np.fromfile(fh, dtype="<f8", count=ncomp * N**3)
    fld = data.reshape(ncomp, N, N, N).transpose(0, 3, 2, 1)
    return gridmod.validate_field(fld), time


def write_diagnostics_csv(path, traj: Trajectory):
    """CSV with one row per snapshot in the fixed column order."""
    with open(path, "w") as fh:
        fh.write(",".join(DIAGNOSTIC_COLUMNS) + "\n")
        for n, t in enumerate(traj.times):
            row = [f"{t:.17g}"]
            for col in DIAGNOSTIC_COLUMNS[1:]:
                row.append(f"{traj.diagnostics[col][n]:.17g}")
            fh.write(",".join(row) + "\n")

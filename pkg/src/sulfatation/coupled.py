"""Global two-scale ODE system and its time integrators.

The packed unknown vector is species-blocked::

    [u1 (nx) | u2 (nx*ny) | u3 (nx*ny) | u4 (nx)]

with ``u2`` and ``u3`` stored row-major as ``(nx, ny)`` (row ``i`` is the cell
at macro node ``i``).  The implicit integrator is TR-BDF2 (trapezoidal stage
followed by a BDF2 stage, L-stable, second order) with the third-order
companion solution for error estimation.  Each Newton iteration reassembles
the Jacobian and solves with :func:`solve_linear`, which eliminates every cell
onto a tridiagonal system in ``u1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .macro import MacroState, macro_jacobian, macro_rhs
from .micro import CellState, cell_jacobian, trapezoid_weights

SQRT2 = math.sqrt(2.0)
GAMMA = 2.0 - SQRT2  # fraction of the step taken by the trapezoidal stage
D = GAMMA / 2.0  # diagonal coefficient of both implicit stages
W = SQRT2 / 4.0
# Butcher tableau: c = (0, GAMMA, 1), A = [[0,0,0], [D,D,0], [W,W,D]], b = (W, W, D)
B_SOL = (W, W, D)
B_ERR = ((1.0 - 4.0 * W) / 3.0, 1.0 / 3.0, -2.0 * D / 3.0)  # embedded minus main weights


class IntegrationError(RuntimeError):
    """Fatal integration failure; ``state`` is the last accepted state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True, eq=False)
class CoupledState:
    """Gas field plus one pore cell per macro node at time ``t``."""

    t: float
    y: np.ndarray
    nx: int
    ny: int

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float)
        if y.shape != (self.nx * (2 * self.ny + 2),):
            raise ValueError(f"packed vector has shape {y.shape}, expected ({self.nx * (2 * self.ny + 2)},)")
        y.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def from_fields(cls, t, u1, u2, u3, u4) -> "CoupledState":
        u2 = np.asarray(u2, dtype=float)
        nx, ny = u2.shape
        y = np.concatenate([np.ravel(u1), u2.ravel(), np.ravel(u3), np.ravel(u4)])
        return cls(t, y, nx, ny)

    @property
    def size(self) -> int:
        return self.y.size

    @property
    def u1(self) -> np.ndarray:
        return self.y[: self.nx]

    @property
    def u2(self) -> np.ndarray:
        n = self.nx * self.ny
        return self.y[self.nx : self.nx + n].reshape(self.nx, self.ny)

    @property
    def u3(self) -> np.ndarray:
        n = self.nx * self.ny
        return self.y[self.nx + n : self.nx + 2 * n].reshape(self.nx, self.ny)

    @property
    def u4(self) -> np.ndarray:
        return self.y[self.nx + 2 * self.nx * self.ny :]

    @property
    def macro(self) -> MacroState:
        return MacroState(self.u1)

    def cell(self, i: int) -> CellState:
        return CellState(self.u2[i], self.u3[i], self.u4[i])

    @property
    def cells(self) -> list[CellState]:
        return [self.cell(i) for i in range(self.nx)]

    def with_y(self, t, y) -> "CoupledState":
        return CoupledState(t, y, self.nx, self.ny)


def _profile(value, *coords):
    if callable(value):
        return np.asarray(value(*coords), dtype=float)
    return np.asarray(value, dtype=float)


def initial_state(cfg) -> CoupledState:
    """Initial data on the grid, with the inflow value imposed at ``x = 0``."""
    nx, ny = cfg.grid.nx, cfg.grid.ny
    x, y = cfg.x, cfg.y
    ic = cfg.initial
    u1 = np.broadcast_to(_profile(ic.u1_0, x), (nx,)).copy()
    u2 = np.broadcast_to(_profile(ic.u2_0, x[:, None], y[None, :]), (nx, ny))
    u3 = np.broadcast_to(_profile(ic.u3_0, x[:, None], y[None, :]), (nx, ny))
    u4 = np.broadcast_to(_profile(ic.u4_0, x), (nx,))
    for name, arr in (("u1_0", u1), ("u2_0", u2), ("u3_0", u3), ("u4_0", u4)):
        if not np.all(np.isfinite(arr)) or arr.min() < 0:
            raise ValueError(f"initial profile {name} must be finite and nonnegative")
    if u4.max() > cfg.params.beta_bar:
        raise ValueError("initial gypsum exceeds beta_bar")
    u1[0] = cfg.params.u1_dirichlet
    return CoupledState.from_fields(0.0, u1, u2, u3, u4)


class TwoScaleSystem:
    """Discrete operators of the coupled problem for one configuration."""

    def __init__(self, cfg, backend=None):
        self.cfg = cfg
        self.k = kernels.get_backend(backend)
        self.nx, self.ny = cfg.grid.nx, cfg.grid.ny
        self.size = self.nx * (2 * self.ny + 2)
        self.P = kernels.pack_cell_params(cfg)
        self.Q = kernels.pack_macro_params(cfg)
        self.wx = trapezoid_weights(self.nx, cfg.hx)
        self.wy = trapezoid_weights(self.ny, cfg.hy)

    def split(self, v):
        nx, ny = self.nx, self.ny
        n = nx * ny
        return (
            v[:nx],
            v[nx : nx + n].reshape(nx, ny),
            v[nx + n : nx + 2 * n].reshape(nx, ny),
            v[nx + 2 * n :],
        )

    def rhs(self, y, out=None) -> np.ndarray:
        p = self.cfg.params
        if out is None:
            out = np.empty(self.size)
        u1, u2, u3, u4 = self.split(y)
        f1, f2, f3, f4 = self.split(out)
        self.k.cell_rhs(u1, u2, u3, u4, self.P, f2, f3, f4)
        exchange = p.B * (p.H * u1 - u2[:, 0])
        f1[:] = macro_rhs(u1, exchange, self.cfg)
        return out

    def eta_partials(self, y):
        _, _, u3, u4 = self.split(y)
        return self.k.eta_partials(np.ascontiguousarray(u3[:, -1]), np.ascontiguousarray(u4), self.P)

    def solve(self, s, eta_a, eta_b, b) -> np.ndarray:
        """Solve ``(I - s*J) x = b`` with ``J`` linearised at rate partials ``eta_a, eta_b``."""
        b = np.ascontiguousarray(b, dtype=float)
        x = np.empty(self.size)
        b1, b2, b3, b4 = self.split(b)
        x1, x2, x3, x4 = self.split(x)
        self.k.arrow_solve(float(s), self.P, self.Q, eta_a, eta_b, b1, b2, b3, b4, x1, x2, x3, x4)
        return x

    def sulfur_total(self, y) -> float:
        """Dissolved plus gaseous sulfur per unit cross-section.

        Gas is weighted by ``beta2`` so that the Henry exchange cancels
        between the macro sink and the cell inflow.
        """
        p = self.cfg.params
        u1, u2, u3, _ = self.split(y)
        cell = (p.beta2 * u2 + p.beta3 * u3) @ self.wy
        return float(self.wx @ (p.beta2 * u1 + cell))

    def sulfur_source(self, y) -> float:
        """Net rate of change of :meth:`sulfur_total`: inflow at ``x = 0`` minus gypsum formation."""
        p = self.cfg.params
        u1, u2, u3, u4 = self.split(y)
        rate = self.k.eta_partials(np.ascontiguousarray(u3[:, -1]), np.ascontiguousarray(u4), self.P)[0]
        inflow = p.d1 * (u1[0] - u1[1]) / self.cfg.hx + self.wx[0] * p.B * (p.H * u1[0] - u2[0, 0])
        return float(p.beta2 * inflow - p.beta3 * p.gamma_sw * (self.wx @ rate))


_SYSTEMS: dict = {}


def system_for(cfg, backend=None) -> TwoScaleSystem:
    key = (id(cfg), backend)
    sys_ = _SYSTEMS.get(key)
    if sys_ is None or sys_.cfg is not cfg:
        if len(_SYSTEMS) > 32:
            _SYSTEMS.clear()
        sys_ = _SYSTEMS[key] = TwoScaleSystem(cfg, backend)
    return sys_


def _check_state(state: CoupledState, cfg):
    if (state.nx, state.ny) != (cfg.grid.nx, cfg.grid.ny):
        raise ValueError(f"state grid {(state.nx, state.ny)} does not match config {(cfg.grid.nx, cfg.grid.ny)}")


def global_rhs(state: CoupledState, cfg, backend=None) -> np.ndarray:
    """Time derivative of the packed state."""
    _check_state(state, cfg)
    return system_for(cfg, backend).rhs(state.y)


def assemble_jacobian(state: CoupledState, cfg) -> sp.csr_matrix:
    """Sparse global Jacobian in packed order, built from the per-module Jacobians."""
    _check_state(state, cfg)
    nx, ny = cfg.grid.nx, cfg.grid.ny
    n = nx * ny
    m = 2 * ny + 1
    p = cfg.params
    rows, cols, vals = [], [], []

    mj = macro_jacobian(cfg, p.B * p.H).tocoo()
    keep = mj.row > 0  # the held boundary value has zero time derivative
    rows.append(mj.row[keep])
    cols.append(mj.col[keep])
    vals.append(mj.data[keep])
    # macro sink depends on u2 at the water-air end of its own cell
    idx = np.arange(1, nx)
    rows.append(idx)
    cols.append(nx + idx * ny)
    vals.append(np.full(nx - 1, p.B))

    local = np.arange(m)
    for i in range(nx):
        gmap = np.concatenate(
            [nx + i * ny + np.arange(ny), nx + n + i * ny + np.arange(ny), [nx + 2 * n + i], [i]]
        )
        cj = cell_jacobian(state.cell(i), state.u1[i], cfg).tocoo()
        rows.append(gmap[local][cj.row])
        cols.append(gmap[cj.col])
        vals.append(cj.data)
    size = nx * (2 * ny + 2)
    jac = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )
    return jac.tocsr()


@dataclass(frozen=True, eq=False)
class ShiftedJacobian:
    """The Newton matrix ``I - s*J(y)`` in structured form."""

    cfg: object
    s: float
    eta_a: np.ndarray
    eta_b: np.ndarray
    backend: str | None = None

    @classmethod
    def at(cls, state: CoupledState, cfg, s: float, backend=None) -> "ShiftedJacobian":
        _, da, db = system_for(cfg, backend).eta_partials(state.y)
        return cls(cfg, float(s), da, db, backend)

    def to_sparse(self, state: CoupledState) -> sp.csr_matrix:
        jac = assemble_jacobian(state, self.cfg)
        return (sp.identity(jac.shape[0]) - self.s * jac).tocsr()


def solve_linear(matrix: ShiftedJacobian, rhs) -> np.ndarray:
    """Solve the structured Newton system; cost is linear in ``nx * ny``."""
    sys_ = system_for(matrix.cfg, matrix.backend)
    return sys_.solve(matrix.s, matrix.eta_a, matrix.eta_b, rhs)


@dataclass
class StepStats:
    t: float
    dt_taken: float
    newton_iterations: int
    error_estimate: float
    accepted: bool
    newton_converged: bool = True
    net_sulfur_source: float = 0.0


def _wrms(v, scale) -> float:
    with np.errstate(over="ignore"):  # an overflowing norm is reported as inf
        return float(np.sqrt(np.mean((v / scale) ** 2)))


class _Stepper:
    """TR-BDF2 step on a :class:`TwoScaleSystem` with optional frozen tolerances."""

    def __init__(self, sys_: TwoScaleSystem, rel_tol=None, abs_tol=None):
        ts = sys_.cfg.time
        self.sys = sys_
        self.rtol = ts.rel_tol if rel_tol is None else rel_tol
        self.atol = ts.abs_tol if abs_tol is None else abs_tol
        self.newton_tol = ts.newton_tol
        self.max_iter = ts.newton_max_iter
        self.max_norm = ts.error_norm == "max"

    def _stage(self, psi, guess, s, scale):
        """Newton solve of ``Y = psi + s*f(Y)``; returns ``(Y, f(Y), iters, converged, eta partials)``."""
        sys_ = self.sys
        Y = guess.copy()
        f = sys_.rhs(Y)
        prev = None
        for it in range(1, self.max_iter + 1):
            _, da, db = sys_.eta_partials(Y)
            resid = psi + s * f - Y
            delta = sys_.solve(s, da, db, resid)
            Y += delta
            f = sys_.rhs(Y)
            norm = _wrms(delta, np.maximum(scale, self.rtol * np.abs(Y)))
            if not math.isfinite(norm):
                return Y, f, it, False, (da, db)
            if norm <= self.newton_tol:
                return Y, f, it, True, (da, db)
            if prev is not None and norm > 0.9 * prev and it >= 3:
                return Y, f, it, False, (da, db)
            prev = norm
        return Y, f, self.max_iter, False, (da, db)

    def step(self, y, f0, h):
        """One TR-BDF2 step of size ``h`` from ``y`` (``f0 = f(y)``)."""
        sys_ = self.sys
        s = D * h
        scale = self.atol + self.rtol * np.abs(y)

        psi2 = y + s * f0
        Y2, f2, it2, ok2, _ = self._stage(psi2, y.copy(), s, scale)
        if not ok2:
            return None, None, it2, math.inf, False, 0.0
        psi3 = y + h * W * (f0 + f2)
        guess3 = y + (Y2 - y) / GAMMA
        Y3, f3, it3, ok3, (da, db) = self._stage(psi3, guess3, s, scale)
        iters = it2 + it3
        if not ok3:
            return None, None, iters, math.inf, False, 0.0

        est = h * (B_ERR[0] * f0 + B_ERR[1] * f2 + B_ERR[2] * f3)
        est = sys_.solve(s, da, db, est)
        err_scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(Y3))
        if self.max_norm:
            err = float(np.max(np.abs(est) / err_scale))
        else:
            err = _wrms(est, err_scale)
        net = h * (
            B_SOL[0] * sys_.sulfur_source(y) + B_SOL[1] * sys_.sulfur_source(Y2) + B_SOL[2] * sys_.sulfur_source(Y3)
        )
        return Y3, f3, iters, err, True, net


def implicit_step(state: CoupledState, dt: float, cfg, backend=None, rel_tol=None, abs_tol=None):
    """Advance by one TR-BDF2 step of size ``dt``.

    Returns ``(new_state, stats)``.  If Newton fails to converge the original
    state is returned with ``stats.accepted`` and ``stats.newton_converged``
    false; the caller should retry with a smaller step.  ``stats.accepted``
    is otherwise the error test ``error_estimate <= 1``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    _check_state(state, cfg)
    sys_ = system_for(cfg, backend)
    stepper = _Stepper(sys_, rel_tol, abs_tol)
    y = np.array(state.y)
    y_new, _, iters, err, ok, net = stepper.step(y, sys_.rhs(y), dt)
    if not ok:
        return state, StepStats(state.t, dt, iters, math.inf, False, False, 0.0)
    stats = StepStats(state.t + dt, dt, iters, err, err <= 1.0, True, net)
    return state.with_y(state.t + dt, y_new), stats


def integrate(state0: CoupledState, cfg, sink=None, observer=None, backend=None) -> CoupledState:
    """Adaptive TR-BDF2 integration from ``state0.t`` to ``cfg.time.t_end``.

    ``sink(t, state)`` receives the state at each requested snapshot time,
    hit exactly by shortening the step.  ``observer(state, stats)`` is called
    after every accepted step.  Step sizes follow a PI controller on the
    embedded error estimate.
    """
    _check_state(state0, cfg)
    ts = cfg.time
    t_end = ts.t_end
    t = state0.t
    targets = [tt for tt in ts.snapshot_times if t <= tt <= t_end]
    if sink is not None:
        while targets and targets[0] == t:
            sink(t, state0)
            targets.pop(0)
    else:
        targets = [tt for tt in targets if tt > t]
    if t >= t_end:
        return state0

    sys_ = system_for(cfg, backend)
    stepper = _Stepper(sys_)
    dt_min = 1e-12 * t_end
    y = np.array(state0.y)
    f = sys_.rhs(y)
    h = min(ts.dt_init, t_end - t)
    err_prev = 1.0
    state = state0

    while t < t_end:
        target = targets[0] if targets else t_end
        remaining = target - t
        landing = h >= remaining * (1.0 - 1e-12) or remaining - h < 1e-3 * h
        h_try = remaining if landing else h
        y_new, f_new, iters, err, ok, net = stepper.step(y, f, h_try)
        if not ok:
            h = 0.25 * h_try
        elif err <= 1.0:
            t = target if landing else t + h_try
            y, f = y_new, f_new
            state = state.with_y(t, y)
            err_c = max(err, 1e-8)
            fac = 0.9 * err_c ** (-0.7 / 3.0) * err_prev ** (0.4 / 3.0)
            fac = min(5.0, max(0.2, fac))
            err_prev = err_c
            h_next = h_try * fac
            h = max(h_next, h) if landing and h_try < h else h_next
            if observer is not None:
                observer(state, StepStats(t, h_try, iters, err, True, True, net))
            if landing and targets and targets[0] == t:
                targets.pop(0)
                if sink is not None:
                    sink(t, state)
        else:
            h = h_try * max(0.2, 0.9 * err ** (-1.0 / 3.0))
        if h < dt_min and t < t_end:
            raise IntegrationError(f"step size {h:.3e} fell below dt_min={dt_min:.3e} at t={t:.6g}", state)
    return state


def oracle_step(state: CoupledState, dt: float, cfg, backend=None) -> CoupledState:
    """One classical fourth-order Runge-Kutta step.

    Explicit, so ``dt`` must resolve the stiffest mode (diffusion and the
    Henry exchange at the water-air node); see :func:`oracle_dt_bound`.
    """
    _check_state(state, cfg)
    f = system_for(cfg, backend).rhs
    y = state.y
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return state.with_y(state.t + dt, y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def oracle_dt_bound(cfg) -> float:
    """Rough explicit stability limit from diffusion and the Henry coupling."""
    p = cfg.params
    diff = min(cfg.hx**2 / (2.0 * p.d1), cfg.hy**2 / (2.0 * max(p.d2, p.d3)))
    robin = cfg.hy / (2.0 * p.B) if p.B > 0 else math.inf
    return min(diff, 2.0 * robin)


def oracle_run(state: CoupledState, t_end: float, dt: float, cfg, backend=None) -> CoupledState:
    """Fixed-step RK4 from ``state.t`` to ``t_end``; the last step is shortened to land exactly."""
    n = max(1, int(math.ceil((t_end - state.t) / dt - 1e-9)))
    h = (t_end - state.t) / n
    f = system_for(cfg, backend).rhs
    y = np.array(state.y)
    for _ in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return state.with_y(t_end, y)


def species_discrepancy(state: CoupledState, reference: CoupledState) -> dict:
    """Max-norm difference per species, relative to the reference's max magnitude.

    A species that is identically zero in the reference is compared in
    absolute terms.
    """
    out = {}
    for name in ("u1", "u2", "u3", "u4"):
        a = getattr(state, name)
        b = getattr(reference, name)
        scale = float(np.max(np.abs(b)))
        diff = float(np.max(np.abs(a - b)))
        out[name] = diff / scale if scale > 0 else diff
    return out

"""Multiple shooting for the two-point boundary-value problem.

The necessary conditions are solved as one stacked root-finding problem
whose unknowns are the control samples u_0..u_N, the four independent
multiplier sequences, and (for two or more segments) the interior
segment-start states; the log-constraint multipliers are eliminated through
their closed forms. The system carries one more unknown than equations per
actuated dimension (the final control sample has no stationarity equation
of its own), so Newton steps are computed by dense least squares throughout
and convergence is certified afterwards by an independent single-shot
residual assembly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from ._kernel import is_scalar_model
from ._scalar_program import ScalarProgram
from .integrator import StepFailure, Trajectory, simulate
from .lie import compose, exp, inverse, log
from .optimal_control import (
    KktResidual,
    MultiplierSet,
    OcProblem,
    assemble_kkt_on,
    eliminate_multipliers,
    total_cost,
)

HOMOTOPY_SCHEDULE = (0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class ShootingConfig:
    """Solver knobs.

    ``tol`` is the certificate target (residual infinity norm of the full
    necessary-condition stack); the internal Newton iteration drives the
    shooting residual below ``cert_safety * tol`` so that the
    solver-independent recheck passes. ``init_strategy`` is one of
    'zeros' (unforced-flow interior states), 'linear-interpolation', or
    'warm-start' (requires ``warm_start`` data).
    """

    segments: int = 1
    tol: float = 1e-6
    max_newton: int = 200
    fd_eps: float = 1e-6
    damping: float = 0.5
    min_step: float = 2.0 ** -20
    init_strategy: str = "zeros"
    homotopy: str = "auto"  # auto | on | off
    cert_safety: float = 1e-2
    step_tol: float = 1e-12
    warm_start: Optional[dict] = None


@dataclass(eq=False)
class OcSolution:
    trajectory: Trajectory
    multipliers: MultiplierSet
    cost: float
    residual_norm: float
    newton_iters: int
    converged: bool
    kkt: KktResidual = None
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Generic Newton pieces


def fd_jacobian(residual_map: Callable, unknowns: np.ndarray,
                fd_eps: float = 1e-6) -> np.ndarray:
    """Dense central-difference Jacobian of an arbitrary residual map."""
    x = np.asarray(unknowns, dtype=float)
    r0 = np.atleast_1d(residual_map(x))
    J = np.empty((r0.size, x.size))
    for j in range(x.size):
        dx = np.zeros(x.size)
        dx[j] = fd_eps
        try:
            rp = np.atleast_1d(residual_map(x + dx))
            rm = np.atleast_1d(residual_map(x - dx))
            J[:, j] = (rp - rm) / (2 * fd_eps)
        except StepFailure:
            # fall back to the side that still integrates
            try:
                rp = np.atleast_1d(residual_map(x + dx))
                J[:, j] = (rp - r0) / fd_eps
            except StepFailure:
                rm = np.atleast_1d(residual_map(x - dx))
                J[:, j] = (r0 - rm) / fd_eps
    return J


def newton_step(J: np.ndarray, r: np.ndarray,
                gauge: Optional[np.ndarray] = None) -> np.ndarray:
    """Solve J delta = -r; dense direct solve, least squares when the system
    is not square (or singular).

    ``gauge`` optionally names unknown indices whose update is pinned to
    zero when the system is underdetermined by exactly that many
    directions: the square bordered system then yields an exact solution of
    J delta = -r by LU at a fraction of the pivoted-QR cost. Any failure or
    implausible step falls back to least squares.
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    m, n = J.shape
    if m == n:
        try:
            return np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            pass
    elif gauge is not None and m + len(gauge) == n:
        rows = np.zeros((len(gauge), n))
        rows[np.arange(len(gauge)), np.asarray(gauge)] = 1.0
        try:
            delta = np.linalg.solve(np.vstack([J, rows]),
                                    np.concatenate([-r, np.zeros(len(gauge))]))
            residual = np.linalg.norm(J @ delta + r)
            if np.isfinite(residual) and residual <= 1e-8 * max(1.0, np.linalg.norm(r)):
                return delta
        except np.linalg.LinAlgError:
            pass
    delta, _, _, _ = scipy.linalg.lstsq(J, -r, lapack_driver="gelsy")
    return delta


def backtrack(residual_map: Callable, x: np.ndarray, delta: np.ndarray,
              norm0: float, damping: float = 0.5,
              min_step: float = 2.0 ** -20):
    """Shrink the step until the residual 2-norm strictly decreases.

    Returns (x_new, r_new, alpha) or None when the line search exhausts.
    Simulation failures inside a trial are treated as infinite residuals.
    """
    alpha = 1.0
    while alpha >= min_step:
        trial = x + alpha * delta
        try:
            r = residual_map(trial)
            if np.linalg.norm(r) < norm0 and np.all(np.isfinite(r)):
                return trial, r, alpha
        except StepFailure:
            pass
        alpha *= damping
    return None


# ---------------------------------------------------------------------------
# Typed (group-generic) residual program


class GeneralProgram:
    """Reference shooting program built on the typed residual assembly.

    Handles arbitrary factor groups and stage costs; Jacobians come from
    plain dense finite differences, so this path is meant for short
    horizons (oracles and non-scalar models).
    """

    def __init__(self, problem: OcProblem, segments: int, fd_eps: float = 1e-6,
                 step_tol: float = 1e-12):
        self.problem = problem
        model = problem.model
        self.model = model
        self.fd_eps = fd_eps
        self.step_tol = step_tol
        n = problem.n_steps
        self.n = n
        if segments < 1 or n // segments < 1:
            raise ValueError("invalid segment count")
        base = n // segments
        self.bounds = [s * base for s in range(segments)] + [n]
        self.segments = segments
        da, du = model.dims()
        self.da, self.du = da, du
        self.state_dim = 2 * (da + du)
        self.n_core = (n + 1) * da + 2 * n * da + 2 * n * du
        self.n_unknowns = self.n_core + self.state_dim * (segments - 1)
        self.n_residuals = (
            2 * (n - 1) * (da + du) + n * da + self.state_dim * segments
        )

    @property
    def gauge_indices(self) -> list:
        # final momentum-update multiplier on the actuated factor
        end = (self.n + 1) * self.da + 2 * self.n * self.da
        return list(range(end - self.da, end))

    # -- packing ----------------------------------------------------------------

    def unpack(self, x: np.ndarray):
        n, da, du = self.n, self.da, self.du
        act, unact = self.model.actuated, self.model.unactuated
        pos = 0

        def take(count):
            nonlocal pos
            out = x[pos: pos + count]
            pos += count
            return out

        controls = [act.coalgebra(take(da)) for _ in range(n + 1)]
        lam1 = [act.algebra(take(da)) for _ in range(n)]
        lam3 = [act.algebra(take(da)) for _ in range(n)]
        lam4 = [unact.algebra(take(du)) for _ in range(n)]
        lam6 = [unact.algebra(take(du)) for _ in range(n)]
        interior = []
        from .integrator import ProductState

        for _ in range(self.segments - 1):
            g_a = exp(act.algebra(take(da)))
            g_u = exp(unact.algebra(take(du)))
            mu_a = act.coalgebra(take(da))
            mu_u = unact.coalgebra(take(du))
            interior.append(ProductState(g_a, g_u, mu_a, mu_u))
        lams = MultiplierSet(
            lam1,
            [act.coalgebra(np.zeros(da)) for _ in range(n)],
            lam3,
            lam4,
            [unact.coalgebra(np.zeros(du)) for _ in range(n)],
            lam6,
        )
        return controls, lams, interior

    def initial_vector(self, strategy: str = "zeros") -> np.ndarray:
        x = np.zeros(self.n_unknowns)
        if self.segments == 1:
            return x
        act, unact = self.model.actuated, self.model.unactuated
        zero_u = [act.coalgebra(np.zeros(self.da)) for _ in range(self.n + 1)]
        flow = simulate(self.model, self.problem.start, zero_u, self.n,
                        tol=self.step_tol)
        chunks = []
        for b in self.bounds[1:-1]:
            s = flow.states[b]
            chunks.append(np.concatenate([
                log(s.g_a).coords, log(s.g_u).coords,
                s.mu_a.coords, s.mu_u.coords]))
        x[self.n_core:] = np.concatenate(chunks)
        return x

    # -- residuals ----------------------------------------------------------------

    def residual(self, x: np.ndarray) -> np.ndarray:
        controls, lams, interior = self.unpack(x)
        model = self.model
        states, fs, residuals = [self.problem.start], [], []
        seg_ends = []
        for s in range(self.segments):
            lo, hi = self.bounds[s], self.bounds[s + 1]
            start = self.problem.start if s == 0 else interior[s - 1]
            seg = simulate(model, start, controls[lo: hi + 1], hi - lo,
                           tol=self.step_tol)
            fs.extend(seg.fs)
            residuals.append(seg.step_residuals)
            if s == self.segments - 1:
                states.extend(seg.states[1:])
            else:
                # junction state comes from the unknowns; the simulated end
                # only feeds the continuity residual
                seg_ends.append(seg.states[-1])
                states.extend(seg.states[1:-1])
                states.append(interior[s])
        traj = Trajectory(states, fs, controls, model.step_h,
                          np.concatenate(residuals))
        lams = eliminate_multipliers(self.problem, traj, lams)
        kkt = assemble_kkt_on(self.problem, traj, lams)
        blocks = []
        for fam in (kkt.adjoint_a, kkt.adjoint_u, kkt.adjoint_lam3,
                    kkt.adjoint_lam6, kkt.optimality):
            blocks.extend(v.coords for v in fam)
        blocks.append(kkt.boundary.stacked())
        for s, end in enumerate(seg_ends):
            nxt = interior[s]
            blocks.append(np.concatenate([
                log(compose(inverse(end.g_a), nxt.g_a)).coords,
                log(compose(inverse(end.g_u), nxt.g_u)).coords,
                nxt.mu_a.coords - end.mu_a.coords,
                nxt.mu_u.coords - end.mu_u.coords,
            ]))
        return np.concatenate(blocks)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        return fd_jacobian(self.residual, x, self.fd_eps)

    def control_vectors(self, x: np.ndarray):
        return self.unpack(x)[0]

    def multiplier_set(self, x: np.ndarray) -> MultiplierSet:
        controls, lams, _ = self.unpack(x)
        traj = simulate(self.model, self.problem.start, controls, self.n,
                        tol=self.step_tol)
        return eliminate_multipliers(self.problem, traj, lams)


def segment_patching(problem: OcProblem, config: ShootingConfig):
    """Build the shooting residual program for the configured segmentation.

    With a single segment the map reduces to the plain stacked
    necessary-condition residuals; with more, unknowns gain interior
    segment-start states and residuals gain the matching continuity
    constraints.
    """
    if is_scalar_model(problem.model) and problem.cost.kind == "quadratic_control":
        return ScalarProgram(problem, config.segments, fd_eps=config.fd_eps,
                             step_tol=config.step_tol)
    return GeneralProgram(problem, config.segments, fd_eps=config.fd_eps,
                          step_tol=config.step_tol)


# ---------------------------------------------------------------------------
# Newton driver and the public solve


@dataclass(eq=False)
class _NewtonRun:
    x: np.ndarray
    iters: int
    residual_norm: float
    status: str  # converged | max_iter | stalled | failed


def _drive_newton(program, x0: np.ndarray, config: ShootingConfig,
                  tol_int: float) -> _NewtonRun:
    x = x0.copy()
    try:
        r = program.residual(x)
    except StepFailure:
        return _NewtonRun(x, 0, math.inf, "failed")
    best_x, best_norm = x.copy(), float(np.abs(r).max())
    iters = 0
    while iters < config.max_newton:
        norm = float(np.abs(r).max())
        if norm < best_norm:
            best_x, best_norm = x.copy(), norm
        if norm <= tol_int:
            return _NewtonRun(x, iters, norm, "converged")
        J = program.jacobian(x)
        delta = newton_step(J, r, getattr(program, "gauge_indices", None))
        hit = backtrack(program.residual, x, delta, float(np.linalg.norm(r)),
                        config.damping, config.min_step)
        iters += 1
        if hit is None:
            return _NewtonRun(best_x, iters, best_norm, "stalled")
        x, r, _ = hit
    norm = float(np.abs(r).max())
    if norm < best_norm:
        best_x, best_norm = x, norm
    return _NewtonRun(best_x, iters, best_norm, "max_iter")


def _certify(problem: OcProblem, program, x: np.ndarray):
    """Independent single-shot certificate at the candidate unknowns."""
    controls = program.control_vectors(x)
    traj = simulate(problem.model, problem.start, controls, problem.n_steps)
    lams = program.multiplier_set(x)
    lams = eliminate_multipliers(problem, traj, lams)
    kkt = assemble_kkt_on(problem, traj, lams)
    return kkt, traj, lams, controls


def solve(problem: OcProblem, config: ShootingConfig = ShootingConfig()) -> OcSolution:
    """Solve the discrete optimal-control necessary conditions.

    Tries a cold start first; when that stalls and the problem provides a
    continuation family, re-solves along the gravity-scaling homotopy
    schedule, warm-starting each stage. A converged flag always reflects
    the independent certificate, never solver-internal state.
    """
    homotopy_used = False
    schedule = []
    if config.homotopy == "on" and problem.continuation is not None:
        runs, iters = _solve_homotopy(problem, config)
        homotopy_used = True
    else:
        runs, iters = _solve_single(problem, config, None)
        if (runs.status != "converged" and config.homotopy == "auto"
                and problem.continuation is not None):
            runs, extra = _solve_homotopy(problem, config)
            iters += extra
            homotopy_used = True
    if homotopy_used:
        schedule = list(HOMOTOPY_SCHEDULE)

    program = segment_patching(problem, config)
    x = runs.x
    total_iters = iters

    # Certificate loop: tighten the internal tolerance until the
    # solver-independent recheck meets the requested tol.
    tol_int = config.cert_safety * config.tol
    kkt, traj, lams, controls = _certify(problem, program, x)
    cert_norm = kkt.inf_norm()
    rounds = 0
    while cert_norm > config.tol and runs.status == "converged" and rounds < 3:
        tol_int *= 0.1
        runs = _drive_newton(program, x, config, tol_int)
        total_iters += runs.iters
        x = runs.x
        kkt, traj, lams, controls = _certify(problem, program, x)
        cert_norm = kkt.inf_norm()
        rounds += 1

    converged = bool(cert_norm <= config.tol)
    return OcSolution(
        trajectory=traj,
        multipliers=lams,
        cost=total_cost(problem, traj),
        residual_norm=cert_norm,
        newton_iters=total_iters,
        converged=converged,
        kkt=kkt,
        info={
            "status": runs.status,
            "internal_residual": runs.residual_norm,
            "segments": config.segments,
            "unknowns": program.n_unknowns,
            "equations": program.n_residuals,
            "homotopy": {"used": homotopy_used, "schedule": schedule},
        },
    )


def _solve_single(problem: OcProblem, config: ShootingConfig,
                  x0: Optional[np.ndarray]) -> tuple[_NewtonRun, int]:
    program = segment_patching(problem, config)
    if x0 is None:
        if config.init_strategy == "warm-start":
            if not config.warm_start:
                raise ValueError("warm-start strategy requires warm_start data")
            x0 = pack_warm_start(program, config.warm_start)
        else:
            x0 = program.initial_vector(config.init_strategy)
    run = _drive_newton(program, x0, config, config.cert_safety * config.tol)
    return run, run.iters


def _solve_homotopy(problem: OcProblem, config: ShootingConfig) -> tuple[_NewtonRun, int]:
    """Re-solve along the gravity-scaling schedule, carrying the iterate."""
    x = None
    total = 0
    run = None
    for scale in HOMOTOPY_SCHEDULE:
        stage = problem if scale == 1.0 else problem.continuation(scale)
        run, iters = _solve_single(stage, config, x)
        total += iters
        x = run.x
    return run, total


def pack_warm_start(program, data: dict) -> np.ndarray:
    """Assemble an initial unknown vector from stored controls/multipliers."""
    x = program.initial_vector("zeros")
    n = program.n
    u = np.asarray(data["controls"], dtype=float).reshape(-1)
    if u.size != n + 1:
        raise ValueError(f"warm start needs {n + 1} control samples, got {u.size}")
    x[: u.size] = u
    lam = data.get("multipliers", {})
    pos = u.size
    for key in ("lam1", "lam3", "lam4", "lam6"):
        vals = np.asarray(lam.get(key, np.zeros(n)), dtype=float).reshape(-1)
        x[pos: pos + vals.size] = vals
        pos += vals.size
    return x

"""Necessary conditions for the discrete optimal-control problem.

Assembles, for a candidate (controls, multipliers), the residuals of every
stationarity condition of the multiplier-augmented cost: the four adjoint
equations (one per configuration / increment slot), the two multiplier
recursions coming from momentum variations, the control optimality
equations, the terminal boundary conditions, and the state equations (the
latter hold by construction once the trajectory is simulated, and are
recorded as residuals).

Index conventions follow the augmented-cost bookkeeping: multipliers exist
for k = 0..N-1; the configuration-slot adjoint equations couple k-1 to k and
therefore run over k = 1..N-1, while the increment-slot equations are local
and run over k = 0..N-1. The increment-slot equations determine the
log-constraint multipliers (lam2, lam5) explicitly, which is how the solver
eliminates them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .integrator import ProductState, Trajectory, simulate
from .lie import (
    Ad,
    AlgebraVector,
    CoAlgebraVector,
    GroupElement,
    coAd,
    coad,
    compose,
    inverse,
    log,
)
from .mechanics import ModelSpec, first_derivs, second_deriv_ops


@dataclass(frozen=True, eq=False)
class StageCost:
    """Per-stage cost with left-trivialized first derivatives.

    ``d_u`` returns algebra coordinates on the actuated factor (the
    derivative pairs against control variations); the configuration and
    increment derivatives return covector coordinates and default to zero.
    """

    value: Callable
    d_u: Callable
    d_ga: Optional[Callable] = None
    d_gu: Optional[Callable] = None
    d_fa: Optional[Callable] = None
    d_fu: Optional[Callable] = None
    kind: str = "custom"


def quadratic_control_cost() -> StageCost:
    """The built-in effort cost: half the squared control norm per stage."""
    return StageCost(
        value=lambda g, f, u: 0.5 * float(u.coords @ u.coords),
        d_u=lambda g, f, u: u.coords.copy(),
        kind="quadratic_control",
    )


@dataclass(eq=False)
class MultiplierSet:
    """The six multiplier sequences, each of length N.

    lam1/lam3 live on the actuated algebra (momentum matching and momentum
    update), lam4/lam6 on the unactuated algebra, lam2/lam5 on the dual
    spaces (the reparameterized log-constraint multipliers).
    """

    lam1: list
    lam2: list
    lam3: list
    lam4: list
    lam5: list
    lam6: list

    @classmethod
    def zeros(cls, model: ModelSpec, n: int) -> "MultiplierSet":
        act, unact = model.actuated, model.unactuated
        return cls(
            [act.algebra(np.zeros(act.dim)) for _ in range(n)],
            [act.coalgebra(np.zeros(act.dim)) for _ in range(n)],
            [act.algebra(np.zeros(act.dim)) for _ in range(n)],
            [unact.algebra(np.zeros(unact.dim)) for _ in range(n)],
            [unact.coalgebra(np.zeros(unact.dim)) for _ in range(n)],
            [unact.algebra(np.zeros(unact.dim)) for _ in range(n)],
        )

    def __len__(self) -> int:
        return len(self.lam1)


@dataclass(frozen=True, eq=False)
class OcProblem:
    """Point-to-point transfer over a fixed horizon with per-stage cost."""

    model: ModelSpec
    n_steps: int
    start: ProductState
    target: ProductState
    cost: StageCost
    name: str = ""
    continuation: Optional[Callable[[float], "OcProblem"]] = None

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError("horizon must contain at least two steps")
        for s in (self.start, self.target):
            if (s.g_a.group != self.model.actuated
                    or s.g_u.group != self.model.unactuated):
                raise ValueError("boundary state not on the model group")


@dataclass(frozen=True, eq=False)
class BoundaryResidual:
    config_a: AlgebraVector
    config_u: AlgebraVector
    mom_a: CoAlgebraVector
    mom_u: CoAlgebraVector

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.config_a.coords, self.config_u.coords,
                               self.mom_a.coords, self.mom_u.coords])


@dataclass(eq=False)
class KktResidual:
    """All residual families plus the trajectory they were evaluated on."""

    adjoint_a: list
    adjoint_u: list
    adjoint_fa: list
    adjoint_fu: list
    adjoint_lam3: list
    adjoint_lam6: list
    optimality: list
    boundary: BoundaryResidual
    state: np.ndarray
    trajectory: Trajectory = None

    def stacked(self) -> np.ndarray:
        blocks = []
        for fam in (self.adjoint_a, self.adjoint_u, self.adjoint_fa,
                    self.adjoint_fu, self.adjoint_lam3, self.adjoint_lam6,
                    self.optimality):
            blocks.extend(v.coords for v in fam)
        blocks.append(self.boundary.stacked())
        blocks.append(self.state)
        return np.concatenate(blocks)

    def inf_norm(self) -> float:
        return float(np.abs(self.stacked()).max())

    def family_maxima(self) -> dict:
        """Worst violation and its index, per family (for reports)."""
        out = {}
        for name in ("adjoint_a", "adjoint_u", "adjoint_fa", "adjoint_fu",
                     "adjoint_lam3", "adjoint_lam6", "optimality"):
            fam = getattr(self, name)
            norms = [float(np.abs(v.coords).max()) for v in fam]
            if norms:
                worst = int(np.argmax(norms))
                # configuration-slot families start at k = 1
                offset = 1 if name in ("adjoint_a", "adjoint_u",
                                       "adjoint_lam3", "adjoint_lam6") else 0
                out[name] = (norms[worst], worst + offset)
        out["boundary"] = (float(np.abs(self.boundary.stacked()).max()), None)
        out["state"] = (float(self.state.max()) if len(self.state) else 0.0, None)
        return out


# ---------------------------------------------------------------------------
# Cost evaluation


def stage_cost(problem: OcProblem, g_k, f_k, u_k) -> float:
    return float(problem.cost.value(g_k, f_k, u_k))


def total_cost(problem: OcProblem, trajectory: Trajectory) -> float:
    model = problem.model
    total = 0.0
    for k in range(problem.n_steps):
        g = _join(model, trajectory.states[k])
        f = _join_f(model, trajectory.fs[k])
        total += float(problem.cost.value(g, f, trajectory.controls[k]))
    return total


def _join(model: ModelSpec, s: ProductState) -> GroupElement:
    return GroupElement(model.group, (s.g_a.rep, s.g_u.rep))


def _join_f(model: ModelSpec, f_pair) -> GroupElement:
    return GroupElement(model.group, (f_pair[0].rep, f_pair[1].rep))


def _phi_deriv(fn, g, f, u, dim) -> np.ndarray:
    if fn is None:
        return np.zeros(dim)
    return np.atleast_1d(np.asarray(fn(g, f, u), dtype=float))


# ---------------------------------------------------------------------------
# Residual families


class _StageContext:
    """Everything index-k residuals need: states, increments, tables."""

    def __init__(self, problem: OcProblem, traj: Trajectory, k: int):
        model = problem.model
        self.model = model
        self.k = k
        self.state = traj.states[k]
        self.f_a, self.f_u = traj.fs[k]
        self.g = _join(model, self.state)
        self.f = _join_f(model, traj.fs[k])
        self.u = traj.controls[k]
        self.fd = first_derivs(model, self.g, self.f)
        self.ops = second_deriv_ops(model, self.g, self.f)

    def mixed_a(self, lam1, lam3):
        """lam1 - Ad_{f_a} lam3 and Ad_{f_a^{-1}} lam1 (recurring operands)."""
        return (
            AlgebraVector(self.model.actuated,
                          lam1.coords - Ad(self.f_a, lam3).coords),
            Ad(inverse(self.f_a), lam1),
        )

    def mixed_u(self, lam4, lam6):
        return (
            AlgebraVector(self.model.unactuated,
                          lam4.coords - Ad(self.f_u, lam6).coords),
            Ad(inverse(self.f_u), lam4),
        )


def _config_slot_residual(ctx: _StageContext, slot: str, phi_term: np.ndarray,
                          lams: MultiplierSet) -> np.ndarray:
    """Common second-derivative combination for one wrt-slot at index k."""
    k = ctx.k
    diff_a, pulled_a = ctx.mixed_a(lams.lam1[k], lams.lam3[k])
    diff_u, pulled_u = ctx.mixed_u(lams.lam4[k], lams.lam6[k])
    ops = ctx.ops
    return (
        phi_term
        + ops.apply(slot, "ag", diff_a).coords
        - ops.apply(slot, "af", pulled_a).coords
        + ops.apply(slot, "ug", diff_u).coords
        - ops.apply(slot, "uf", pulled_u).coords
    )


def adjoint_residuals(problem: OcProblem, trajectory: Trajectory,
                      multipliers: MultiplierSet,
                      contexts: Optional[list] = None):
    """Residuals of the four adjoint equations.

    Returns (res_ga, res_gu, res_fa, res_fu): the configuration-slot
    families for k = 1..N-1 and the increment-slot families for
    k = 0..N-1, each as covectors on the matching factor.
    """
    model = problem.model
    n = problem.n_steps
    lams = multipliers
    if len(lams) != n:
        raise ValueError(f"multiplier sequences must have length {n}")
    ctxs = contexts or [_StageContext(problem, trajectory, k) for k in range(n)]
    cost = problem.cost
    res_ga, res_gu, res_fa, res_fu = [], [], [], []

    for k in range(n):
        ctx = ctxs[k]
        half_u = 0.5 * model.step_h * ctx.u.coords

        if k >= 1:
            phi = _phi_deriv(cost.d_ga, ctx.g, ctx.f, ctx.u, model.actuated.dim)
            core = _config_slot_residual(ctx, "ag", phi, lams)
            core += lams.lam2[k - 1].coords
            core -= coAd(inverse(ctx.f_a), lams.lam2[k]).coords
            res_ga.append(CoAlgebraVector(model.actuated, core))

            phi = _phi_deriv(cost.d_gu, ctx.g, ctx.f, ctx.u, model.unactuated.dim)
            core = _config_slot_residual(ctx, "ug", phi, lams)
            core += lams.lam5[k - 1].coords
            core -= coAd(inverse(ctx.f_u), lams.lam5[k]).coords
            res_gu.append(CoAlgebraVector(model.unactuated, core))

        # increment slots: local in k, define lam2/lam5
        phi = _phi_deriv(cost.d_fa, ctx.g, ctx.f, ctx.u, model.actuated.dim)
        core = _config_slot_residual(ctx, "af", phi, lams)
        _, pulled_a = ctx.mixed_a(lams.lam1[k], lams.lam3[k])
        core -= coad(pulled_a, ctx.fd.m_af).coords
        pushed_a = Ad(ctx.f_a, lams.lam3[k])
        stage_mom = model.actuated.coalgebra(
            ctx.state.mu_a.coords + ctx.fd.m_ag.coords + half_u)
        core += coAd(ctx.f_a, coad(pushed_a, stage_mom)).coords
        core -= lams.lam2[k].coords
        res_fa.append(CoAlgebraVector(model.actuated, core))

        phi = _phi_deriv(cost.d_fu, ctx.g, ctx.f, ctx.u, model.unactuated.dim)
        core = _config_slot_residual(ctx, "uf", phi, lams)
        _, pulled_u = ctx.mixed_u(lams.lam4[k], lams.lam6[k])
        core -= coad(pulled_u, ctx.fd.m_uf).coords
        pushed_u = Ad(ctx.f_u, lams.lam6[k])
        stage_mom = model.unactuated.coalgebra(
            ctx.state.mu_u.coords + ctx.fd.m_ug.coords)
        core += coAd(ctx.f_u, coad(pushed_u, stage_mom)).coords
        core -= lams.lam5[k].coords
        res_fu.append(CoAlgebraVector(model.unactuated, core))

    return res_ga, res_gu, res_fa, res_fu


def lam_recursions(problem: OcProblem, multipliers: MultiplierSet,
                   trajectory: Trajectory):
    """Residuals of the two backward multiplier recursions, k = 1..N-1.

    These come from momentum variations, so the update couples through the
    adjoint action of the increment (identity on abelian factors).
    """
    model = problem.model
    lams = multipliers
    res_a, res_u = [], []
    for k in range(1, problem.n_steps):
        f_a, f_u = trajectory.fs[k]
        res_a.append(AlgebraVector(
            model.actuated,
            lams.lam1[k].coords - Ad(f_a, lams.lam3[k]).coords
            + lams.lam3[k - 1].coords))
        res_u.append(AlgebraVector(
            model.unactuated,
            lams.lam4[k].coords - Ad(f_u, lams.lam6[k]).coords
            + lams.lam6[k - 1].coords))
    return res_a, res_u


def optimality_residuals(problem: OcProblem, trajectory: Trajectory,
                         multipliers: MultiplierSet):
    """Control stationarity residuals, k = 0..N-1 (no backward term at 0)."""
    model = problem.model
    lams = multipliers
    h = model.step_h
    out = []
    for k in range(problem.n_steps):
        g = _join(model, trajectory.states[k])
        f = _join_f(model, trajectory.fs[k])
        f_a = trajectory.fs[k][0]
        du = np.atleast_1d(np.asarray(
            problem.cost.d_u(g, f, trajectory.controls[k]), dtype=float))
        core = du + 0.5 * h * lams.lam1[k].coords
        core -= 0.5 * h * Ad(f_a, lams.lam3[k]).coords
        if k >= 1:
            core -= 0.5 * h * lams.lam3[k - 1].coords
        out.append(AlgebraVector(model.actuated, core))
    return out


def boundary_residuals(problem: OcProblem, trajectory: Trajectory) -> BoundaryResidual:
    """Terminal mismatch: configurations in algebra coordinates, momenta directly."""
    end = trajectory.states[problem.n_steps]
    tgt = problem.target
    return BoundaryResidual(
        log(compose(inverse(end.g_a), tgt.g_a)),
        log(compose(inverse(end.g_u), tgt.g_u)),
        CoAlgebraVector(problem.model.actuated,
                        end.mu_a.coords - tgt.mu_a.coords),
        CoAlgebraVector(problem.model.unactuated,
                        end.mu_u.coords - tgt.mu_u.coords),
    )


def eliminate_multipliers(problem: OcProblem, trajectory: Trajectory,
                          multipliers: MultiplierSet) -> MultiplierSet:
    """Fill lam2/lam5 with their closed-form values from the increment-slot
    equations, leaving the other four sequences untouched."""
    zeroed = MultiplierSet(
        multipliers.lam1,
        [problem.model.actuated.coalgebra(np.zeros(problem.model.actuated.dim))
         for _ in range(len(multipliers))],
        multipliers.lam3,
        multipliers.lam4,
        [problem.model.unactuated.coalgebra(np.zeros(problem.model.unactuated.dim))
         for _ in range(len(multipliers))],
        multipliers.lam6,
    )
    _, _, res_fa, res_fu = adjoint_residuals(problem, trajectory, zeroed)
    # with lam2 = 0 the residual is exactly the closed-form value of lam2
    return MultiplierSet(
        multipliers.lam1,
        [CoAlgebraVector(problem.model.actuated, r.coords) for r in res_fa],
        multipliers.lam3,
        multipliers.lam4,
        [CoAlgebraVector(problem.model.unactuated, r.coords) for r in res_fu],
        multipliers.lam6,
    )


def assemble_kkt(problem: OcProblem, controls: Sequence[CoAlgebraVector],
                 multipliers: MultiplierSet) -> KktResidual:
    """Simulate under the controls and evaluate every residual family."""
    if len(controls) != problem.n_steps + 1:
        raise ValueError(f"need {problem.n_steps + 1} control samples")
    trajectory = simulate(problem.model, problem.start, controls, problem.n_steps)
    return assemble_kkt_on(problem, trajectory, multipliers)


def assemble_kkt_on(problem: OcProblem, trajectory: Trajectory,
                    multipliers: MultiplierSet) -> KktResidual:
    """Residual families on an existing trajectory (no re-simulation)."""
    res_ga, res_gu, res_fa, res_fu = adjoint_residuals(problem, trajectory, multipliers)
    rec_a, rec_u = lam_recursions(problem, multipliers, trajectory)
    opt = optimality_residuals(problem, trajectory, multipliers)
    bnd = boundary_residuals(problem, trajectory)
    return KktResidual(res_ga, res_gu, res_fa, res_fu, rec_a, rec_u, opt, bnd,
                       np.asarray(trajectory.step_residuals, dtype=float),
                       trajectory)

"""Forward dynamics: the interconnected discrete Hamilton equations.

One step maps (g_k, mu_k) to (g_{k+1}, mu_{k+1}) under the trapezoidal
control half-forces u-_k = (h/2) u_k and u+_k = (h/2) u_{k+1}. The momentum
matching that defines the increment f_k is implicit and solved by Newton
iteration on the stacked algebra coordinates of (log f_a, log f_u).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernel
from .lie import (
    AlgebraVector,
    CoAlgebraVector,
    GroupElement,
    coAd,
    coalgebra_join,
    compose,
    exp,
    inverse,
    log,
    product_split,
)
from .mechanics import FirstDerivs, ModelSpec, first_derivs

STEP_TOL = 1e-12
STEP_MAX_ITER = 50
_STEP_FD_EPS = 1e-7


class StepFailure(RuntimeError):
    """Implicit step solve did not converge (or left the log domain)."""

    def __init__(self, message, residual_norm=np.inf, index=None):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.index = index


@dataclass(frozen=True, eq=False)
class ProductState:
    """Configurations and momenta of both factors at one time index."""

    g_a: GroupElement
    g_u: GroupElement
    mu_a: CoAlgebraVector
    mu_u: CoAlgebraVector


@dataclass(eq=False)
class Trajectory:
    """A discrete flow: states, the per-step increments, and the controls.

    ``controls`` holds the N+1 samples u_0..u_N that the trapezoidal stencil
    consumes (u_N only enters the final half-force). ``fs`` stores the
    per-step increment pair (f_a, f_u); simulation guarantees consistency
    with consecutive states, while hand-built instances may decouple them.
    """

    states: list
    fs: list
    controls: list
    step_h: float
    step_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_steps(self) -> int:
        return len(self.states) - 1


@dataclass(frozen=True, eq=False)
class StepResult:
    f_a: GroupElement
    f_u: GroupElement
    state: ProductState
    residual_norm: float
    iterations: int


def _factor_parts(model: ModelSpec, s: ProductState):
    if s.g_a.group != model.actuated or s.g_u.group != model.unactuated:
        raise ValueError("state factors do not match the model group")


def _join(model: ModelSpec, a: GroupElement, u: GroupElement) -> GroupElement:
    return GroupElement(model.group, (a.rep, u.rep))


def _momentum_defect(model: ModelSpec, g: GroupElement, fd: FirstDerivs,
                     f_a: GroupElement, f_u: GroupElement,
                     mu_a: np.ndarray, mu_u: np.ndarray,
                     u_minus: np.ndarray) -> np.ndarray:
    r_a = -fd.m_ag.coords + coAd(inverse(f_a), fd.m_af).coords - u_minus - mu_a
    r_u = -fd.m_ug.coords + coAd(inverse(f_u), fd.m_uf).coords - mu_u
    return np.concatenate([r_a, r_u])


def step_hamilton(model: ModelSpec, s: ProductState, u_k: CoAlgebraVector,
                  u_next: CoAlgebraVector, f_guess: Optional[np.ndarray] = None,
                  tol: float = STEP_TOL, max_iter: int = STEP_MAX_ITER) -> StepResult:
    """One discrete Hamilton step.

    Solves the implicit incoming-momentum equations for (f_a, f_u) by Newton
    iteration with a finite-difference Jacobian (initial guess: previous
    step's solution, zero by default), then advances the configurations by
    right translation and the momenta by the explicit updates.
    """
    _factor_parts(model, s)
    da, du = model.dims()
    h = model.step_h
    u_minus = 0.5 * h * u_k.coords
    u_plus = 0.5 * h * u_next.coords
    g = _join(model, s.g_a, s.g_u)

    x = np.zeros(da + du) if f_guess is None else np.asarray(f_guess, float).copy()

    def build(xv):
        f_a = exp(model.actuated.algebra(xv[:da]))
        f_u = exp(model.unactuated.algebra(xv[da:]))
        f = _join(model, f_a, f_u)
        fd = first_derivs(model, g, f)
        return f_a, f_u, fd

    def residual(xv):
        f_a, f_u, fd = build(xv)
        return _momentum_defect(model, g, fd, f_a, f_u,
                                s.mu_a.coords, s.mu_u.coords, u_minus)

    iters = 0
    while True:
        f_a, f_u, fd = build(x)
        r = _momentum_defect(model, g, fd, f_a, f_u,
                             s.mu_a.coords, s.mu_u.coords, u_minus)
        # tolerance floored at the cancellation noise of the residual scale
        scale = (1.0 + np.abs(s.mu_a.coords).max() + np.abs(s.mu_u.coords).max()
                 + np.abs(u_minus).max() + np.abs(fd.m_af.coords).max()
                 + np.abs(fd.m_uf.coords).max())
        if np.abs(r).max() <= max(tol, 50.0 * np.finfo(float).eps * scale):
            break
        if iters >= max_iter:
            raise StepFailure(
                f"implicit step stalled at residual {np.abs(r).max():.3e}",
                residual_norm=float(np.abs(r).max()),
            )
        n = da + du
        J = np.empty((n, n))
        for j in range(n):
            dx = np.zeros(n)
            dx[j] = _STEP_FD_EPS
            J[:, j] = (residual(x + dx) - residual(x - dx)) / (2 * _STEP_FD_EPS)
        try:
            delta = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            delta = np.linalg.lstsq(J, -r, rcond=None)[0]
        x = x + delta
        iters += 1
    mu_a_next = coAd(f_a, model.actuated.coalgebra(
        s.mu_a.coords + fd.m_ag.coords + u_minus)).coords + u_plus
    mu_u_next = coAd(f_u, model.unactuated.coalgebra(
        s.mu_u.coords + fd.m_ug.coords)).coords
    state = ProductState(
        compose(s.g_a, f_a),
        compose(s.g_u, f_u),
        model.actuated.coalgebra(mu_a_next),
        model.unactuated.coalgebra(mu_u_next),
    )
    return StepResult(f_a, f_u, state, float(np.abs(r).max()), iters)


def simulate(model: ModelSpec, s0: ProductState, controls: Sequence[CoAlgebraVector],
             n_steps: int, tol: float = STEP_TOL, max_iter: int = STEP_MAX_ITER,
             method: str = "auto") -> Trajectory:
    """Compose the Hamilton step over the horizon.

    Needs n_steps+1 control samples because the step at k references
    u_{k+1}. ``method`` 'auto' routes scalar abelian models through the
    fast coordinate kernel; 'typed' forces the generic path.
    """
    if len(controls) < n_steps + 1:
        raise ValueError(f"need {n_steps + 1} control samples, got {len(controls)}")
    if method == "auto" and _kernel.is_scalar_model(model):
        return _kernel.simulate_scalar(model, s0, controls, n_steps, tol, max_iter)

    states = [s0]
    fs = []
    residuals = np.zeros(n_steps)
    guess = None
    for k in range(n_steps):
        try:
            step = step_hamilton(model, states[-1], controls[k], controls[k + 1],
                                 f_guess=guess, tol=tol, max_iter=max_iter)
        except StepFailure as err:
            err.index = k
            raise
        states.append(step.state)
        fs.append((step.f_a, step.f_u))
        residuals[k] = step.residual_norm
        guess = np.concatenate([log(step.f_a).coords, log(step.f_u).coords])
    return Trajectory(states, fs, list(controls[: n_steps + 1]), model.step_h, residuals)


def legendre_minus(model: ModelSpec, g_k: GroupElement, f_k: GroupElement,
                   u_minus: CoAlgebraVector):
    """Incoming discrete Legendre transform: (g_k, f_k) -> (g_k, mu_k).

    ``u_minus`` is the half-force on the actuated factor (already h/2
    scaled); pass zeros for the unforced transform.
    """
    fd = first_derivs(model, g_k, f_k)
    f_a, f_u = product_split(f_k)
    mu_a = model.actuated.coalgebra(
        -fd.m_ag.coords + coAd(inverse(f_a), fd.m_af).coords - u_minus.coords)
    mu_u = model.unactuated.coalgebra(
        -fd.m_ug.coords + coAd(inverse(f_u), fd.m_uf).coords)
    return g_k, coalgebra_join(mu_a, mu_u)


def legendre_plus(model: ModelSpec, g_k: GroupElement, f_k: GroupElement,
                  u_plus: CoAlgebraVector):
    """Outgoing discrete Legendre transform: (g_k, f_k) -> (g_k f_k, mu_{k+1})."""
    fd = first_derivs(model, g_k, f_k)
    mu_a = model.actuated.coalgebra(fd.m_af.coords + u_plus.coords)
    mu_u = model.unactuated.coalgebra(fd.m_uf.coords)
    return compose(g_k, f_k), coalgebra_join(mu_a, mu_u)


def time_reversed_model(model: ModelSpec) -> ModelSpec:
    """Model generating the inverse discrete flow.

    Replaces the step Lagrangian by its adjoint L(g f, f^-1): stepping it
    from a momentum-negated state retraces the forward trajectory exactly
    (up to the step solver tolerance). Derivative tables fall back to
    finite differences.
    """
    def reversed_lagrangian(g, f):
        gf = GroupElement(model.group, model.group.compose_rep(g.rep, f.rep))
        f_inv = GroupElement(model.group, model.group.inverse_rep(f.rep))
        return model.lagrangian(gf, f_inv)

    return ModelSpec(
        group=model.group,
        params=model.params,
        step_h=model.step_h,
        lagrangian=reversed_lagrangian,
        name=model.name + "_reversed",
        coordinate_names=model.coordinate_names,
    )


def el_residual(model: ModelSpec, g_prev: GroupElement, f_prev: GroupElement,
                g_cur: GroupElement, f_cur: GroupElement,
                u_cur: CoAlgebraVector):
    """Left-hand side of the interconnected discrete Euler-Lagrange equations.

    Under the trapezoidal rule both half-impulses meeting at an interior
    node reference the same sample, so the forcing is h * u_cur and the
    previous sample does not appear. Zero along simulated trajectories.
    """
    prev = first_derivs(model, g_prev, f_prev)
    cur = first_derivs(model, g_cur, f_cur)
    f_a, f_u = product_split(f_cur)
    res_a = (prev.m_af.coords - coAd(inverse(f_a), cur.m_af).coords
             + cur.m_ag.coords + model.step_h * u_cur.coords)
    res_u = (prev.m_uf.coords - coAd(inverse(f_u), cur.m_uf).coords
             + cur.m_ug.coords)
    return (model.actuated.coalgebra(res_a), model.unactuated.coalgebra(res_u))

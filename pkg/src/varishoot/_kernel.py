"""Fast coordinate kernel for models with two one-dimensional abelian factors.

Both benchmark systems (and the toy problems used in tests) live on
products of S^1 and R, where group elements reduce to single floats. This
module mirrors the typed integrator on plain scalars so that the shooting
solver's finite-difference columns stay cheap. Semantics match the typed
path: angles wrap on composition, momenta update by the telescoping form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lie import Circle, GroupElement, RealLine, wrap_angle
from .mechanics import ModelSpec

# Slot indices into the 4x4 second-derivative table: configuration and
# increment slots of the actuated / unactuated factors.
AG, AF, UG, UF = 0, 1, 2, 3


def is_scalar_model(model: ModelSpec) -> bool:
    if model.raw_tables is None:
        return False
    return all(
        isinstance(f, Circle) or (isinstance(f, RealLine) and f.n == 1)
        for f in model.group.factors
    )


@dataclass(frozen=True, eq=False)
class ScalarDyn:
    """Closure bundle: tables, step size, and per-factor wrap policy."""

    first: callable
    second: callable
    lagrangian: callable
    h: float
    wrap_a: bool
    wrap_u: bool

    @classmethod
    def from_model(cls, model: ModelSpec) -> "ScalarDyn":
        raw = model.raw_tables
        return cls(
            raw.first,
            raw.second,
            raw.lagrangian,
            model.step_h,
            isinstance(model.actuated, Circle),
            isinstance(model.unactuated, Circle),
        )

    def advance_a(self, g: float, f: float) -> float:
        return wrap_angle(g + f) if self.wrap_a else g + f

    def advance_u(self, g: float, f: float) -> float:
        return wrap_angle(g + f) if self.wrap_u else g + f

    def diff_a(self, g_from: float, g_to: float) -> float:
        return wrap_angle(g_to - g_from) if self.wrap_a else g_to - g_from

    def diff_u(self, g_from: float, g_to: float) -> float:
        return wrap_angle(g_to - g_from) if self.wrap_u else g_to - g_from


class ScalarStepError(RuntimeError):
    def __init__(self, message, residual_norm):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.index = None


def scalar_step(dyn: ScalarDyn, ga, gu, mua, muu, u_minus, u_plus,
                fa, fu, tol, max_iter):
    """One Hamilton step on scalars; (fa, fu) is the warm-start guess.

    The stopping tolerance is floored at the rounding noise of the
    residual's own magnitude, so exploratory iterates with large momenta
    terminate instead of cycling at their cancellation floor.
    """
    for it in range(max_iter + 1):
        m_ag, m_af, m_ug, m_uf = dyn.first(ga, gu, fa, fu)
        r_a = -m_ag + m_af - u_minus - mua
        r_u = -m_ug + m_uf - muu
        res = max(abs(r_a), abs(r_u))
        scale = 1.0 + abs(mua) + abs(muu) + abs(u_minus) + abs(m_af) + abs(m_uf)
        if res <= max(tol, 50.0 * np.finfo(float).eps * scale):
            break
        if it == max_iter:
            raise ScalarStepError(
                f"implicit step stalled at residual {res:.3e}", res)
        S = dyn.second(ga, gu, fa, fu)
        j00 = S[AF, AF] - S[AF, AG]
        j01 = S[UF, AF] - S[UF, AG]
        j10 = S[AF, UF] - S[AF, UG]
        j11 = S[UF, UF] - S[UF, UG]
        det = j00 * j11 - j01 * j10
        if det == 0.0:
            raise ScalarStepError("singular step Jacobian", res)
        fa -= (j11 * r_a - j01 * r_u) / det
        fu -= (j00 * r_u - j10 * r_a) / det
    mua_next = mua + m_ag + u_minus + u_plus
    muu_next = muu + m_ug
    return fa, fu, dyn.advance_a(ga, fa), dyn.advance_u(gu, fu), mua_next, muu_next, res


def scalar_simulate(dyn: ScalarDyn, ga0, gu0, mua0, muu0, u, n_steps,
                    tol, max_iter, start_state=None, fa0=0.0, fu0=0.0):
    """Run n_steps from scalar initial data under control samples ``u``.

    Returns arrays (ga, gu, mua, muu) of length n_steps+1, increments
    (fa, fu) of length n_steps, and per-step residual norms.
    """
    ga = np.empty(n_steps + 1)
    gu = np.empty(n_steps + 1)
    mua = np.empty(n_steps + 1)
    muu = np.empty(n_steps + 1)
    fa = np.empty(n_steps)
    fu = np.empty(n_steps)
    res = np.empty(n_steps)
    ga[0], gu[0], mua[0], muu[0] = ga0, gu0, mua0, muu0
    half_h = 0.5 * dyn.h
    guess_a, guess_u = fa0, fu0
    for k in range(n_steps):
        try:
            out = scalar_step(dyn, ga[k], gu[k], mua[k], muu[k],
                              half_h * u[k], half_h * u[k + 1],
                              guess_a, guess_u, tol, max_iter)
        except ScalarStepError as err:
            err.index = k
            raise
        fa[k], fu[k], ga[k + 1], gu[k + 1], mua[k + 1], muu[k + 1], res[k] = out
        guess_a, guess_u = fa[k], fu[k]
    return ga, gu, mua, muu, fa, fu, res


# ---------------------------------------------------------------------------
# Bridging to the typed layer


def state_scalars(state) -> tuple:
    """(g_a, g_u, mu_a, mu_u) of a ProductState as plain floats."""
    return (
        _rep_scalar(state.g_a.rep),
        _rep_scalar(state.g_u.rep),
        float(state.mu_a.coords[0]),
        float(state.mu_u.coords[0]),
    )


def _rep_scalar(rep) -> float:
    return float(rep) if np.isscalar(rep) else float(np.asarray(rep).reshape(-1)[0])


def _element(factor, value: float) -> GroupElement:
    if isinstance(factor, Circle):
        return GroupElement(factor, wrap_angle(value))
    return GroupElement(factor, np.array([value]))


def simulate_scalar(model: ModelSpec, s0, controls, n_steps, tol, max_iter):
    """Kernel-backed simulate returning the same typed Trajectory."""
    from .integrator import ProductState, StepFailure, Trajectory

    dyn = ScalarDyn.from_model(model)
    ga0, gu0, mua0, muu0 = state_scalars(s0)
    u = np.array([float(c.coords[0]) for c in controls[: n_steps + 1]])
    try:
        ga, gu, mua, muu, fa, fu, res = scalar_simulate(
            dyn, ga0, gu0, mua0, muu0, u, n_steps, tol, max_iter)
    except ScalarStepError as err:
        raise StepFailure(str(err), residual_norm=err.residual_norm,
                          index=err.index) from err

    act, unact = model.actuated, model.unactuated
    states = [
        ProductState(
            _element(act, ga[k]), _element(unact, gu[k]),
            act.coalgebra([mua[k]]), unact.coalgebra([muu[k]]),
        )
        for k in range(n_steps + 1)
    ]
    fs = [(_element(act, fa[k]), _element(unact, fu[k])) for k in range(n_steps)]
    return Trajectory(states, fs, list(controls[: n_steps + 1]), model.step_h, res)

"""Model layer: discrete Lagrangians on G x G and their derivative tables.

A model is a discrete Lagrangian over one time step, L_d(g, f), on a
two-factor product group (actuated x unactuated), together with optional
analytic tables for its left-trivialized first derivatives and for the
sixteen second-derivative operators that act linearly on multipliers.
Anything not supplied analytically falls back to central finite differences
through one-parameter subgroup perturbations g -> g exp(eps * e_i).

Slot names: 'ag' and 'ug' are the actuated/unactuated configuration slots,
'af' and 'uf' the actuated/unactuated increment slots. A second-derivative
operator is keyed (wrt, of): the derivative of the first map M_of taken in
slot wrt. Its matrix A satisfies (A @ lam)_i = d(M_of)_j/d eps_i lam_j, so
it maps multipliers on the 'of' factor to covectors on the 'wrt' factor.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .lie import (
    CoAlgebraVector,
    GroupElement,
    GroupMismatchError,
    ProductGroup,
    compose,
    exp,
    product_split,
)

SLOTS = ("ag", "af", "ug", "uf")

# Central-difference steps: standard double-precision optima for first and
# (nested) second derivatives.
FD_EPS_FIRST = 1e-6
FD_EPS_SECOND = 1e-4


@dataclass(frozen=True, eq=False)
class RawTables:
    """Coordinate-level closed forms for scalar two-factor abelian models.

    Used by the fast integration kernel; signatures take the four scalar
    coordinates (g_a, g_u, f_a, f_u). ``first`` returns the four M values in
    slot order (ag, af, ug, uf); ``second`` returns a 4x4 array indexed
    [wrt, of] in the same slot order. The optional ``*_vec`` variants take
    coordinate arrays over many steps at once and return shapes (4, n) and
    (4, 4, n); the solver uses them for batched residual assembly.
    """

    lagrangian: Callable[[float, float, float, float], float]
    first: Callable[[float, float, float, float], tuple]
    second: Callable[[float, float, float, float], np.ndarray]
    first_vec: Optional[Callable] = None
    second_vec: Optional[Callable] = None


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """An interconnected mechanical system in discrete time.

    ``group`` must be a two-factor product (actuated, unactuated). Analytic
    derivative maps are optional per slot; supplied entries must agree with
    the finite-difference fallback (see ``derivative_report``).
    """

    group: ProductGroup
    params: Mapping[str, float]
    step_h: float
    lagrangian: Callable[[GroupElement, GroupElement], float]
    first_maps: Mapping[str, Callable] = field(default_factory=dict)
    second_maps: Mapping[tuple, Callable] = field(default_factory=dict)
    name: str = "custom"
    coordinate_names: tuple = ("q_a", "q_u")
    raw_tables: Optional[RawTables] = None
    fd_eps_first: float = FD_EPS_FIRST
    fd_eps_second: float = FD_EPS_SECOND

    def __post_init__(self):
        if len(self.group.factors) != 2:
            raise ValueError("model group must have exactly two factors")
        if self.step_h <= 0:
            raise ValueError("step_h must be positive")

    @property
    def actuated(self):
        return self.group.factors[0]

    @property
    def unactuated(self):
        return self.group.factors[1]

    def dims(self) -> tuple[int, int]:
        return self.actuated.dim, self.unactuated.dim


@dataclass(frozen=True, eq=False)
class FirstDerivs:
    """The four left-trivialized first derivatives of L_d."""

    m_ag: CoAlgebraVector
    m_af: CoAlgebraVector
    m_ug: CoAlgebraVector
    m_uf: CoAlgebraVector

    def by_slot(self, slot: str) -> CoAlgebraVector:
        return getattr(self, "m_" + slot)


class SecondDerivOps:
    """The sixteen multiplier-linear second-derivative operators, as matrices."""

    def __init__(self, model: ModelSpec, mats: dict):
        self._model = model
        self._mats = mats

    def mat(self, wrt: str, of: str) -> np.ndarray:
        return self._mats[(wrt, of)]

    def apply(self, wrt: str, of: str, lam) -> CoAlgebraVector:
        """Apply the (wrt, of) operator to multiplier coordinates ``lam``."""
        coords = lam if isinstance(lam, np.ndarray) else np.atleast_1d(
            np.asarray(getattr(lam, "coords", lam), dtype=float)
        )
        target = _slot_factor(self._model, wrt)
        return CoAlgebraVector(target, self.mat(wrt, of) @ coords)


def _slot_factor(model: ModelSpec, slot: str):
    return model.actuated if slot[0] == "a" else model.unactuated


def _check_state(model: ModelSpec, g: GroupElement, f: GroupElement):
    if g.group != model.group or f.group != model.group:
        raise GroupMismatchError("state not on the model's configuration group")


def _perturb(model: ModelSpec, g: GroupElement, f: GroupElement, slot: str,
             direction: np.ndarray):
    """Right-multiply one slot by exp(direction), leaving the rest fixed."""
    g_a, g_u = product_split(g)
    f_a, f_u = product_split(f)
    parts = {"ag": g_a, "ug": g_u, "af": f_a, "uf": f_u}
    factor = parts[slot].group
    parts[slot] = compose(parts[slot], exp(factor.algebra(direction)))
    g2 = GroupElement(model.group, (parts["ag"].rep, parts["ug"].rep))
    f2 = GroupElement(model.group, (parts["af"].rep, parts["uf"].rep))
    return g2, f2


def eval_lagrangian(model: ModelSpec, g: GroupElement, f: GroupElement) -> float:
    _check_state(model, g, f)
    return float(model.lagrangian(g, f))


def fd_first_derivs(model: ModelSpec, g: GroupElement, f: GroupElement,
                    eps: float = FD_EPS_FIRST) -> FirstDerivs:
    """Central-difference oracle for the four first-derivative maps."""
    if not 1e-9 <= eps <= 1e-3:
        raise ValueError("fd step must lie in [1e-9, 1e-3]")
    _check_state(model, g, f)
    out = {}
    for slot in SLOTS:
        factor = _slot_factor(model, slot)
        coords = np.zeros(factor.dim)
        for i in range(factor.dim):
            e = np.zeros(factor.dim)
            e[i] = eps
            gp, fp = _perturb(model, g, f, slot, e)
            gm, fm = _perturb(model, g, f, slot, -e)
            coords[i] = (model.lagrangian(gp, fp) - model.lagrangian(gm, fm)) / (2 * eps)
        out[slot] = CoAlgebraVector(factor, coords)
    return FirstDerivs(out["ag"], out["af"], out["ug"], out["uf"])


def first_derivs(model: ModelSpec, g: GroupElement, f: GroupElement) -> FirstDerivs:
    """Analytic maps where supplied, finite differences elsewhere."""
    _check_state(model, g, f)
    fallback = None
    out = {}
    for slot in SLOTS:
        fn = model.first_maps.get(slot)
        if fn is not None:
            out[slot] = CoAlgebraVector(_slot_factor(model, slot),
                                        np.atleast_1d(np.asarray(fn(g, f), float)))
        else:
            if fallback is None:
                fallback = fd_first_derivs(model, g, f, model.fd_eps_first)
            out[slot] = fallback.by_slot(slot)
    return FirstDerivs(out["ag"], out["af"], out["ug"], out["uf"])


def fd_second_ops(model: ModelSpec, g: GroupElement, f: GroupElement,
                  eps: float = FD_EPS_SECOND) -> SecondDerivOps:
    """Central differences of ``first_derivs`` in every slot.

    When the model carries analytic first derivatives these are ordinary
    central differences of exact values; otherwise they nest two difference
    levels, which is why the default step is larger than for first
    derivatives.
    """
    if not 1e-9 <= eps <= 1e-3:
        raise ValueError("fd step must lie in [1e-9, 1e-3]")
    _check_state(model, g, f)
    mats = {}
    for wrt in SLOTS:
        factor = _slot_factor(model, wrt)
        rows = {of: np.zeros((factor.dim, _slot_factor(model, of).dim)) for of in SLOTS}
        for i in range(factor.dim):
            e = np.zeros(factor.dim)
            e[i] = eps
            gp, fp = _perturb(model, g, f, wrt, e)
            gm, fm = _perturb(model, g, f, wrt, -e)
            dp = first_derivs(model, gp, fp)
            dm = first_derivs(model, gm, fm)
            for of in SLOTS:
                rows[of][i] = (dp.by_slot(of).coords - dm.by_slot(of).coords) / (2 * eps)
        for of in SLOTS:
            mats[(wrt, of)] = rows[of]
    return SecondDerivOps(model, mats)


def second_deriv_ops(model: ModelSpec, g: GroupElement, f: GroupElement) -> SecondDerivOps:
    """All sixteen operators; analytic entries where supplied, else FD."""
    _check_state(model, g, f)
    fallback = None
    mats = {}
    for wrt in SLOTS:
        for of in SLOTS:
            fn = model.second_maps.get((wrt, of))
            if fn is not None:
                mats[(wrt, of)] = np.atleast_2d(np.asarray(fn(g, f), float))
            else:
                if fallback is None:
                    fallback = fd_second_ops(model, g, f, model.fd_eps_second)
                mats[(wrt, of)] = fallback.mat(wrt, of)
    return SecondDerivOps(model, mats)


def derivative_report(model: ModelSpec, states, rtol: float = 1e-5,
                      atol: float = 1e-8) -> dict:
    """Cross-check analytic tables against the finite-difference oracle.

    ``states`` is an iterable of (g, f) pairs. Returns per-entry worst
    relative errors (with the absolute floor applied) and an overall flag.
    """
    worst_first = {slot: 0.0 for slot in SLOTS}
    worst_second = {(w, o): 0.0 for w in SLOTS for o in SLOTS}
    for g, f in states:
        ana = first_derivs(model, g, f)
        ref = fd_first_derivs(model, g, f, model.fd_eps_first)
        for slot in SLOTS:
            err = _rel_err(ana.by_slot(slot).coords, ref.by_slot(slot).coords, rtol, atol)
            worst_first[slot] = max(worst_first[slot], err)
        ana2 = second_deriv_ops(model, g, f)
        ref2 = fd_second_ops(model, g, f, model.fd_eps_second)
        for key in worst_second:
            err = _rel_err(ana2.mat(*key), ref2.mat(*key), rtol, atol)
            worst_second[key] = max(worst_second[key], err)
    ok = max(worst_first.values()) <= rtol and max(worst_second.values()) <= rtol
    return {"first": worst_first, "second": worst_second, "ok": ok}


def _rel_err(a: np.ndarray, b: np.ndarray, rtol: float, atol: float) -> float:
    # |a - b| <= atol + rtol |b|, expressed as a relative quantity.
    scale = np.maximum(np.abs(b), atol / rtol)
    return float(np.max(np.abs(a - b) / scale))

"""Built-in benchmark models: ball-and-beam and inverted pendulum on a cart.

Both live on a product of S^1 and R with one actuated and one unactuated
factor. Each model ships its trapezoidal discrete Lagrangian, the full
analytic first/second derivative tables, the coordinate-level closures the
fast kernel consumes, and the published boundary-condition cases.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from ._kernel import AF, AG, UF, UG
from .integrator import ProductState
from .lie import Circle, GroupElement, ProductGroup, RealLine, wrap_angle
from .mechanics import ModelSpec, RawTables, SLOTS
from .optimal_control import OcProblem, quadratic_control_cost

S1 = Circle()
R1 = RealLine(1)


@dataclass(frozen=True)
class BallBeamParams:
    """Ball mass, beam rotational inertia, gravity, step size (SI units)."""

    m_b: float = 0.5
    I_r: float = 6.0
    g: float = 9.8
    h: float = 0.01

    def __post_init__(self):
        if min(self.m_b, self.I_r, self.g, self.h) <= 0:
            raise ValueError("ball-beam parameters must be positive")


@dataclass(frozen=True)
class CartPoleParams:
    """Cart mass, bob mass, pendulum length, gravity, step size (SI units)."""

    m_c: float = 0.5
    m_b: float = 0.1
    l: float = 0.1
    g: float = 9.8
    h: float = 0.01

    def __post_init__(self):
        if min(self.m_c, self.m_b, self.l, self.g, self.h) <= 0:
            raise ValueError("cart-pole parameters must be positive")


def _coord(rep) -> float:
    return float(rep) if np.isscalar(rep) else float(np.asarray(rep).reshape(-1)[0])


def _scalars(g: GroupElement, f: GroupElement) -> tuple:
    (ga, gu), (fa, fu) = g.rep, f.rep
    return _coord(ga), _coord(gu), _coord(fa), _coord(fu)


def _typed_from_raw(raw: RawTables) -> tuple[dict, dict]:
    """Wrap the scalar closed forms as the typed analytic-table interface."""
    first_maps = {
        slot: (lambda g, f, i=i: np.atleast_1d(raw.first(*_scalars(g, f))[i]))
        for i, slot in enumerate(SLOTS)
    }
    second_maps = {
        (w, o): (lambda g, f, iw=iw, io=io:
                 np.array([[raw.second(*_scalars(g, f))[iw, io]]]))
        for iw, w in enumerate(SLOTS)
        for io, o in enumerate(SLOTS)
    }
    return first_maps, second_maps


def ball_beam_model(p: BallBeamParams = BallBeamParams()) -> ModelSpec:
    """Beam angle (actuated, S^1) x ball position along the beam (R).

    Trapezoidal discrete Lagrangian
        (1/2h) I_r dth^2 + (1/2h) m_b (dxi^2 + xi^2 dth^2) - m_b h g xi sin(th)
    with coordinates (th, xi) at the left endpoint and increments (dth, dxi).
    """
    m_b, I_r, grav, h = p.m_b, p.I_r, p.g, p.h

    def lagrangian(th, xi, dth, dxi):
        return (0.5 / h) * (I_r * dth * dth + m_b * (dxi * dxi + xi * xi * dth * dth)) \
            - m_b * h * grav * xi * math.sin(th)

    def first(th, xi, dth, dxi):
        m_ag = -m_b * grav * h * xi * math.cos(th)
        m_af = (I_r / h + m_b * xi * xi / h) * dth
        m_ug = (m_b / h) * xi * dth * dth - m_b * grav * h * math.sin(th)
        m_uf = (m_b / h) * dxi
        return m_ag, m_af, m_ug, m_uf

    def second(th, xi, dth, dxi):
        S = np.zeros((4, 4))
        S[AG, AG] = m_b * grav * h * xi * math.sin(th)
        S[AG, UG] = -m_b * grav * h * math.cos(th)
        S[AF, AF] = (I_r + m_b * xi * xi) / h
        S[AF, UG] = 2.0 * (m_b / h) * xi * dth
        S[UG, AG] = -m_b * grav * h * math.cos(th)
        S[UG, AF] = 2.0 * (m_b / h) * xi * dth
        S[UG, UG] = (m_b / h) * dth * dth
        S[UF, UF] = m_b / h
        return S

    def first_vec(th, xi, dth, dxi):
        out = np.empty((4, len(th)))
        out[AG] = -m_b * grav * h * xi * np.cos(th)
        out[AF] = (I_r / h + m_b * xi * xi / h) * dth
        out[UG] = (m_b / h) * xi * dth * dth - m_b * grav * h * np.sin(th)
        out[UF] = (m_b / h) * dxi
        return out

    def second_vec(th, xi, dth, dxi):
        S = np.zeros((4, 4, len(th)))
        S[AG, AG] = m_b * grav * h * xi * np.sin(th)
        S[AG, UG] = -m_b * grav * h * np.cos(th)
        S[AF, AF] = (I_r + m_b * xi * xi) / h
        S[AF, UG] = 2.0 * (m_b / h) * xi * dth
        S[UG, AG] = S[AG, UG]
        S[UG, AF] = S[AF, UG]
        S[UG, UG] = (m_b / h) * dth * dth
        S[UF, UF] = m_b / h
        return S

    raw = RawTables(lagrangian, first, second, first_vec, second_vec)
    first_maps, second_maps = _typed_from_raw(raw)
    return ModelSpec(
        group=ProductGroup((S1, R1)),
        params={"m_b": m_b, "I_r": I_r, "g": grav, "h": h},
        step_h=h,
        lagrangian=lambda g, f: raw.lagrangian(*_scalars(g, f)),
        first_maps=first_maps,
        second_maps=second_maps,
        name="ball_beam",
        coordinate_names=("theta", "xi"),
        raw_tables=raw,
    )


def cart_pole_model(p: CartPoleParams = CartPoleParams()) -> ModelSpec:
    """Cart position (actuated, R) x pendulum angle from vertical (S^1).

    Trapezoidal discrete Lagrangian
        (1/2h)(m_b+m_c) dxi^2 + (1/2h) m_b l^2 dth^2
        - (m_b l / h) dxi dth cos(th) - m_b h g l cos(th).
    """
    m_c, m_b, length, grav, h = p.m_c, p.m_b, p.l, p.g, p.h
    ml = m_b * length

    def lagrangian(xi, th, dxi, dth):
        return (0.5 / h) * ((m_b + m_c) * dxi * dxi + m_b * length * length * dth * dth) \
            - (ml / h) * dxi * dth * math.cos(th) - m_b * h * grav * length * math.cos(th)

    def first(xi, th, dxi, dth):
        m_ag = 0.0
        m_af = ((m_b + m_c) / h) * dxi - (ml / h) * dth * math.cos(th)
        m_ug = (ml / h) * dxi * dth * math.sin(th) + m_b * h * grav * length * math.sin(th)
        m_uf = (m_b * length * length / h) * dth - (ml / h) * dxi * math.cos(th)
        return m_ag, m_af, m_ug, m_uf

    def second(xi, th, dxi, dth):
        sin, cos = math.sin(th), math.cos(th)
        S = np.zeros((4, 4))
        S[AF, AF] = (m_b + m_c) / h
        S[AF, UG] = (ml / h) * dth * sin
        S[AF, UF] = -(ml / h) * cos
        S[UG, AF] = (ml / h) * dth * sin
        # gravity entry is the theta-derivative of M_ug, hence cos
        S[UG, UG] = (ml / h) * dxi * dth * cos + m_b * h * grav * length * cos
        S[UG, UF] = (ml / h) * dxi * sin
        S[UF, AF] = -(ml / h) * cos
        S[UF, UG] = (ml / h) * dxi * sin
        S[UF, UF] = m_b * length * length / h
        return S

    def first_vec(xi, th, dxi, dth):
        sin, cos = np.sin(th), np.cos(th)
        out = np.empty((4, len(xi)))
        out[AG] = 0.0
        out[AF] = ((m_b + m_c) / h) * dxi - (ml / h) * dth * cos
        out[UG] = (ml / h) * dxi * dth * sin + m_b * h * grav * length * sin
        out[UF] = (m_b * length * length / h) * dth - (ml / h) * dxi * cos
        return out

    def second_vec(xi, th, dxi, dth):
        sin, cos = np.sin(th), np.cos(th)
        S = np.zeros((4, 4, len(xi)))
        S[AF, AF] = (m_b + m_c) / h
        S[AF, UG] = (ml / h) * dth * sin
        S[AF, UF] = -(ml / h) * cos
        S[UG, AF] = S[AF, UG]
        S[UG, UG] = (ml / h) * dxi * dth * cos + m_b * h * grav * length * cos
        S[UG, UF] = (ml / h) * dxi * sin
        S[UF, AF] = S[AF, UF]
        S[UF, UG] = S[UG, UF]
        S[UF, UF] = m_b * length * length / h
        return S

    raw = RawTables(lagrangian, first, second, first_vec, second_vec)
    first_maps, second_maps = _typed_from_raw(raw)
    return ModelSpec(
        group=ProductGroup((R1, S1)),
        params={"m_c": m_c, "m_b": m_b, "l": length, "g": grav, "h": h},
        step_h=h,
        lagrangian=lambda g, f: raw.lagrangian(*_scalars(g, f)),
        first_maps=first_maps,
        second_maps=second_maps,
        name="cart_pole",
        coordinate_names=("xi", "theta"),
        raw_tables=raw,
    )


MODEL_BUILDERS = {
    "ball_beam": (ball_beam_model, BallBeamParams),
    "cart_pole": (cart_pole_model, CartPoleParams),
}


def build_model(name: str, overrides: dict | None = None) -> ModelSpec:
    """Instantiate a registered model with optional parameter overrides."""
    try:
        builder, params_cls = MODEL_BUILDERS[name]
    except KeyError:
        raise KeyError(f"unknown model '{name}' "
                       f"(registered: {sorted(MODEL_BUILDERS)})") from None
    return builder(params_cls(**(overrides or {})))


def make_state(model: ModelSpec, q_a: float, q_u: float,
               mu_a: float = 0.0, mu_u: float = 0.0) -> ProductState:
    """Build a ProductState from scalar factor coordinates."""
    def element(factor, value):
        if isinstance(factor, Circle):
            return GroupElement(factor, wrap_angle(value))
        return GroupElement(factor, np.array([value]))

    return ProductState(
        element(model.actuated, q_a),
        element(model.unactuated, q_u),
        model.actuated.coalgebra([mu_a]),
        model.unactuated.coalgebra([mu_u]),
    )


def cart_pole_energy(p: CartPoleParams, state: ProductState) -> float:
    """Continuous-time Hamiltonian evaluated at a discrete state.

    Used as the drift diagnostic for the unforced integrator: kinetic term
    from the inverse mass matrix at the current angle plus the pendulum
    potential.
    """
    th = _coord(state.g_u.rep)
    mom = np.array([state.mu_a.coords[0], state.mu_u.coords[0]])
    c = math.cos(th)
    mass = np.array([
        [p.m_b + p.m_c, -p.m_b * p.l * c],
        [-p.m_b * p.l * c, p.m_b * p.l * p.l],
    ])
    kinetic = 0.5 * float(mom @ np.linalg.solve(mass, mom))
    return kinetic + p.m_b * p.g * p.l * c


def _case(model_name: str, name: str, theta0_deg: float, xi0: float,
          n_steps: int = 1000) -> OcProblem:
    builder, params_cls = MODEL_BUILDERS[model_name]
    params = params_cls()
    model = builder(params)
    theta0 = math.radians(theta0_deg)
    if model_name == "ball_beam":
        start = make_state(model, theta0, xi0)
    else:
        start = make_state(model, xi0, theta0)
    target = make_state(model, 0.0, 0.0)

    def continuation(scale: float, _name=model_name, _n=n_steps) -> OcProblem:
        builder2, params_cls2 = MODEL_BUILDERS[_name]
        base = params_cls2()
        m2 = builder2(dataclasses.replace(base, g=base.g * scale))
        if _name == "ball_beam":
            s2 = make_state(m2, theta0, xi0)
        else:
            s2 = make_state(m2, xi0, theta0)
        return OcProblem(m2, _n, s2, make_state(m2, 0.0, 0.0),
                         quadratic_control_cost(), name=f"{name}@g*{scale:g}")

    return OcProblem(model, n_steps, start, target, quadratic_control_cost(),
                     name=name, continuation=continuation)


def benchmark_cases() -> list[OcProblem]:
    """The four published point-to-point transfers (rest to rest, N=1000)."""
    return [
        _case("ball_beam", "bb_case1", 0.0, 0.5),
        _case("ball_beam", "bb_case2", 18.0, 0.5),
        _case("cart_pole", "cp_case1", 60.0, 2.0),
        _case("cart_pole", "cp_case2", -45.0, 2.0),
    ]

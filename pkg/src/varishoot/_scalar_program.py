"""Structured shooting residual map for scalar two-factor abelian models.

Mirrors the typed residual assembly in optimal_control, specialized to one
degree of freedom per factor and the built-in quadratic control cost, where
all adjoint actions collapse to the identity. The payoff is a Jacobian that
can be built cheaply: residuals are exactly linear in the multipliers (that
block is assembled in closed form from the second-derivative tables) and
control/interior-state columns only require re-simulating the segments they
touch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernel import AF, AG, UF, UG, ScalarDyn, ScalarStepError, scalar_simulate, state_scalars


@dataclass(eq=False)
class SimState:
    """Per-iterate simulation data over the whole horizon.

    At interior segment boundaries the global arrays hold the unknown start
    states; the simulated end of each non-final segment is kept separately
    for the continuity residuals.
    """

    ga: np.ndarray
    gu: np.ndarray
    mua: np.ndarray
    muu: np.ndarray
    fa: np.ndarray
    fu: np.ndarray
    res: np.ndarray
    seg_end: np.ndarray  # (segments-1, 4): simulated (ga, gu, mua, muu)
    tab_m: np.ndarray    # (4, n) first-derivative table per step
    tab_s: np.ndarray    # (4, 4, n) second-derivative table per step

    def copy(self) -> "SimState":
        return SimState(*(arr.copy() for arr in (
            self.ga, self.gu, self.mua, self.muu, self.fa, self.fu,
            self.res, self.seg_end, self.tab_m, self.tab_s)))


class ScalarProgram:
    """Unknowns (controls, four multiplier families, interior states) to
    stacked residuals (adjoint, recursions, optimality, boundary, continuity)."""

    def __init__(self, problem, segments: int, fd_eps: float = 1e-6,
                 step_tol: float = 1e-12, step_max_iter: int = 50):
        self.problem = problem
        model = problem.model
        self.dyn = ScalarDyn.from_model(model)
        self.h = model.step_h
        self.fd_eps = fd_eps
        self.step_tol = step_tol
        self.step_max_iter = step_max_iter

        n = problem.n_steps
        self.n = n
        if segments < 1:
            raise ValueError("segments must be >= 1")
        if n // segments < 1:
            raise ValueError("more segments than steps")
        base = n // segments
        self.bounds = [s * base for s in range(segments)] + [n]
        self.segments = segments

        self.start = state_scalars(problem.start)
        self.target = state_scalars(problem.target)

        # unknown layout
        self.s_u = slice(0, n + 1)
        self.s_l1 = slice(n + 1, 2 * n + 1)
        self.s_l3 = slice(2 * n + 1, 3 * n + 1)
        self.s_l4 = slice(3 * n + 1, 4 * n + 1)
        self.s_l6 = slice(4 * n + 1, 5 * n + 1)
        self.n_core = 5 * n + 1
        self.n_unknowns = self.n_core + 4 * (segments - 1)

        # residual layout
        m = n - 1
        self.r_adj_a = slice(0, m)
        self.r_adj_u = slice(m, 2 * m)
        self.r_rec_a = slice(2 * m, 3 * m)
        self.r_rec_u = slice(3 * m, 4 * m)
        self.r_opt = slice(4 * m, 4 * m + n)
        self.r_bnd = slice(4 * m + n, 4 * m + n + 4)
        self.n_residuals = 4 * m + n + 4 + 4 * (segments - 1)

        self._cache_x = None
        self._cache_sim = None

    @property
    def gauge_indices(self) -> list:
        """Null direction of the underdetermined system: the final momentum
        multiplier, whose stationarity equation the condition set omits.
        Pinning its update at zero selects the distinguished solution."""
        return [self.s_l3.stop - 1]

    # -- unknown packing ------------------------------------------------------

    def unpack(self, x: np.ndarray):
        u = x[self.s_u]
        lams = (x[self.s_l1], x[self.s_l3], x[self.s_l4], x[self.s_l6])
        interior = x[self.n_core:].reshape(self.segments - 1, 4)
        return u, lams, interior

    def initial_vector(self, strategy: str = "zeros") -> np.ndarray:
        """Zero controls/multipliers; interior states per strategy."""
        x = np.zeros(self.n_unknowns)
        if self.segments == 1:
            return x
        if strategy == "linear-interpolation":
            interior = np.empty((self.segments - 1, 4))
            ga0, gu0, mua0, muu0 = self.start
            gaf, guf, muaf, muuf = self.target
            da = self.dyn.diff_a(ga0, gaf)
            du = self.dyn.diff_u(gu0, guf)
            for i, b in enumerate(self.bounds[1:-1]):
                t = b / self.n
                interior[i] = (ga0 + t * da, gu0 + t * du,
                               mua0 + t * (muaf - mua0), muu0 + t * (muuf - muu0))
        else:  # zeros: interior states from the unforced forward flow
            ga, gu, mua, muu, _, _, _ = scalar_simulate(
                self.dyn, *self.start, np.zeros(self.n + 1), self.n,
                self.step_tol, self.step_max_iter)
            interior = np.stack(
                [[ga[b], gu[b], mua[b], muu[b]] for b in self.bounds[1:-1]])
        x[self.n_core:] = interior.reshape(-1)
        return x

    # -- simulation and tables --------------------------------------------------

    def _segment_start(self, s: int, interior: np.ndarray):
        return self.start if s == 0 else tuple(interior[s - 1])

    def simulate(self, u: np.ndarray, interior: np.ndarray) -> SimState:
        n = self.n
        sim = SimState(
            np.empty(n + 1), np.empty(n + 1), np.empty(n + 1), np.empty(n + 1),
            np.empty(n), np.empty(n), np.empty(n),
            np.empty((self.segments - 1, 4)),
            np.empty((4, n)), np.empty((4, 4, n)),
        )
        for s in range(self.segments):
            self._run_segment(sim, s, self.bounds[s], u, interior)
        self._tables(sim, 0, n)
        return sim

    def _run_segment(self, sim: SimState, s: int, from_step: int,
                     u: np.ndarray, interior: np.ndarray):
        """(Re)integrate segment s starting at ``from_step``; the state at
        ``from_step`` is taken from the arrays unless it is the segment head,
        which comes from the start/interior unknowns."""
        lo, hi = self.bounds[s], self.bounds[s + 1]
        if from_step == lo:
            state = self._segment_start(s, interior)
        else:
            state = (sim.ga[from_step], sim.gu[from_step],
                     sim.mua[from_step], sim.muu[from_step])
        steps = hi - from_step
        ga, gu, mua, muu, fa, fu, res = scalar_simulate(
            self.dyn, *state, u[from_step: hi + 1], steps,
            self.step_tol, self.step_max_iter,
            fa0=sim.fa[from_step - 1] if from_step > 0 else 0.0,
            fu0=sim.fu[from_step - 1] if from_step > 0 else 0.0)
        sim.ga[from_step: hi], sim.gu[from_step: hi] = ga[:-1], gu[:-1]
        sim.mua[from_step: hi], sim.muu[from_step: hi] = mua[:-1], muu[:-1]
        sim.fa[from_step: hi], sim.fu[from_step: hi] = fa, fu
        sim.res[from_step: hi] = res
        if s == self.segments - 1:
            sim.ga[hi], sim.gu[hi] = ga[-1], gu[-1]
            sim.mua[hi], sim.muu[hi] = mua[-1], muu[-1]
        else:
            sim.seg_end[s] = (ga[-1], gu[-1], mua[-1], muu[-1])
            # boundary state at hi belongs to the next segment's unknowns
            sim.ga[hi], sim.gu[hi], sim.mua[hi], sim.muu[hi] = \
                self._segment_start(s + 1, interior)

    def _tables(self, sim: SimState, lo: int, hi: int):
        raw = self.problem.model.raw_tables
        if raw.first_vec is not None:
            sl = slice(lo, hi)
            sim.tab_m[:, sl] = raw.first_vec(sim.ga[sl], sim.gu[sl],
                                             sim.fa[sl], sim.fu[sl])
            sim.tab_s[:, :, sl] = raw.second_vec(sim.ga[sl], sim.gu[sl],
                                                 sim.fa[sl], sim.fu[sl])
        else:
            for k in range(lo, hi):
                args = (sim.ga[k], sim.gu[k], sim.fa[k], sim.fu[k])
                sim.tab_m[:, k] = raw.first(*args)
                sim.tab_s[:, :, k] = raw.second(*args)

    # -- residual assembly --------------------------------------------------------

    def _multiplier_pieces(self, lams, S):
        l1, l3, l4, l6 = lams
        d13 = l1 - l3
        d46 = l4 - l6
        lam2 = S[AF, AG] * d13 - S[AF, AF] * l1 + S[AF, UG] * d46 - S[AF, UF] * l4
        lam5 = S[UF, AG] * d13 - S[UF, AF] * l1 + S[UF, UG] * d46 - S[UF, UF] * l4
        return d13, d46, lam2, lam5

    def assemble(self, u: np.ndarray, lams, sim: SimState) -> np.ndarray:
        n, h = self.n, self.h
        l1, l3, l4, l6 = lams
        S = sim.tab_s
        d13, d46, lam2, lam5 = self._multiplier_pieces(lams, S)

        r = np.empty(self.n_residuals)
        core_a = S[AG, AG] * d13 - S[AG, AF] * l1 + S[AG, UG] * d46 - S[AG, UF] * l4
        core_u = S[UG, AG] * d13 - S[UG, AF] * l1 + S[UG, UG] * d46 - S[UG, UF] * l4
        r[self.r_adj_a] = core_a[1:] + lam2[:-1] - lam2[1:]
        r[self.r_adj_u] = core_u[1:] + lam5[:-1] - lam5[1:]
        r[self.r_rec_a] = l1[1:] - l3[1:] + l3[:-1]
        r[self.r_rec_u] = l4[1:] - l6[1:] + l6[:-1]
        opt = u[:n] + 0.5 * h * (l1 - l3)
        opt[1:] -= 0.5 * h * l3[:-1]
        r[self.r_opt] = opt
        gaf, guf, muaf, muuf = self.target
        r[self.r_bnd] = (
            self.dyn.diff_a(sim.ga[n], gaf),
            self.dyn.diff_u(sim.gu[n], guf),
            sim.mua[n] - muaf,
            sim.muu[n] - muuf,
        )
        pos = self.r_bnd.stop
        for s in range(self.segments - 1):
            b = self.bounds[s + 1]
            ea, eu, ema, emu = sim.seg_end[s]
            r[pos: pos + 4] = (
                self.dyn.diff_a(ea, sim.ga[b]),
                self.dyn.diff_u(eu, sim.gu[b]),
                sim.mua[b] - ema,
                sim.muu[b] - emu,
            )
            pos += 4
        return r

    def residual(self, x: np.ndarray) -> np.ndarray:
        u, lams, interior = self.unpack(x)
        sim = self.simulate(u, interior)
        self._cache_x = x.copy()
        self._cache_sim = sim
        return self.assemble(u, lams, sim)

    # -- Jacobian ------------------------------------------------------------------

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        u, lams, interior = self.unpack(x)
        if self._cache_x is not None and np.array_equal(self._cache_x, x):
            sim = self._cache_sim
        else:
            sim = self.simulate(u, interior)
        J = np.zeros((self.n_residuals, self.n_unknowns))
        self._fill_multiplier_block(J, sim)
        self._fill_fd_columns(J, x, u, lams, interior, sim)
        return J

    def _fill_multiplier_block(self, J: np.ndarray, sim: SimState):
        """The residuals are linear in the multipliers; fill that block exactly."""
        n, h = self.n, self.h
        S = sim.tab_s
        idx = np.arange(n)

        # d(lam2_k), d(lam5_k) w.r.t. (l1, l3, l4, l6)_k
        d2 = np.stack([S[AF, AG] - S[AF, AF], -S[AF, AG],
                       S[AF, UG] - S[AF, UF], -S[AF, UG]])
        d5 = np.stack([S[UF, AG] - S[UF, AF], -S[UF, AG],
                       S[UF, UG] - S[UF, UF], -S[UF, UG]])
        core_a = np.stack([S[AG, AG] - S[AG, AF], -S[AG, AG],
                           S[AG, UG] - S[AG, UF], -S[AG, UG]])
        core_u = np.stack([S[UG, AG] - S[UG, AF], -S[UG, AG],
                           S[UG, UG] - S[UG, UF], -S[UG, UG]])

        lam_slices = (self.s_l1, self.s_l3, self.s_l4, self.s_l6)
        rows_a = np.arange(self.r_adj_a.start, self.r_adj_a.stop)
        rows_u = np.arange(self.r_adj_u.start, self.r_adj_u.stop)
        for i, sl in enumerate(lam_slices):
            cols = sl.start + idx
            # adjoint rows at k: core(k) - dlam2(k); at k+1: +dlam2(k)
            J[rows_a, cols[1:]] += core_a[i, 1:] - d2[i, 1:]
            J[rows_a, cols[:-1]] += d2[i, :-1]
            J[rows_u, cols[1:]] += core_u[i, 1:] - d5[i, 1:]
            J[rows_u, cols[:-1]] += d5[i, :-1]

        rows = np.arange(self.r_rec_a.start, self.r_rec_a.stop)
        J[rows, self.s_l1.start + idx[1:]] += 1.0
        J[rows, self.s_l3.start + idx[1:]] += -1.0
        J[rows, self.s_l3.start + idx[:-1]] += 1.0
        rows = np.arange(self.r_rec_u.start, self.r_rec_u.stop)
        J[rows, self.s_l4.start + idx[1:]] += 1.0
        J[rows, self.s_l6.start + idx[1:]] += -1.0
        J[rows, self.s_l6.start + idx[:-1]] += 1.0

        rows = np.arange(self.r_opt.start, self.r_opt.stop)
        J[rows, self.s_l1.start + idx] += 0.5 * h
        J[rows, self.s_l3.start + idx] += -0.5 * h
        J[rows[1:], self.s_l3.start + idx[:-1]] += -0.5 * h

    def _affected(self, j: int):
        """Segments touched by a change of u_j, with the first changed step."""
        out = []
        for k in (j - 1, j):
            if not 0 <= k < self.n:
                continue
            s = np.searchsorted(self.bounds, k, side="right") - 1
            if out and out[-1][0] == s:
                out[-1] = (s, min(out[-1][1], k))
            else:
                out.append((s, k))
        return out

    def _perturbed_residual(self, u, lams, interior, sim: SimState, affected):
        new = sim.copy()
        for s, k0 in affected:
            self._run_segment(new, s, k0, u, interior)
            self._tables(new, k0, self.bounds[s + 1])
        return self.assemble(u, lams, new)

    def _fill_fd_columns(self, J, x, u, lams, interior, sim):
        eps = self.fd_eps
        for j in range(self.n + 1):
            affected = self._affected(j)
            up, um = u.copy(), u.copy()
            up[j] += eps
            um[j] -= eps
            rp = self._perturbed_residual(up, lams, interior, sim, affected)
            rm = self._perturbed_residual(um, lams, interior, sim, affected)
            J[:, j] = (rp - rm) / (2 * eps)
        for s in range(self.segments - 1):
            for c in range(4):
                col = self.n_core + 4 * s + c
                ip, im = interior.copy(), interior.copy()
                ip[s, c] += eps
                im[s, c] -= eps
                affected = [(s + 1, self.bounds[s + 1])]
                rp = self._perturbed_residual(u, lams, ip, sim, affected)
                rm = self._perturbed_residual(u, lams, im, sim, affected)
                J[:, col] = (rp - rm) / (2 * eps)

    # -- typed reconstruction ---------------------------------------------------

    def control_vectors(self, x: np.ndarray):
        act = self.problem.model.actuated
        return [act.coalgebra([v]) for v in x[self.s_u]]

    def multiplier_set(self, x: np.ndarray):
        """Typed multipliers with lam2/lam5 from their closed forms on the
        internally simulated trajectory."""
        from .optimal_control import MultiplierSet

        model = self.problem.model
        u, lams, interior = self.unpack(x)
        sim = self.simulate(u, interior)
        _, _, lam2, lam5 = self._multiplier_pieces(lams, sim.tab_s)
        l1, l3, l4, l6 = lams
        act, unact = model.actuated, model.unactuated
        return MultiplierSet(
            [act.algebra([v]) for v in l1],
            [act.coalgebra([v]) for v in lam2],
            [act.algebra([v]) for v in l3],
            [unact.algebra([v]) for v in l4],
            [unact.coalgebra([v]) for v in lam5],
            [unact.algebra([v]) for v in l6],
        )

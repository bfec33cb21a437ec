"""Expansion of the normalised (Kushner-Stratonovich) filter, orders 0 to 2.

With L_k = H_k(D) + i xi.gamma_k(D) and c_i,k = H_k(D) pi_i |_{xi=0}:

    d pi_0 = a0 pi_0 dt
    d pi_1 = a0 pi_1 dt + A1 pi_0 dt + sum_k (L_k - c_0k) pi_0 dY_k
    d pi_2 = a0 pi_2 dt + [A1 pi_1 + A2 pi_0 - sum_k c_0k (L_k - c_0k) pi_0] dt
             + sum_k [(L_k - c_0k) pi_1 - c_1k pi_0] dY_k

All sources, including the scalars c, are read from the pre-step snapshot.
When every sub-period is one step long, pi_1 restarts from zero, so the
innovation drift -c_0k (L_k - c_0k) pi_0 dt only enters through order 2:
substep with substep_order=2 to keep it.
"""

from __future__ import annotations

from .model import Descriptor
from .zakai import ExpansionRun, SolverConfig


class KsRun(ExpansionRun):
    max_supported_order = 2

    def advance(self, orders, t, dY):
        grid = self.grid
        a1 = grid.compile(self.symbols.a1(t))
        a2 = grid.compile(self.symbols.a2(t))
        E = self.decay(t)
        dt = self.dt
        top = len(orders) - 1
        zero = grid.zero_index
        p0 = orders[0]
        new = [E * p0]
        if top == 0:
            return new

        innov0 = []  # (L_k - c_0k) pi_0
        c0 = []
        if dY is not None:
            for k, L in enumerate(self.symbols.obs(t)):
                h = grid.compile(Descriptor.multiply(self.model.H[k]))
                ck = h(p0)[zero]
                c0.append(ck)
                innov0.append(grid.compile(L)(p0) - ck * p0)

        acc = orders[1] + a1(p0) * dt
        for k, term in enumerate(innov0):
            acc = acc + term * dY[k]
        new.append(E * acc)
        if top == 1:
            return new

        p1 = orders[1]
        acc = orders[2] + (a1(p1) + a2(p0)) * dt
        if dY is not None:
            for k, L in enumerate(self.symbols.obs(t)):
                h = grid.compile(Descriptor.multiply(self.model.H[k]))
                c1 = h(p1)[zero]
                acc = acc - c0[k] * innov0[k] * dt
                acc = acc + (grid.compile(L)(p1) - c0[k] * p1 - c1 * p0) * dY[k]
        new.append(E * acc)
        return new


def ks_step(run: KsRun) -> KsRun:
    run.step()
    return run


def ks_solve(model, law, path, config: SolverConfig, grid, horizon: float | None = None):
    return KsRun(model, law, grid, config, path, horizon).run()

"""Coupling-capacitor sizing for the gain-ranging stage, with parasitic compensation.

The mantissa stage (total capacitance ``C_s``) drives a floating node A,
which carries a parasitic ``C_p1`` to ground and couples to the compute
line through ``C_E``. With the line at virtual ground, a bottom-plate step
``V_p`` delivers ``Q = C_E * C_s * V_p / (C_s + C_p1 + C_E)`` to the line,
against ``C_s * V_p`` for a direct connection. Choosing

    C_E(E_j) = (C_s + C_p1) / (2^(E_max - E_j) - 1)

makes that ratio exactly ``2^(E_j - E_max)`` whatever ``C_p1`` is. The
line parasitic ``C_p2`` sits on a held node and never enters the ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CouplingNetwork",
    "stage_capacitance",
    "size_coupling_caps",
    "solve_charge",
    "delivered_charge",
    "effective_gain",
    "gain_table",
]

GROUND = 0


def stage_capacitance(n_m_w: int, c_u: float = 1.0, stage: str = "eq1") -> float:
    """Total mantissa-stage capacitance.

    ``"eq1"`` uses ``(2^(n+1) - 1) C_u`` as in the sizing equation;
    ``"ctot"`` uses ``(2^n - 1) C_u``, the stage total defined alongside the
    coupling ratios. The two disagree by one bit; both are kept.
    """
    if n_m_w < 0:
        raise ValueError("n_m_w must be >= 0")
    if stage == "eq1":
        return (2 ** (n_m_w + 1) - 1) * c_u
    if stage == "ctot":
        return (2**n_m_w - 1) * c_u
    raise ValueError(f"stage must be 'eq1' or 'ctot', got {stage!r}")


@dataclass(frozen=True)
class CouplingNetwork:
    """Sized coupling stage; ``c_e[j-1]`` is the capacitor for exponent ``j``.

    The ``E_j = e_max`` entry is ``inf``: the stage connects straight to the line.
    """

    c_u: float
    n_m_w: int
    e_max: int
    c_p1: float
    c_p2: float
    c_e: tuple
    stage: str = "eq1"

    @property
    def c_stage(self) -> float:
        return stage_capacitance(self.n_m_w, self.c_u, self.stage)

    def cap(self, e_j: int) -> float:
        if not 1 <= e_j <= self.e_max:
            raise ValueError(f"exponent {e_j} outside [1, {self.e_max}]")
        return self.c_e[e_j - 1]


def size_coupling_caps(
    n_m_w: int,
    e_max: int,
    c_u: float = 1.0,
    c_p1: float = 0.0,
    c_p2: float = 0.0,
    stage: str = "eq1",
    compensate: bool = True,
) -> CouplingNetwork:
    """Size every coupling capacitor.

    With ``compensate=False`` the capacitors are sized as if ``c_p1`` were
    zero but the parasitic stays in the network, which exposes the gain
    error that compensation removes.
    """
    if e_max < 1:
        raise ValueError("e_max must be >= 1")
    if c_u <= 0 or c_p1 < 0 or c_p2 < 0:
        raise ValueError("need c_u > 0 and non-negative parasitics")
    c_s = stage_capacitance(n_m_w, c_u, stage)
    if c_s <= 0:
        raise ValueError("mantissa stage has no capacitance")
    num = c_s + (c_p1 if compensate else 0.0)
    c_e = tuple(num / (2.0 ** (e_max - j) - 1.0) if j < e_max else math.inf for j in range(1, e_max + 1))
    return CouplingNetwork(c_u, n_m_w, e_max, c_p1, c_p2, c_e, stage)


def solve_charge(caps: dict, driven: dict, floating_q: dict) -> dict:
    """Node voltages of a capacitor network by charge conservation.

    ``caps`` maps node pairs ``(a, b)`` to capacitance (node 0 is ground);
    ``driven`` fixes voltages of source nodes; ``floating_q`` gives the
    net charge stored on each floating node. Returns all node voltages.
    """
    nodes = sorted({n for pair in caps for n in pair} | set(driven) | set(floating_q) | {GROUND})
    fixed = {GROUND: 0.0, **driven}
    free = [n for n in nodes if n not in fixed]
    idx = {n: i for i, n in enumerate(free)}
    a = np.zeros((len(free), len(free)))
    b = np.array([floating_q.get(n, 0.0) for n in free], dtype=float)
    for (p, q), c in caps.items():
        for u, v in ((p, q), (q, p)):
            if u in idx:
                a[idx[u], idx[u]] += c
                if v in idx:
                    a[idx[u], idx[v]] -= c
                else:
                    b[idx[u]] += c * fixed[v]
    v = np.linalg.solve(a, b) if free else np.zeros(0)
    out = dict(fixed)
    out.update({n: float(v[idx[n]]) for n in free})
    return out


def delivered_charge(net: CouplingNetwork, e_j: int, v_p: float = 1.0) -> float:
    """Charge pushed onto the held compute line by a bottom-plate step ``v_p``.

    Phase one resets every node to 0 V. Phase two steps the stage's bottom
    plates (node ``P``) to ``v_p`` while node ``A`` floats.
    """
    c_s = net.c_stage
    c_e = net.cap(e_j)
    if math.isinf(c_e):
        return c_s * v_p
    P, A, LINE = 1, 2, 3
    caps = {(P, A): c_s, (A, LINE): c_e}
    if net.c_p1 > 0:
        caps[(A, GROUND)] = net.c_p1
    if net.c_p2 > 0:
        caps[(LINE, GROUND)] = net.c_p2
    v = solve_charge(caps, {P: v_p, LINE: 0.0}, {A: 0.0})
    return c_e * (v[A] - v[LINE])


def effective_gain(net: CouplingNetwork, e_j: int) -> float:
    """Coupling gain relative to the direct connection."""
    return delivered_charge(net, e_j) / delivered_charge(net, net.e_max)


def gain_table(net: CouplingNetwork) -> list[dict]:
    rows = []
    for j in range(1, net.e_max + 1):
        g = effective_gain(net, j)
        ideal = 2.0 ** (j - net.e_max)
        c_e = net.cap(j)
        rows.append(
            {
                "e_j": j,
                "c_e": None if math.isinf(c_e) else c_e,
                "direct": math.isinf(c_e),
                "gain": g,
                "ideal_gain": ideal,
                "rel_error": g / ideal - 1.0,
            }
        )
    return rows

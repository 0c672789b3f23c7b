"""Sparse statevector simulation.

States are dictionaries from basis key (a Python int, one bit per qubit,
qubit 0 = least significant bit) to complex amplitude.  All gates in the IR
except ``ry``/``cry``/``h`` are basis permutations, so arithmetic-heavy
circuits keep support size 1 per input basis state and simulation cost is
governed by the handful of genuinely branching rotations.  Amplitudes below
a fixed pruning floor are dropped after branching gates to keep the support
from accumulating numerically-zero entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit, Gate

__all__ = ["SparseState", "apply_gate", "simulate", "to_dense"]

PRUNE_FLOOR = 1e-14


@dataclass
class SparseState:
    """Sparse register state: ``amplitudes[key]`` with qubit 0 as key LSB."""

    qubit_count: int
    amplitudes: dict[int, complex] = field(default_factory=dict)

    @classmethod
    def basis(cls, qubit_count: int, key: int = 0) -> "SparseState":
        if not 0 <= key < 2**qubit_count:
            raise ValueError(f"basis key {key} out of range")
        return cls(qubit_count, {key: 1.0 + 0.0j})

    def norm_sq(self) -> float:
        return sum(abs(a) ** 2 for a in self.amplitudes.values())

    def support(self) -> int:
        return len(self.amplitudes)

    def copy(self) -> "SparseState":
        return SparseState(self.qubit_count, dict(self.amplitudes))


def apply_gate(state: SparseState, gate: Gate) -> SparseState:
    name = gate.name
    amps = state.amplitudes
    if name == "x":
        mask = 1 << gate.qubits[0]
        return SparseState(state.qubit_count, {k ^ mask: a for k, a in amps.items()})
    if name in ("cx", "ccx", "mcx"):
        *controls, target = gate.qubits
        cmask = 0
        for c in controls:
            cmask |= 1 << c
        tmask = 1 << target
        return SparseState(
            state.qubit_count,
            {
                (k ^ tmask if (k & cmask) == cmask else k): a
                for k, a in amps.items()
            },
        )
    if name in ("ry", "cry", "h"):
        if name == "h":
            m00 = m01 = m10 = 1.0 / math.sqrt(2.0)
            m11 = -m00
            controls: tuple[int, ...] = ()
            target = gate.qubits[0]
        else:
            half = 0.5 * gate.param
            m00 = m11 = math.cos(half)
            m10 = math.sin(half)
            m01 = -m10
            *cs, target = gate.qubits
            controls = tuple(cs)
        cmask = 0
        for c in controls:
            cmask |= 1 << c
        tmask = 1 << target
        out: dict[int, complex] = {}
        for k, a in amps.items():
            if (k & cmask) != cmask:
                out[k] = out.get(k, 0.0) + a
                continue
            if k & tmask:
                k0 = k ^ tmask
                out[k0] = out.get(k0, 0.0) + m01 * a
                out[k] = out.get(k, 0.0) + m11 * a
            else:
                out[k] = out.get(k, 0.0) + m00 * a
                out[k ^ tmask] = out.get(k ^ tmask, 0.0) + m10 * a
        return SparseState(
            state.qubit_count,
            {k: a for k, a in out.items() if abs(a) >= PRUNE_FLOOR},
        )
    raise ValueError(f"unknown gate {name!r}")


def simulate(
    circ: Circuit, initial: SparseState | int | None = None
) -> SparseState:
    """Run ``circ`` on ``initial`` (default all-zeros basis state)."""
    if initial is None:
        state = SparseState.basis(circ.n_qubits, 0)
    elif isinstance(initial, int):
        state = SparseState.basis(circ.n_qubits, initial)
    else:
        if initial.qubit_count != circ.n_qubits:
            raise ValueError(
                f"state has {initial.qubit_count} qubits, circuit needs "
                f"{circ.n_qubits}"
            )
        state = initial.copy()
    for gate in circ.gates:
        state = apply_gate(state, gate)
    return state


def to_dense(state: SparseState, qubit_cap: int = 24) -> np.ndarray:
    """Dense amplitude vector of length ``2**qubit_count``."""
    if state.qubit_count > qubit_cap:
        raise ValueError(
            f"{state.qubit_count} qubits exceeds dense cap {qubit_cap}"
        )
    vec = np.zeros(2**state.qubit_count, dtype=complex)
    for k, a in state.amplitudes.items():
        vec[k] = a
    return vec

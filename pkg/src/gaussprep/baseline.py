"""Generic real-amplitude state preparation and its comparison counts.

The exponential-cost baseline: a tree of uniformly controlled Ry
rotations, one level per qubit, each decomposed by the Gray-code scheme
so a level with t controls costs 2^t CNOTs.  Summing levels gives
2^k - 2 for a k-qubit real state --- the count every polynomial
construction in this package is benchmarked against.  It doubles as the
practical producer of small sheared-pipeline inputs, since at desk scale
it is exact to rounding.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .circuit import Circuit

__all__ = ["baseline_cnot_formulas", "build_real_state_prep"]

_VARIANTS = ("generic_complex", "generic_real", "symmetric_real")


def baseline_cnot_formulas(k: int, variant: str) -> int:
    """Closed-form CNOT counts of the cited generic preparation schemes.

    ``generic_complex`` is the unrestricted-amplitude count 2^(k+1) - 2k,
    ``generic_real`` the real-amplitude rotation tree 2^k - 2, and
    ``symmetric_real`` the mirror-symmetric refinement
    2^(k-1) + k - 3 + delta_{k,1}.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if variant == "generic_complex":
        return 2 ** (k + 1) - 2 * k
    if variant == "generic_real":
        return 2**k - 2
    if variant == "symmetric_real":
        return 2 ** (k - 1) + k - 3 + (1 if k == 1 else 0)
    raise ValueError(f"variant must be one of {_VARIANTS}, got {variant!r}")


def _gray_ry(circ: Circuit, controls: list[int], target: int,
             thetas: np.ndarray) -> None:
    """Uniformly controlled Ry: rotate ``target`` by thetas[c] when the
    control wires (listed least-significant first) read c."""
    t = len(controls)
    if t == 0:
        if thetas[0] != 0.0:
            circ.ry(float(thetas[0]), target)
        return
    n = 1 << t
    gray = [i ^ (i >> 1) for i in range(n)]
    # Conjugating CXs flip later rotation signs by the parity of c & gray,
    # so the per-slot angles are the (scaled, self-inverse) parity
    # transform of the requested ones.
    phis = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for c in range(n):
            sign = -1.0 if bin(c & gray[i]).count("1") % 2 else 1.0
            acc += sign * thetas[c]
        phis[i] = acc / n
    for i in range(n):
        if phis[i] != 0.0:
            circ.ry(float(phis[i]), target)
        diff = gray[i] ^ gray[(i + 1) % n]
        circ.cx(controls[diff.bit_length() - 1], target)


def build_real_state_prep(
    amplitudes: Sequence[float] | np.ndarray, k: int
) -> Circuit:
    """Map |0...0> to the given real state with at most 2^k - 2 CNOTs.

    Rotation angles come from signed conditional square roots, so the
    produced amplitudes match the input elementwise (not merely up to
    block signs).  The input must be normalized to within 1e-8.
    """
    amps = np.asarray(amplitudes, dtype=float)
    if amps.shape != (2**k,):
        raise ValueError(f"expected 2^{k} amplitudes, got shape {amps.shape}")
    norm = float(np.linalg.norm(amps))
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"amplitudes not normalized (|norm - 1| = {abs(norm - 1):.3g})")

    # node_vals[t][p]: signed root of the mass in block p of size 2^(k-t);
    # leaves are the amplitudes themselves, internal nodes take the
    # positive root so each parent-to-child ratio is a plain cos/sin.
    node_vals: list[np.ndarray] = [np.empty(0)] * (k + 1)
    node_vals[k] = amps
    for t in range(k - 1, -1, -1):
        below = node_vals[t + 1]
        node_vals[t] = np.sqrt(below[0::2] ** 2 + below[1::2] ** 2)

    circ = Circuit(n_qubits=k)
    for t in range(k):
        parents = node_vals[t]
        children = node_vals[t + 1]
        thetas = np.zeros(1 << t)
        for p in range(1 << t):
            if parents[p] > 0.0:
                thetas[p] = 2.0 * math.atan2(children[2 * p + 1], children[2 * p])
        _gray_ry(circ, list(range(k - t, k)), k - 1 - t, thetas)
    return circ

"""Shearing transform: recorrelate independent coordinate registers.

A product of one-dimensional discretized Gaussians becomes a correlated
multivariate one under the basis-state map

    n_i = m_i + round(sum_{j>i} M_ij (m_j + 1/2)),

with ``M`` the upper unitriangular factor of the target covariance.  The
circuit realises the map coordinate by coordinate: a fractional register
``f`` extends ``m_i`` into a fixed-point accumulator, classically
multiplied constants accumulate into it, the top fractional qubit drives a
controlled rounding increment, and a reversed pass over the fractional
window alone clears ``f`` again.  Everything is modular two's-complement
arithmetic, so the map is a permutation of basis states and the module
also provides it directly as one (:func:`shear_state`) alongside the
bit-exact integer oracle the circuit is tested against.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .arith import ccm, ccm_classical, controlled_increment
from .circuit import Circuit, ResourceReport

__all__ = [
    "ShearPlan",
    "build_shear",
    "classical_shear_oracle",
    "frac_bits",
    "shear_cnot_bound",
    "shear_state",
]


def frac_bits(n_dims: int, k: int) -> int:
    """Fractional wires needed so accumulated rounding error stays below
    one lattice spacing: (k-1) + ceil(log2(N-1))."""
    if n_dims < 2:
        raise ValueError(f"shearing needs at least 2 coordinates, got {n_dims}")
    return (k - 1) + (n_dims - 2).bit_length()


def _quantize_units(value: float, r: int) -> int:
    """Round to the nearest multiple of 2^-r (ties toward +inf), in units."""
    return int(np.floor(value * (1 << r) + 0.5))


@dataclass(frozen=True)
class ShearPlan:
    """A shearing circuit fully pinned down: matrix, widths, offsets.

    ``m_mat`` must be upper unitriangular; its off-diagonal entries are
    quantized to ``r`` fractional bits (round to nearest) before use, and
    the quantized values are what both the circuit and the oracle apply.
    ``r`` defaults to :func:`frac_bits` (never below one wire, since the
    constant multiplier needs an extension register).  ``mean_offsets``
    shifts each rounding input by a constant in [0, 1); integer offset
    parts belong in the coordinate grid itself, not here.  With
    ``half_integer`` set (the default, matching symmetric one-dimensional
    inputs) each accumulated term reads ``M_ij * (m_j + 1/2)``.
    """

    m_mat: np.ndarray
    k: int
    r: int = -1
    mean_offsets: np.ndarray | None = None
    half_integer: bool = True

    def __post_init__(self) -> None:
        mat = np.asarray(self.m_mat, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"m_mat must be square, got shape {mat.shape}")
        n = mat.shape[0]
        if n < 2:
            raise ValueError(f"shearing needs at least 2 coordinates, got {n}")
        if not np.all(np.diag(mat) == 1.0):
            raise ValueError("m_mat must have a unit diagonal")
        if np.any(np.tril(mat, -1) != 0.0):
            raise ValueError("m_mat must be upper triangular")
        object.__setattr__(self, "m_mat", mat)
        if self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        r = self.r
        if r == -1:
            r = max(1, frac_bits(n, self.k))
            object.__setattr__(self, "r", r)
        if r < max(1, frac_bits(n, self.k)):
            raise ValueError(
                f"r={r} cannot hold the accumulated rounding error; need at "
                f"least {max(1, frac_bits(n, self.k))} fractional wires"
            )
        if self.mean_offsets is not None:
            offs = np.asarray(self.mean_offsets, dtype=float)
            if offs.shape != (n,):
                raise ValueError(
                    f"mean_offsets must have shape ({n},), got {offs.shape}"
                )
            units = [_quantize_units(o, r) for o in offs]
            if any(u < 0 or u >= (1 << r) for u in units):
                raise ValueError(
                    "mean_offsets must lie in [0, 1) at r fractional bits; "
                    "fold integer parts into the coordinate grid"
                )
            object.__setattr__(self, "mean_offsets", offs)

    @property
    def n_dims(self) -> int:
        return self.m_mat.shape[0]

    def entry_units(self, i: int, j: int) -> int:
        """Quantized M[i][j] in units of 2^-r."""
        return _quantize_units(float(self.m_mat[i, j]), self.r)

    def offset_units(self, i: int) -> int:
        if self.mean_offsets is None:
            return 0
        return _quantize_units(float(self.mean_offsets[i]), self.r)

    def to_json(self) -> str:
        payload = {
            "n_dims": self.n_dims,
            "k": self.k,
            "r": self.r,
            "m_mat": [float(v) for v in self.m_mat.reshape(-1)],
            "mean_offsets": None
            if self.mean_offsets is None
            else [float(v) for v in self.mean_offsets],
            "half_integer": self.half_integer,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ShearPlan":
        payload = json.loads(text)
        n = payload["n_dims"]
        mat = np.asarray(payload["m_mat"], dtype=float).reshape(n, n)
        offs = payload.get("mean_offsets")
        return cls(
            m_mat=mat,
            k=payload["k"],
            r=payload["r"],
            mean_offsets=None if offs is None else np.asarray(offs, float),
            half_integer=payload.get("half_integer", True),
        )


def build_shear(plan: ShearPlan) -> tuple[Circuit, ResourceReport]:
    """Gate-level shearing transform on N k-wire coordinates.

    Register layout: the N coordinate registers sit lowest (coordinate 0
    at the least-significant wires), then the fractional register ``f``,
    the sign-extension register ``e``, and one adder carry --- 2r + 1
    ancillae beyond the state.  For each coordinate i the fractional
    window is preloaded with the offset pattern, the constants
    ``M[i][j]`` accumulate ``M_ij (m_j + 1/2)`` into ``f (+) m_i``, the
    top fractional qubit drives the rounding increment, and the same
    constants are subtracted from ``f`` alone in reverse order, clearing
    it.  Coordinates whose row is identically zero (and offset-free)
    contribute no gates; the last coordinate never does.
    """
    n, k, r = plan.n_dims, plan.k, plan.r
    circ = Circuit()
    coords = [circ.add_register(f"m{i}", k, "state") for i in range(n)]
    f_reg = circ.add_register("f", r, "fraction")
    e_reg = circ.add_register("e", r, "extension")
    carry = circ.add_register("carry", 1, "carry").wires[0]
    f_w = f_reg.wires
    e_w = e_reg.wires
    for i in range(n - 1):
        offset = plan.offset_units(i)
        entries = [(j, plan.entry_units(i, j)) for j in range(i + 1, n)]
        if offset == 0 and all(u == 0 for _, u in entries):
            continue
        for t in range(r):
            if (offset >> t) & 1:
                circ.x(f_w[t])
        acc = f_w + coords[i].wires
        for j, units in entries:
            if units == 0:
                continue
            ccm(
                circ,
                units / (1 << r),
                coords[j].wires,
                acc,
                e_w,
                carry,
                half_integer=plan.half_integer,
            )
        controlled_increment(circ, f_w[r - 1], coords[i].wires)
        for j, units in reversed(entries):
            if units == 0:
                continue
            ccm(
                circ,
                units / (1 << r),
                coords[j].wires,
                f_w,
                e_w,
                carry,
                half_integer=plan.half_integer,
                subtract=True,
            )
        for t in range(r):
            if (offset >> t) & 1:
                circ.x(f_w[t])
    return circ, circ.resource_report()


def classical_shear_oracle(
    plan: ShearPlan, m_vec: Sequence[int] | np.ndarray
) -> np.ndarray:
    """Bit-exact integer mirror of :func:`build_shear`.

    Takes signed coordinates in [-2^(k-1), 2^(k-1)-1] and returns the
    sheared signed coordinates, reproducing the circuit's fixed-point
    behaviour: quantized constants, modular accumulation, and the
    top-fraction-bit rounding rule (ties round up).
    """
    n, k, r = plan.n_dims, plan.k, plan.r
    vec = [int(v) for v in m_vec]
    if len(vec) != n:
        raise ValueError(f"expected {n} coordinates, got {len(vec)}")
    lo, hi = -(1 << (k - 1)), (1 << (k - 1)) - 1
    for v in vec:
        if not lo <= v <= hi:
            raise ValueError(f"coordinate {v} outside [{lo}, {hi}]")
    out = list(vec)
    half = 1 << (k + r - 1)
    for i in range(n - 1):
        acc = ((vec[i] % (1 << k)) << r) | plan.offset_units(i)
        for j in range(i + 1, n):
            units = plan.entry_units(i, j)
            if units == 0:
                continue
            acc = ccm_classical(
                units / (1 << r),
                vec[j],
                acc,
                k,
                r,
                half_integer=plan.half_integer,
            )
        if (acc >> (r - 1)) & 1:
            acc = (acc + (1 << r)) % (1 << (k + r))
        n_u = (acc >> r) % (1 << k)
        out[i] = n_u - (1 << k) if n_u >= (1 << (k - 1)) else n_u
    return np.array(out, dtype=int)


def shear_cnot_bound(n_dims: int, k: int, r: int) -> int:
    """Closed-form CNOT ceiling for the full transform.

    (N^2 - N)(4k^2 + 8r^2 + 8kr + 26r + 11k - 8); every constant
    multiplication meets it only when all its multiplier bits are set.
    """
    return (n_dims**2 - n_dims) * (
        4 * k**2 + 8 * r**2 + 8 * k * r + 26 * r + 11 * k - 8
    )


def shear_state(state: np.ndarray, plan: ShearPlan) -> np.ndarray:
    """Apply the transform to a dense state as a basis permutation.

    The amplitude at index m-vector moves to the index of the sheared
    n-vector; coordinate i occupies bits [ik, (i+1)k).  The permutation is
    computed with vectorized integer arithmetic (same fixed-point rules as
    :func:`classical_shear_oracle`, which the tests hold it to).  A
    collision in the target indices would mean the map is not a bijection,
    so it raises.
    """
    n, k, r = plan.n_dims, plan.k, plan.r
    dim = 1 << (n * k)
    state = np.asarray(state)
    if state.shape != (dim,):
        raise ValueError(f"state must have shape ({dim},), got {state.shape}")
    mask = (1 << k) - 1
    w = k + r
    idx = np.arange(dim, dtype=np.int64)
    coords_u = [(idx >> (i * k)) & mask for i in range(n)]
    coords_s = [u - ((u >= (1 << (k - 1))).astype(np.int64) << k) for u in coords_u]
    out_idx = np.zeros(dim, dtype=np.int64)
    for i in range(n - 1):
        acc = (coords_u[i] << r) | plan.offset_units(i)
        for j in range(i + 1, n):
            units = plan.entry_units(i, j)
            if units == 0:
                continue
            if plan.half_integer:
                m_u = units % (1 << (w + 1))
                delta = (m_u >> 1) * (2 * coords_s[j] + 1) + (m_u & 1) * coords_s[j]
            else:
                m_u = units % (1 << w)
                delta = m_u * coords_s[j]
            acc = (acc + delta) % (1 << w)
        acc = (acc + (((acc >> (r - 1)) & 1) << r)) % (1 << w)
        out_idx |= ((acc >> r) & mask) << (i * k)
    out_idx |= coords_u[n - 1] << ((n - 1) * k)
    if len(np.unique(out_idx)) != dim:
        raise ValueError("shear map is not a bijection; oracle is broken")
    out = np.zeros_like(state)
    out[out_idx] = state
    return out

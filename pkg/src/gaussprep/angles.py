"""Rotation-angle approximation plans and their fixed-point realisation.

For recursion level ``j`` the rotation angle fraction ``alpha_tilde(mu_j,
sigma_j)`` must be produced by reversible arithmetic from the already
prepared state qubits.  Which approximation is viable depends only on
``sigma_j``:

* ``constant`` — the angle never strays from 1/2 by more than the b-bit
  error budget; no arithmetic at all.
* ``high_sigma`` — a single odd polynomial in ``mu' = mu_j + 1/2`` over the
  whole interval.
* ``intermediate`` — three branches selected by a label register: an odd
  polynomial near ``mu' = 0`` plus an even outer polynomial applied to
  ``mu_j`` (upper) or ``mu_j + 1`` (lower), the two outer branches sharing
  coefficients through the exact reflection symmetry of the angle.
* ``square_wave`` — the angle saturates to a step; a lone CNOT implements
  the rotation.

:func:`fit_angle_plan` picks the regime, fits coefficients by least squares
on Chebyshev nodes with the smallest feasible degrees, and then quantizes
the whole Horner evaluation onto concrete register formats: widths are
pinned (iterates b+1 wires, squared argument b or b-1 wires) while each
register's binary-point position is placed from the measured dynamic range
of the values passing through it.  :func:`emulate_angle_plan` reproduces the
circuit's arithmetic integer-for-integer, including every row truncation,
and is the oracle the gate builders are tested against.

The evaluated chain is the negated Horner form: iterates carry ``-P`` so
that every multiply-accumulate row adds a non-negative slice wherever the
fit allows, and the final multiply by the (signed) shifted mean folds the
sign back in.  Residual floor bias from row truncations is recentred by an
integer offset folded into the angle register's preloaded constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .arith import (
    WireFormat,
    as_signed,
    as_unsigned,
    multiply_classical,
    plan_product_rows,
)
from .reference import alpha_tilde

__all__ = [
    "SIGMA_LO",
    "SIGMA_HI",
    "REGIMES",
    "AngleFitError",
    "ChainData",
    "AngleApproxPlan",
    "fit_angle_plan",
    "emulate_angle_plan",
    "classify_branch",
    "label_threshold",
    "mean_register_format",
    "angle_register_format",
    "square_formats",
]

SIGMA_LO = 0.0375
SIGMA_HI = 0.6

REGIMES = ("constant", "high_sigma", "intermediate", "square_wave")

_MAX_DEGREE = 14
_J_REF = 11  # register granularity used to validate quantized chains


class AngleFitError(ValueError):
    """No feasible approximation plan under the requested error budget."""


@dataclass(frozen=True)
class ChainData:
    """Quantized Horner data for one branch.

    ``lead_int`` is the leading coefficient in ``lead_fmt`` units,
    ``k_ints[i]`` the constant added after the (i+1)-th multiply in iterate
    i+1 units, and ``s1_int`` the b-bit constant preloaded into the angle
    register (branch base point plus truncation-bias recentring).
    """

    lead_int: int
    k_ints: tuple[int, ...]
    s1_int: int


@dataclass(frozen=True)
class AngleApproxPlan:
    """Approximation recipe for one (sigma_j, b) pair.

    ``coeffs_a`` holds the odd-polynomial coefficients (full-interval for
    high sigma, middle branch otherwise) and ``coeffs_ap`` the outer even
    polynomial's; ``degree_d``/``degree_dp`` are their honest fitted
    degrees, while ``chain_degree`` is the evaluated Horner length (shorter
    fits are zero-padded so register allocation follows one formula).
    ``max_err`` is the worst-case real-coefficient error on the evaluation
    grid; ``quant_err`` the worst case after fixed-point quantization at
    reference register granularity.

    ``mid_shift`` rescales the middle branch into the zoomed variable
    w = 2^mid_shift * (mu_j + 1/2) with |w| <= 1/2, so its squared
    argument spans the same [0, 1/4] as the outer branches and one set
    of register formats serves every branch.  The rescaling is free in
    gates: the squarer reads the mean register with its binary point
    reinterpreted, the sign-multiplier copy is wired ``mid_shift``
    places up, and each middle coefficient a_n carries the compensating
    2^(-mid_shift*(2n+1)) inside its label-toggled constant.
    """

    regime: str
    degree_d: int
    degree_dp: int
    coeffs_a: tuple[float, ...]
    coeffs_ap: tuple[float, ...]
    mu_mid: float
    sigma_j: float
    b: int
    max_err: float
    quant_err: float = 0.0
    chain_degree: int = 0
    mid_shift: int = 0
    needs_square: bool = False
    sq_fmt: WireFormat | None = None
    lead_fmt: WireFormat | None = None
    iter_fmts: tuple[WireFormat, ...] = ()
    chains: dict[str, ChainData] | None = None
    exclusion_halfwidth: float = 0.0

    @property
    def err_budget(self) -> float:
        return 2.0 ** -(self.b + 1)


def mean_register_format(j: int) -> WireFormat:
    """Signed format of the augmented mean register at level j."""
    return WireFormat(j + 2, -(j + 1), True)


def angle_register_format(b: int) -> WireFormat:
    """The angle register: b wires, unsigned, modulo 1."""
    return WireFormat(b, -b, False)


def square_formats(j: int, zoom: int) -> tuple[WireFormat, WireFormat]:
    """(multiplier, addend) formats of the magnitude squarer at level j.

    The multiplier is the j+1-wire magnitude read ``zoom`` places up; the
    addend is its copy register, 2*zoom wires wider with the binary point
    ``zoom`` places down.  A middle-branch copy placed 2*zoom wires up then
    squares the zoomed variable, while a copy at the bottom yields the
    unzoomed square — one shared row plan either way.
    """
    lsb = -(j + 1)
    return (
        WireFormat(j + 1, lsb + zoom, False),
        WireFormat(j + 1 + 2 * zoom, lsb - zoom, False),
    )


def label_threshold(mu_mid: float, j: int) -> int:
    """Comparator constant: middle branch is |2^(j+1) mu'| < this value.

    Ties at |mu'| = mu_mid land in the middle branch, hence the +1 on the
    floored scaled threshold.
    """
    return math.floor(mu_mid * 2 ** (j + 1)) + 1


def classify_branch(mu_mid: float, j: int, q: int) -> str:
    """Branch of prefix ``q`` at level ``j``: ``mid``, ``up`` or ``low``."""
    v2 = 2 * q + 1 - 2**j
    if abs(v2) < label_threshold(mu_mid, j):
        return "mid"
    return "low" if v2 > 0 else "up"


# -- fitting -----------------------------------------------------------------


def _alpha_vec(mus: np.ndarray, sigma: float) -> np.ndarray:
    return np.array([alpha_tilde(m, sigma) for m in mus])


def _cheb_nodes(lo: float, hi: float, n: int) -> np.ndarray:
    i = np.arange(n)
    return 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos((2 * i + 1) * np.pi / (2 * n))


def _poly_eval(coeffs: np.ndarray, powers: list[int], x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    for c, p in zip(coeffs, powers):
        out += c * x**p
    return out


def _fit_minimal_degree(
    node_x: np.ndarray,
    node_y: np.ndarray,
    dense_x: np.ndarray,
    dense_y: np.ndarray,
    budget: float,
    parity: int,
) -> tuple[np.ndarray, int, float] | None:
    """Smallest-degree parity-restricted polynomial meeting the budget.

    ``parity`` 1 fits sum a_n x^(2n+1), 0 fits sum a_n x^(2n).  Domains are
    rescaled to [-1, 1] before the least squares solve for conditioning.
    Returns (coefficients, degree index d, max dense error) or None.
    """
    scale = max(abs(node_x).max(), 1e-300)
    nx, dx = node_x / scale, dense_x / scale
    for d in range(_MAX_DEGREE + 1):
        powers = [2 * n + parity for n in range(d + 1)]
        basis = np.stack([nx**p for p in powers], axis=1)
        sol, *_ = np.linalg.lstsq(basis, node_y, rcond=None)
        err = np.abs(_poly_eval(sol, powers, dx) - dense_y).max()
        if err <= budget * 0.999:
            coeffs = sol / scale ** np.array(powers, dtype=float)
            return coeffs, d, float(err)
    return None


def _dense_mu_grid(n: int = 4001) -> np.ndarray:
    return np.linspace(-1.0, 0.0, n + 2)[1:-1]


def fit_angle_plan(
    sigma_j: float,
    b: int,
    thresholds: tuple[float, float] = (SIGMA_LO, SIGMA_HI),
    level: int | None = None,
) -> AngleApproxPlan:
    """Select a regime and fit/quantize the angle approximation.

    The worst-case error of the real-coefficient fit over mu_j in (-1, 0)
    is at most 2^-(b+1) for every regime (the square-wave regime excludes
    the exponentially narrow transition window around mu_j = -1/2 recorded
    in ``exclusion_halfwidth``).

    When ``level`` is given, the branch preload constants are recentred on
    that level's actual prefix grid and pinned so no reachable input wraps
    the angle register (see :func:`_retune_for_level`); pass it whenever
    the plan will drive a concrete level's rotation.
    """
    if sigma_j <= 0:
        raise ValueError(f"sigma_j must be positive, got {sigma_j}")
    if b < 1:
        raise ValueError(f"b must be at least 1, got {b}")
    if level is not None and level < 1:
        raise ValueError(f"level must be at least 1, got {level}")
    return _fit_cached(
        float(sigma_j), int(b), float(thresholds[0]), float(thresholds[1]), level
    )


@lru_cache(maxsize=None)
def _fit_cached(
    sigma_j: float, b: int, sigma_lo: float, sigma_hi: float, level: int | None
) -> AngleApproxPlan:
    budget = 2.0 ** -(b + 1)
    mu_dense = _dense_mu_grid()

    if sigma_j <= sigma_lo:
        delta = 2.0 * sigma_j**2 * math.log(2.0 / (math.pi * budget))
        keep = np.abs(mu_dense + 0.5) >= delta
        alphas = _alpha_vec(mu_dense[keep], sigma_j)
        step = (mu_dense[keep] < -0.5).astype(float)
        return AngleApproxPlan(
            regime="square_wave",
            degree_d=0,
            degree_dp=0,
            coeffs_a=(),
            coeffs_ap=(),
            mu_mid=0.5,
            sigma_j=sigma_j,
            b=b,
            max_err=float(np.abs(alphas - step).max()),
            exclusion_halfwidth=delta,
        )

    alphas_dense = _alpha_vec(mu_dense, sigma_j)
    dev = float(np.abs(alphas_dense - 0.5).max())
    if dev < budget:
        return AngleApproxPlan(
            regime="constant",
            degree_d=0,
            degree_dp=0,
            coeffs_a=(),
            coeffs_ap=(),
            mu_mid=0.5,
            sigma_j=sigma_j,
            b=b,
            max_err=dev,
        )
    if b < 2:
        raise AngleFitError(
            f"sigma_j={sigma_j:g} needs an arithmetic angle circuit, which "
            f"requires b >= 2 (got b={b})"
        )

    mu_prime = mu_dense + 0.5
    if sigma_j >= sigma_hi:
        fit = _fit_minimal_degree(
            _cheb_nodes(-0.5, 0.5, 160),
            _alpha_vec(_cheb_nodes(-0.5, 0.5, 160) - 0.5, sigma_j) - 0.5,
            mu_prime,
            alphas_dense - 0.5,
            budget,
            parity=1,
        )
        if fit is None:
            raise AngleFitError(
                f"no odd fit up to degree {2 * _MAX_DEGREE + 1} meets "
                f"2^-{b + 1} at sigma_j={sigma_j:g}"
            )
        coeffs, d, err = fit
        return _quantize_plan(
            regime="high_sigma",
            sigma_j=sigma_j,
            b=b,
            coeffs_a=coeffs,
            coeffs_ap=np.array([]),
            degree_d=d,
            degree_dp=0,
            mu_mid=0.5,
            max_err=err,
            level=level,
        )

    # Intermediate regime: search the split point on the 1/128 grid.  A
    # candidate is ranked by fitted degrees, but only after its Horner
    # chains pass a conditioning estimate — steep splits produce partials
    # whose b+1-wire quantization would swamp the budget even though the
    # real-coefficient fit is fine.
    best = None
    for i in range(1, 65):
        c = i / 128.0
        mid_mask = np.abs(mu_prime) <= c
        out_mask = mu_prime > c
        if not mid_mask.any() or not out_mask.any():
            continue
        mid_nodes = _cheb_nodes(-c, c, 160)
        mid_fit = _fit_minimal_degree(
            mid_nodes,
            _alpha_vec(mid_nodes - 0.5, sigma_j) - 0.5,
            mu_prime[mid_mask],
            alphas_dense[mid_mask] - 0.5,
            budget,
            parity=1,
        )
        if mid_fit is None:
            continue
        x_hi = 0.5 - c
        out_nodes = _cheb_nodes(0.0, x_hi, 160)
        out_fit = _fit_minimal_degree(
            out_nodes,
            _alpha_vec(-out_nodes, sigma_j),
            -(mu_dense[out_mask]),
            alphas_dense[out_mask],
            budget,
            parity=0,
        )
        if out_fit is None:
            continue
        d_mid, d_out = mid_fit[1], out_fit[1]
        est = max(
            _chain_error_estimate(cvec, t_max, s2_max, b)
            for cvec, t_max, s2_max in _branch_chain_specs(
                c, mid_fit[0], out_fit[0], max(d_mid, d_out, 1)
            )
        )
        if est <= budget:
            key = (0, max(d_mid, d_out), d_mid + d_out, est)
        else:  # nothing well-conditioned: least damage beats least degree
            key = (1, est, max(d_mid, d_out), d_mid + d_out)
        if best is None or key < best[0]:
            best = (key, c, mid_fit, out_fit)
    if best is None:
        raise AngleFitError(
            f"no piecewise fit up to degree {2 * _MAX_DEGREE + 1} meets "
            f"2^-{b + 1} at sigma_j={sigma_j:g}"
        )
    _, c, (mid_coeffs, d_mid, mid_err), (out_coeffs, d_out, out_err) = best
    return _quantize_plan(
        regime="intermediate",
        sigma_j=sigma_j,
        b=b,
        coeffs_a=mid_coeffs,
        coeffs_ap=out_coeffs,
        degree_d=d_mid,
        degree_dp=d_out,
        mu_mid=c,
        max_err=max(mid_err, out_err),
        level=level,
    )


# -- quantization ------------------------------------------------------------


def _fmt_for_range(lo: float, hi: float, width: int) -> WireFormat:
    signed = lo < 0.0
    lsb = -width - 64
    while True:
        unit = 2.0**lsb
        top = (2 ** (width - 1) if signed else 2**width) * unit
        bottom = -(2 ** (width - 1)) * unit if signed else 0.0
        if hi < top and lo >= bottom:
            return WireFormat(width, lsb, signed)
        lsb += 1


def _padded_chain_coeffs(coeffs: np.ndarray, depth: int) -> np.ndarray:
    """Coefficient vector c_0..c_depth, zero-padded above the fit degree."""
    out = np.zeros(depth + 1)
    out[: len(coeffs)] = coeffs
    return out


def _horner_partials(cvec: np.ndarray, t: np.ndarray) -> list[np.ndarray]:
    """Values of each Horner iterate of sum c_n t^n, leading term first."""
    depth = len(cvec) - 1
    partials = []
    x = np.full_like(t, 0.0) + cvec[depth] * t + cvec[depth - 1]
    partials.append(x)
    for i in range(2, depth + 1):
        x = x * t + cvec[depth - i]
        partials.append(x)
    return partials


def _multiply_exact(
    mult_val: int,
    add_val: int,
    mult_fmt: WireFormat,
    add_fmt: WireFormat,
    tgt_fmt: WireFormat,
    acc: int = 0,
) -> int:
    """Row accumulation as in multiply_classical but without the top clip."""
    mult_u = as_unsigned(mult_val, mult_fmt.width)
    for row in plan_product_rows(mult_fmt, add_fmt, tgt_fmt):
        if not (mult_u >> row.mult_bit) & 1:
            continue
        val = (add_val >> row.rshift) << row.offset
        acc = acc - val if row.subtract else acc + val
    return acc


def _fmt_bounds(fmt: WireFormat) -> tuple[int, int]:
    if fmt.signed:
        return -(1 << (fmt.width - 1)), 1 << (fmt.width - 1)
    return 0, 1 << fmt.width


@dataclass
class _BranchSpec:
    name: str
    cvec: np.ndarray  # chain coefficients c_0..c_D
    t_max: float
    s1_base: float  # 0 or 1/2, before recentring
    u2_ints: np.ndarray  # reference-register mean values (signed ints)
    mu_js: np.ndarray  # corresponding exact mu_j arguments
    shifted: bool  # final multiplier is the shifted register (u2) itself
    s2_shift: int = 0  # left shift applied when copying u2 into s2


def _mid_shift(mu_mid: float) -> int:
    """Largest m with mu_mid * 2^m <= 1/2, so the scaled copy stays in range."""
    return max(0, math.floor(-math.log2(mu_mid)) - 1)


def _chain_error_estimate(
    cvec: np.ndarray, t_max: float, s2_max: float, b: int
) -> float:
    """Propagated iterate-quantization error of one Horner chain.

    Each iterate is stored in b+1 wires scaled to its own range, so its
    quantization step is about range * 2^-b; a step at iterate n reaches
    the angle attenuated by the remaining multiplies and the final
    multiplier.  The estimate deliberately ignores row-truncation detail —
    it only has to rank split-point candidates by conditioning.
    """
    t = np.linspace(0.0, t_max, 129)
    err = 0.0
    for n, vals in enumerate(_horner_partials(cvec, t), start=1):
        span = max(np.abs(vals).max(), 1e-300)
        err += span * 2.0**-b * t_max ** (len(cvec) - 1 - n)
    return err * s2_max


def _branch_chain_specs(
    mu_mid: float,
    coeffs_a: np.ndarray,
    coeffs_ap: np.ndarray,
    depth: int,
) -> list[tuple[np.ndarray, float, float]]:
    """(cvec, t_max, s2_max) for the mid/up/low Horner chains of a split."""
    shift = _mid_shift(mu_mid)
    hat = coeffs_a * 2.0 ** (-shift * (2 * np.arange(len(coeffs_a)) + 1))
    w_max = mu_mid * 2.0**shift
    t_out = (0.5 - mu_mid) ** 2
    up_cvec = _padded_chain_coeffs(-coeffs_ap, depth)
    up_cvec[0] += 1.0
    return [
        (_padded_chain_coeffs(-hat, depth), w_max**2, w_max),
        (up_cvec, t_out, 1.0),
        (_padded_chain_coeffs(coeffs_ap, depth), t_out, 1.0),
    ]


def _reference_branches(
    regime: str,
    mu_mid: float,
    coeffs_a: np.ndarray,
    coeffs_ap: np.ndarray,
    depth: int,
) -> list[_BranchSpec]:
    j = _J_REF
    scale = 2 ** (j + 1)
    v = 2 * np.arange(2**j) + 1  # odd integers: the reachable register values
    v2 = v - 2**j
    if regime == "high_sigma":
        cvec = _padded_chain_coeffs(-coeffs_a, depth)
        return [
            _BranchSpec(
                name="hi",
                cvec=cvec,
                t_max=0.25,
                s1_base=0.5,
                u2_ints=v2,
                mu_js=-(v2 / scale) - 0.5,
                shifted=True,
            )
        ]
    cc = label_threshold(mu_mid, j)
    mid = np.abs(v2) < cc
    low = (v2 > 0) & ~mid
    up = (v2 < 0) & ~mid
    shift = _mid_shift(mu_mid)
    specs = _branch_chain_specs(mu_mid, coeffs_a, coeffs_ap, depth)
    (mid_cvec, t_mid, _), (up_cvec, t_out, _), (low_cvec, _, _) = specs
    return [
        _BranchSpec(
            name="mid",
            cvec=mid_cvec,
            t_max=t_mid,
            s1_base=0.5,
            u2_ints=v2[mid],
            mu_js=-(v2[mid] / scale) - 0.5,
            shifted=True,
            s2_shift=shift,
        ),
        _BranchSpec(
            name="up",
            cvec=up_cvec,
            t_max=t_out,
            s1_base=0.0,
            u2_ints=v[up],
            mu_js=-(v[up] / scale),
            shifted=False,
        ),
        _BranchSpec(
            name="low",
            cvec=low_cvec,
            t_max=t_out,
            s1_base=0.0,
            u2_ints=v[low] - 2 ** (j + 1),
            mu_js=-((v[low] - 2 ** (j + 1)) / scale) - 1.0,
            shifted=False,
        ),
    ]


def _emulate_quantized(
    branch: _BranchSpec,
    lead_int: int,
    k_ints: list[int],
    lead_fmt: WireFormat,
    sq_fmt: WireFormat,
    iter_fmts: list[WireFormat],
    b: int,
    u2_fmt: WireFormat,
    lead_is_multiplier: bool,
    zoom: int,
) -> tuple[np.ndarray, int | None]:
    """Angle integers for every reference input, or the overflowing iterate.

    Runs the full quantized chain with unbounded intermediate checks: if an
    iterate's exact value escapes its format range the index of the first
    offender is returned so the caller can widen that format.  ``zoom`` is
    the level-wide middle-branch magnification; only the middle branch's
    magnitude copy is actually shifted by it.
    """
    angle_fmt = angle_register_format(b)
    depth = len(iter_fmts)
    j = u2_fmt.width - 2
    sq_mult_fmt, sq_add_fmt = square_formats(j, zoom)
    out = np.zeros(len(branch.u2_ints), dtype=np.int64)
    for idx, u2 in enumerate(branch.u2_ints):
        u2 = int(u2)
        t = multiply_classical(
            abs(u2),
            abs(u2) << (2 * branch.s2_shift),
            sq_mult_fmt,
            sq_add_fmt,
            sq_fmt,
        )
        if lead_is_multiplier:
            x_exact = _multiply_exact(lead_int, t, lead_fmt, sq_fmt, iter_fmts[0])
        else:
            x_exact = _multiply_exact(t, lead_int, sq_fmt, lead_fmt, iter_fmts[0])
        x_exact += k_ints[0]
        lo, hi = _fmt_bounds(iter_fmts[0])
        if not lo <= x_exact < hi:
            return out, 0
        x = x_exact
        for n in range(1, depth):
            x_exact = _multiply_exact(t, x, sq_fmt, iter_fmts[n - 1], iter_fmts[n])
            x_exact += k_ints[n]
            lo, hi = _fmt_bounds(iter_fmts[n])
            if not lo <= x_exact < hi:
                return out, n
            x = x_exact
        s2 = (u2 << branch.s2_shift) if branch.shifted else -(1 << (u2_fmt.width - 1))
        angle = multiply_classical(
            s2, x, u2_fmt, iter_fmts[-1], angle_fmt, acc=0
        )
        out[idx] = angle
    return out, None


def _quantize_plan(
    regime: str,
    sigma_j: float,
    b: int,
    coeffs_a: np.ndarray,
    coeffs_ap: np.ndarray,
    degree_d: int,
    degree_dp: int,
    mu_mid: float,
    max_err: float,
    level: int | None = None,
) -> AngleApproxPlan:
    depth = max(degree_d, degree_dp, 1)
    if regime == "high_sigma":
        sq_fmt = WireFormat(b, -(b + 2), False)
    else:
        sq_fmt = WireFormat(b - 1, -(b + 1), False)
    zoom = _mid_shift(mu_mid) if regime == "intermediate" else 0
    branches = _reference_branches(regime, mu_mid, coeffs_a, coeffs_ap, depth)
    u2_fmt = mean_register_format(_J_REF)

    # Range analysis of the real-valued Horner iterates across branches.
    lows = np.full(depth, np.inf)
    highs = np.full(depth, -np.inf)
    for br in branches:
        t = np.linspace(0.0, br.t_max, 600)
        for i, vals in enumerate(_horner_partials(br.cvec, t)):
            lows[i] = min(lows[i], vals.min())
            highs[i] = max(highs[i], vals.max())
    pad = 2.0**-b
    iter_fmts = [
        _fmt_for_range(
            lo - abs(lo) * 0.05 - pad, hi + abs(hi) * 0.05 + pad, b + 1
        )
        for lo, hi in zip(lows, highs)
    ]

    lead_vals = np.array([br.cvec[depth] for br in branches])
    lead_is_multiplier = regime == "high_sigma"
    if lead_is_multiplier:
        lead_lsb = iter_fmts[0].lsb - sq_fmt.lsb - 2
        lead_int_raw = round(float(lead_vals[0]) / 2.0**lead_lsb)
        width = max(abs(lead_int_raw).bit_length() + 1, 2)
        lead_fmt = WireFormat(width, lead_lsb, True)
    else:
        lead_fmt = _fmt_for_range(
            float(lead_vals.min()) * 1.05 - pad,
            float(lead_vals.max()) * 1.05 + pad,
            b,
        )
    needs_square = depth >= 2 or any(
        round(float(v) / 2.0**lead_fmt.lsb) != 0 for v in lead_vals
    )

    angle_mod = 1 << b
    for _ in range(16):
        chains: dict[str, ChainData] = {}
        quant_err = 0.0
        bumped: int | str | None = None
        for br in branches:
            lead_int = round(float(br.cvec[depth]) / 2.0**lead_fmt.lsb)
            lead_lo, lead_hi = _fmt_bounds(lead_fmt)
            if not lead_lo <= lead_int < lead_hi:
                bumped = "lead"
                break
            k_ints = [
                round(float(br.cvec[depth - i]) / 2.0 ** iter_fmts[i - 1].lsb)
                for i in range(1, depth + 1)
            ]
            angles, overflow = _emulate_quantized(
                br,
                lead_int,
                k_ints,
                lead_fmt,
                sq_fmt,
                iter_fmts,
                b,
                u2_fmt,
                lead_is_multiplier,
                zoom,
            )
            if overflow is not None:
                bumped = overflow
                break
            base_int = round(br.s1_base * angle_mod)
            if len(br.u2_ints) == 0:
                chains[br.name] = ChainData(
                    lead_int=lead_int, k_ints=tuple(k_ints), s1_int=base_int
                )
                continue
            true = _alpha_vec(br.mu_js, sigma_j)
            err = (angles + base_int) / angle_mod - true
            # Recentre modulo 1, then shave the floor bias with an integer
            # offset folded into the preloaded constant.
            err -= np.round(err)
            delta = -round(float((err.max() + err.min()) / 2) * angle_mod)
            err += delta / angle_mod
            quant_err = max(quant_err, float(np.abs(err).max()))
            chains[br.name] = ChainData(
                lead_int=lead_int,
                k_ints=tuple(k_ints),
                s1_int=(base_int + delta) % angle_mod,
            )
        if bumped is None:
            break
        if bumped == "lead":
            lead_fmt = WireFormat(lead_fmt.width, lead_fmt.lsb + 1, lead_fmt.signed)
        else:
            f = iter_fmts[bumped]
            iter_fmts[bumped] = WireFormat(f.width, f.lsb + 1, f.signed)
    else:
        raise AngleFitError(
            f"quantized chain would not settle at sigma_j={sigma_j:g}, b={b}"
        )

    plan = AngleApproxPlan(
        regime=regime,
        degree_d=degree_d,
        degree_dp=degree_dp,
        coeffs_a=tuple(float(c) for c in coeffs_a),
        coeffs_ap=tuple(float(c) for c in coeffs_ap),
        mu_mid=mu_mid,
        sigma_j=sigma_j,
        b=b,
        max_err=max_err,
        quant_err=quant_err,
        chain_degree=depth,
        mid_shift=zoom,
        needs_square=needs_square,
        sq_fmt=sq_fmt,
        lead_fmt=lead_fmt,
        iter_fmts=tuple(iter_fmts),
        chains=chains,
    )
    if level is not None:
        plan = _retune_for_level(plan, level)
    return plan


def _retune_for_level(plan: AngleApproxPlan, level: int) -> AngleApproxPlan:
    """Recentre each branch's preload on one level's actual prefix grid.

    The settle loop places s1 from the dense reference grid, whose wide
    final multipliers suffer far more row truncation than any real level,
    so the bias it cancels is systematically overstated.  Worse, errors
    there are judged modulo 1: a fit that grazes zero at a reachable input
    can wrap the angle register, and the pi-scaled rotation turns that
    wrap into a swap of the branch amplitudes.  Rerunning the exact
    per-level arithmetic for every reachable prefix gives the true error
    band; the offset is recentred on it and then pinned so no unwrapped
    register value leaves [0, 2^b - 1].
    """
    angle_mod = 1 << plan.b
    grid_scale = 2.0 ** (level + 1)
    by_branch: dict[str, list[int]] = {name: [] for name in plan.chains}
    for q in range(2**level):
        if plan.regime == "high_sigma":
            by_branch["hi"].append(q)
        else:
            by_branch[classify_branch(plan.mu_mid, level, q)].append(q)
    chains = dict(plan.chains)
    quant_err = 0.0
    for name, qs in by_branch.items():
        if not qs:
            continue
        applied = np.array([emulate_angle_plan(plan, level, q) for q in qs])
        true = _alpha_vec(-(2 * np.asarray(qs) + 1) / grid_scale, plan.sigma_j)
        raw = applied - true
        wraps = np.round(raw)
        err = raw - wraps
        ints = np.rint(applied * angle_mod - wraps * angle_mod).astype(np.int64)
        delta = -round(float((err.max() + err.min()) / 2) * angle_mod)
        d_lo = -int(ints.min())
        d_hi = angle_mod - 1 - int(ints.max())
        if d_lo > d_hi:
            raise AngleFitError(
                f"branch {name} cannot be kept wrap-free at level {level}, "
                f"sigma_j={plan.sigma_j:g}, b={plan.b}"
            )
        delta = min(max(delta, d_lo), d_hi)
        quant_err = max(quant_err, float(np.abs(err + delta / angle_mod).max()))
        chain = chains[name]
        chains[name] = ChainData(
            lead_int=chain.lead_int,
            k_ints=chain.k_ints,
            s1_int=(chain.s1_int + delta) % angle_mod,
        )
    return replace(plan, chains=chains, quant_err=quant_err)


# -- bit-exact evaluation ----------------------------------------------------


def emulate_angle_plan(plan: AngleApproxPlan, j: int, q: int) -> float:
    """Angle fraction the level-j circuit produces for prefix ``q``.

    Mirrors the gate-level arithmetic exactly: same register formats, same
    shift-and-add rows, same truncations, same modular wraps.  The result
    is the effective rotation fraction in [0, 1] (square-wave levels bypass
    the angle register and may return exactly 1).
    """
    if not 1 <= j:
        raise ValueError("plans apply to levels j >= 1")
    if not 0 <= q < 2**j:
        raise ValueError(f"prefix {q} out of range for level {j}")
    if plan.regime == "constant":
        return 0.5
    if plan.regime == "square_wave":
        return float((q >> (j - 1)) & 1)

    u2_fmt = mean_register_format(j)
    v2 = 2 * q + 1 - 2**j
    if plan.regime == "high_sigma":
        branch, u2, s2 = "hi", v2, v2
    else:
        branch = classify_branch(plan.mu_mid, j, q)
        if branch == "mid":
            u2 = v2
            s2 = u2 << plan.mid_shift
        else:
            u2 = 2 * q + 1 - (2 ** (j + 1) if branch == "low" else 0)
            s2 = -(1 << (j + 1))
    chain = plan.chains[branch]
    # The squarer sees the magnitude: for an odd two's-complement value the
    # negation is a sign-controlled flip of the upper bits, so the square's
    # input register is unsigned and its row sums can never wrap below zero.
    # One row plan serves every branch: the zoomed middle branch lands its
    # magnitude copy 2m wires up, which cancels against the addend format's
    # lowered binary point for the outer branches.
    t = (
        multiply_classical(
            abs(u2),
            abs(u2) << (2 * plan.mid_shift if branch == "mid" else 0),
            *square_formats(j, plan.mid_shift),
            plan.sq_fmt,
        )
        if plan.needs_square
        else 0
    )
    if plan.regime == "high_sigma":
        x = multiply_classical(
            chain.lead_int, t, plan.lead_fmt, plan.sq_fmt, plan.iter_fmts[0]
        )
    else:
        x = multiply_classical(
            t, chain.lead_int, plan.sq_fmt, plan.lead_fmt, plan.iter_fmts[0]
        )
    x = (x + chain.k_ints[0]) % (1 << plan.iter_fmts[0].width)
    for n in range(1, plan.chain_degree):
        prev_fmt = plan.iter_fmts[n - 1]
        prev = (
            as_signed(x, prev_fmt.width)
            if prev_fmt.signed
            else as_unsigned(x, prev_fmt.width)
        )
        x = multiply_classical(t, prev, plan.sq_fmt, prev_fmt, plan.iter_fmts[n])
        x = (x + chain.k_ints[n]) % (1 << plan.iter_fmts[n].width)
    last_fmt = plan.iter_fmts[-1]
    xd = (
        as_signed(x, last_fmt.width)
        if last_fmt.signed
        else as_unsigned(x, last_fmt.width)
    )
    angle = multiply_classical(
        s2, xd, u2_fmt, last_fmt, angle_register_format(plan.b), acc=chain.s1_int
    )
    return angle / 2.0**plan.b

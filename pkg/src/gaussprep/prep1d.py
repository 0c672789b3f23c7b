"""Recursive Gaussian state preparation on a binary register.

One qubit is prepended per level: conditioned on the coarse register
holding q, the new qubit receives a rotation by the angle fraction
alpha~(mu_j(q), sigma_j).  Levels whose angle depends on q evaluate it
with reversible fixed-point arithmetic (see :mod:`gaussprep.angles` for
the approximation plans), rotate the new qubit off the angle register,
and uncompute.  Levels with a constant or square-wave angle collapse to
a single one- or two-qubit gate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .angles import (
    AngleApproxPlan,
    SIGMA_HI,
    SIGMA_LO,
    angle_register_format,
    fit_angle_plan,
    label_threshold,
    mean_register_format,
    square_formats,
)
from .arith import (
    WireFormat,
    as_unsigned,
    multiply,
    plan_product_rows,
    ripple_add,
    rows_extension_need,
    sign_extend,
)
from .circuit import Circuit, Gate, ResourceReport, inverse
from .reference import GaussianSpec1D, _quantize_angle, alpha_tilde

__all__ = [
    "Kw1dConfig",
    "RecursionLevelTrace",
    "AngleRegisters",
    "build_kw1d",
    "build_angle_poly",
    "build_angle_piecewise",
    "build_square_wave",
    "apply_rotation",
    "cnot_bound_high_sigma",
    "cnot_bound_intermediate",
    "dedicated_ancilla_count",
]


@dataclass(frozen=True)
class Kw1dConfig:
    """Parameters of one preparation run.

    ``thresholds`` are the (sigma_lo, sigma_hi) regime boundaries handed
    to the angle fitter.  ``mu`` must lie in [-1, 0]; -1/2 is the value
    the level >= 1 arithmetic is specialised to, anything else is
    experimental and triggers a warning from :func:`build_kw1d`.
    """

    spec: GaussianSpec1D
    k: int
    b: int
    thresholds: tuple[float, float] = (SIGMA_LO, SIGMA_HI)

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"need at least one level, got k={self.k}")
        if self.b < 1:
            raise ValueError(f"need at least one angle bit, got b={self.b}")
        lo, hi = self.thresholds
        if not 0 < lo < hi:
            raise ValueError(f"thresholds must satisfy 0 < lo < hi, got {self.thresholds}")
        if not -1.0 <= self.spec.mu <= 0.0:
            raise ValueError(f"mu must lie in [-1, 0], got {self.spec.mu}")


@dataclass(frozen=True)
class RecursionLevelTrace:
    """What one level cost and which approximation it used."""

    level: int
    sigma_j: float
    plan: AngleApproxPlan | None
    report: ResourceReport

    @property
    def regime(self) -> str:
        return self.plan.regime if self.plan is not None else "classical"

    def to_json(self) -> dict:
        arith = self.plan is not None and self.plan.regime in ("high_sigma", "intermediate")
        return {
            "level": self.level,
            "sigma_j": self.sigma_j,
            "regime": self.regime,
            "degree": self.plan.chain_degree if arith else 0,
            "cnots": self.report.cnot_count,
            "ancillae": self.report.ancilla_count,
            "total_qubits": self.report.total_qubits,
            "depth": self.report.depth,
        }


@dataclass(frozen=True)
class AngleRegisters:
    """Wire assignment shared by the arithmetic level builders.

    ``mean`` lists, LSB first, the constant-one augmentation wire, the
    j state wires the level conditions on, and the sign wire: together
    they carry the two's-complement value 2q+1 that the branch shifts
    turn into the centred mean.  ``scratch`` is a zero-initialised pool
    the builders borrow comparator borrows, squarer copies and
    sign-extension wires from; every borrow is returned clean.
    """

    n_qubits: int
    mean: tuple[int, ...]
    angle: tuple[int, ...]
    square: tuple[int, ...]
    iterates: tuple[tuple[int, ...], ...]
    carry: int
    scratch: tuple[int, ...]
    multiplier: tuple[int, ...] = ()
    label: tuple[int, ...] = ()

    @property
    def level(self) -> int:
        return len(self.mean) - 2


def _xor_const(circ: Circuit, wires, value: int) -> None:
    # Python's arithmetic right shift sign-extends, so negative constants
    # land as their two's complement without explicit masking.
    for i, w in enumerate(wires):
        if (value >> i) & 1:
            circ.x(w)


def _xor_branch_const(circ: Circuit, wires, values: dict[str, int], label) -> None:
    """XOR a label-dependent constant into ``wires``.

    The up branch (label 00) gets its pattern in plain X gates; wherever
    the mid or low pattern differs, a CX from the matching label wire
    toggles the difference.  Self-inverse, like everything it emits.
    """
    l_mid, l_low = label
    for i, w in enumerate(wires):
        up = (values["up"] >> i) & 1
        if up:
            circ.x(w)
        if ((values["mid"] >> i) & 1) != up:
            circ.cx(l_mid, w)
        if ((values["low"] >> i) & 1) != up:
            circ.cx(l_low, w)


def _toggle_magnitude(circ: Circuit, mean: list[int]) -> None:
    # The register value is odd, so |v| is v with bits 1..j flipped when
    # the sign bit is set -- no carry chain needed.  Self-inverse.
    for w in mean[1:-1]:
        circ.cx(mean[-1], w)


def _borrowed_multiply(
    circ: Circuit,
    mult_wires,
    mult_fmt: WireFormat,
    add_wires,
    add_fmt: WireFormat,
    tgt_wires,
    tgt_fmt: WireFormat,
    carry: int,
    scratch,
    const_one_bits: frozenset[int] = frozenset(),
) -> None:
    """Run a register-by-register multiply, borrowing extension wires.

    Signed addends get the borrowed wires primed with their sign bit and
    cleaned again afterwards; unsigned addends just use them as zeros.
    """
    rows = plan_product_rows(mult_fmt, add_fmt, tgt_fmt)
    need = rows_extension_need(rows)
    if need > len(scratch):
        raise ValueError(f"scratch pool exhausted: need {need}, have {len(scratch)}")
    ext = list(scratch[:need])
    if add_fmt.signed and ext:
        sign_extend(circ, ext, list(add_wires))
    multiply(
        circ,
        list(mult_wires),
        mult_fmt,
        list(add_wires),
        add_fmt,
        list(tgt_wires),
        tgt_fmt,
        carry,
        ext_wires=ext,
        const_one_bits=const_one_bits,
    )
    if add_fmt.signed and ext:
        sign_extend(circ, ext, list(add_wires))


def _accumulate_classical_rows(
    circ: Circuit,
    mult_int: int,
    mult_fmt: WireFormat,
    add_wires,
    add_fmt: WireFormat,
    tgt_wires,
    tgt_fmt: WireFormat,
    carry: int,
    scratch,
) -> None:
    """Accumulate ``mult_int * addend`` into the target, rows picked classically.

    Same row plan as :func:`gaussprep.arith.multiply`, but the multiplier
    lives in classical bits, so set rows become plain adders and clear rows
    vanish instead of costing controlled ones.
    """
    rows = plan_product_rows(mult_fmt, add_fmt, tgt_fmt)
    bits = as_unsigned(mult_int, mult_fmt.width)
    ext: list[int] = []
    need = rows_extension_need([row for row in rows if (bits >> row.mult_bit) & 1])
    if need:
        if need > len(scratch):
            raise ValueError(f"scratch pool exhausted: need {need}, have {len(scratch)}")
        ext = list(scratch[:need])
        if add_fmt.signed:
            sign_extend(circ, ext, list(add_wires))
    for row in rows:
        if not (bits >> row.mult_bit) & 1:
            continue
        window = list(tgt_wires)[row.offset :]
        addend = (list(add_wires)[row.rshift :] + ext)[: row.width]
        ripple_add(circ, addend, window, carry, subtract=row.subtract)
    if ext and add_fmt.signed:
        sign_extend(circ, ext, list(add_wires))


def _less_than_const(circ: Circuit, operand: list[int], const: int, borrows, target: int) -> None:
    """Flip ``target`` iff the unsigned register value is below ``const``.

    A textbook borrow ripple: borrow_{i+1} = (operand_i < const_i) or
    (operand_i == const_i and borrow_i), specialised per constant bit so
    each stage is one Toffoli.  The chain is built, its top borrow copied
    out, then unwound gate by gate (every stage is an involution).
    """
    if const <= 0:
        return
    if const > (1 << len(operand)) - 1:
        circ.x(target)
        return
    chain = Circuit(circ.n_qubits)
    for i, q in enumerate(operand):
        ci = (const >> i) & 1
        b_out = borrows[i]
        if i == 0:
            if ci:
                chain.x(q)
                chain.cx(q, b_out)
                chain.x(q)
            continue
        b_in = borrows[i - 1]
        if ci:
            chain.x(b_in)
            chain.ccx(q, b_in, b_out)
            chain.x(b_in)
            chain.x(b_out)
        else:
            chain.x(q)
            chain.ccx(b_in, q, b_out)
            chain.x(q)
    circ.extend(chain.gates)
    circ.cx(borrows[len(operand) - 1], target)
    circ.extend(Gate(g.name, g.qubits, g.param) for g in reversed(chain.gates))


def _encode_label(circ: Circuit, plan: AngleApproxPlan, regs: AngleRegisters) -> None:
    """Set the two label wires from the state register.

    Wire 0 flags the middle branch |mu_j + 1/2| <= mu_mid, which in
    register units reads |2q + 1 - 2^{j+1}| < 2 * label_threshold.  Odd
    two's complement makes that a one-sided compare: fold the window
    symmetric around zero with sign-controlled NOTs on the low j-1 state
    wires, then compare the folded value against (threshold - 1 + 1)//2.
    Wire 1 flags the low branch: not middle and top state bit clear.
    """
    j = regs.level
    state = list(regs.mean[1:-1])
    l_mid, l_low = regs.label
    cc = label_threshold(plan.mu_mid, j)
    w_cmp = cc // 2
    folded = state[:-1]
    top = state[-1]
    max_folded = (1 << len(folded)) - 1
    if w_cmp > max_folded:
        circ.x(l_mid)
    elif w_cmp > 0:
        for q in folded:
            circ.cx(top, q)
            circ.x(q)
        _less_than_const(circ, folded, w_cmp, regs.scratch[: len(folded)], l_mid)
        for q in folded:
            circ.x(q)
            circ.cx(top, q)
    circ.x(l_mid)
    circ.ccx(l_mid, top, l_low)
    circ.x(l_mid)


def _square_into_register(circ: Circuit, plan: AngleApproxPlan, regs: AngleRegisters) -> None:
    """Square the centred mean magnitude into the square register.

    The value is made non-negative with sign-controlled flips, copied into
    scratch, and multiplied against itself; the constant-one LSB turns the
    always-on rows into plain adders.  For a zoomed middle branch the copy
    lands ``2 * mid_shift`` wires up, so the same row plan yields w^2 there
    and mu'^2 on the outer branches.  Copies and flips are then undone.
    """
    j = regs.level
    mean = list(regs.mean)
    mult_fmt, add_fmt = square_formats(j, plan.mid_shift)
    tmp = list(regs.scratch[: add_fmt.width])
    _toggle_magnitude(circ, mean)
    if plan.mid_shift == 0:
        for s, d in zip(mean[:-1], tmp):
            circ.cx(s, d)
    else:
        l_mid = regs.label[0]
        off = 2 * plan.mid_shift
        for i, s in enumerate(mean[:-1]):
            circ.ccx(l_mid, s, tmp[i + off])
        circ.x(l_mid)
        for i, s in enumerate(mean[:-1]):
            circ.ccx(l_mid, s, tmp[i])
        circ.x(l_mid)
    _borrowed_multiply(
        circ,
        mean[:-1],
        mult_fmt,
        tmp,
        add_fmt,
        regs.square[: plan.sq_fmt.width],
        plan.sq_fmt,
        regs.carry,
        regs.scratch[add_fmt.width :],
        const_one_bits=frozenset({0}),
    )
    if plan.mid_shift == 0:
        for s, d in zip(mean[:-1], tmp):
            circ.cx(s, d)
    else:
        l_mid = regs.label[0]
        off = 2 * plan.mid_shift
        for i, s in enumerate(mean[:-1]):
            circ.ccx(l_mid, s, tmp[i + off])
        circ.x(l_mid)
        for i, s in enumerate(mean[:-1]):
            circ.ccx(l_mid, s, tmp[i])
        circ.x(l_mid)
    _toggle_magnitude(circ, mean)


def build_angle_poly(plan: AngleApproxPlan, regs: AngleRegisters) -> Circuit:
    """Forward angle evaluation for a high-sigma level.

    Computes the b-bit angle fraction into the angle register via a
    Horner chain in t = mu_j'^2: preload each iterate with its chain
    constant, multiply the previous iterate (or the classical leading
    coefficient) by t on top of it, and finish with the mean register
    itself as multiplier so the odd half-degree lands exactly.
    """
    if plan.regime != "high_sigma":
        raise ValueError(f"plan regime is {plan.regime!r}, expected 'high_sigma'")
    j = regs.level
    b = plan.b
    if len(regs.angle) != b:
        raise ValueError("register size mismatch: angle register width != b")
    if len(regs.iterates) < plan.chain_degree or any(
        len(x) != b + 1 for x in regs.iterates[: plan.chain_degree]
    ):
        raise ValueError("register size mismatch: need chain_degree iterates of width b+1")
    if len(regs.square) < plan.sq_fmt.width:
        raise ValueError("register size mismatch: square register too narrow")
    circ = Circuit(regs.n_qubits)
    mean = list(regs.mean)
    chain = plan.chains["hi"]
    circ.x(mean[0])
    # mu -> mu - 1/2 in register units: subtract 2^{j+1} from 2q+1, which
    # for q < 2^j is the top-bit flip v |-> v - 2^j with sign set when the
    # result went negative (q below the midpoint).
    circ.x(mean[j])
    circ.cx(mean[j], mean[j + 1])
    sq = list(regs.square[: plan.sq_fmt.width])
    if plan.needs_square:
        _square_into_register(circ, plan, regs)
        _xor_const(circ, regs.iterates[0], chain.k_ints[0])
        _accumulate_classical_rows(
            circ,
            chain.lead_int,
            plan.lead_fmt,
            sq,
            plan.sq_fmt,
            regs.iterates[0],
            plan.iter_fmts[0],
            regs.carry,
            regs.scratch,
        )
    else:
        _xor_const(circ, regs.iterates[0], chain.k_ints[0])
    for n in range(1, plan.chain_degree):
        _xor_const(circ, regs.iterates[n], chain.k_ints[n])
        _borrowed_multiply(
            circ,
            sq,
            plan.sq_fmt,
            regs.iterates[n - 1],
            plan.iter_fmts[n - 1],
            regs.iterates[n],
            plan.iter_fmts[n],
            regs.carry,
            regs.scratch,
        )
    _xor_const(circ, regs.angle, chain.s1_int)
    _borrowed_multiply(
        circ,
        mean,
        mean_register_format(j),
        regs.iterates[plan.chain_degree - 1],
        plan.iter_fmts[plan.chain_degree - 1],
        regs.angle,
        angle_register_format(b),
        regs.carry,
        regs.scratch,
        const_one_bits=frozenset({0}),
    )
    return circ


def build_angle_piecewise(plan: AngleApproxPlan, regs: AngleRegisters) -> Circuit:
    """Forward angle evaluation for an intermediate-sigma level.

    Labels the branch, applies the label-controlled recentring shift, and
    runs one shared Horner chain whose constants are XORed in per branch.
    The leading coefficient is staged in the (still clean) angle register
    and erased after the first multiply; the final multiply uses a
    label-built copy of the mean register so the middle branch sees its
    zoomed signed value and the outer branches a constant -1.
    """
    if plan.regime != "intermediate":
        raise ValueError(f"plan regime is {plan.regime!r}, expected 'intermediate'")
    j = regs.level
    b = plan.b
    if len(regs.angle) != b:
        raise ValueError("register size mismatch: angle register width != b")
    if len(regs.label) != 2:
        raise ValueError("register size mismatch: need two label wires")
    if len(regs.multiplier) < j + 2:
        raise ValueError("register size mismatch: multiplier register too narrow")
    if len(regs.iterates) < plan.chain_degree or any(
        len(x) != b + 1 for x in regs.iterates[: plan.chain_degree]
    ):
        raise ValueError("register size mismatch: need chain_degree iterates of width b+1")
    circ = Circuit(regs.n_qubits)
    mean = list(regs.mean)
    l_mid, l_low = regs.label
    leads = {name: ch.lead_int for name, ch in plan.chains.items()}
    ks = {name: ch.k_ints for name, ch in plan.chains.items()}
    s1s = {name: ch.s1_int for name, ch in plan.chains.items()}
    circ.x(mean[0])
    _encode_label(circ, plan, regs)
    # Branch recentring on the two's-complement value 2q+1:
    # mid subtracts 2^{j+1} (conditional top-flip-and-borrow), low adds
    # nothing below the sign but clears it, up keeps the raw value.
    circ.cx(l_mid, mean[j])
    circ.ccx(l_mid, mean[j], mean[j + 1])
    circ.cx(l_low, mean[j + 1])
    sq = list(regs.square[: plan.sq_fmt.width])
    if plan.needs_square:
        _square_into_register(circ, plan, regs)
    # Signed multiplier for the final odd-power step: the middle branch
    # copies its zoomed value, the outer branches leave the pattern at
    # -1 (all ones) so the chain output is negated into the angle.
    mult = list(regs.multiplier[: j + 2])
    circ.x(mult[j + 1])
    circ.cx(l_mid, mult[j + 1])
    for i in range(j + 2 - plan.mid_shift):
        circ.ccx(l_mid, mean[i], mult[i + plan.mid_shift])
    if plan.needs_square:
        _xor_branch_const(circ, regs.angle, leads, regs.label)
        _xor_branch_const(circ, regs.iterates[0], {n: k[0] for n, k in ks.items()}, regs.label)
        _borrowed_multiply(
            circ,
            sq,
            plan.sq_fmt,
            regs.angle[: plan.lead_fmt.width],
            plan.lead_fmt,
            regs.iterates[0],
            plan.iter_fmts[0],
            regs.carry,
            regs.scratch,
        )
        _xor_branch_const(circ, regs.angle, leads, regs.label)
    else:
        _xor_branch_const(circ, regs.iterates[0], {n: k[0] for n, k in ks.items()}, regs.label)
    for n in range(1, plan.chain_degree):
        _xor_branch_const(circ, regs.iterates[n], {nm: k[n] for nm, k in ks.items()}, regs.label)
        _borrowed_multiply(
            circ,
            sq,
            plan.sq_fmt,
            regs.iterates[n - 1],
            plan.iter_fmts[n - 1],
            regs.iterates[n],
            plan.iter_fmts[n],
            regs.carry,
            regs.scratch,
        )
    _xor_branch_const(circ, regs.angle, s1s, regs.label)
    _borrowed_multiply(
        circ,
        mult,
        mean_register_format(j),
        regs.iterates[plan.chain_degree - 1],
        plan.iter_fmts[plan.chain_degree - 1],
        regs.angle,
        angle_register_format(b),
        regs.carry,
        regs.scratch,
    )
    return circ


def build_square_wave(j: int, n_qubits: int | None = None) -> Circuit:
    """Level circuit for the narrow-sigma regime: one CNOT.

    alpha~ alternates 0, 1/2 with the parity of q, i.e. with state wire
    j-1, so the new qubit is a copy of it up to the regime's intrinsic
    approximation.
    """
    if j < 1:
        raise ValueError("square-wave level needs a coarser wire below it")
    circ = Circuit(n_qubits if n_qubits is not None else j + 1)
    circ.cx(j - 1, j)
    return circ


def apply_rotation(angle: list[int], target: int, n_qubits: int | None = None) -> Circuit:
    """Rotate ``target`` by pi times the angle register's fraction.

    Wire r of the register carries weight 2^{r-b}, so a controlled
    Ry(pi * 2^{r-b}) per wire composes to Ry(pi * a~) -- cos(pi a~ / 2)
    on |0> and sin(pi a~ / 2) on |1>, which is the recursion's branch
    amplitude pair.
    """
    b = len(angle)
    width = n_qubits if n_qubits is not None else max([target, *angle]) + 1
    circ = Circuit(width)
    for r, w in enumerate(angle):
        circ.cry(math.pi * 2.0 ** (r - b), w, target)
    return circ


def _scratch_need(plan: AngleApproxPlan, j: int) -> int:
    """Widest scratch borrow any step of this level's builders makes."""
    needs = [0]
    b = plan.b
    if plan.regime == "intermediate":
        cc = label_threshold(plan.mu_mid, j)
        if 0 < cc // 2 <= (1 << (j - 1)) - 1:
            needs.append(j - 1)
    if plan.needs_square:
        mult_fmt, add_fmt = square_formats(j, plan.mid_shift)
        sq_rows = plan_product_rows(mult_fmt, add_fmt, plan.sq_fmt)
        needs.append(add_fmt.width + rows_extension_need(sq_rows))
        if plan.regime == "high_sigma":
            lead_rows = plan_product_rows(plan.lead_fmt, plan.sq_fmt, plan.iter_fmts[0])
            needs.append(rows_extension_need(lead_rows))
        else:
            lead_rows = plan_product_rows(plan.sq_fmt, plan.lead_fmt, plan.iter_fmts[0])
            needs.append(rows_extension_need(lead_rows))
    for n in range(1, plan.chain_degree):
        rows = plan_product_rows(plan.sq_fmt, plan.iter_fmts[n - 1], plan.iter_fmts[n])
        needs.append(rows_extension_need(rows))
    final_rows = plan_product_rows(
        mean_register_format(j),
        plan.iter_fmts[plan.chain_degree - 1],
        angle_register_format(b),
    )
    needs.append(rows_extension_need(final_rows))
    return max(needs)


def _level_registers(circ: Circuit, j: int) -> AngleRegisters:
    regs = circ.registers
    ext = regs["mean_ext"].wires
    return AngleRegisters(
        n_qubits=circ.n_qubits,
        mean=(ext[0], *range(j), ext[1]),
        angle=tuple(regs["angle"].wires),
        square=tuple(regs["square"].wires),
        iterates=tuple(tuple(regs[f"x{n + 1}"].wires) for n in range(_iterate_count(circ))),
        carry=regs["carry"].wires[0],
        scratch=tuple(regs["scratch"].wires) if "scratch" in regs else (),
        multiplier=tuple(regs["multiplier"].wires) if "multiplier" in regs else (),
        label=tuple(regs["label"].wires) if "label" in regs else (),
    )


def _iterate_count(circ: Circuit) -> int:
    n = 0
    while f"x{n + 1}" in circ.registers:
        n += 1
    return n


def build_kw1d(config: Kw1dConfig) -> tuple[Circuit, list[RecursionLevelTrace]]:
    """Assemble the full k-level preparation circuit.

    Level 0 is a classical rotation by the quantized alpha~(mu, sigma).
    Each later level appends its regime's circuit: forward angle
    evaluation, angle-controlled rotation of the new state wire, then the
    exact inverse of the forward pass so every work wire returns to zero.
    Returns the circuit and one trace per level; trace reports count the
    level's own gates and the work wires it actually touched.
    """
    spec = config.spec
    k, b = config.k, config.b
    if spec.mu != -0.5:
        warnings.warn(
            "mu != -1/2 is experimental: level >= 1 arithmetic assumes the "
            "half-integer-centred recursion",
            stacklevel=2,
        )
    plans = {
        j: fit_angle_plan(spec.sigma / 2**j, b, config.thresholds, level=j)
        for j in range(1, k)
    }
    arith = {j: p for j, p in plans.items() if p.regime in ("high_sigma", "intermediate")}
    circ = Circuit()
    circ.add_register("state", k, "state")
    if arith:
        circ.add_register("angle", b, "angle")
        circ.add_register("square", max(p.sq_fmt.width for p in arith.values()), "iterate")
        for n in range(max(p.chain_degree for p in arith.values())):
            circ.add_register(f"x{n + 1}", b + 1, "iterate")
        circ.add_register("mean_ext", 2, "extension")
        circ.add_register("carry", 1, "carry")
        piecewise = [j for j, p in arith.items() if p.regime == "intermediate"]
        if piecewise:
            circ.add_register("label", 2, "label")
            circ.add_register("multiplier", max(piecewise) + 2, "extension")
        pool = max(_scratch_need(p, j) for j, p in arith.items())
        if pool:
            circ.add_register("scratch", pool, "extension")
    traces: list[RecursionLevelTrace] = []
    for j in range(k):
        level = Circuit(circ.n_qubits)
        if j == 0:
            at = _quantize_angle(alpha_tilde(spec.mu, spec.sigma), b)
            if at:
                level.ry(math.pi * at, 0)
        else:
            plan = plans[j]
            if plan.regime == "constant":
                level.ry(math.pi / 2, j)
            elif plan.regime == "square_wave":
                level.extend(build_square_wave(j, circ.n_qubits).gates)
            else:
                regs = _level_registers(circ, j)
                builder = build_angle_poly if plan.regime == "high_sigma" else build_angle_piecewise
                forward = builder(plan, regs)
                level.extend(forward.gates)
                level.extend(apply_rotation(list(regs.angle), j, circ.n_qubits).gates)
                level.extend(inverse(forward).gates)
        circ.extend(level.gates)
        touched = {q for g in level.gates for q in g.qubits}
        traces.append(
            RecursionLevelTrace(
                level=j,
                sigma_j=spec.sigma / 2**j,
                plan=plans.get(j),
                report=ResourceReport(
                    cnot_count=level.cnot_count(),
                    ancilla_count=len(touched - set(range(k))),
                    total_qubits=circ.n_qubits,
                    depth=level.depth(),
                ),
            )
        )
    return circ, traces


def cnot_bound_high_sigma(j: int, b: int, d: int) -> int:
    """Closed-form CNOT ceiling for one high-sigma level of degree d."""
    return (
        11 * (4 * b * j - 2 * j * j + d * b * b)
        - 3 * b * b
        - 13 * j
        + (32 * d + 39) * b
        + 10 * d
        - 56
    )


def cnot_bound_intermediate(j: int, b: int, d: int, linear_slack: int = 20) -> int:
    """CNOT ceiling for one intermediate level; the O(j) term is taken
    as ``linear_slack * j``."""
    return (
        11 * (4 * b * j - 2 * j * j + d * b * b)
        + (34 * d + 90) * b
        - 7 * j
        + linear_slack * j
        + 10 * d
        - 76
    )


def dedicated_ancilla_count(plan: AngleApproxPlan, j: int) -> int:
    """Width of the data registers a level's arithmetic owns outright.

    High sigma: the square register (b wires), d iterates of b+1, and the
    two mean-augmentation wires -- (d+1)b + d + 2.  Intermediate: two
    label wires, the b-1 wide square register, d iterates, the j+2 wide
    signed multiplier and the augmentation pair -- 3 + b + d(b+1) + j+2.
    Carries, squarer copies and sign-extension wires are borrowed
    transients and excluded.
    """
    d = plan.chain_degree
    b = plan.b
    if plan.regime == "high_sigma":
        return (d + 1) * b + d + 2
    if plan.regime == "intermediate":
        return 3 + b + d * (b + 1) + (j + 2)
    return 0

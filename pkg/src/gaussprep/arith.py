"""Reversible fixed-point arithmetic: gate emitters and classical mirrors.

Every operation here exists twice: as a gate emitter appending to a
:class:`~gaussprep.circuit.Circuit`, and as a ``*_classical`` integer
function with identical truncation and modular semantics.  Both sides are
driven by the same row plans (:func:`plan_product_rows`), so agreement is
structural rather than coincidental; the tests still verify it exhaustively
at small widths.

Conventions.  A register binding is a list of global wire indices, least
significant first.  Values are two's complement over ``width`` wires scaled
by ``2**lsb``.  Additions are modular over the bound window; right shifts
are arithmetic (floor), matching Python's ``>>`` on signed ints.  The plain
adder is the textbook MAJ/UMA ripple at exactly 16 CNOT-equivalents per bit
(1 for a single-bit window); the quantum-controlled variant Toffoli-izes
only the two target writes per bit, which leaves the carry chain
self-inverting when the control is off, at 26 per bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .circuit import Circuit

__all__ = [
    "FixedPointFormat",
    "WireFormat",
    "MultRow",
    "plan_product_rows",
    "rows_extension_need",
    "encode_fixed",
    "decode_fixed",
    "as_signed",
    "as_unsigned",
    "ripple_add",
    "controlled_ripple_add",
    "add_const",
    "sign_extend",
    "ccm",
    "ccm_classical",
    "multiply",
    "multiply_classical",
    "square",
    "square_tmp_width",
    "square_classical",
    "controlled_increment",
]


@dataclass(frozen=True)
class WireFormat:
    """Width, least-significant-wire exponent, and signedness of a binding."""

    width: int
    lsb: int
    signed: bool = True

    def __post_init__(self) -> None:
        if self.width < 1:
            raise ValueError(f"width must be positive, got {self.width}")


@dataclass(frozen=True)
class FixedPointFormat:
    """Two's-complement fixed point with ``int_bits + frac_bits`` wires."""

    int_bits: int
    frac_bits: int
    signed: bool = True

    def __post_init__(self) -> None:
        if self.int_bits < 0 or self.frac_bits < 0:
            raise ValueError("int_bits and frac_bits must be non-negative")
        if self.int_bits + self.frac_bits < 1:
            raise ValueError("format must have at least one bit")

    @property
    def width(self) -> int:
        return self.int_bits + self.frac_bits

    @property
    def lsb(self) -> int:
        return -self.frac_bits

    def wire(self) -> WireFormat:
        return WireFormat(self.width, self.lsb, self.signed)


def _wf(fmt: FixedPointFormat | WireFormat) -> WireFormat:
    return fmt if isinstance(fmt, WireFormat) else fmt.wire()


# -- classical value helpers -------------------------------------------------


def as_signed(u: int, width: int) -> int:
    u &= (1 << width) - 1
    return u - (1 << width) if u >> (width - 1) else u


def as_unsigned(v: int, width: int) -> int:
    return v & ((1 << width) - 1)


def encode_fixed(value: float, fmt: FixedPointFormat | WireFormat) -> int:
    """Exact signed integer representation of ``value`` in ``fmt``.

    Raises if the value is not representable on the format's grid or lies
    outside its range.
    """
    wf = _wf(fmt)
    scaled = value * 2.0 ** (-wf.lsb)
    ival = round(scaled)
    if abs(scaled - ival) > 1e-9:
        raise ValueError(f"{value} is not on the 2^{wf.lsb} grid")
    lo = -(1 << (wf.width - 1)) if wf.signed else 0
    hi = (1 << (wf.width - 1)) if wf.signed else (1 << wf.width)
    if not lo <= ival < hi:
        raise ValueError(f"{value} out of range for {wf}")
    return ival


def decode_fixed(u: int, fmt: FixedPointFormat | WireFormat) -> float:
    wf = _wf(fmt)
    v = as_signed(u, wf.width) if wf.signed else as_unsigned(u, wf.width)
    return v * 2.0**wf.lsb


# -- ripple adders -----------------------------------------------------------


def _check_distinct(*groups: list[int]) -> None:
    flat = [q for g in groups for q in g]
    if len(set(flat)) != len(flat):
        raise ValueError("operand wire lists overlap")


def ripple_add(
    circ: Circuit,
    a: list[int],
    b: list[int],
    carry: int,
    *,
    subtract: bool = False,
) -> None:
    """b <- (b +/- a) mod 2^n with one zeroed carry ancilla, restored.

    Exactly 16 CNOT-equivalents per bit (single-bit windows collapse to one
    CNOT).  ``a`` and the carry are returned unchanged.
    """
    n = len(a)
    if len(b) != n or n < 1:
        raise ValueError(f"width mismatch: {len(a)} vs {len(b)}")
    _check_distinct(a, b, [carry])
    if n == 1:
        circ.cx(a[0], b[0])
        return
    if subtract:
        for q in b:
            circ.x(q)
    chain = [carry] + a[:-1]
    for i in range(n):
        c, y, z = chain[i], b[i], a[i]
        circ.cx(z, y)
        circ.cx(z, c)
        circ.ccx(c, y, z)
    for i in range(n - 1, -1, -1):
        c, y, z = chain[i], b[i], a[i]
        circ.ccx(c, y, z)
        circ.cx(z, c)
        circ.cx(c, y)
    if subtract:
        for q in b:
            circ.x(q)


def controlled_ripple_add(
    circ: Circuit,
    ctrl: int,
    a: list[int],
    b: list[int],
    carry: int,
    *,
    subtract: bool = False,
) -> None:
    """b <- (b +/- a) mod 2^n if ctrl, else identity; 26 per bit.

    Only the two writes into ``b`` per bit are Toffoli-ized; with the
    control off, the remaining carry-chain gates cancel pairwise, so no
    cleanup is needed.  The complementing X gates for subtraction are
    likewise self-inverting when the addition is suppressed.
    """
    n = len(a)
    if len(b) != n or n < 1:
        raise ValueError(f"width mismatch: {len(a)} vs {len(b)}")
    _check_distinct(a, b, [carry], [ctrl])
    if n == 1:
        circ.ccx(ctrl, a[0], b[0])
        return
    if subtract:
        for q in b:
            circ.x(q)
    chain = [carry] + a[:-1]
    for i in range(n):
        c, y, z = chain[i], b[i], a[i]
        circ.ccx(ctrl, z, y)
        circ.cx(z, c)
        circ.ccx(c, y, z)
    for i in range(n - 1, -1, -1):
        c, y, z = chain[i], b[i], a[i]
        circ.ccx(c, y, z)
        circ.cx(z, c)
        circ.ccx(ctrl, c, y)
    if subtract:
        for q in b:
            circ.x(q)


def add_const(
    circ: Circuit,
    wires: list[int],
    const: int,
    borrow: list[int],
    carry: int,
) -> None:
    """wires <- (wires + const) mod 2^n via encode / ripple-add / erase.

    ``borrow`` must supply at least ``len(wires)`` zeroed wires; they are
    X-encoded with the constant, added, and erased back to zero.
    """
    n = len(wires)
    const %= 1 << n
    if const == 0:
        return
    if len(borrow) < n:
        raise ValueError(f"need {n} borrowed zero wires, got {len(borrow)}")
    enc = borrow[:n]
    _check_distinct(wires, enc, [carry])
    set_bits = [enc[i] for i in range(n) if (const >> i) & 1]
    for q in set_bits:
        circ.x(q)
    ripple_add(circ, enc, wires, carry)
    for q in set_bits:
        circ.x(q)


def sign_extend(circ: Circuit, e: list[int], m: list[int]) -> None:
    """Copy the sign of ``m`` onto every wire of ``e``; self-inverse."""
    sign = m[-1]
    for q in e:
        circ.cx(sign, q)


# -- constant-coefficient multiply-accumulate --------------------------------


def _mult_units(multiplier: float, r: int) -> int:
    scaled = multiplier * 2.0**r
    m_int = round(scaled)
    if abs(scaled - m_int) > 1e-9:
        raise ValueError(
            f"multiplier {multiplier} is not exact at {r} fractional bits"
        )
    return m_int


def ccm(
    circ: Circuit,
    multiplier: float,
    m: list[int],
    acc: list[int],
    e: list[int],
    carry: int,
    *,
    half_integer: bool = True,
    subtract: bool = False,
) -> None:
    """acc <- acc +/- multiplier * (m + 1/2) over a w-wire accumulator.

    ``m`` is a signed k-bit coordinate, ``acc`` a (k int, r frac) signed
    accumulator, ``e`` the r-wire extension register (zeroed, restored).
    The multiplier must be exact at r fractional bits.  The half-integer
    offset is realised by re-pointing the extension's top wire at constant 1
    so the shifted addend rows read ``2m + 1``; the p = 0 row adds the
    sign-extended ``m`` itself, dropping the half-unit below the register
    grid (a fixed 2^-(r+1) floor shared with the classical mirror).  The
    multiplier is reduced modulo 2^(w+1) rather than 2^w so a negative
    constant stays exact: its bit-w row shifts the top accumulator wire by
    a known odd multiple of 2^(w-1), i.e. one free X.  With
    ``half_integer=False`` the accumulation is plain ``multiplier * m``.

    ``acc`` may be narrower than k + r (down to one wire): the rows then
    realise the same accumulation modulo 2^w, which is how the shearing
    transform clears its fractional register without touching the
    rounded coordinate.  ``subtract`` reverses every row, giving the
    exact inverse of the corresponding addition.
    """
    k, r, w = len(m), len(e), len(acc)
    if w > k + r:
        raise ValueError(f"accumulator width {w} exceeds k + r = {k + r}")
    if r < 1:
        raise ValueError("ccm requires at least one extension wire")
    _check_distinct(m, acc, e, [carry])
    if not half_integer:
        m_u = _mult_units(multiplier, r) % (1 << w)
        if m_u == 0:
            return
        sign_extend(circ, e, m)
        ext = m + e
        for p in range(w):
            if (m_u >> p) & 1:
                ripple_add(circ, ext[: w - p], acc[p:], carry, subtract=subtract)
        sign_extend(circ, e, m)
        return
    m_u = _mult_units(multiplier, r) % (1 << (w + 1))
    if m_u == 0:
        return
    sign_extend(circ, e, m)
    ext = m + e
    if m_u & 1:
        ripple_add(circ, ext[:w], acc, carry, subtract=subtract)
    half_wire = e[r - 1]
    circ.cx(m[-1], half_wire)
    circ.x(half_wire)
    twice = [half_wire] + m + e[: r - 1]
    for p in range(1, w):
        if (m_u >> p) & 1:
            ripple_add(circ, twice[: w - p + 1], acc[p - 1 :], carry, subtract=subtract)
    if (m_u >> w) & 1:
        # The row lands on the top wire alone: (2m+1) is odd, so modulo 2
        # its contribution is a constant flip either direction.
        circ.x(acc[w - 1])
    circ.x(half_wire)
    for q in e[: r - 1]:
        circ.cx(m[-1], q)


def ccm_classical(
    multiplier: float,
    m_signed: int,
    acc: int,
    k: int,
    r: int,
    *,
    half_integer: bool = True,
    acc_width: int | None = None,
    subtract: bool = False,
) -> int:
    """Integer mirror of :func:`ccm` on a w-bit accumulator (default k+r)."""
    w = k + r if acc_width is None else acc_width
    if half_integer:
        m_u = _mult_units(multiplier, r) % (1 << (w + 1))
        delta = (m_u >> 1) * (2 * m_signed + 1) + (m_u & 1) * m_signed
    else:
        m_u = _mult_units(multiplier, r) % (1 << w)
        delta = m_u * m_signed
    if subtract:
        delta = -delta
    return (acc + delta) % (1 << w)


# -- general product rows ----------------------------------------------------


@dataclass(frozen=True)
class MultRow:
    """One shift-and-add row of a product accumulation.

    ``mult_bit`` indexes the multiplier wire controlling the row (the top
    bit of a signed multiplier subtracts).  The addend is right-shifted
    arithmetically by ``rshift`` and added into the target window starting
    at ``offset``; ``ext`` counts extension wires needed beyond the
    addend's native width (zero wires for unsigned addends, sign copies for
    signed ones).
    """

    mult_bit: int
    subtract: bool
    rshift: int
    offset: int
    width: int
    ext: int


def plan_product_rows(
    mult: FixedPointFormat | WireFormat,
    addend: FixedPointFormat | WireFormat,
    target: FixedPointFormat | WireFormat,
) -> list[MultRow]:
    """Rows whose sum realises target += mult * addend on the wire grids.

    Rows whose entire contribution falls below the target's least
    significant wire vanish — the product is truncated rather than
    rounded, and for signed addends emitting such a row would broadcast
    the sign across the window (a full-ulp injection) instead of the
    sub-ulp value it stands for.  Every surviving window extends to the
    target's top wire so carries propagate modularly.
    """
    mf, af, tf = _wf(mult), _wf(addend), _wf(target)
    rows = []
    for i in range(mf.width):
        s = mf.lsb + i + af.lsb - tf.lsb
        subtract = mf.signed and i == mf.width - 1
        offset = max(s, 0)
        rshift = max(-s, 0)
        if offset >= tf.width:
            continue
        avail = af.width - rshift
        if avail <= 0:
            continue
        width = tf.width - offset
        ext = width - min(avail, width)
        rows.append(
            MultRow(
                mult_bit=i,
                subtract=subtract,
                rshift=rshift,
                offset=offset,
                width=width,
                ext=ext,
            )
        )
    return rows


def rows_extension_need(rows: list[MultRow]) -> int:
    return max((row.ext for row in rows), default=0)


def multiply(
    circ: Circuit,
    mult_wires: list[int],
    mult_fmt: FixedPointFormat | WireFormat,
    add_wires: list[int],
    add_fmt: FixedPointFormat | WireFormat,
    tgt_wires: list[int],
    tgt_fmt: FixedPointFormat | WireFormat,
    carry: int,
    ext_wires: list[int] | None = None,
    *,
    const_one_bits: frozenset[int] | set[int] = frozenset(),
) -> None:
    """tgt <- (tgt + mult * addend) truncated to the target format.

    The addend register must be disjoint from multiplier and target.
    ``ext_wires`` supply the extension copies required by the row plan:
    zeroed wires for an unsigned addend, sign copies (see
    :func:`sign_extend`) for a signed one.  Multiplier bits listed in
    ``const_one_bits`` are known to ride wires fixed at |1> and their rows
    are emitted as plain adds at 16 per bit instead of 26.
    """
    ext_wires = ext_wires or []
    mf, af, tf = _wf(mult_fmt), _wf(add_fmt), _wf(tgt_fmt)
    if len(mult_wires) != mf.width or len(add_wires) != af.width:
        raise ValueError("wire list does not match declared format width")
    if len(tgt_wires) != tf.width:
        raise ValueError("target wire list does not match format width")
    rows = plan_product_rows(mf, af, tf)
    need = rows_extension_need(rows)
    if len(ext_wires) < need:
        raise ValueError(
            f"product needs {need} extension wires, got {len(ext_wires)}"
        )
    for row in rows:
        addend = (list(add_wires[row.rshift :]) + list(ext_wires))[: row.width]
        window = tgt_wires[row.offset :]
        if row.mult_bit in const_one_bits:
            ripple_add(circ, addend, window, carry, subtract=row.subtract)
        else:
            controlled_ripple_add(
                circ,
                mult_wires[row.mult_bit],
                addend,
                window,
                carry,
                subtract=row.subtract,
            )


def multiply_classical(
    mult_val: int,
    add_val: int,
    mult_fmt: FixedPointFormat | WireFormat,
    add_fmt: FixedPointFormat | WireFormat,
    tgt_fmt: FixedPointFormat | WireFormat,
    acc: int = 0,
) -> int:
    """Integer mirror of :func:`multiply`; values are signed Python ints."""
    mf, af, tf = _wf(mult_fmt), _wf(add_fmt), _wf(tgt_fmt)
    mult_u = as_unsigned(mult_val, mf.width)
    mod = 1 << tf.width
    for row in plan_product_rows(mf, af, tf):
        if not (mult_u >> row.mult_bit) & 1:
            continue
        val = (add_val >> row.rshift) << row.offset
        acc = (acc - val if row.subtract else acc + val) % mod
    return acc


def square_tmp_width(
    a_fmt: FixedPointFormat | WireFormat,
    out_fmt: FixedPointFormat | WireFormat,
) -> int:
    """Copy-register width needed to square a value of format ``a_fmt``."""
    af = _wf(a_fmt)
    rows = plan_product_rows(af, af, out_fmt)
    return af.width + rows_extension_need(rows)


def square(
    circ: Circuit,
    a_wires: list[int],
    a_fmt: FixedPointFormat | WireFormat,
    out_wires: list[int],
    out_fmt: FixedPointFormat | WireFormat,
    tmp_wires: list[int],
    carry: int,
    *,
    const_one_bits: frozenset[int] | set[int] = frozenset(),
) -> None:
    """out <- a^2 truncated to the output format; a and tmp restored.

    ``tmp_wires`` (zeroed, width from :func:`square_tmp_width`) receive a
    sign-extended copy of ``a`` so the shifted addend rows can reference the
    operand without aliasing the row controls.
    """
    af = _wf(a_fmt)
    need = square_tmp_width(af, out_fmt)
    if len(tmp_wires) < need:
        raise ValueError(f"square needs {need} tmp wires, got {len(tmp_wires)}")
    tmp = tmp_wires[:need]
    _check_distinct(a_wires, out_wires, tmp, [carry])
    for src, dst in zip(a_wires, tmp):
        circ.cx(src, dst)
    if af.signed:
        for dst in tmp[af.width :]:
            circ.cx(a_wires[-1], dst)
    elif need > af.width:
        raise ValueError("unsigned square cannot need extension wires")
    wide = WireFormat(need, af.lsb, af.signed)
    multiply(
        circ,
        a_wires,
        af,
        tmp,
        wide,
        out_wires,
        out_fmt,
        carry,
        const_one_bits=const_one_bits,
    )
    if af.signed:
        for dst in tmp[af.width :]:
            circ.cx(a_wires[-1], dst)
    for src, dst in zip(a_wires, tmp):
        circ.cx(src, dst)


def square_classical(
    a_val: int,
    a_fmt: FixedPointFormat | WireFormat,
    out_fmt: FixedPointFormat | WireFormat,
    acc: int = 0,
) -> int:
    af = _wf(a_fmt)
    wide = WireFormat(af.width, af.lsb, af.signed)
    return multiply_classical(a_val, a_val, af, wide, out_fmt, acc)


def controlled_increment(circ: Circuit, ctrl: int, wires: list[int]) -> None:
    """wires <- (wires + 1) mod 2^n if ctrl; staircase of multi-controls.

    Needs no ancillae: the i-th wire flips when the control and all lower
    wires are set, applied top-down.
    """
    _check_distinct(wires, [ctrl])
    for i in range(len(wires) - 1, -1, -1):
        circ.mcx([ctrl] + list(wires[:i]), wires[i])

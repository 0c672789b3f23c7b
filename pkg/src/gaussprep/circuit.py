"""Gate-list circuit representation with named registers and CNOT accounting.

The gate set is deliberately small: {x, h, cx, ccx, mcx, ry, cry}.  Costs are
charged in CNOT-equivalents through a fixed decomposition table, so resource
comparisons against analytic bounds are reproducible and independent of any
transpiler.  Circuits carry a register map (name -> offset/width/role) that
builders use for wiring and reports use for ancilla accounting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = [
    "Gate",
    "Register",
    "Circuit",
    "ResourceReport",
    "REGISTER_ROLES",
    "cnot_cost",
    "compose",
    "inverse",
    "cnot_count",
    "export_circuit",
    "parse_circuit",
]

REGISTER_ROLES = (
    "state",
    "angle",
    "iterate",
    "extension",
    "fraction",
    "carry",
    "label",
)

_PARAM_GATES = {"ry": 1, "cry": 2}
_PLAIN_GATES = {"x": 1, "h": 1, "cx": 2, "ccx": 3}


@dataclass(frozen=True)
class Gate:
    """One gate: mnemonic, qubit tuple (controls before target), Ry angle."""

    name: str
    qubits: tuple[int, ...]
    param: float | None = None


@dataclass(frozen=True)
class Register:
    name: str
    offset: int
    width: int
    role: str

    @property
    def wires(self) -> list[int]:
        return list(range(self.offset, self.offset + self.width))


@dataclass(frozen=True)
class ResourceReport:
    cnot_count: int
    ancilla_count: int
    total_qubits: int
    depth: int


def cnot_cost(gate: Gate) -> int:
    """CNOT-equivalents of a gate under the fixed decomposition table.

    Single-qubit gates are free; cx = 1, ccx = 6, cry = 2, and an
    m-controlled X costs 6(2m - 3) for m >= 3.
    """
    if gate.name in ("x", "h", "ry"):
        return 0
    if gate.name == "cx":
        return 1
    if gate.name == "cry":
        return 2
    if gate.name == "ccx":
        return 6
    if gate.name == "mcx":
        m = len(gate.qubits) - 1
        return 6 * (2 * m - 3)
    raise ValueError(f"unknown gate {gate.name!r}")


class Circuit:
    """Ordered gate list over ``n_qubits`` wires plus a named register map."""

    def __init__(self, n_qubits: int = 0):
        self.n_qubits = n_qubits
        self.gates: list[Gate] = []
        self.registers: dict[str, Register] = {}

    # -- registers ---------------------------------------------------------

    def add_register(self, name: str, width: int, role: str) -> Register:
        """Append a register after the current wires and return it."""
        if name in self.registers:
            raise ValueError(f"register {name!r} already defined")
        if role not in REGISTER_ROLES:
            raise ValueError(f"unknown register role {role!r}")
        if width < 1:
            raise ValueError(f"register width must be positive, got {width}")
        reg = Register(name=name, offset=self.n_qubits, width=width, role=role)
        self.registers[name] = reg
        self.n_qubits += width
        return reg

    # -- gate emission -----------------------------------------------------

    def append(self, gate: Gate) -> None:
        qs = gate.qubits
        if len(set(qs)) != len(qs):
            raise ValueError(f"duplicate qubits in {gate}")
        if any(q < 0 or q >= self.n_qubits for q in qs):
            raise ValueError(f"qubit out of range in {gate}")
        if gate.name in _PLAIN_GATES:
            if len(qs) != _PLAIN_GATES[gate.name] or gate.param is not None:
                raise ValueError(f"malformed gate {gate}")
        elif gate.name in _PARAM_GATES:
            if len(qs) != _PARAM_GATES[gate.name] or gate.param is None:
                raise ValueError(f"malformed gate {gate}")
        elif gate.name == "mcx":
            if len(qs) < 4:
                raise ValueError(
                    "mcx requires at least 3 controls; use cx/ccx below that"
                )
        else:
            raise ValueError(f"unknown gate {gate.name!r}")
        self.gates.append(gate)

    def x(self, q: int) -> None:
        self.append(Gate("x", (q,)))

    def h(self, q: int) -> None:
        self.append(Gate("h", (q,)))

    def ry(self, theta: float, q: int) -> None:
        self.append(Gate("ry", (q,), float(theta)))

    def cx(self, c: int, t: int) -> None:
        self.append(Gate("cx", (c, t)))

    def cry(self, theta: float, c: int, t: int) -> None:
        self.append(Gate("cry", (c, t), float(theta)))

    def ccx(self, c1: int, c2: int, t: int) -> None:
        self.append(Gate("ccx", (c1, c2, t)))

    def mcx(self, controls: list[int], t: int) -> None:
        if len(controls) == 1:
            self.cx(controls[0], t)
        elif len(controls) == 2:
            self.ccx(controls[0], controls[1], t)
        else:
            self.append(Gate("mcx", (*controls, t)))

    def extend(self, gates: list[Gate]) -> None:
        for g in gates:
            self.append(g)

    # -- accounting --------------------------------------------------------

    def cnot_count(self) -> int:
        return sum(cnot_cost(g) for g in self.gates)

    def depth(self) -> int:
        """Longest CNOT-serial chain: per-wire accumulated entangling cost."""
        level = [0] * self.n_qubits
        for g in self.gates:
            c = cnot_cost(g)
            if c == 0:
                continue
            top = max(level[q] for q in g.qubits) + c
            for q in g.qubits:
                level[q] = top
        return max(level, default=0)

    def resource_report(self) -> ResourceReport:
        ancilla = sum(
            r.width for r in self.registers.values() if r.role != "state"
        )
        return ResourceReport(
            cnot_count=self.cnot_count(),
            ancilla_count=ancilla,
            total_qubits=self.n_qubits,
            depth=self.depth(),
        )

    def copy(self) -> "Circuit":
        out = Circuit(self.n_qubits)
        out.gates = list(self.gates)
        out.registers = dict(self.registers)
        return out

    def __len__(self) -> int:
        return len(self.gates)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Circuit):
            return NotImplemented
        return (
            self.n_qubits == other.n_qubits
            and self.gates == other.gates
            and self.registers == other.registers
        )


def inverse(circ: Circuit) -> Circuit:
    """Adjoint circuit: reversed gate order, rotation angles negated."""
    out = Circuit(circ.n_qubits)
    out.registers = dict(circ.registers)
    for g in reversed(circ.gates):
        if g.name in ("ry", "cry"):
            out.append(Gate(g.name, g.qubits, -g.param))
        else:
            out.append(g)
    return out


def compose(
    a: Circuit, b: Circuit, binding: dict[str, str] | None = None
) -> Circuit:
    """Append ``b`` to ``a``, identifying ``b``'s registers with ``a``'s.

    ``binding`` maps register names of ``b`` to register names of ``a``
    (width-compatible).  Unbound registers of ``b`` are appended as fresh
    wires after ``a``'s.  With no registers on either side the circuits must
    have equal qubit counts and wires are identified positionally.
    """
    binding = binding or {}
    out = a.copy()
    qmap: dict[int, int] = {}
    if not b.registers:
        if b.n_qubits > a.n_qubits:
            raise ValueError(
                f"cannot bind {b.n_qubits} qubits onto {a.n_qubits} without "
                "registers"
            )
        qmap = {q: q for q in range(b.n_qubits)}
    for name, reg in b.registers.items():
        if name in binding:
            target = out.registers.get(binding[name])
            if target is None:
                raise ValueError(f"binding target {binding[name]!r} not in a")
            if target.width != reg.width:
                raise ValueError(
                    f"register {name!r} width {reg.width} does not match "
                    f"{target.name!r} width {target.width}"
                )
        else:
            target = out.add_register(name, reg.width, reg.role)
        for i in range(reg.width):
            qmap[reg.offset + i] = target.offset + i
    for g in b.gates:
        out.append(Gate(g.name, tuple(qmap[q] for q in g.qubits), g.param))
    return out


def cnot_count(circ: Circuit) -> ResourceReport:
    return circ.resource_report()


def export_circuit(circ: Circuit) -> str:
    """Serialize to the line-based text format.

    Header: ``# qubits <n>`` then one ``# register <name> <offset> <width>
    <role>`` per register; body: one gate per line in list order, lowercase
    mnemonic, rotation angle (if any) first, then zero-based qubit indices.
    """
    lines = [f"# qubits {circ.n_qubits}"]
    for reg in sorted(circ.registers.values(), key=lambda r: r.offset):
        lines.append(
            f"# register {reg.name} {reg.offset} {reg.width} {reg.role}"
        )
    for g in circ.gates:
        qs = " ".join(str(q) for q in g.qubits)
        if g.param is not None:
            lines.append(f"{g.name} {g.param:.16g} {qs}")
        else:
            lines.append(f"{g.name} {qs}")
    return "\n".join(lines) + "\n"


def parse_circuit(text: str) -> Circuit:
    """Parse the text format produced by :func:`export_circuit`."""
    circ: Circuit | None = None
    pending_registers: list[tuple[str, int, int, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts[:1] == ["qubits"]:
                circ = Circuit(int(parts[1]))
            elif parts[:1] == ["register"]:
                name, offset, width, role = parts[1:5]
                pending_registers.append((name, int(offset), int(width), role))
            continue
        if circ is None:
            raise ValueError("gate line before '# qubits' header")
        parts = line.split()
        name = parts[0]
        if name in _PARAM_GATES:
            param = float(parts[1])
            qubits = tuple(int(p) for p in parts[2:])
            circ.append(Gate(name, qubits, param))
        else:
            circ.append(Gate(name, tuple(int(p) for p in parts[1:])))
    if circ is None:
        raise ValueError("missing '# qubits' header")
    for name, offset, width, role in pending_registers:
        reg = Register(name=name, offset=offset, width=width, role=role)
        if role not in REGISTER_ROLES:
            raise ValueError(f"unknown register role {role!r}")
        if offset + width > circ.n_qubits:
            raise ValueError(f"register {name!r} exceeds qubit count")
        circ.registers[name] = reg
    return circ

"""Straight-line program IR for linear, bilinear and general circuits over C.

A circuit is an immutable sequence of instructions.  Every instruction reads
circuit inputs (``x<i>``, ``y<i>``) or earlier results (``t<j>``) and writes
one new result ``t<k>``.  Bilinear circuits carry section tags so that the
four-stage partition (linear in x, linear in y, products, output combination)
can be checked syntactically.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "CircuitError",
    "CircuitParseError",
    "NodeRef",
    "Instruction",
    "Circuit",
    "CircuitBuilder",
    "ValidationIssue",
    "ValidationReport",
    "CoefficientAudit",
    "KINDS",
    "OPS",
    "SECTIONS",
    "evaluate",
    "extract_linear_matrix",
    "validate_structure",
    "audit_coefficients",
    "node_values",
    "numerical_rank",
    "dumps",
    "loads",
    "load",
    "dump",
]

KINDS = ("linear", "bilinear", "general")
OPS = ("add", "sub", "mul", "scale")
SECTIONS = ("lin-x", "lin-y", "prod", "out", "general")
_SECTION_ORDER = {"lin-x": 0, "lin-y": 1, "prod": 2, "out": 3}

# relative SVD threshold used for every numerical rank in the package
RANK_RTOL = 1e-9


class CircuitError(ValueError):
    pass


class CircuitParseError(CircuitError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class NodeRef(NamedTuple):
    """Reference to an input (``"x"``/``"y"``) or instruction result (``"t"``)."""

    kind: str
    index: int

    def __str__(self) -> str:
        return f"{self.kind}{self.index}"

    @classmethod
    def parse(cls, token: str) -> "NodeRef":
        m = re.fullmatch(r"([xyt])(\d+)", token)
        if m is None:
            raise ValueError(f"bad node reference {token!r}")
        return cls(m.group(1), int(m.group(2)))


def X(i: int) -> NodeRef:
    return NodeRef("x", i)


def Y(i: int) -> NodeRef:
    return NodeRef("y", i)


def T(i: int) -> NodeRef:
    return NodeRef("t", i)


@dataclass(frozen=True)
class Instruction:
    op: str
    lhs: NodeRef
    rhs: NodeRef | None = None
    scalar: complex | None = None
    section: str = "general"

    def __post_init__(self):
        if self.op not in OPS:
            raise CircuitError(f"unknown op {self.op!r}")
        if self.section not in SECTIONS:
            raise CircuitError(f"unknown section {self.section!r}")
        if self.op == "scale":
            if self.rhs is not None or self.scalar is None:
                raise CircuitError("scale takes one operand and a scalar")
            s = complex(self.scalar)
            if not (math.isfinite(s.real) and math.isfinite(s.imag)):
                raise CircuitError(f"non-finite scalar {s!r}")
            object.__setattr__(self, "scalar", s)
        elif self.rhs is None or self.scalar is not None:
            raise CircuitError(f"{self.op} takes two operands and no scalar")

    @property
    def operands(self) -> tuple[NodeRef, ...]:
        return (self.lhs,) if self.rhs is None else (self.lhs, self.rhs)


@dataclass(frozen=True)
class Circuit:
    kind: str
    n_inputs_x: int
    n_inputs_y: int
    instructions: tuple[Instruction, ...]
    outputs: tuple[NodeRef, ...]

    def __post_init__(self):
        object.__setattr__(self, "instructions", tuple(self.instructions))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if self.kind not in KINDS:
            raise CircuitError(f"unknown circuit kind {self.kind!r}")
        if self.n_inputs_x < 0 or self.n_inputs_y < 0:
            raise CircuitError("negative input count")
        if self.kind != "bilinear" and self.n_inputs_y:
            raise CircuitError("only bilinear circuits take a y input")
        for s, ins in enumerate(self.instructions):
            for ref in ins.operands:
                self._check_ref(ref, s, f"instruction t{s}")
        for ref in self.outputs:
            self._check_ref(ref, len(self.instructions), "outputs")

    def _check_ref(self, ref: NodeRef, limit: int, where: str):
        bound = {"x": self.n_inputs_x, "y": self.n_inputs_y, "t": limit}.get(ref.kind)
        if bound is None or not 0 <= ref.index < bound:
            raise CircuitError(f"{where}: reference {ref} out of range")

    @property
    def size(self) -> int:
        return len(self.instructions)

    @property
    def n_outputs(self) -> int:
        return len(self.outputs)

    def __len__(self) -> int:
        return self.size

    def section_sizes(self) -> dict[str, int]:
        counts = dict.fromkeys(SECTIONS, 0)
        for ins in self.instructions:
            counts[ins.section] += 1
        return {k: v for k, v in counts.items() if v}


class CircuitBuilder:
    """Incremental circuit construction.

    ``emit`` appends instructions verbatim.  ``add``/``sub``/``mul``/``scale``
    additionally fold symbolic zeros (``None``) and unit scalars, which the
    generators rely on when zero-padding inputs.
    """

    def __init__(self, kind: str = "general", n_inputs_x: int = 0, n_inputs_y: int = 0):
        self.kind = kind
        self.n_inputs_x = n_inputs_x
        self.n_inputs_y = n_inputs_y
        self.instructions: list[Instruction] = []
        self.section = "general"

    def x(self, i: int) -> NodeRef:
        return X(i)

    def y(self, i: int) -> NodeRef:
        return Y(i)

    def emit(self, op, lhs, rhs=None, scalar=None, section=None) -> NodeRef:
        self.instructions.append(
            Instruction(op, lhs, rhs, scalar, self.section if section is None else section)
        )
        return T(len(self.instructions) - 1)

    def add(self, a, b):
        if a is None:
            return b
        if b is None:
            return a
        return self.emit("add", a, b)

    def sub(self, a, b):
        if b is None:
            return a
        if a is None:
            return self.scale(-1, b)
        return self.emit("sub", a, b)

    def mul(self, a, b):
        if a is None or b is None:
            return None
        return self.emit("mul", a, b)

    def scale(self, c, a):
        if a is None or c == 0:
            return None
        if c == 1:
            return a
        return self.emit("scale", a, scalar=complex(c))

    def double(self, a):
        return None if a is None else self.emit("add", a, a)

    def zero(self) -> NodeRef:
        if self.n_inputs_x:
            return self.emit("sub", X(0), X(0))
        if self.n_inputs_y:
            return self.emit("sub", Y(0), Y(0))
        raise CircuitError("cannot materialize zero in a circuit without inputs")

    def build(self, outputs: Sequence[NodeRef | None], prune: bool = False) -> Circuit:
        outs = [self.zero() if o is None else o for o in outputs]
        instructions = self.instructions
        if prune:
            instructions, outs = _prune(instructions, outs)
        return Circuit(self.kind, self.n_inputs_x, self.n_inputs_y, instructions, outs)


def _prune(instructions, outputs):
    live = [False] * len(instructions)
    for o in outputs:
        if o.kind == "t":
            live[o.index] = True
    for s in range(len(instructions) - 1, -1, -1):
        if live[s]:
            for ref in instructions[s].operands:
                if ref.kind == "t":
                    live[ref.index] = True
    remap = {}
    kept = []
    for s, ins in enumerate(instructions):
        if not live[s]:
            continue
        remap[s] = len(kept)
        fix = lambda r: T(remap[r.index]) if r.kind == "t" else r  # noqa: E731
        kept.append(
            Instruction(ins.op, fix(ins.lhs), None if ins.rhs is None else fix(ins.rhs),
                        ins.scalar, ins.section)
        )
    outs = [T(remap[o.index]) if o.kind == "t" else o for o in outputs]
    return kept, outs


# --------------------------------------------------------------------------
# evaluation


def _as_input(v, n: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=complex)
    if arr.ndim == 0 or arr.shape[0] != n:
        got = "scalar" if arr.ndim == 0 else arr.shape[0]
        raise CircuitError(f"{name} has length {got}, circuit expects {n}")
    return arr


def _run(circuit: Circuit, x, y, keep: Iterable[NodeRef]) -> dict[NodeRef, np.ndarray]:
    xs = _as_input(x, circuit.n_inputs_x, "x")
    if y is None:
        if circuit.n_inputs_y:
            raise CircuitError("bilinear circuit needs a y input")
        ys = np.zeros((0,) + xs.shape[1:], dtype=complex)
    else:
        if circuit.kind != "bilinear":
            raise CircuitError(f"{circuit.kind} circuit does not take a y input")
        ys = _as_input(y, circuit.n_inputs_y, "y")
        if xs.shape[1:] != ys.shape[1:]:
            raise CircuitError("x and y batch shapes differ")

    keep = list(keep)
    n = circuit.size
    # last use of each result, so dead values can be released early
    last = [-1] * n
    for s, ins in enumerate(circuit.instructions):
        for ref in ins.operands:
            if ref.kind == "t":
                last[ref.index] = s
    for ref in keep:
        if ref.kind == "t":
            last[ref.index] = n

    vals: list = [None] * n
    inputs = {"x": xs, "y": ys}

    def get(ref):
        return vals[ref.index] if ref.kind == "t" else inputs[ref.kind][ref.index]

    for s, ins in enumerate(circuit.instructions):
        a = get(ins.lhs)
        op = ins.op
        if op == "scale":
            v = ins.scalar * a
        else:
            b = get(ins.rhs)
            if op == "add":
                v = a + b
            elif op == "sub":
                v = a - b
            else:
                v = a * b
        vals[s] = v
        for ref in ins.operands:
            if ref.kind == "t" and last[ref.index] == s:
                vals[ref.index] = None
        if last[s] == -1:
            vals[s] = None
    return {ref: np.asarray(get(ref)) for ref in keep}


def node_values(circuit: Circuit, x, y=None, nodes: Iterable[NodeRef] = ()) -> dict:
    """Values of selected nodes (inputs or results) on the given input."""
    return _run(circuit, x, y, nodes)


def evaluate(circuit: Circuit, x, y=None) -> np.ndarray:
    """Run the circuit and return its outputs in declared order.

    ``x`` (and ``y``) may carry trailing batch axes; inputs index the first axis.
    """
    got = _run(circuit, x, y, circuit.outputs)
    return np.stack([got[o] for o in circuit.outputs]) if circuit.outputs else np.zeros(0, complex)


def extract_linear_matrix(circuit: Circuit) -> np.ndarray:
    """Matrix of a linear circuit, column j being the circuit applied to e_j."""
    if circuit.kind != "linear":
        raise CircuitError(f"expected a linear circuit, got {circuit.kind}")
    n = circuit.n_inputs_x
    if not circuit.outputs:
        return np.zeros((0, n), dtype=complex)
    return evaluate(circuit, np.eye(n, dtype=complex)).reshape(circuit.n_outputs, n)


# --------------------------------------------------------------------------
# structural validation


@dataclass(frozen=True)
class ValidationIssue:
    index: int | None
    condition: str
    message: str

    def __str__(self):
        where = "outputs" if self.index is None else f"t{self.index}"
        return f"{where}: [{self.condition}] {self.message}"


@dataclass
class ValidationReport:
    kind: str
    issues: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def conditions(self) -> set[str]:
        return {i.condition for i in self.issues}

    def raise_if_invalid(self):
        if self.issues:
            raise CircuitError("invalid circuit:\n" + "\n".join(map(str, self.issues)))


def validate_structure(circuit: Circuit) -> ValidationReport:
    """Check the linear / bilinear structure conditions.

    Bilinear condition labels: ``order`` (sections appear as lin-x, lin-y,
    prod, out), ``1`` lin-x reads only x, ``2`` lin-y reads only y, ``3``
    products multiply a lin-x node by a lin-y node, ``4`` out reads only
    products, ``outputs`` outputs come from prod/out.
    """
    rep = ValidationReport(circuit.kind)
    issue = lambda i, c, m: rep.issues.append(ValidationIssue(i, c, m))  # noqa: E731

    if circuit.kind == "general":
        return rep
    if circuit.kind == "linear":
        for s, ins in enumerate(circuit.instructions):
            if ins.op == "mul":
                issue(s, "linear", "multiplication of two nodes in a linear circuit")
        return rep

    # bilinear: class of every node
    cls: list[str] = []
    prev = -1
    for s, ins in enumerate(circuit.instructions):
        sec = ins.section
        if sec not in _SECTION_ORDER:
            issue(s, "order", f"section {sec!r} not allowed in a bilinear circuit")
            cls.append("bad")
            continue
        rank = _SECTION_ORDER[sec]
        if rank < prev:
            issue(s, "order", f"section {sec} after a later section")
        prev = max(prev, rank)
        cls.append(sec)

        def node_class(ref):
            return {"x": "lin-x", "y": "lin-y"}.get(ref.kind) or cls[ref.index]

        kinds = [node_class(r) for r in ins.operands]
        if sec == "prod":
            if ins.op != "mul":
                issue(s, "3", f"{ins.op} in the product section")
            elif sorted(kinds) != ["lin-x", "lin-y"]:
                issue(s, "3", f"product of {kinds[0]} and {kinds[1]} nodes")
        else:
            if ins.op == "mul":
                issue(s, {"lin-x": "1", "lin-y": "2", "out": "4"}[sec],
                      "multiplication outside the product section")
            allowed = {"lin-x": {"lin-x"}, "lin-y": {"lin-y"}, "out": {"prod", "out"}}[sec]
            cond = {"lin-x": "1", "lin-y": "2", "out": "4"}[sec]
            for k in kinds:
                if k not in allowed:
                    issue(s, cond, f"{sec} instruction reads a {k} node")
    for o in circuit.outputs:
        k = {"x": "lin-x", "y": "lin-y"}.get(o.kind) or cls[o.index]
        if k not in ("prod", "out"):
            issue(None, "outputs", f"output {o} is a {k} node")
    return rep


# --------------------------------------------------------------------------
# coefficient audit


@dataclass(frozen=True)
class CoefficientAudit:
    max_abs_scalar: float
    bound: float
    help_gates: tuple[int, ...]
    help_span_dim: int | None

    @property
    def help_count(self) -> int:
        return len(self.help_gates)

    @property
    def bounded(self) -> bool:
        return not self.help_gates


def numerical_rank(M, rtol: float = RANK_RTOL, scale: float | None = None) -> int:
    """Rank of M with singular values counted above ``rtol * max(sigma_1, scale)``."""
    M = np.asarray(M)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    ref = max(float(s[0]), scale or 0.0)
    if ref == 0.0:
        return 0
    return int(np.sum(s > rtol * ref))


def audit_coefficients(circuit: Circuit, bound: float = 2.0) -> CoefficientAudit:
    """List the scalar multiplications exceeding ``bound`` in modulus (help gates).

    For linear circuits the dimension of the span of the linear forms entering
    the help gates is reported as well.
    """
    if not bound > 0:
        raise ValueError("bound must be positive")
    mx = 0.0
    helps = []
    for s, ins in enumerate(circuit.instructions):
        if ins.op == "scale":
            a = abs(ins.scalar)
            mx = max(mx, a)
            if a > bound:
                helps.append(s)
    span = None
    if circuit.kind == "linear":
        if helps:
            operands = [circuit.instructions[s].lhs for s in helps]
            n = circuit.n_inputs_x
            vals = node_values(circuit, np.eye(n, dtype=complex), nodes=operands)
            forms = np.array([vals[r].reshape(n) for r in operands])
            span = numerical_rank(forms)
        else:
            span = 0
    return CoefficientAudit(mx, bound, tuple(helps), span)


# --------------------------------------------------------------------------
# text format


def _fmt_scalar(c: complex) -> str:
    return f"({c.real!r},{c.imag!r})"


def dumps(circuit: Circuit) -> str:
    lines = ["bcc v1", f"kind {circuit.kind}"]
    inputs = f"inputs x {circuit.n_inputs_x}"
    if circuit.kind == "bilinear":
        inputs += f" y {circuit.n_inputs_y}"
    lines.append(inputs)
    section = None
    for s, ins in enumerate(circuit.instructions):
        if circuit.kind == "bilinear" and ins.section != section:
            section = ins.section
            lines.append(f".section {section}")
        if ins.op == "scale":
            lines.append(f"t{s} = scale {_fmt_scalar(ins.scalar)} {ins.lhs}")
        else:
            lines.append(f"t{s} = {ins.op} {ins.lhs} {ins.rhs}")
    lines.append(" ".join(["outputs"] + [str(o) for o in circuit.outputs]))
    return "\n".join(lines) + "\n"


_SCALAR_RE = re.compile(r"\(\s*([^,()\s]+)\s*,\s*([^,()\s]+)\s*\)")


def _parse_float(tok: str, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise CircuitParseError(lineno, f"bad number {tok!r}") from None
    if not math.isfinite(v):
        raise CircuitParseError(lineno, f"non-finite number {tok!r}")
    return v


def loads(text: str) -> Circuit:
    """Parse the ``bcc v1`` text format."""
    lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append((lineno, line))
    if not lines:
        raise CircuitParseError(0, "empty circuit file")

    it = iter(lines)
    lineno, line = next(it)
    if line != "bcc v1":
        raise CircuitParseError(lineno, "expected header 'bcc v1'")
    try:
        lineno, line = next(it)
    except StopIteration:
        raise CircuitParseError(lineno, "missing kind line") from None
    parts = line.split()
    if len(parts) != 2 or parts[0] != "kind" or parts[1] not in KINDS:
        raise CircuitParseError(lineno, "expected 'kind linear|bilinear|general'")
    kind = parts[1]
    try:
        lineno, line = next(it)
    except StopIteration:
        raise CircuitParseError(lineno, "missing inputs line") from None
    parts = line.split()
    nx, ny = 0, 0
    try:
        if parts[:2] != ["inputs", "x"] or len(parts) not in (3, 5):
            raise ValueError
        nx = int(parts[2])
        if len(parts) == 5:
            if parts[3] != "y":
                raise ValueError
            ny = int(parts[4])
    except (ValueError, IndexError):
        raise CircuitParseError(lineno, "expected 'inputs x <m> [y <n>]'") from None

    section = "general"
    instructions: list[Instruction] = []
    outputs = None
    for lineno, line in it:
        if outputs is not None:
            raise CircuitParseError(lineno, "content after the outputs line")
        if line.startswith(".section"):
            parts = line.split()
            if kind != "bilinear":
                raise CircuitParseError(lineno, "section markers are only valid in bilinear circuits")
            if len(parts) != 2 or parts[1] not in _SECTION_ORDER:
                raise CircuitParseError(lineno, "expected '.section lin-x|lin-y|prod|out'")
            section = parts[1]
            continue
        if line.startswith("outputs"):
            try:
                outputs = [NodeRef.parse(t) for t in line.split()[1:]]
            except ValueError as e:
                raise CircuitParseError(lineno, str(e)) from None
            continue
        m = re.fullmatch(r"t(\d+)\s*=\s*(\w+)\s+(.*)", line)
        if m is None:
            raise CircuitParseError(lineno, f"cannot parse {line!r}")
        if int(m.group(1)) != len(instructions):
            raise CircuitParseError(lineno, f"expected t{len(instructions)}, got t{m.group(1)}")
        op, rest = m.group(2), m.group(3)
        try:
            if op == "scale":
                sm = re.fullmatch(_SCALAR_RE.pattern + r"\s+(\S+)", rest)
                if sm is None:
                    raise CircuitParseError(lineno, "expected 'scale (<re>,<im>) <ref>'")
                c = complex(_parse_float(sm.group(1), lineno), _parse_float(sm.group(2), lineno))
                ins = Instruction("scale", NodeRef.parse(sm.group(3)), scalar=c, section=section)
            elif op in ("add", "sub", "mul"):
                toks = rest.split()
                if len(toks) != 2:
                    raise CircuitParseError(lineno, f"{op} takes two operands")
                ins = Instruction(op, NodeRef.parse(toks[0]), NodeRef.parse(toks[1]), section=section)
            else:
                raise CircuitParseError(lineno, f"unknown op {op!r}")
        except (ValueError,) as e:
            if isinstance(e, CircuitParseError):
                raise
            raise CircuitParseError(lineno, str(e)) from None
        instructions.append(ins)
    if outputs is None:
        raise CircuitParseError(lines[-1][0], "missing outputs line")
    try:
        return Circuit(kind, nx, ny, instructions, outputs)
    except CircuitError as e:
        raise CircuitParseError(lines[-1][0], str(e)) from None


def dump(circuit: Circuit, path) -> None:
    with open(path, "w") as f:
        f.write(dumps(circuit))


def load(path) -> Circuit:
    with open(path) as f:
        return loads(f.read())

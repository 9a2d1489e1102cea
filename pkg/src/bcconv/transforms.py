"""Circuit rewrites: scalar decomposition, b.c. normalization, fixing the
first argument of a bilinear circuit, and zeroing help gates."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .circuit import (
    Circuit,
    CircuitBuilder,
    CircuitError,
    Instruction,
    NodeRef,
    audit_coefficients,
    extract_linear_matrix,
    node_values,
    validate_structure,
)
from .spectral import perturbation_rank

__all__ = [
    "ScalarTemplate",
    "PerturbationRecord",
    "decompose_scalar",
    "bc_normalize",
    "fix_first_argument",
    "zero_help_gates",
]


@dataclass(frozen=True)
class ScalarTemplate:
    """Multiplication by ``value`` as ``doublings`` self-additions then one scale."""

    value: complex
    doublings: int
    scale: complex
    flagged: bool = False

    def factors(self) -> list[complex]:
        return [2] * self.doublings + [self.scale]

    def product(self) -> complex:
        return self.scale * 2.0**self.doublings


def decompose_scalar(scalar, bound: float = 2.0) -> ScalarTemplate:
    """Split multiplication by ``scalar`` into doublings and one bounded scale.

    Uses k = max(0, ceil(log2|scalar| - 1)) doublings, leaving a final scale
    of modulus at most 2.  Division by 2**k is exact unless a component
    becomes subnormal.
    A zero scalar yields a flagged single scale by zero.
    """
    c = complex(scalar)
    mod = abs(c)
    if mod == 0:
        return ScalarTemplate(c, 0, 0j, flagged=True)
    if mod <= bound:
        return ScalarTemplate(c, 0, c)
    k = max(0, math.ceil(math.log2(mod) - 1))
    while mod / 2.0**k > bound:
        k += 1
    while k > 0 and mod / 2.0 ** (k - 1) <= bound:
        k -= 1
    return ScalarTemplate(c, k, c / 2.0**k)


def _emit_template(b: CircuitBuilder, tpl: ScalarTemplate, node: NodeRef, section: str) -> NodeRef:
    for _ in range(tpl.doublings):
        node = b.emit("add", node, node, section=section)
    return b.emit("scale", node, scalar=tpl.scale, section=section)


def _remap(ref: NodeRef, table: dict) -> NodeRef:
    return table[ref.index] if ref.kind == "t" else ref


def bc_normalize(circuit: Circuit, bound: float = 2.0) -> Circuit:
    """Replace every scale with |scalar| > bound by doublings and a bounded scale."""
    if not audit_coefficients(circuit, bound).help_gates:
        return circuit
    b = CircuitBuilder(circuit.kind, circuit.n_inputs_x, circuit.n_inputs_y)
    table: dict[int, NodeRef] = {}
    for s, ins in enumerate(circuit.instructions):
        lhs = _remap(ins.lhs, table)
        if ins.op == "scale" and abs(ins.scalar) > bound:
            table[s] = _emit_template(b, decompose_scalar(ins.scalar, bound), lhs, ins.section)
        else:
            rhs = None if ins.rhs is None else _remap(ins.rhs, table)
            table[s] = b.emit(ins.op, lhs, rhs, ins.scalar, ins.section)
    return b.build([_remap(o, table) for o in circuit.outputs])


def _forms_feeding_products(circuit: Circuit) -> list[NodeRef]:
    cls = {}
    refs = []
    for s, ins in enumerate(circuit.instructions):
        cls[s] = ins.section
        if ins.op == "mul":
            for r in ins.operands:
                side = "lin-x" if r.kind == "x" else ("lin-y" if r.kind == "y" else cls[r.index])
                if side == "lin-x":
                    refs.append(r)
    return refs


def fix_first_argument(circuit: Circuit, a) -> Circuit:
    """Linear b.c. circuit for y -> phi(a, y) from a bilinear b.c. circuit for phi.

    With gamma = max |f_j(a)| over the x-side forms entering products, each
    product f_j * g becomes the scale (2 f_j(a) / gamma) * g, and every output
    is multiplied by gamma / 2 (doublings plus one bounded scale).
    """
    validate_structure(circuit).raise_if_invalid()
    if circuit.kind != "bilinear":
        raise CircuitError("fix_first_argument needs a bilinear circuit")
    a = np.asarray(a, dtype=complex)
    if a.shape != (circuit.n_inputs_x,):
        raise CircuitError(f"a has shape {a.shape}, expected ({circuit.n_inputs_x},)")
    forms = _forms_feeding_products(circuit)
    vals = node_values(circuit, a, np.zeros(circuit.n_inputs_y, complex), forms)
    gamma = max((abs(complex(vals[r])) for r in forms), default=0.0)

    n = circuit.n_inputs_y
    b = CircuitBuilder("linear", n)
    if gamma == 0:
        warnings.warn("all products vanish at a; returning the zero map", RuntimeWarning, stacklevel=2)
        z = b.emit("sub", NodeRef("x", 0), NodeRef("x", 0)) if n else None
        return b.build([z] * circuit.n_outputs) if n else Circuit("linear", 0, 0, (), ())

    def ymap(ref):
        if ref.kind == "y":
            return NodeRef("x", ref.index)
        return table[ref.index]

    table: dict[int, NodeRef] = {}
    for s, ins in enumerate(circuit.instructions):
        if ins.section == "lin-x":
            continue
        if ins.op == "mul":
            fx, gy = ins.lhs, ins.rhs
            if not (fx.kind == "x" or (fx.kind == "t" and circuit.instructions[fx.index].section == "lin-x")):
                fx, gy = gy, fx
            c = 2 * complex(vals[fx]) / gamma
            if abs(c) > 2:  # |f_j(a)| = gamma can round just above the bound
                c *= 2 / abs(c)
            table[s] = b.emit("scale", ymap(gy), scalar=c)
        else:
            rhs = None if ins.rhs is None else ymap(ins.rhs)
            table[s] = b.emit(ins.op, ymap(ins.lhs), rhs, ins.scalar)
    tpl = decompose_scalar(gamma / 2)
    outs = [_emit_template(b, tpl, ymap(o), "general") for o in circuit.outputs]
    return b.build(outs)


@dataclass(frozen=True)
class PerturbationRecord:
    """E = B - A for the circuit before (A) and after (B) zeroing help gates."""

    help_gates: tuple[int, ...]
    help_span_dim: int
    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    rank: int
    effective_size: int

    @property
    def h(self) -> int:
        return len(self.help_gates)


def zero_help_gates(circuit: Circuit, bound: float = 2.0) -> tuple[Circuit, PerturbationRecord]:
    """Turn every help gate of a linear circuit into a scale by zero.

    The zeroed gates stay in the instruction list as ``scale (0,0)``; the
    record's ``effective_size`` counts them as removed.
    """
    if circuit.kind != "linear":
        raise CircuitError("zero_help_gates needs a linear circuit")
    audit = audit_coefficients(circuit, bound)
    helps = set(audit.help_gates)
    instructions = [
        Instruction("scale", ins.lhs, scalar=0j, section=ins.section) if s in helps else ins
        for s, ins in enumerate(circuit.instructions)
    ]
    out = Circuit(circuit.kind, circuit.n_inputs_x, circuit.n_inputs_y, instructions, circuit.outputs)
    A = extract_linear_matrix(circuit)
    B = extract_linear_matrix(out)
    E = B - A
    rank = perturbation_rank(E, A) if E.size else 0
    rec = PerturbationRecord(
        tuple(sorted(helps)), audit.help_span_dim or 0, A, B, E, rank, circuit.size - len(helps)
    )
    return out, rec

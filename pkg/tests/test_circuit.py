import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcconv.circuit import (
    Circuit,
    CircuitBuilder,
    CircuitError,
    CircuitParseError,
    Instruction,
    NodeRef,
    T,
    X,
    Y,
    audit_coefficients,
    dumps,
    evaluate,
    extract_linear_matrix,
    loads,
    node_values,
    numerical_rank,
    validate_structure,
)
from bcconv.generators import gen_convolution_fft, gen_dft


def small_bilinear():
    # (x0 + x1) * (y0 - y1), then scaled by 2
    b = CircuitBuilder("bilinear", 2, 2)
    b.section = "lin-x"
    u = b.emit("add", X(0), X(1))
    b.section = "lin-y"
    v = b.emit("sub", Y(0), Y(1))
    b.section = "prod"
    p = b.emit("mul", u, v)
    b.section = "out"
    o = b.emit("scale", p, scalar=2)
    return b.build([o, p])


def test_noderef_parse_and_str():
    assert str(X(3)) == "x3"
    assert NodeRef.parse("t12") == T(12)
    for bad in ("z1", "x", "x-1", "t1.5"):
        with pytest.raises(ValueError):
            NodeRef.parse(bad)


def test_instruction_arity():
    with pytest.raises(CircuitError):
        Instruction("add", X(0))
    with pytest.raises(CircuitError):
        Instruction("scale", X(0), X(1), scalar=1)
    with pytest.raises(CircuitError):
        Instruction("scale", X(0), scalar=float("nan"))
    with pytest.raises(CircuitError):
        Instruction("div", X(0), X(1))


def test_circuit_reference_checks():
    with pytest.raises(CircuitError):
        Circuit("linear", 1, 0, [Instruction("add", X(0), X(1))], [T(0)])
    with pytest.raises(CircuitError):
        Circuit("linear", 1, 0, [Instruction("add", X(0), T(0))], [T(0)])
    with pytest.raises(CircuitError):
        Circuit("linear", 1, 1, [], [X(0)])


def test_evaluate_small_bilinear():
    c = small_bilinear()
    out = evaluate(c, [1, 2], [5, 3])
    assert np.allclose(out, [12, 6])
    assert c.section_sizes() == {"lin-x": 1, "lin-y": 1, "prod": 1, "out": 1}


def test_evaluate_batch_axis():
    c = small_bilinear()
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 7))
    y = rng.standard_normal((2, 7))
    out = evaluate(c, x, y)
    for j in range(7):
        assert np.allclose(out[:, j], evaluate(c, x[:, j], y[:, j]))


def test_evaluate_input_errors():
    c = small_bilinear()
    with pytest.raises(CircuitError):
        evaluate(c, [1, 2, 3], [1, 2])
    with pytest.raises(CircuitError):
        evaluate(c, [1, 2])
    with pytest.raises(CircuitError):
        evaluate(gen_dft(2), [1, 2], [1, 2])


def test_node_values_keeps_intermediate():
    c = gen_dft(4)
    vals = node_values(c, np.arange(4.0), nodes=[T(0), X(2)])
    assert vals[X(2)] == 2
    assert T(0) in vals


def test_builder_folds_zeros_and_units():
    b = CircuitBuilder("linear", 2)
    assert b.add(None, X(0)) == X(0)
    assert b.sub(X(0), None) == X(0)
    assert b.mul(None, X(1)) is None
    assert b.scale(1, X(1)) == X(1)
    assert b.scale(0, X(1)) is None
    neg = b.sub(None, X(1))
    assert b.instructions[-1].op == "scale" and b.instructions[-1].scalar == -1
    c = b.build([neg, None])
    assert np.allclose(evaluate(c, [3, 4]), [-4, 0])


def test_prune_removes_dead_code():
    b = CircuitBuilder("linear", 2)
    b.add(X(0), X(1))
    keep = b.sub(X(0), X(1))
    assert b.build([keep]).size == 2
    assert b.build([keep], prune=True).size == 1


def test_extract_linear_matrix_dft():
    n = 8
    w = np.exp(2j * np.pi / n)
    F = w ** np.outer(np.arange(n), np.arange(n))
    assert np.abs(extract_linear_matrix(gen_dft(n)) - F).max() < 1e-12
    with pytest.raises(CircuitError):
        extract_linear_matrix(small_bilinear())


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_linear_circuit_is_linear(seed):
    rng = np.random.default_rng(seed)
    c = gen_dft(8)
    x, y = rng.standard_normal((2, 8)) + 1j * rng.standard_normal((2, 8))
    a, b = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    assert np.allclose(evaluate(c, a * x + b * y), a * evaluate(c, x) + b * evaluate(c, y), atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_bilinear_circuit_is_bilinear(seed):
    rng = np.random.default_rng(seed)
    c = gen_convolution_fft(4)
    x1, x2, y = rng.standard_normal((3, 4))
    a = rng.standard_normal()
    lhs = evaluate(c, x1 + a * x2, y)
    assert np.allclose(lhs, evaluate(c, x1, y) + a * evaluate(c, x2, y), atol=1e-10)


# -- validation


def test_valid_generated_bilinear():
    rep = validate_structure(gen_convolution_fft(8))
    assert rep.ok
    rep.raise_if_invalid()


def _bilinear(instrs, outs, nx=2, ny=2):
    return Circuit("bilinear", nx, ny, instrs, outs)


def test_validation_section_order():
    c = _bilinear(
        [Instruction("sub", Y(0), Y(1), section="lin-y"), Instruction("add", X(0), X(1), section="lin-x"),
         Instruction("mul", T(1), T(0), section="prod")],
        [T(2)],
    )
    assert validate_structure(c).conditions() == {"order"}


@pytest.mark.parametrize(
    "instrs, cond",
    [
        ([Instruction("add", X(0), Y(1), section="lin-x"), Instruction("mul", T(0), Y(0), section="prod")], "1"),
        ([Instruction("add", Y(0), X(1), section="lin-y"), Instruction("mul", X(0), T(0), section="prod")], "2"),
        ([Instruction("mul", X(0), X(1), section="prod")], "3"),
        ([Instruction("add", X(0), Y(1), section="prod")], "3"),
    ],
)
def test_validation_conditions(instrs, cond):
    c = _bilinear(instrs, [T(len(instrs) - 1)])
    assert cond in validate_structure(c).conditions()


def test_validation_out_reads_linear_node():
    c = _bilinear(
        [Instruction("mul", X(0), Y(0), section="prod"), Instruction("add", T(0), X(1), section="out")], [T(1)]
    )
    rep = validate_structure(c)
    assert rep.conditions() == {"4"}
    with pytest.raises(CircuitError, match=r"\[4\]"):
        rep.raise_if_invalid()


def test_validation_outputs_from_linear_part():
    c = _bilinear([Instruction("mul", X(0), Y(0), section="prod")], [T(0), X(1)])
    assert validate_structure(c).conditions() == {"outputs"}


def test_validation_linear_rejects_mul():
    c = Circuit("linear", 2, 0, [Instruction("mul", X(0), X(1))], [T(0)])
    assert validate_structure(c).conditions() == {"linear"}


# -- audit


def test_audit_counts_help_gates_and_span():
    b = CircuitBuilder("linear", 3)
    s1 = b.emit("scale", X(0), scalar=5)
    u = b.emit("add", X(0), X(0))
    s2 = b.emit("scale", u, scalar=-3j)  # same form direction as x0
    s3 = b.emit("scale", X(1), scalar=2)  # exactly at the bound
    c = b.build([s1, s2, s3])
    a = audit_coefficients(c)
    assert a.help_gates == (0, 2)
    assert a.help_count == 2 and not a.bounded
    assert a.help_span_dim == 1
    assert a.max_abs_scalar == 5
    assert audit_coefficients(c, bound=10).bounded


def test_audit_generated_are_bounded():
    for c in (gen_dft(16), gen_dft(16, inverse=True), gen_convolution_fft(16)):
        a = audit_coefficients(c)
        assert a.help_count == 0 and a.max_abs_scalar <= 2


def test_numerical_rank():
    M = np.outer([1, 2, 3], [1, 1j])
    assert numerical_rank(M) == 1
    assert numerical_rank(np.zeros((2, 2))) == 0
    assert numerical_rank(np.eye(3)) == 3


# -- text format


def test_dumps_loads_roundtrip_generated():
    for c in (small_bilinear(), gen_dft(8), gen_convolution_fft(4)):
        assert loads(dumps(c)) == c


def test_loads_comments_and_whitespace():
    text = """# a comment
bcc v1
kind linear   # trailing
inputs x 2

t0 = add x0 x1
t1 = scale (0.5,-1.0) t0
outputs t1 x0
"""
    c = loads(text)
    assert np.allclose(evaluate(c, [1, 3]), [(0.5 - 1j) * 4, 1])


@pytest.mark.parametrize(
    "text, line",
    [
        ("bcc v2\n", 1),
        ("bcc v1\nkind cubic\n", 2),
        ("bcc v1\nkind linear\ninputs y 2\n", 3),
        ("bcc v1\nkind linear\ninputs x 2\nt0 = add x0\noutputs t0\n", 4),
        ("bcc v1\nkind linear\ninputs x 2\nt1 = add x0 x1\noutputs t1\n", 4),
        ("bcc v1\nkind linear\ninputs x 2\nt0 = scale (1,zz) x0\noutputs t0\n", 4),
        ("bcc v1\nkind linear\ninputs x 2\n.section prod\n", 4),
        ("bcc v1\nkind linear\ninputs x 2\nt0 = add x0 x1\n", 4),
        ("bcc v1\nkind linear\ninputs x 2\nt0 = add x0 x5\noutputs t0\n", 5),
    ],
)
def test_loads_errors_carry_line_numbers(text, line):
    with pytest.raises(CircuitParseError) as ei:
        loads(text)
    assert ei.value.lineno == line


refs = st.sampled_from(["x", "t"])


@st.composite
def random_linear_circuits(draw):
    nx = draw(st.integers(1, 4))
    b = CircuitBuilder("linear", nx)
    size = draw(st.integers(0, 12))
    for s in range(size):
        def pick():
            if s == 0 or draw(refs) == "x":
                return X(draw(st.integers(0, nx - 1)))
            return T(draw(st.integers(0, s - 1)))

        op = draw(st.sampled_from(["add", "sub", "scale"]))
        if op == "scale":
            re = draw(st.floats(-1e6, 1e6, allow_nan=False))
            im = draw(st.floats(-1e6, 1e6, allow_nan=False))
            b.emit("scale", pick(), scalar=complex(re, im))
        else:
            b.emit(op, pick(), pick())
    pool = [X(i) for i in range(nx)] + [T(i) for i in range(size)]
    outs = draw(st.lists(st.sampled_from(pool), min_size=1, max_size=5))
    return b.build(outs)


@settings(max_examples=60, deadline=None)
@given(random_linear_circuits())
def test_roundtrip_property(c):
    assert loads(dumps(c)) == c

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcconv.circuit import (
    CircuitBuilder,
    CircuitError,
    X,
    audit_coefficients,
    evaluate,
    extract_linear_matrix,
    validate_structure,
)
from bcconv.generators import gen_convolution_fft, gen_convolution_naive, gen_dft, gen_polymul
from bcconv.spectral import check_perturbation, circulant
from bcconv.transforms import bc_normalize, decompose_scalar, fix_first_argument, zero_help_gates


def test_decompose_examples():
    t = decompose_scalar(8)
    assert (t.doublings, t.scale) == (2, 2)
    t = decompose_scalar(-16j)
    assert (t.doublings, t.scale) == (3, -2j)
    assert decompose_scalar(1024).doublings == 9
    assert decompose_scalar(1.5).doublings == 0
    z = decompose_scalar(0)
    assert z.flagged and z.scale == 0


# components far from the subnormal range, so dividing by 2**k stays exact
parts = st.floats(-1e12, 1e12, allow_nan=False).filter(lambda v: v == 0 or abs(v) > 1e-290)


@settings(max_examples=200, deadline=None)
@given(parts, parts)
def test_decompose_exact_and_minimal(re, im):
    c = complex(re, im)
    t = decompose_scalar(c)
    if c == 0:
        return
    assert t.product() == c
    assert abs(t.scale) <= 2
    if t.doublings:
        assert abs(t.scale) * 2 > 2  # one fewer doubling would exceed the bound


def test_bc_normalize_preserves_values():
    b = CircuitBuilder("linear", 2)
    u = b.emit("scale", X(0), scalar=1000 - 3j)
    v = b.emit("add", u, X(1))
    w = b.emit("scale", v, scalar=0.5)
    c = b.build([v, w])
    nc = bc_normalize(c)
    assert audit_coefficients(nc).bounded
    assert np.allclose(extract_linear_matrix(nc), extract_linear_matrix(c))
    assert nc.size == c.size + decompose_scalar(1000 - 3j).doublings


def test_bc_normalize_noop():
    c = gen_dft(8)
    assert bc_normalize(c) is c


def test_bc_normalize_bilinear_keeps_structure():
    b = CircuitBuilder("bilinear", 1, 1)
    b.section = "lin-x"
    u = b.emit("scale", X(0), scalar=64)
    b.section = "prod"
    p = b.emit("mul", u, b.y(0))
    c = bc_normalize(b.build([p]))
    assert validate_structure(c).ok
    assert np.allclose(evaluate(c, [2], [3]), [384])


@pytest.mark.parametrize("n", [4, 8, 16])
def test_fix_first_argument_is_circulant(n):
    rng = np.random.default_rng(n)
    conv = gen_convolution_fft(n)
    for _ in range(5):
        a = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        lin = fix_first_argument(conv, a)
        assert lin.kind == "linear"
        assert audit_coefficients(lin).help_count == 0
        assert np.abs(extract_linear_matrix(lin) - circulant(a)).max() < 1e-9
        tpl = decompose_scalar(max(np.abs(np.fft.fft(a))) / 2)
        lx = conv.section_sizes()["lin-x"]
        assert lin.size == conv.size - lx + conv.n_outputs * (tpl.doublings + 1)


def test_fix_first_argument_naive():
    a = np.array([1.0, -2.0, 0.5])
    lin = fix_first_argument(gen_convolution_naive(3), a)
    assert np.allclose(extract_linear_matrix(lin), circulant(a))
    assert audit_coefficients(lin).bounded


def test_fix_first_argument_polymul():
    a = np.array([1.0, 2.0, 3.0])
    lin = fix_first_argument(gen_polymul(3), a)
    # rows of the product map y -> a * y
    M = np.zeros((5, 3))
    for j in range(3):
        M[j : j + 3, j] = a
    assert np.allclose(extract_linear_matrix(lin), M)


def test_fix_first_argument_zero_vector_warns():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        lin = fix_first_argument(gen_convolution_fft(4), np.zeros(4))
    assert any(issubclass(x.category, RuntimeWarning) for x in w)
    assert np.allclose(extract_linear_matrix(lin), 0)


def test_fix_first_argument_errors():
    with pytest.raises(CircuitError):
        fix_first_argument(gen_dft(4), np.ones(4))
    with pytest.raises(CircuitError):
        fix_first_argument(gen_convolution_fft(4), np.ones(3))


def test_zero_help_gates_dft_example():
    c = gen_dft(4)
    b = CircuitBuilder("linear", 4)
    b.instructions = list(c.instructions)
    o = [b.emit("scale", c.outputs[0], scalar=100)] + list(c.outputs[1:])
    big = b.build(o)
    out, rec = zero_help_gates(big)
    assert rec.h == 1 and rec.rank == 1 and rec.help_span_dim == 1
    assert rec.effective_size == big.size - 1
    assert audit_coefficients(out).bounded
    assert np.allclose(rec.E, rec.B - rec.A)
    assert check_perturbation(rec.A, rec.E).ok


def test_zero_help_gates_rank_bounded_by_count():
    rng = np.random.default_rng(2)
    b = CircuitBuilder("linear", 5)
    nodes = [X(i) for i in range(5)]
    for _ in range(12):
        i, j = rng.integers(0, len(nodes), 2)
        nodes.append(b.add(nodes[i], nodes[j]))
    for _ in range(3):
        nodes.append(b.scale(float(rng.uniform(3, 9)), nodes[int(rng.integers(5, len(nodes)))]))
    c = b.build(nodes[-5:])
    _, rec = zero_help_gates(c)
    assert rec.rank <= rec.h == 3


def test_zero_help_gates_requires_linear():
    with pytest.raises(CircuitError):
        zero_help_gates(gen_convolution_fft(2))


def test_fix_first_argument_unit_vector_is_identity():
    lin = fix_first_argument(gen_convolution_fft(8), np.eye(8)[0])
    assert np.abs(extract_linear_matrix(lin) - np.eye(8)).max() < 1e-12


def test_fix_first_argument_bilinear_scaling():
    rng = np.random.default_rng(4)
    a = rng.standard_normal(8)
    conv = gen_convolution_fft(8)
    M1 = extract_linear_matrix(fix_first_argument(conv, a))
    M2 = extract_linear_matrix(fix_first_argument(conv, 2 * a))
    assert np.allclose(M2, 2 * M1)


def test_fix_first_argument_size_ledger():
    # growth is at most p * (ceil(log2(gamma / 2))_+ + 1) over the dropped lin-x part
    rng = np.random.default_rng(6)
    conv = gen_convolution_fft(16)
    for scale in (0.01, 1, 30, 1e6):
        a = scale * rng.standard_normal(16)
        gamma = np.abs(np.fft.fft(a)).max()
        lin = fix_first_argument(conv, a)
        extra = int(np.ceil(max(np.log2(gamma / 2), 0)))
        assert lin.size - conv.size <= conv.n_outputs * (extra + 1)
        assert audit_coefficients(lin).bounded


def test_fix_first_argument_never_rounds_into_help_gate():
    # the form attaining gamma maps to a scalar of modulus exactly 2 up to rounding
    rng = np.random.default_rng(11)
    conv = gen_convolution_fft(16)
    for _ in range(300):
        a = (rng.standard_normal(16) + 1j * rng.standard_normal(16)) * rng.uniform(0.1, 100)
        assert audit_coefficients(fix_first_argument(conv, a)).help_count == 0

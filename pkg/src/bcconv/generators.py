"""Explicit bounded-coefficient circuits for the FFT family of problems.

Every generator works on lists of builder nodes where ``None`` stands for a
coefficient known to be zero; zero padding therefore costs no instructions.
All scalars have modulus at most 1, so the circuits need no help gates.
"""

from __future__ import annotations

import cmath
import math

from .circuit import Circuit, CircuitBuilder

__all__ = [
    "is_power_of_two",
    "next_power_of_two",
    "gen_dft",
    "gen_convolution_fft",
    "gen_convolution_naive",
    "gen_polymul",
    "gen_folded_polymul",
    "gen_power_series_inv",
    "gen_division",
    "GENERATORS",
]


def is_power_of_two(n: int) -> bool:
    return isinstance(n, int) and n >= 1 and n & (n - 1) == 0


def next_power_of_two(n: int) -> int:
    return 1 if n <= 1 else 1 << (n - 1).bit_length()


def _require_pow2(n):
    if not is_power_of_two(n):
        raise ValueError(f"n must be a power of two, got {n}")


def _twiddle(k: int, n: int, sign: int) -> complex:
    # exact values on the axes keep the emitted scalars clean
    k %= n
    if 4 * k % n == 0:
        q = 4 * k // n
        return (1, 1j, -1, -1j)[q] if sign > 0 else (1, -1j, -1, 1j)[q]
    return cmath.exp(sign * 2j * math.pi * k / n)


def _emit_fft(b: CircuitBuilder, nodes: list, sign: int = 1) -> list:
    """Radix-2 decimation in time: out_k = sum_j nodes[j] * w^(jk), w = exp(sign 2 pi i/n)."""
    n = len(nodes)
    if n == 1:
        return list(nodes)
    even = _emit_fft(b, nodes[0::2], sign)
    odd = _emit_fft(b, nodes[1::2], sign)
    half = n // 2
    out = [None] * n
    for k in range(half):
        t = b.scale(_twiddle(k, n, sign), odd[k])
        out[k] = b.add(even[k], t)
        out[k + half] = b.sub(even[k], t)
    return out


def _emit_cyclic_conv(b: CircuitBuilder, f: list, g: list, sections: bool) -> list:
    """Cyclic convolution of two node lists of equal power-of-two length."""
    n = len(f)
    if sections:
        b.section = "lin-x"
    F = _emit_fft(b, f)
    if sections:
        b.section = "lin-y"
    G = _emit_fft(b, g)
    if sections:
        b.section = "prod"
    P = [b.mul(u, v) for u, v in zip(F, G)]
    if sections:
        b.section = "out"
    C = _emit_fft(b, P, sign=-1)
    C = [b.scale(1.0 / n, c) for c in C]
    if sections:
        b.section = "general"
    return C


def _emit_polymul(b: CircuitBuilder, f: list, g: list, sections: bool = False) -> list:
    """Product coefficients (len(f) + len(g) - 1 of them) by padded cyclic convolution."""
    if not f or not g:
        return []
    L = len(f) + len(g) - 1
    N = next_power_of_two(L)
    fp = list(f) + [None] * (N - len(f))
    gp = list(g) + [None] * (N - len(g))
    return _emit_cyclic_conv(b, fp, gp, sections)[:L]


def gen_dft(n: int, inverse: bool = False) -> Circuit:
    """Linear circuit for DFT_n = (w^{jk}), w = exp(2 pi i/n), or its inverse.

    The inverse carries the 1/n factor as one bounded scale per output.
    """
    _require_pow2(n)
    b = CircuitBuilder("linear", n)
    out = _emit_fft(b, [b.x(i) for i in range(n)], sign=-1 if inverse else 1)
    if inverse and n > 1:
        out = [b.scale(1.0 / n, o) for o in out]
    return b.build(out)


def gen_convolution_fft(n: int) -> Circuit:
    """Bilinear circuit c_k = sum_{i+j = k mod n} x_i y_j through three FFTs."""
    _require_pow2(n)
    b = CircuitBuilder("bilinear", n, n)
    out = _emit_cyclic_conv(b, [b.x(i) for i in range(n)], [b.y(i) for i in range(n)], True)
    return b.build(out)


def gen_convolution_naive(n: int) -> Circuit:
    """Cyclic convolution from its defining sum: n^2 products, n^2 - n additions."""
    if n < 1:
        raise ValueError("n must be positive")
    b = CircuitBuilder("bilinear", n, n)
    b.section = "prod"
    prods = [[b.mul(b.x(i), b.y(j)) for j in range(n)] for i in range(n)]
    b.section = "out"
    out = []
    for k in range(n):
        acc = prods[0][k]
        for i in range(1, n):
            acc = b.add(acc, prods[i][(k - i) % n])
        out.append(acc)
    return b.build(out)


def gen_polymul(n: int) -> Circuit:
    """Bilinear circuit for the 2n - 1 coefficients of f * g, deg f, deg g < n."""
    if n < 1:
        raise ValueError("n must be positive")
    b = CircuitBuilder("bilinear", n, n)
    out = _emit_polymul(b, [b.x(i) for i in range(n)], [b.y(i) for i in range(n)], True)
    return b.build(out, prune=True)


def gen_folded_polymul(n: int) -> Circuit:
    """Cyclic convolution as polynomial product folded mod X^n - 1:
    c_k = p_k + p_{k+n}."""
    if n < 1:
        raise ValueError("n must be positive")
    b = CircuitBuilder("bilinear", n, n)
    p = _emit_polymul(b, [b.x(i) for i in range(n)], [b.y(i) for i in range(n)], True)
    b.section = "out"
    out = [b.add(p[k], p[k + n] if k + n < len(p) else None) for k in range(n)]
    return b.build(out, prune=True)


def _emit_ps_inverse(b: CircuitBuilder, a: list, count: int) -> list:
    """Coefficients h_1..h_count of (1 - sum_i a_i X^i)^{-1} = 1 + sum h_k X^k.

    ``a[i]`` holds the node of a_i (index 0 unused).  Newton doubling on
    H = g - 1 with the constant-free update
        e = A + A H - H,    H <- H + e + H e,
    which keeps every coefficient a polynomial in the a_i without constants.
    """
    A = [None] + list(a[1 : count + 1]) + [None] * max(0, count + 1 - len(a))
    A = A[: count + 1]
    if count == 0:
        return []
    H = [None, A[1]]  # correct mod X^2
    k = 2
    while k < count + 1:
        k2 = min(2 * k, count + 1)
        P = _emit_polymul(b, A[:k2], H[:k])
        e = [None] * k + [b.add(A[j], P[j] if j < len(P) else None) for j in range(k, k2)]
        Q = _emit_polymul(b, H[:k], e)
        H = H[:k] + [b.add(e[j], Q[j] if j < len(Q) else None) for j in range(k, k2)]
        k = k2
    return H[1 : count + 1]


def gen_power_series_inv(n: int) -> Circuit:
    """Inputs a_1..a_n of f = 1 - sum a_i X^i, outputs b_1..b_n of 1/f."""
    if n < 1:
        raise ValueError("n must be positive")
    b = CircuitBuilder("general", n)
    out = _emit_ps_inverse(b, [None] + [b.x(i) for i in range(n)], n)
    return b.build(out, prune=True)


def gen_division(n: int, m: int) -> Circuit:
    """Division with remainder by a monic divisor.

    Inputs: f_0..f_n (dividend), then g_0..g_{m-1} (divisor, leading 1
    implied).  Outputs: q_0..q_{n-m}, then r_0..r_{m-1}.
    """
    if not n >= m >= 1:
        raise ValueError("need n >= m >= 1")
    d = n - m
    b = CircuitBuilder("general", n + 1 + m)
    f = [b.x(i) for i in range(n + 1)]
    g = [b.x(n + 1 + i) for i in range(m)]
    # X^m g(1/X) = 1 - sum_i a_i X^i with a_i = -g_{m-i}
    a = [None] + [b.scale(-1, g[m - i]) if i <= m else None for i in range(1, d + 1)]
    H = _emit_ps_inverse(b, a, d)
    rev_f = [f[n - j] for j in range(d + 1)]
    prod = _emit_polymul(b, rev_f, [None] + H) if H else []
    rev_q = [b.add(rev_f[j], prod[j] if j < len(prod) else None) for j in range(d + 1)]
    q = rev_q[::-1]
    qg = _emit_polymul(b, q, g)
    r = [b.sub(f[j], qg[j] if j < len(qg) else None) for j in range(m)]
    return b.build(q + r, prune=True)


GENERATORS = {
    "dft": gen_dft,
    "conv-fft": gen_convolution_fft,
    "conv-naive": gen_convolution_naive,
    "polymul": gen_polymul,
    "polymul-fold": gen_folded_polymul,
    "psinv": gen_power_series_inv,
    "division": gen_division,
}

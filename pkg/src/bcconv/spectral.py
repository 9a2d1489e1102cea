"""Dense complex linear algebra used by the lower-bound certificates.

Singular values come from a one-sided (Hestenes) Jacobi SVD with complex
rotations.  Rotations of disjoint column pairs are applied together using a
round-robin pairing, so each of the ``n - 1`` rounds of a sweep is a handful
of vectorized numpy operations.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

from .circuit import RANK_RTOL

__all__ = [
    "SpectralData",
    "PerturbationReport",
    "as_matrix",
    "svd",
    "jacobi_svd",
    "fft",
    "dft",
    "dft_matrix",
    "circulant",
    "circulant_spectrum",
    "log2_elementary_symmetric",
    "max_column_distance",
    "rigidity_witness",
    "log2_elementary_symmetric_all",
    "log2_elementary_symmetric_batch",
    "log2_msv",
    "msv",
    "msv_bruteforce",
    "r_volume",
    "rigidity_sandwich",
    "check_perturbation",
    "random_unitary",
    "read_matrix",
    "write_matrix",
    "format_matrix",
    "parse_matrix",
]

JACOBI_RTOL = 1e-14
JACOBI_MAX_SWEEPS = 60
# above this the LAPACK driver is used by svd(method="auto")
JACOBI_AUTO_LIMIT = 128


def as_matrix(A) -> np.ndarray:
    M = np.asarray(A, dtype=complex)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


@dataclass(frozen=True)
class SpectralData:
    """Sorted singular values of an m x n matrix, optionally with factors.

    ``u`` is m x p, ``vh`` is p x n with p = min(m, n), so that
    ``A = u @ diag(singular_values) @ vh``.
    """

    singular_values: np.ndarray
    m: int
    n: int
    u: np.ndarray | None = None
    vh: np.ndarray | None = None

    @property
    def p(self) -> int:
        return min(self.m, self.n)

    def sigma(self, i: int) -> float:
        """1-based singular value; zero beyond p."""
        return float(self.singular_values[i - 1]) if 1 <= i <= self.p else 0.0

    @property
    def log2_sigma(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log2(self.singular_values)

    def log2_msv(self, r: int) -> float:
        if not 1 <= r <= self.p:
            raise ValueError(f"r={r} out of range 1..{self.p}")
        return float(self.log2_msv_all[r])

    @cached_property
    def log2_msv_all(self) -> np.ndarray:
        """log2 MSV_r for r = 0..p from a single e_r recurrence."""
        return 0.5 * log2_elementary_symmetric_all(2 * self.log2_sigma)

    def rank(self, rtol: float = RANK_RTOL) -> int:
        s = self.singular_values
        return int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0

    def frobenius_sq(self) -> float:
        return float(np.sum(self.singular_values**2))

    @classmethod
    def from_values(cls, values, m: int, n: int) -> "SpectralData":
        s = np.sort(np.abs(np.asarray(values, dtype=float)))[::-1]
        p = min(m, n)
        if s.size != p:
            raise ValueError(f"expected {p} singular values, got {s.size}")
        return cls(_flush(s, m, n), m, n)


def _flush(s: np.ndarray, m: int, n: int) -> np.ndarray:
    # values at roundoff level relative to sigma_1 are exact zeros of a
    # numerically singular matrix; zeroing them only weakens any bound.
    s = s.copy()
    if s.size and s[0] > 0:
        s[s <= max(m, n) * np.finfo(float).eps * s[0]] = 0.0
    return s


# --------------------------------------------------------------------------
# SVD


def _round_robin(n: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield n-1 rounds of disjoint pairs covering all pairs (n even)."""
    players = list(range(n))
    for _ in range(n - 1):
        half = n // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        yield p, q
        players = [players[0]] + [players[-1]] + players[1:-1]


def jacobi_svd(A, compute_uv: bool = True, rtol: float = JACOBI_RTOL):
    """One-sided Jacobi SVD.

    Returns ``(u, s, vh)`` (or just ``s``) with s nonincreasing.  Iterates
    until every pair of columns has ``|<a_p, a_q>| <= rtol * |a_p| |a_q|``,
    which implies the absolute criterion ``|<a_p, a_q>| <= rtol * |A|_F^2``.
    """
    A = as_matrix(A)
    m, n = A.shape
    if m < n:
        res = jacobi_svd(A.conj().T, compute_uv, rtol)
        if not compute_uv:
            return res
        u, s, vh = res
        return vh.conj().T, s, u.conj().T
    p = n
    if n == 0:
        return (np.zeros((m, 0), complex), np.zeros(0), np.zeros((0, 0), complex)) if compute_uv else np.zeros(0)

    W = A.copy()
    nn = n + (n % 2)
    if nn != n:
        W = np.hstack([W, np.zeros((m, 1), complex)])
    V = np.eye(nn, dtype=complex) if compute_uv else None
    tiny = np.finfo(float).tiny

    for _ in range(JACOBI_MAX_SWEEPS):
        rotated = False
        for pi, qi in _round_robin(nn):
            ap = W[:, pi]
            aq = W[:, qi]
            alpha = np.einsum("ij,ij->j", ap.conj(), ap).real
            beta = np.einsum("ij,ij->j", aq.conj(), aq).real
            g = np.einsum("ij,ij->j", ap.conj(), aq)
            ag = np.abs(g)
            act = (ag > rtol * np.sqrt(alpha * beta)) & (ag > tiny)
            if not act.any():
                continue
            rotated = True
            pi, qi = pi[act], qi[act]
            alpha, beta, g, ag = alpha[act], beta[act], g[act], ag[act]
            ap, aq = ap[:, act], aq[:, act]
            phase = g / ag  # a_q * conj(phase) has real inner product |g| with a_p
            zeta = (beta - alpha) / (2 * ag)
            t = np.sign(zeta) / (np.abs(zeta) + np.sqrt(1 + zeta * zeta))
            t[zeta == 0] = 1.0
            c = 1 / np.sqrt(1 + t * t)
            s = c * t
            aq_r = aq * phase.conj()
            W[:, pi] = c * ap - s * aq_r
            W[:, qi] = s * ap + c * aq_r
            if V is not None:
                vp = V[:, pi]
                vq = V[:, qi] * phase.conj()
                V[:, pi] = c * vp - s * vq
                V[:, qi] = s * vp + c * vq
        if not rotated:
            break

    norms = np.linalg.norm(W, axis=0)[:p]
    order = np.argsort(-norms, kind="stable")
    s = norms[order]
    if not compute_uv:
        return s
    Wp = W[:, :p][:, order]
    # a padding column is zero, never rotates, and leaves V block diagonal
    Vp = V[:p, :p][:, order]
    U = np.zeros((m, p), dtype=complex)
    nz = s > 0
    U[:, nz] = Wp[:, nz] / s[nz]
    if not nz.all():
        U = _complete_orthonormal(U, nz)
    return U, s, Vp.conj().T


def _complete_orthonormal(U: np.ndarray, have: np.ndarray) -> np.ndarray:
    # fill columns of zero singular values with an orthonormal completion
    m, p = U.shape
    basis = U[:, have]
    rng = np.random.default_rng(0)
    for j in np.flatnonzero(~have):
        v = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        for _ in range(2):
            v -= basis @ (basis.conj().T @ v)
        v /= np.linalg.norm(v)
        U[:, j] = v
        basis = np.hstack([basis, v[:, None]])
    return U


def svd(A, compute_uv: bool = False, method: str = "auto") -> SpectralData:
    """Singular values (and optionally factors) of A.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    min(m, n) = JACOBI_AUTO_LIMIT, LAPACK above).
    """
    A = as_matrix(A)
    m, n = A.shape
    if method == "auto":
        method = "jacobi" if min(m, n) <= JACOBI_AUTO_LIMIT else "lapack"
    if method == "jacobi":
        res = jacobi_svd(A, compute_uv)
    elif method == "lapack":
        if compute_uv:
            u, s, vh = np.linalg.svd(A, full_matrices=False)
            res = (u, s, vh)
        else:
            res = np.linalg.svd(A, compute_uv=False)
    else:
        raise ValueError(f"unknown svd method {method!r}")
    if compute_uv:
        u, s, vh = res
        return SpectralData(_flush(np.asarray(s, float), m, n), m, n, u, vh)
    return SpectralData(_flush(np.asarray(res, float), m, n), m, n)


# --------------------------------------------------------------------------
# Fourier transforms and circulants


def _fft_pow2(a: np.ndarray, sign: int) -> np.ndarray:
    n = a.shape[0]
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=int)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    out = a[rev].astype(complex)
    half = 1
    while half < n:
        w = np.exp(sign * 1j * np.pi * np.arange(half) / half)
        blocks = out.reshape((n // (2 * half), 2, half) + out.shape[1:])
        even = blocks[:, 0].copy()
        odd = blocks[:, 1] * w.reshape((1, half) + (1,) * (out.ndim - 1))
        blocks[:, 0] = even + odd
        blocks[:, 1] = even - odd
        out = blocks.reshape(out.shape)
        half *= 2
    return out


def dft_matrix(n: int, inverse: bool = False) -> np.ndarray:
    """(omega^{jk}) with omega = exp(2 pi i / n); the inverse includes 1/n."""
    jk = np.outer(np.arange(n), np.arange(n)) % n if n else np.zeros((0, 0), int)
    if inverse:
        return np.exp(-2j * np.pi * jk / n) / n
    return np.exp(2j * np.pi * jk / n)


def fft(a, inverse: bool = False) -> np.ndarray:
    """DFT along the first axis with the positive-exponent convention.

    Radix-2 for powers of two, the direct O(n^2) sum otherwise.  The inverse
    includes the 1/n factor.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    if n == 0:
        return a.copy()
    sign = -1 if inverse else 1
    if n & (n - 1) == 0:
        out = _fft_pow2(a, sign)
    else:
        out = dft_matrix(n, inverse=False).conj() @ a if inverse else dft_matrix(n) @ a
    return out / n if inverse else out


dft = fft


def circulant(a) -> np.ndarray:
    """Matrix of y -> a * y (cyclic convolution), entry (k, j) = a[(k - j) mod n]."""
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    k = np.arange(n)
    return a[(k[:, None] - k[None, :]) % n]


def circulant_spectrum(a) -> np.ndarray:
    """Eigenvalues lambda = DFT_n a of the circulant of a (unsorted)."""
    return fft(np.asarray(a, dtype=complex))


def circulant_spectral_data(a) -> SpectralData:
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    return SpectralData.from_values(np.abs(circulant_spectrum(a)), n, n)


# --------------------------------------------------------------------------
# mean square volume and friends


def log2_elementary_symmetric(log2_values, r: int) -> float:
    """log2 of e_r(v_1, ..., v_p) given log2 v_i (``-inf`` for v_i = 0).

    Runs the usual e_k recurrence with every sum done by ``logaddexp2``, so
    no intermediate overflows even when the products reach n^n scale.
    """
    lv = np.asarray(log2_values, dtype=float)
    if not 0 <= r <= lv.size:
        raise ValueError(f"r={r} out of range 0..{lv.size}")
    E = np.full(r + 1, -np.inf)
    E[0] = 0.0
    for v in lv:
        if v == -np.inf:
            continue
        E[1:] = np.logaddexp2(E[1:], v + E[:-1])
    return float(E[r])


def log2_elementary_symmetric_all(log2_values) -> np.ndarray:
    """log2 e_0, ..., log2 e_p in one pass."""
    lv = np.asarray(log2_values, dtype=float)
    E = np.full(lv.size + 1, -np.inf)
    E[0] = 0.0
    for k, v in enumerate(lv, 1):
        if v == -np.inf:
            continue
        E[1 : k + 1] = np.logaddexp2(E[1 : k + 1], v + E[:k])
    return E


def log2_elementary_symmetric_batch(log2_values, r: int) -> np.ndarray:
    """Row-wise log2 e_r for a (batch, p) array of log2 values."""
    lv = np.atleast_2d(np.asarray(log2_values, dtype=float))
    if not 0 <= r <= lv.shape[1]:
        raise ValueError(f"r={r} out of range 0..{lv.shape[1]}")
    E = np.full((lv.shape[0], r + 1), -np.inf)
    E[:, 0] = 0.0
    for j in range(lv.shape[1]):
        E[:, 1:] = np.logaddexp2(E[:, 1:], lv[:, j : j + 1] + E[:, :-1])
    return E[:, r]


def log2_msv(A, r: int) -> float:
    if isinstance(A, SpectralData):
        return A.log2_msv(r)
    return svd(A).log2_msv(r)


def msv(A, r: int) -> float:
    """r-th mean square volume sqrt(e_r(sigma_1^2, ..., sigma_p^2))."""
    return float(2.0 ** log2_msv(A, r))


def _subsets(n: int, r: int):
    return itertools.combinations(range(n), r)


def msv_bruteforce(A, r: int) -> float:
    """sqrt of the sum of |det A_{I,J}|^2 over all r x r minors."""
    A = as_matrix(A)
    m, n = A.shape
    if min(m, n) > 12:
        raise ValueError("msv_bruteforce is limited to min(m, n) <= 12")
    if not 1 <= r <= min(m, n):
        raise ValueError(f"r={r} out of range 1..{min(m, n)}")
    rows = list(_subsets(m, r))
    cols = list(_subsets(n, r))
    total = 0.0
    for I in rows:
        sub = A[list(I)]
        blocks = np.stack([sub[:, list(J)] for J in cols])
        total += float(np.sum(np.abs(np.linalg.det(blocks)) ** 2))
    return math.sqrt(total)


def r_volume(A, r: int) -> float:
    """max over r-row subsets I of sqrt(det A_I A_I^*)."""
    A = as_matrix(A)
    m, n = A.shape
    if m > 20:
        raise ValueError("r_volume enumerates row subsets; limited to m <= 20")
    if not 1 <= r <= min(m, n):
        raise ValueError(f"r={r} out of range 1..{min(m, n)}")
    G = A @ A.conj().T
    best = 0.0
    for chunk in _batched(_subsets(m, r), 4096):
        idx = np.array(chunk)
        sub = G[idx[:, :, None], idx[:, None, :]]
        d = np.linalg.det(sub).real
        best = max(best, float(d.max()))
    return math.sqrt(max(best, 0.0))


def _batched(it, k):
    it = iter(it)
    while True:
        chunk = list(itertools.islice(it, k))
        if not chunk:
            return
        yield chunk


def rigidity_sandwich(A, r: int) -> tuple[float, float]:
    """(sigma_{r+1} / sqrt(n), sigma_{r+1}) enclosing the geometric rigidity Rig_r."""
    spec = A if isinstance(A, SpectralData) else svd(A)
    if not 0 <= r < spec.p:
        raise ValueError(f"r={r} out of range 0..{spec.p - 1}")
    s = spec.sigma(r + 1)
    return s / math.sqrt(spec.n), s


def max_column_distance(A, V) -> float:
    """max_j dist(A[:, j], span V) for V with orthonormal columns."""
    A = as_matrix(A)
    V = np.asarray(V, dtype=complex).reshape(A.shape[0], -1)
    R = A - V @ (V.conj().T @ A)
    return float(np.linalg.norm(R, axis=0).max()) if R.size else 0.0


def rigidity_witness(A, r: int) -> float:
    """Column distance to the top-r left singular subspace, an upper bound on Rig_r."""
    spec = svd(A, compute_uv=True)
    if not 0 <= r < spec.p:
        raise ValueError(f"r={r} out of range 0..{spec.p - 1}")
    return max_column_distance(A, spec.u[:, :r])


@dataclass(frozen=True)
class PerturbationReport:
    h: int
    checked: int
    violations: tuple[tuple[int, float, float], ...]  # (r, sigma_{r+h}(A), sigma_r(A+E))
    slack: float

    @property
    def ok(self) -> bool:
        return not self.violations


def check_perturbation(A, E, slack_rtol: float = 1e-8) -> PerturbationReport:
    """Verify sigma_{r+h}(A) <= sigma_r(A + E) where h is the numerical rank of E."""
    A = as_matrix(A)
    E = as_matrix(E)
    if A.shape != E.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {E.shape}")
    sa = svd(A)
    sb = svd(A + E)
    se = svd(E)
    h = _perturbation_rank(se, sa)
    slack = slack_rtol * sa.sigma(1)
    bad = []
    checked = 0
    for r in range(1, sa.p - h + 1):
        checked += 1
        lhs, rhs = sa.sigma(r + h), sb.sigma(r)
        if lhs > rhs + slack:
            bad.append((r, lhs, rhs))
    return PerturbationReport(h, checked, tuple(bad), slack)


def _perturbation_rank(se: SpectralData, sa: SpectralData) -> int:
    ref = max(se.sigma(1), sa.sigma(1))
    if ref == 0:
        return 0
    return int(np.sum(se.singular_values > RANK_RTOL * ref))


def perturbation_rank(E, A) -> int:
    """Numerical rank of E with threshold 1e-9 * max(sigma_1(E), sigma_1(A))."""
    return _perturbation_rank(svd(E), svd(A))


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))


# --------------------------------------------------------------------------
# matrix files


def format_matrix(A) -> str:
    A = as_matrix(A)
    m, n = A.shape
    lines = [f"{m} {n}"]
    for row in A:
        lines.append(" ".join(f"({float(z.real)!r},{float(z.imag)!r})" for z in row))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    rows = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    rows = [ln for ln in rows if ln]
    if not rows:
        raise ValueError("empty matrix file")
    try:
        m, n = (int(t) for t in rows[0].split())
    except ValueError:
        raise ValueError("first line must be 'm n'") from None
    if len(rows) - 1 != m:
        raise ValueError(f"expected {m} rows, found {len(rows) - 1}")
    A = np.zeros((m, n), dtype=complex)
    for i, ln in enumerate(rows[1:]):
        toks = ln.split()
        if len(toks) != n:
            raise ValueError(f"row {i}: expected {n} entries, found {len(toks)}")
        for j, tok in enumerate(toks):
            A[i, j] = _parse_entry(tok)
    return as_matrix(A)


def _parse_entry(tok: str) -> complex:
    t = tok.strip()
    if t.startswith("(") and t.endswith(")"):
        re_s, _, im_s = t[1:-1].partition(",")
        return complex(float(re_s), float(im_s or 0.0))
    return complex(t.replace("i", "j"))


def read_matrix(path) -> np.ndarray:
    with open(path) as f:
        return parse_matrix(f.read())


def write_matrix(A, path) -> None:
    with open(path, "w") as f:
        f.write(format_matrix(A))


def read_vector(path) -> np.ndarray:
    """Whitespace separated complex tokens, ``(re,im)`` or plain numbers."""
    with open(path) as f:
        toks = [t for ln in f for t in ln.split("#", 1)[0].split()]
    return np.array([_parse_entry(t) for t in toks], dtype=complex)

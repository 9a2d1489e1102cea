"""Gaussian sampling, the log-moment constants, and Monte-Carlo checks of the
probabilistic estimates behind the convolution lower bound.

Randomness
----------
All samplers draw from a Philox counter-based generator keyed by the 64-bit
seed.  Trial ``t`` of an experiment owns counter blocks
``[t * B, (t + 1) * B)`` where ``B`` is the number of 4-word blocks one trial
consumes, so results do not depend on how trials are batched or spread over
threads.  Uniforms are ``((w >> 11) + 1) * 2**-53`` in (0, 1]; normals come
from Box-Muller on consecutive uniform pairs.

Complex standard Gaussians have independent real and imaginary parts of
variance 1 each, so ``E|Z_i|^2 = 2``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .spectral import fft, log2_elementary_symmetric_batch

__all__ = [
    "Constants",
    "GaussianSpec",
    "TrialStats",
    "NormalStream",
    "adaptive_simpson",
    "constants",
    "closed_form_constants",
    "sample_gaussian",
    "random_orthonormal",
    "log2_abs2_product",
    "mc_linear_comb",
    "mc_log_bounds",
    "mc_lemma42",
    "mc_lemma51",
    "mc_lemma43",
    "mc_lemma62",
    "mc_lemma62_sweep",
    "thread_count",
]

EULER_GAMMA = 0.5772156649015329
LN2 = math.log(2.0)


# --------------------------------------------------------------------------
# random streams


class NormalStream:
    """Reproducible per-trial uniforms and normals keyed by ``seed``."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def uniforms(self, start: int, count: int, per_trial: int) -> np.ndarray:
        blocks = -(-per_trial // 4)
        bg = np.random.Philox(key=self.seed)
        if start:
            bg.advance(start * blocks)
        raw = bg.random_raw(count * blocks * 4).reshape(count, blocks * 4)[:, :per_trial]
        return ((raw >> np.uint64(11)).astype(float) + 1.0) * 2.0**-53

    def normals(self, start: int, count: int, per_trial: int) -> np.ndarray:
        """Real standard normals, shape (count, per_trial)."""
        pairs = -(-per_trial // 2)
        u = self.uniforms(start, count, 2 * pairs)
        rad = np.sqrt(-2.0 * np.log(u[:, 0::2]))
        ang = 2.0 * np.pi * u[:, 1::2]
        z = np.empty((count, 2 * pairs))
        z[:, 0::2] = rad * np.cos(ang)
        z[:, 1::2] = rad * np.sin(ang)
        return z[:, :per_trial]

    def complex_normals(self, start: int, count: int, dim: int) -> np.ndarray:
        """Complex standard normals (unit variance per part), shape (count, dim)."""
        z = self.normals(start, count, 2 * dim)
        return z[:, 0::2] + 1j * z[:, 1::2]


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("BCV_THREADS", "1")))
    except ValueError:
        return 1


def _map_trials(fn: Callable[[int, int], np.ndarray], trials: int, batch: int) -> np.ndarray:
    """Apply fn(start, count) over trial batches and concatenate in order."""
    spans = [(s, min(batch, trials - s)) for s in range(0, trials, batch)]
    workers = min(thread_count(), len(spans))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda sc: fn(*sc), spans))
    else:
        parts = [fn(s, c) for s, c in spans]
    return np.concatenate(parts) if parts else np.zeros(0)


def _batch_for(width: int) -> int:
    return max(1, (1 << 21) // max(1, width))


# --------------------------------------------------------------------------
# constants


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-6,
                     max_depth: int = 60) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6 * (fa + 4 * fm + fb)

    fa, fb, fm = f(a), f(b), f((a + b) / 2)
    total = 0.0
    stack = [(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 0)]
    while stack:
        a, b, fa, fm, fb, whole, eps, depth = stack.pop()
        m = (a + b) / 2
        lm, rm = (a + m) / 2, (m + b) / 2
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        err = left + right - whole
        if depth >= max_depth or abs(err) <= 15 * eps:
            total += left + right + err / 15
        else:
            stack.append((a, m, fa, flm, fm, left, eps / 2, depth + 1))
            stack.append((m, b, fm, frm, fb, right, eps / 2, depth + 1))
    return total


class Constants(NamedTuple):
    gamma: float
    theta: float
    delta: float
    c: float


QUAD_UPPER = 60.0


def _derived(gamma: float, theta: float) -> Constants:
    s = gamma + math.sqrt(2 * theta)
    return Constants(gamma, theta, 2.0**-s, 0.5 * (2 + s))


def constants(tol: float = 1e-9) -> Constants:
    """gamma = 1 - E log2 X^2 and theta = E log2^2(X^2 + Y^2) by quadrature,
    with delta = 2^-(gamma + sqrt(2 theta)) and c = (2 + gamma + sqrt(2 theta)) / 2.

    gamma = -(1/sqrt(pi)) int_0^T t^-1/2 e^-t log2 t dt and
    theta = (1/2) int_0^T e^-t/2 log2^2 t dt, T = 60, both after t = u^2.
    The log singularity of the first is removed by subtracting int_0^1 ln u du = -1.
    """
    U = math.sqrt(QUAD_UPPER)
    # int_0^U e^{-u^2} ln u du
    i1 = adaptive_simpson(lambda u: (math.exp(-u * u) - 1) * math.log(u) if u > 0 else 0.0, 0.0, 1.0, tol)
    i2 = adaptive_simpson(lambda u: math.exp(-u * u) * math.log(u), 1.0, U, tol)
    gamma = -4 / (math.sqrt(math.pi) * LN2) * (i1 - 1.0 + i2)

    # 4 int_0^U u e^{-u^2/2} log2^2 u du; on [0, 1] substitute u = w^2 as well
    g = lambda u: u * math.exp(-u * u / 2) * (math.log(u) / LN2) ** 2  # noqa: E731
    j1 = adaptive_simpson(lambda w: 2 * w * g(w * w) if w > 0 else 0.0, 0.0, 1.0, tol)
    j2 = adaptive_simpson(g, 1.0, U, tol)
    theta = 4 * (j1 + j2)
    return _derived(gamma, theta)


def closed_form_constants() -> Constants:
    """E ln X^2 = -(gamma_E + ln 2); X^2 + Y^2 is exponential with mean 2."""
    gamma = 1 + (EULER_GAMMA + LN2) / LN2
    theta = (math.pi**2 / 6 + (LN2 - EULER_GAMMA) ** 2) / LN2**2
    return _derived(gamma, theta)


# --------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class GaussianSpec:
    n: int
    basis: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if self.basis is not None:
            B = np.asarray(self.basis, dtype=complex)
            if B.ndim != 2 or B.shape[0] != self.n or B.shape[1] > self.n:
                raise ValueError(f"basis must be n x r with r <= n, got {B.shape}")
            gram = B.conj().T @ B
            if np.abs(gram - np.eye(B.shape[1])).max() > 1e-10:
                raise ValueError("basis columns are not orthonormal")
            object.__setattr__(self, "basis", B)

    @property
    def dim(self) -> int:
        return self.n if self.basis is None else self.basis.shape[1]


def sample_gaussian(spec: GaussianSpec, count: int, start: int = 0) -> np.ndarray:
    """``count`` standard Gaussian vectors in C^n (or in span(basis)), shape (count, n)."""
    z = NormalStream(spec.seed).complex_normals(start, count, spec.dim)
    return z if spec.basis is None else z @ spec.basis.T


def random_orthonormal(n: int, r: int, seed: int) -> np.ndarray:
    """n x r orthonormal columns from the QR factorization of a Gaussian matrix."""
    Z = NormalStream(seed).complex_normals(0, 1, n * r).reshape(n, r)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.where(np.abs(d) > 0, np.abs(d), 1.0))


def log2_abs2_product(Z) -> np.ndarray:
    """sum_i log2 |Z_i|^2 along the last axis (log of prod |Z_i|^2)."""
    with np.errstate(divide="ignore"):
        return 2 * np.sum(np.log2(np.abs(np.asarray(Z))), axis=-1)


# --------------------------------------------------------------------------
# trial statistics


def _se_freq(p: float, n: int) -> float:
    # standard error of a frequency; the floor keeps a band when p is 0 or 1
    return math.sqrt(max(p * (1 - p), 1.0 / n) / n)


@dataclass
class TrialStats:
    """Outcome of a Monte-Carlo experiment.

    ``successes`` counts the experiment's primary event (described by
    ``event``); ``mean``/``variance`` are of its primary statistic.  ``checks``
    holds every claim tested at three standard errors.
    """

    name: str
    trials: int
    successes: int
    mean: float
    variance: float
    seed: int
    threshold: float
    event: str = ""
    extra: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def frequency(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def lines(self) -> list[str]:
        out = [f"experiment: {self.name}", f"trials: {self.trials}", f"successes: {self.successes}",
               f"frequency: {self.frequency:.6g}", f"mean: {self.mean:.6g}",
               f"variance: {self.variance:.6g}", f"seed: {self.seed}",
               f"threshold: {self.threshold:.6g}"]
        if self.event:
            out.append(f"event: {self.event}")
        out += [f"{k}: {v:.6g}" if isinstance(v, float) else f"{k}: {v}" for k, v in self.extra.items()]
        out += [f"check.{k}: {'pass' if v else 'FAIL'}" for k, v in self.checks.items()]
        out.append(f"passed: {self.passed}")
        return out


def _mean_var(x: np.ndarray) -> tuple[float, float]:
    return float(np.mean(x)), float(np.var(x, ddof=1)) if x.size > 1 else 0.0


def _se_var(x: np.ndarray) -> float:
    # standard error of the sample variance
    c = x - x.mean()
    m2 = np.mean(c**2)
    m4 = np.mean(c**4)
    return math.sqrt(max(m4 - m2 * m2, 0.0) / x.size)


# --------------------------------------------------------------------------
# experiments


def mc_linear_comb(f, trials: int = 100_000, seed: int = 0, threshold: float = 4.0) -> TrialStats:
    """T = |f . Z|^2 / (2 |f|^2) for standard Gaussian Z should be Exp(1).

    Checks mean and variance equal 1 and P[T >= lam] <= 2 exp(-lam/2) at
    lam = 2, 4, 8, each within three standard errors.
    """
    f = np.asarray(f, dtype=complex)
    nf = float(np.vdot(f, f).real)
    if nf == 0:
        raise ValueError("f must be nonzero")
    n = f.size
    stream = NormalStream(seed)

    def batch(start, count):
        Z = stream.complex_normals(start, count, n)
        return np.abs(Z @ f) ** 2 / (2 * nf)

    T = _map_trials(batch, trials, _batch_for(2 * n))
    mean, var = _mean_var(T)
    st = TrialStats("linear_comb", trials, int(np.sum(T >= threshold)), mean, var, seed,
                    threshold, event="T >= threshold")
    se_m = math.sqrt(var / trials)
    st.checks["mean_is_1"] = abs(mean - 1) <= 3 * se_m
    st.checks["variance_is_1"] = abs(var - 1) <= 3 * _se_var(T)
    for lam in (2.0, 4.0, 8.0):
        p = float(np.mean(T >= lam))
        bound = 2 * math.exp(-lam / 2)
        st.extra[f"tail_{lam:g}"] = p
        st.extra[f"tail_bound_{lam:g}"] = bound
        st.checks[f"tail_{lam:g}"] = p <= bound + 3 * _se_freq(p, trials)
    return st


def mc_log_bounds(cov, trials: int = 100_000, seed: int = 0) -> TrialStats:
    """Delta = log2 E|Z|^2 - E log2 |Z|^2 and Var log2 |Z|^2 for Z = X1 + i X2,
    (X1, X2) ~ N(0, cov).

    Checks 0 <= Delta <= gamma and Var <= theta within three standard errors.
    E|Z|^2 = trace(cov) is used exactly.  The variance claim holds for
    circularly symmetric Z; for strongly anisotropic Z it fails (for real Z,
    Var log2 X^2 = pi^2 / (2 ln^2 2) ~ 10.27), and the check reports that.
    """
    C = np.asarray(cov, dtype=float)
    if C.shape != (2, 2) or not np.allclose(C, C.T):
        raise ValueError("cov must be a symmetric 2 x 2 matrix")
    w, Q = np.linalg.eigh(C)
    if w.min() < -1e-12 * max(1.0, w.max()) or w.max() <= 0:
        raise ValueError("cov must be positive semidefinite and nonzero")
    L = Q * np.sqrt(np.clip(w, 0, None))
    stream = NormalStream(seed)

    def batch(start, count):
        X = stream.normals(start, count, 2) @ L.T
        with np.errstate(divide="ignore"):
            return np.log2(X[:, 0] ** 2 + X[:, 1] ** 2)

    lz = _map_trials(batch, trials, _batch_for(2))
    mean, var = _mean_var(lz)
    delta = math.log2(float(np.trace(C))) - mean
    k = constants()
    se_m = math.sqrt(var / trials)
    st = TrialStats("logbounds", trials, 0, mean, var, seed, k.gamma,
                    event="none (statistic: log2 |Z|^2)")
    st.extra.update(delta=delta, delta_se=se_m, gamma=k.gamma, theta=k.theta)
    st.checks["delta_nonnegative"] = delta >= -3 * se_m
    st.checks["delta_le_gamma"] = delta <= k.gamma + 3 * se_m
    st.checks["variance_le_theta"] = var <= k.theta + 3 * _se_var(lz)
    return st


def _complement_basis(F: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases of V (top n - r left singular directions of F) and of U = V^perp."""
    n = F.shape[0]
    Uf = np.linalg.svd(F, full_matrices=True)[0]
    return Uf[:, : n - r], Uf[:, n - r :]


def mc_lemma42(forms, r: int, trials: int = 10_000, seed: int = 0) -> TrialStats:
    """P[max_i |f_i(a)| <= 2 sqrt(ln 4k) R] >= 1/2 for a standard Gaussian in U.

    ``forms`` is n x k with the forms as columns; f_i(a) = <f_i, a>.  V is the
    span of the top n - r left singular vectors, U its complement, and
    R = sigma_{n-r+1}(forms), which bounds every dist(f_i, V).
    """
    F = np.asarray(forms, dtype=complex)
    if F.ndim != 2:
        raise ValueError("forms must be an n x k matrix")
    n, k = F.shape
    if not 1 <= r < n or k < 1:
        raise ValueError("need 1 <= r < n and at least one form")
    sv = np.linalg.svd(F, compute_uv=False)
    R = float(sv[n - r]) if n - r < sv.size else 0.0
    thr = 2 * math.sqrt(math.log(4 * k)) * R
    _, Ub = _complement_basis(F, r)
    stream = NormalStream(seed)
    slack_scale = 1e-9 * (float(sv[0]) if sv.size else 0.0)

    def batch(start, count):
        zeta = stream.complex_normals(start, count, r)
        a = zeta @ Ub.T
        vals = np.abs(a @ F.conj()).max(axis=1)
        slack = slack_scale * np.linalg.norm(a, axis=1)
        return np.stack([vals, (vals <= thr + slack).astype(float)], axis=1)

    out = _map_trials(batch, trials, _batch_for(n + k)).reshape(trials, 2)
    vals, ok = out[:, 0], out[:, 1]
    mean, var = _mean_var(vals)
    succ = int(ok.sum())
    st = TrialStats("lemma42", trials, succ, mean, var, seed, thr,
                    event="max_i |f_i(a)| <= 2 sqrt(ln 4k) R")
    st.extra.update(R=R, k=k, n=n, r=r)
    st.checks["frequency_ge_half"] = succ / trials >= 0.5 - 3 * math.sqrt(0.25 / trials)
    return st


def mc_lemma51(basis, index, trials: int = 10_000, seed: int = 0) -> TrialStats:
    """Products of correlated Gaussians: Z = rows ``index`` of (basis @ zeta).

    With Sigma = E[Z Z^*] = 2 B_I B_I^* (unit variance per real part), checks
    E prod |Z_i|^2 >= det Sigma and P[prod |Z_i|^2 >= delta^r det Sigma] > 1/2,
    each within three standard errors.  ``mean``/``variance`` are of
    prod |Z_i|^2 / det Sigma.
    """
    B = np.asarray(basis, dtype=complex)
    n, r = B.shape
    if np.abs(B.conj().T @ B - np.eye(r)).max() > 1e-10:
        raise ValueError("basis columns must be orthonormal")
    idx = np.asarray(index, dtype=int)
    if idx.size != r:
        raise ValueError("index set must have r elements")
    BI = B[idx]
    detB2 = float(abs(np.linalg.det(BI)) ** 2)
    k = constants()
    stream = NormalStream(seed)

    def batch(start, count):
        zeta = stream.complex_normals(start, count, r)
        return log2_abs2_product(zeta @ BI.T)

    L = _map_trials(batch, trials, _batch_for(2 * r))
    st = TrialStats("lemma51", trials, 0, float("nan"), float("nan"), seed, float("nan"),
                    event="prod |Z_i|^2 >= delta^r det Sigma")
    st.extra.update(n=n, r=r, det_B_I_sq=detB2, delta=k.delta)
    if detB2 == 0:
        st.successes = trials
        st.checks["expectation"] = st.checks["probability"] = True
        return st
    log_det = r + math.log2(detB2)
    ratio = np.exp2(L - log_det)
    mean, var = _mean_var(ratio)
    st.mean, st.variance = mean, var
    st.threshold = r * math.log2(k.delta) + log_det
    st.successes = int(np.sum(L >= st.threshold))
    st.extra["log2_det_sigma"] = log_det
    st.checks["expectation"] = mean >= 1 - 3 * math.sqrt(var / trials)
    st.checks["probability"] = st.frequency > 0.5 - 3 * math.sqrt(0.25 / trials)
    return st


def mc_lemma43(n: int, r: int, trials: int = 2000, seed: int = 0) -> TrialStats:
    """Mean square volume of Circ(a) for a standard Gaussian a in a random
    r-dimensional subspace.

    Event 1: log2 MSV_r >= (r/2) log2 n + (r/2) log2 delta - n/2.
    Event 2: log2 MSV_r - n/2 >= (r/2) log2 n - c n.
    Both frequencies must exceed 1/2 within three standard errors.
    """
    if not 1 <= r <= n <= 512:
        raise ValueError("need 1 <= r <= n <= 512")
    k = constants()
    U = random_orthonormal(n, r, seed ^ 0x5EED)
    stream = NormalStream(seed)

    def batch(start, count):
        a = stream.complex_normals(start, count, r) @ U.T
        lam = fft(a.T).T
        with np.errstate(divide="ignore"):
            ls = 2 * np.log2(np.abs(lam))
        return 0.5 * log2_elementary_symmetric_batch(ls, r)

    lm = _map_trials(batch, trials, _batch_for(4 * n))
    t1 = 0.5 * r * math.log2(n) + 0.5 * r * math.log2(k.delta) - n / 2
    t2 = 0.5 * r * math.log2(n) - k.c * n
    mean, var = _mean_var(lm)
    s1 = int(np.sum(lm >= t1))
    s2 = int(np.sum(lm - n / 2 >= t2))
    st = TrialStats("lemma43", trials, s1, mean, var, seed, t1,
                    event="log2 MSV_r(Circ a) >= (r/2)log2 n + (r/2)log2 delta - n/2")
    band = 0.5 - 3 * math.sqrt(0.25 / trials)
    st.extra.update(n=n, r=r, freq_bound=s2 / trials, bound_threshold=t2, c=k.c,
                    median_log2_msv=float(np.median(lm)))
    st.checks["msv_event"] = s1 / trials > band
    st.checks["bound_event"] = s2 / trials > band
    return st


def mc_lemma62(n: int, trials: int = 10_000, seed: int = 0, variances=None, duplicate: int = 1,
               complex_case: bool = False, eps: float = 0.5) -> TrialStats:
    """Exceedance frequency of max_i |X_i| over sqrt(2 ln n) + eps (real case)
    or 2 sqrt(ln 2n) + eps (complex case, E|Z_i|^2 = variance_i).

    ``duplicate`` > 1 builds a correlated vector by repeating each of n /
    duplicate independent components.
    """
    if n < 1 or duplicate < 1 or n % duplicate:
        raise ValueError("need n >= 1 and duplicate dividing n")
    var = np.ones(n) if variances is None else np.asarray(variances, dtype=float)
    if var.shape != (n,) or var.max() > 1 or var.min() < 0:
        raise ValueError("need n variances in [0, 1]")
    sd = np.sqrt(var)
    base = n // duplicate
    thr = (2 * math.sqrt(math.log(2 * n)) if complex_case else math.sqrt(2 * math.log(n))) + eps
    stream = NormalStream(seed)

    def batch(start, count):
        if complex_case:
            Z = stream.complex_normals(start, count, base) / math.sqrt(2)
        else:
            Z = stream.normals(start, count, base)
        Z = np.repeat(Z, duplicate, axis=1) * sd
        return np.abs(Z).max(axis=1)

    mx = _map_trials(batch, trials, _batch_for(2 * base))
    mean, v = _mean_var(mx)
    succ = int(np.sum(mx > thr))
    st = TrialStats("lemma62", trials, succ, mean, v, seed, thr, event="max_i |X_i| > threshold")
    st.extra.update(n=n, eps=eps, complex=complex_case, duplicate=duplicate,
                    se=_se_freq(succ / trials, trials))
    return st


def mc_lemma62_sweep(ns=tuple(2**j for j in range(6, 15)), trials: int = 5000, seed: int = 0,
                     **kw) -> tuple[list[TrialStats], dict]:
    """Exceedance over a range of n; checks the frequency decreases in n
    (each step within three standard errors, and overall) and ends below 0.2."""
    stats = [mc_lemma62(n, trials, seed + i, **kw) for i, n in enumerate(ns)]
    f = [s.frequency for s in stats]
    step_ok = all(
        f[i + 1] <= f[i] + 3 * math.hypot(_se_freq(f[i], trials), _se_freq(f[i + 1], trials))
        for i in range(len(f) - 1)
    )
    checks = {
        "stepwise_nonincreasing": step_ok,
        "overall_decrease": f[-1] < f[0],
        "last_below_0.2": f[-1] < 0.2,
    }
    return stats, checks

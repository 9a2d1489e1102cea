"""Command-line entry point: ``bcconv <command> ...``.

Exit codes: 0 success, 1 check failure, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bounds, circuit, generators, probability, spectral, transforms

ORACLES = ("naive-conv", "dft", "polymul", "psinv", "division")
EXPERIMENTS = ("lemma51", "lemma42", "lemma43", "lemma62", "logbounds", "linearcomb")
CHECK_TRIALS = 100
CHECK_RTOL = 1e-8
REPORT_SAMPLES = 11


class CheckFailed(Exception):
    pass


def _write(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _audit_lines(c: circuit.Circuit) -> list[str]:
    rep = circuit.validate_structure(c)
    aud = circuit.audit_coefficients(c)
    lines = [
        f"kind {c.kind}",
        f"size {c.size}",
        f"inputs x {c.n_inputs_x} y {c.n_inputs_y}",
        f"outputs {c.n_outputs}",
        f"valid {rep.ok}",
        f"max_abs_scalar {aud.max_abs_scalar:.6g}",
        f"help_count {aud.help_count}",
    ]
    if aud.help_span_dim is not None:
        lines.append(f"help_span_dim {aud.help_span_dim}")
    sections = c.section_sizes()
    if c.kind == "bilinear":
        lines.append("sections " + " ".join(f"{k}={v}" for k, v in sections.items()))
    lines += [f"issue {i.index} [{i.condition}] {i.message}" for i in rep.issues]
    return lines


# --------------------------------------------------------------------------
# commands


def cmd_gen(args) -> int:
    fn = generators.GENERATORS[args.kind]
    if args.kind == "division":
        c = fn(args.n, args.m if args.m is not None else max(1, args.n // 2))
    elif args.kind == "dft":
        c = fn(args.n, inverse=args.inverse)
    else:
        c = fn(args.n)
    text = circuit.dumps(c)
    summary = "\n".join(_audit_lines(c)) + "\n"
    if args.out:
        _write(text, args.out)
        sys.stdout.write(summary)
    else:
        sys.stdout.write(text)
        sys.stderr.write(summary)
    return 0


def cmd_audit(args) -> int:
    c = circuit.load(args.circuit)
    sys.stdout.write("\n".join(_audit_lines(c)) + "\n")
    return 0 if circuit.validate_structure(c).ok else 1


def cmd_eval(args) -> int:
    c = circuit.load(args.circuit)
    x = spectral.read_vector(args.x)
    y = spectral.read_vector(args.y) if args.y else None
    out = circuit.evaluate(c, x, y)
    _write("".join(f"({float(z.real)!r},{float(z.imag)!r})\n" for z in out), args.out)
    return 0


def cmd_bound(args) -> int:
    if (args.matrix is None) == (args.circulant is None):
        raise ValueError("give either a matrix file or --circulant VECTOR")
    if args.circulant is not None:
        a = spectral.read_vector(args.circulant)
        rep = bounds.circulant_best_bound(a, args.help_gates, matrix_id=f"circulant({args.circulant})")
    else:
        A = spectral.read_matrix(args.matrix)
        rep = bounds.best_bound(A, args.help_gates, matrix_id=args.matrix)
    if args.r is not None or args.s is not None:
        rep.entries = [e for e in rep.entries
                       if (args.r is None or e.r == args.r) and (args.s is None or e.s == args.s)]
    text = rep.to_csv() if args.format == "csv" else rep.to_markdown()
    if args.format == "csv":
        text += f"# best {bounds._fmt_bits(rep.best)}\n"
    _write(text, args.out)
    return 0


def report_rows(max_n: int, seed: int = 0) -> list[dict]:
    """One row per n = 2, 4, ..., max_n: size of the FFT convolution circuit,
    the median msv bound of random circulants, and the surrogate terms."""
    if not generators.is_power_of_two(max_n) or not 2 <= max_n <= 4096:
        raise ValueError("--max-n must be a power of two in [2, 4096]")
    rows = []
    n = 2
    while n <= max_n:
        size = generators.gen_convolution_fft(n).size
        best, best_r = [], []
        for i in range(REPORT_SAMPLES):
            a = probability.sample_gaussian(probability.GaussianSpec(n, seed=seed + n), 1, start=i)[0]
            spec = spectral.circulant_spectral_data(a)
            vals = [bounds.msv_bound(spec, r) for r in range(1, spec.p + 1)]
            j = int(np.argmax(vals))
            best.append(vals[j])
            best_r.append(j + 1)
        order = np.argsort(best)
        mid = int(order[REPORT_SAMPLES // 2])
        sur = bounds.convolution_theorem_surrogate(n, max(1, n // 2))
        rows.append({
            "n": n,
            "formula": "msv-circulant-median",
            "r": best_r[mid],
            "s": "",
            "h": 0,
            "bound_bits": bounds._fmt_bits(best[mid]),
            "upper_size": size,
            "surrogate": sur,
        })
        n *= 2
    return rows


def cmd_report(args) -> int:
    rows = report_rows(args.max_n, args.seed)
    if args.format == "csv":
        text = bounds.rows_to_csv([{k: r[k] for k in bounds.CSV_COLUMNS} for r in rows])
    else:
        cols = list(bounds.CSV_COLUMNS) + ["surrogate_r", "(r/2)log2 n", "-c n",
                                           "-n log2(2 sqrt(ln 4k))", "surrogate", "eliminated"]
        md = []
        for r in rows:
            s = r["surrogate"]
            d = {k: r[k] for k in bounds.CSV_COLUMNS}
            d.update({"surrogate_r": s.r, "(r/2)log2 n": f"{s.main:.3f}", "-c n": f"{s.lemma43:.3f}",
                      "-n log2(2 sqrt(ln 4k))": f"{s.union:.3f}", "surrogate": f"{s.value:.3f}",
                      "eliminated": f"{s.eliminated:.3f}"})
            md.append(d)
        text = bounds.rows_to_markdown(md, cols)
    _write(text, args.out)
    return 0


# --------------------------------------------------------------------------
# oracles for `check`


def _cyclic(x, y):
    n = x.shape[0]
    out = np.zeros_like(x)
    for i in range(n):
        out += x[i] * np.roll(y, i, axis=0)
    return out


def _polymul(x, y):
    n, m = x.shape[0], y.shape[0]
    out = np.zeros((n + m - 1,) + x.shape[1:], dtype=complex)
    for i in range(n):
        out[i : i + m] += x[i] * y
    return out


def _psinv(a):
    n = a.shape[0]
    b = [np.ones(a.shape[1:], dtype=complex)]
    for k in range(1, n + 1):
        b.append(sum(a[i - 1] * b[k - i] for i in range(1, k + 1)))
    return np.stack(b[1:])


def _division(x, n, m):
    f, g = x[: n + 1], x[n + 1 :]
    outs = []
    for j in range(x.shape[1]):
        q, r = np.polydiv(f[::-1, j], np.concatenate([[1.0], g[::-1, j]]))
        q = q[::-1]
        r = np.concatenate([r[::-1], np.zeros(m - r.size)])[:m]
        outs.append(np.concatenate([q, r]))
    return np.array(outs).T


def oracle_outputs(name: str, c: circuit.Circuit, x, y):
    nx = c.n_inputs_x
    if name == "naive-conv":
        if c.kind != "bilinear" or c.n_inputs_y != nx or c.n_outputs != nx:
            raise CheckFailed("naive-conv needs a bilinear n x n -> n circuit")
        return _cyclic(x, y)
    if name == "dft":
        if c.kind != "linear" or c.n_outputs != nx:
            raise CheckFailed("dft needs a square linear circuit")
        return spectral.dft_matrix(nx) @ x
    if name == "polymul":
        if c.kind != "bilinear" or c.n_outputs != nx + c.n_inputs_y - 1:
            raise CheckFailed("polymul needs a bilinear circuit with n + m - 1 outputs")
        return _polymul(x, y)
    if name == "psinv":
        if c.n_outputs != nx or c.kind == "bilinear":
            raise CheckFailed("psinv needs n inputs and n outputs")
        return _psinv(x)
    if name == "division":
        m = nx - c.n_outputs
        n = c.n_outputs - 1
        if c.kind == "bilinear" or not n >= m >= 1:
            raise CheckFailed("division needs inputs f_0..f_n, g_0..g_{m-1} and n + 1 outputs")
        return _division(x, n, m)
    raise ValueError(f"unknown oracle {name}")


def check_circuit(c: circuit.Circuit, against: str, seed: int = 0, trials: int = CHECK_TRIALS,
                  rtol: float = CHECK_RTOL) -> tuple[bool, list[str]]:
    lines = []
    rep = circuit.validate_structure(c)
    if not rep.ok:
        return False, [f"structure: {i.message}" for i in rep.issues]
    rng = np.random.default_rng(seed)

    def draw(k):
        return rng.standard_normal((k, trials)) + 1j * rng.standard_normal((k, trials))

    x = draw(c.n_inputs_x)
    y = draw(c.n_inputs_y) if c.kind == "bilinear" else None
    if against in ("psinv", "division"):
        x = x.real.astype(complex)  # real inputs keep the oracle well conditioned
    try:
        want = oracle_outputs(against, c, x, y)
    except CheckFailed as e:
        return False, [str(e)]
    got = circuit.evaluate(c, x, y)
    scale = np.maximum(np.abs(want).max(axis=0), 1.0)
    err = float((np.abs(got - want).max(axis=0) / scale).max())
    ok = err <= rtol
    lines.append(f"max_rel_error {err:.3e}")
    lines.append(f"trials {trials}")
    return ok, lines


def cmd_check(args) -> int:
    c = circuit.load(args.circuit)
    ok, lines = check_circuit(c, args.against, args.seed, args.trials)
    sys.stdout.write("\n".join(lines + [f"result {'pass' if ok else 'FAIL'}"]) + "\n")
    return 0 if ok else 1


def cmd_fix(args) -> int:
    c = circuit.load(args.circuit)
    a = spectral.read_vector(args.a)
    lin = transforms.fix_first_argument(c, a)
    _write(circuit.dumps(lin), args.out)
    sys.stderr.write("\n".join(_audit_lines(lin)) + "\n")
    return 0


def cmd_normalize(args) -> int:
    c = transforms.bc_normalize(circuit.load(args.circuit))
    _write(circuit.dumps(c), args.out)
    return 0


def cmd_mc(args) -> int:
    e, seed = args.experiment, args.seed
    n = args.n
    if e == "lemma51":
        r = args.r or 3
        B = probability.random_orthonormal(n, r, seed)
        st = probability.mc_lemma51(B, list(range(r)), args.trials, seed)
    elif e == "lemma42":
        r = args.r or n // 2
        k = args.k or 3 * n
        F = probability.NormalStream(seed ^ 0xF0F0).complex_normals(0, 1, n * k).reshape(n, k)
        st = probability.mc_lemma42(F, r, args.trials, seed)
    elif e == "lemma43":
        st = probability.mc_lemma43(n, args.r or n // 2, args.trials, seed)
    elif e == "lemma62":
        st = probability.mc_lemma62(n, args.trials, seed, complex_case=args.complex, eps=args.eps)
    elif e == "logbounds":
        cov = [float(t) for t in args.cov.split(",")]
        if len(cov) != 3:
            raise ValueError("--cov takes 'a,b,d' for [[a, b], [b, d]]")
        st = probability.mc_log_bounds([[cov[0], cov[1]], [cov[1], cov[2]]], args.trials, seed)
    else:
        f = np.zeros(n, complex)
        f[0] = 1
        st = probability.mc_linear_comb(f, args.trials, seed)
    _write("\n".join(st.lines()) + "\n", args.out)
    return 0 if st.passed else 1


def cmd_constants(args) -> int:
    k = probability.constants()
    cf = probability.closed_form_constants()
    lines = [f"{name} {getattr(k, name):.10f} closed_form {getattr(cf, name):.10f}" for name in k._fields]
    eps, val = bounds.maximize_surrogate_coefficient()
    lines.append(f"surrogate_max {val:.10f} at eps {eps:.10f}")
    _write("\n".join(lines) + "\n", args.out)
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bcconv", description="Bounded-coefficient circuits and spectral lower bounds.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--out", help="output path (default stdout)")
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        return sp

    g = common(sub.add_parser("gen", help="generate a circuit"), seed=False)
    g.add_argument("kind", choices=sorted(generators.GENERATORS))
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, help="divisor degree (division)")
    g.add_argument("--inverse", action="store_true", help="inverse DFT")
    g.set_defaults(func=cmd_gen)

    a = sub.add_parser("audit", help="validate a circuit and list help gates")
    a.add_argument("circuit")
    a.set_defaults(func=cmd_audit)

    ev = common(sub.add_parser("eval", help="evaluate a circuit on vector files"), seed=False)
    ev.add_argument("circuit")
    ev.add_argument("--x", required=True)
    ev.add_argument("--y")
    ev.set_defaults(func=cmd_eval)

    b = common(sub.add_parser("bound", help="certified lower bounds for a matrix"), seed=False)
    b.add_argument("matrix", nargs="?")
    b.add_argument("--circulant", metavar="VECTOR")
    b.add_argument("--help-gates", type=int, default=0)
    b.add_argument("--r", type=int, help="keep only entries with this r")
    b.add_argument("--s", type=int, help="keep only entries with this s")
    b.add_argument("--format", choices=("csv", "md"), default="csv")
    b.set_defaults(func=cmd_bound)

    r = common(sub.add_parser("report", help="upper sizes against lower bounds"))
    r.add_argument("--max-n", type=int, required=True)
    r.add_argument("--format", choices=("csv", "md"), default="csv")
    r.set_defaults(func=cmd_report)

    c = common(sub.add_parser("check", help="compare a circuit with an oracle"))
    c.add_argument("circuit")
    c.add_argument("--against", choices=ORACLES, required=True)
    c.add_argument("--trials", type=int, default=CHECK_TRIALS)
    c.set_defaults(func=cmd_check)

    f = common(sub.add_parser("fix", help="fix the first argument of a bilinear circuit"), seed=False)
    f.add_argument("circuit")
    f.add_argument("--a", required=True, help="vector file")
    f.set_defaults(func=cmd_fix)

    nm = common(sub.add_parser("normalize", help="rewrite help gates as doublings"), seed=False)
    nm.add_argument("circuit")
    nm.set_defaults(func=cmd_normalize)

    m = common(sub.add_parser("mc", help="Monte-Carlo experiments"))
    m.add_argument("experiment", choices=EXPERIMENTS)
    m.add_argument("--n", type=int, default=64)
    m.add_argument("--r", type=int)
    m.add_argument("--k", type=int, help="number of forms (lemma42)")
    m.add_argument("--trials", type=int, default=10_000)
    m.add_argument("--eps", type=float, default=0.5)
    m.add_argument("--complex", action="store_true")
    m.add_argument("--cov", default="1,0,1")
    m.set_defaults(func=cmd_mc)

    k = common(sub.add_parser("constants", help="print the Gaussian constants"), seed=False)
    k.set_defaults(func=cmd_constants)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:  # CircuitError and CircuitParseError are ValueErrors
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

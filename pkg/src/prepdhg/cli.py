"""Benchmark harness: parameter sweeps, CSV/SVG emission, ratio tables.

Subcommands: game | birkhoff | emd | tvls | counterexample | check.
Sweeps run over seeds x gamma x tau cells; each cell is one independent
solve on a worker pool.  A summary CSV (byte-stable across reruns of the
same seeded config), per-run residual CSVs, a saved-iteration ratio table
against the gamma = 1 baseline, and optional SVG convergence plots are
written under the output directory.
"""

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .counterexamples import ToyDynamics, classify, eig2, rho2_boundary_scan
from .exceptions import ConfigurationError
from .metrics import DiagonalMetric, ScalarMetric, check_condition
from .operators import load_dense, load_sparse
from .problems import (birkhoff_projection, emd, game_matrix, load_grid,
                       matrix_game, random_balanced_grids,
                       random_sparse_system, tv_least_squares)

RATIO_BASELINE_GAMMA = 1.0


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def parse_number(token: str) -> float:
    """Float literal or a fraction like 4/3."""
    token = token.strip()
    if "/" in token:
        return float(Fraction(token))
    return float(token)


def parse_number_list(text: str):
    return [parse_number(t) for t in text.split(",") if t.strip()]


def parse_log_range(text: str):
    """'a:step:b' -> 10**a, 10**(a+step), ..., 10**b (log10 sweep)."""
    parts = text.split(":")
    if len(parts) == 1:
        return [10.0 ** parse_number(parts[0])]
    if len(parts) != 3:
        raise ConfigurationError(f"range must be a:step:b, got {text!r}")
    a, step, b = (parse_number(p) for p in parts)
    if step <= 0:
        raise ConfigurationError("range step must be positive")
    exps = np.arange(a, b + step * 0.5, step)
    return [float(10.0 ** e) for e in exps]


def parse_config_text(text: str) -> dict:
    """Flat key = value lines; '#' starts a comment."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {ln}: expected key = value")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def serialize_config(values: dict) -> str:
    return "".join(f"{k} = {values[k]}\n" for k in sorted(values))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _apply_config_file(parser: argparse.ArgumentParser, args):
    """Load --config file values as subcommand defaults; explicit flags win."""
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(args)
    if not known.config:
        return args
    command = next((a for a in args if not a.startswith("-")), None)
    subparsers = next(a for a in parser._actions
                      if isinstance(a, argparse._SubParsersAction))
    if command not in subparsers.choices:
        raise ConfigurationError(f"unknown subcommand {command!r}")
    sub = subparsers.choices[command]
    with open(known.config) as fh:
        values = parse_config_text(fh.read())
    dests = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, val in values.items():
        dest = key.replace("-", "_")
        if dest not in dests or dest in ("help", "config"):
            raise ConfigurationError(f"unknown config key {key!r}")
        action = dests[dest]
        if action.type is not None:
            val = action.type(val)
        elif isinstance(action.const, bool) or isinstance(action.default, bool):
            val = val.lower() in ("1", "true", "yes", "on")
        defaults[dest] = val
    sub.set_defaults(**defaults)
    return args


@dataclass
class CellResult:
    seed: int
    gamma: float
    tau: float
    iters: int
    status: str
    final_full: float
    final_half: float
    history: list
    has_gap: bool = False


def _write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_run_outputs(outdir, tag, res: CellResult, emit):
    if "csv" in emit:
        cols = ["k", "rhat_full", "rhat_half"]
        if res.has_gap:
            cols.append("gap")
        cols.append("elapsed_s")
        rows = []
        for h in res.history:
            row = [h.k, h.rhat_full, h.rhat_half]
            if res.has_gap:
                row.append(h.gap)
            row.append(h.elapsed_s)
            rows.append(row)
        _write_csv(os.path.join(outdir, f"run_{tag}.csv"), cols, rows)
    if "svg" in emit:
        ks = [h.k for h in res.history if np.isfinite(h.rhat_full) and h.rhat_full > 0]
        vs = [np.log10(h.rhat_full) for h in res.history
              if np.isfinite(h.rhat_full) and h.rhat_full > 0]
        if ks:
            write_svg(os.path.join(outdir, f"run_{tag}.svg"), ks, vs,
                      title=f"run {tag}", xlabel="iteration",
                      ylabel="log10 residual")


def write_svg(path, xs, ys, title="", xlabel="", ylabel=""):
    """Minimal polyline plot, no plotting dependency."""
    W, H, pad = 640, 480, 60
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (W - 2 * pad)

    def sy(y):
        return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)

    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
        f'<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="1.5"/>',
        f'<text x="{W / 2:.0f}" y="{H - pad / 3:.0f}" text-anchor="middle">{xlabel}</text>',
        f'<text x="{pad / 3:.0f}" y="{H / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 {pad / 3:.0f} {H / 2:.0f})">{ylabel}</text>',
        f'<text x="{W / 2:.0f}" y="{pad / 2:.0f}" text-anchor="middle">{title}</text>',
        f'<text x="{pad}" y="{H - pad + 15}" font-size="10">{x0:.3g}</text>',
        f'<text x="{W - pad}" y="{H - pad + 15}" font-size="10" text-anchor="end">{x1:.3g}</text>',
        f'<text x="{pad - 5}" y="{H - pad}" font-size="10" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{pad - 5}" y="{pad}" font-size="10" text-anchor="end">{y1:.3g}</text>',
        "</svg>",
    ]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")


def _write_summary(outdir, results):
    rows = [(r.seed, r.gamma, r.tau, r.iters, r.status, r.final_full,
             r.final_half) for r in results]
    _write_csv(os.path.join(outdir, "summary.csv"),
               ["seed", "gamma", "tau", "iters", "status",
                "final_rhat_full", "final_rhat_half"], rows)


def _write_ratio(outdir, results):
    """Saved-iteration ratio against the gamma = 1 baseline at best tau."""
    gammas = sorted({r.gamma for r in results})
    taus = sorted({r.tau for r in results})
    mean_iters = {}
    for g in gammas:
        for t in taus:
            sel = [r.iters for r in results if r.gamma == g and r.tau == t]
            if sel:
                mean_iters[(g, t)] = float(np.mean(sel))
    best = {}
    for g in gammas:
        cand = [(mean_iters[(g, t)], t) for t in taus if (g, t) in mean_iters]
        if cand:
            best[g] = min(cand)
    rows = []
    base = best.get(RATIO_BASELINE_GAMMA)
    for g in gammas:
        it, t = best[g]
        if base is None:
            ratio = float("nan")
        else:
            ratio = (base[0] - it) / base[0] * 100.0
        rows.append((g, t, it, ratio))
    _write_csv(os.path.join(outdir, "ratio.csv"),
               ["gamma", "best_tau", "iters_mean", "ratio_pct"], rows)
    return rows


def _run_cells(fn, cells, workers):
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells, chunksize=1))


def _finish_sweep(args, results, emit):
    results.sort(key=lambda r: (r.seed, r.gamma, r.tau))
    os.makedirs(args.out, exist_ok=True)
    for r in results:
        tag = f"s{r.seed}_g{_fmt(r.gamma)}_t{_fmt(r.tau)}"
        _write_run_outputs(args.out, tag, r, emit)
    _write_summary(args.out, results)
    if "ratio" in emit:
        rows = _write_ratio(args.out, results)
        for g, t, it, ratio in rows:
            print(f"gamma={g:g} best_tau={t:.6g} iters={it:.1f} ratio={ratio:.1f}%")
    diverged = [r for r in results if r.status == "diverged"]
    if diverged and not args.allow_diverge:
        print(f"{len(diverged)} run(s) diverged", file=sys.stderr)
        return 2
    return 0


# -- game -------------------------------------------------------------------

def _game_cell(params):
    (test, m, n, centered, seed, gamma, tau_tilde, tol, max_iter,
     record_every) = params
    K = game_matrix(test, seed, m, n, centered=centered)
    inst = matrix_game(K, tau_tilde, gamma, tol=tol, max_iter=max_iter,
                       record_every=record_every, record_gap=True)
    rep = inst.solve()
    last = rep.history[-1]
    return CellResult(seed, gamma, tau_tilde, rep.iters, rep.status,
                      last.rhat_full, last.rhat_half, rep.history,
                      has_gap=True)


def run_game(args):
    gammas = parse_number_list(args.gamma)
    taus = parse_log_range(args.tau_exp)
    seeds = list(range(args.seeds))
    cells = [(args.test, args.m, args.n, args.centered, s, g, t, args.tol,
              args.max_iter, args.record_every)
             for s in seeds for g in gammas for t in taus]
    results = _run_cells(_game_cell, cells, args.workers)
    return _finish_sweep(args, results, args.emit.split(","))


# -- birkhoff ---------------------------------------------------------------

def _birkhoff_cell(params):
    (n, seed, method, gamma_spec, tau_tilde, theta, tol, max_iter,
     record_every) = params
    rng = np.random.default_rng(seed)
    C = rng.random((n, n))
    C = 0.5 * (C + C.T)
    tau = tau_tilde / np.sqrt(2.0 * n)
    if gamma_spec == "tight":
        gamma = (0.75 if method == "ebalm" else 0.751) / (1.0 + tau / 2.0)
    else:
        gamma = parse_number(gamma_spec)
    inst = birkhoff_projection(C, tau, gamma, theta=theta, method=method,
                               tol=tol, max_iter=max_iter,
                               record_every=record_every)
    rep = inst.solve()
    last = rep.history[-1]
    return CellResult(seed, gamma, tau_tilde, rep.iters, rep.status,
                      last.rhat_full, last.rhat_half, rep.history)


def run_birkhoff(args):
    gammas = args.gamma.split(",")
    taus = parse_log_range(args.tau_exp)
    seeds = list(range(args.seeds))
    cells = [(args.n, s, args.method, g, t, args.theta, args.tol,
              args.max_iter, args.record_every)
             for s in seeds for g in gammas for t in taus]
    results = _run_cells(_birkhoff_cell, cells, args.workers)
    return _finish_sweep(args, results, args.emit.split(","))


# -- emd --------------------------------------------------------------------

def _emd_cell(params):
    (M, N, h, seed, rho0_path, rho1_path, method, gamma, tau, theta, tol,
     max_iter, record_every, bcd_epochs, allow) = params
    if rho0_path:
        rho0, rho1 = load_grid(rho0_path), load_grid(rho1_path)
    else:
        rho0, rho1 = random_balanced_grids(M, N, seed)
    inst = emd(rho0, rho1, h, tau, gamma, theta=theta, method=method,
               tol=tol, max_iter=max_iter, record_every=record_every,
               bcd_epochs=bcd_epochs, override=allow)
    rep = inst.solve()
    last = rep.history[-1]
    return CellResult(seed, gamma, tau, rep.iters, rep.status,
                      last.rhat_full, last.rhat_half, rep.history)


def run_emd(args):
    gammas = parse_number_list(args.gamma)
    taus = (parse_number_list(args.taus) if args.taus
            else parse_log_range(args.tau_exp))
    seeds = list(range(args.seeds))
    M, N = (int(v) for v in args.size.split(","))
    h = parse_number(args.h) if args.h else (N - 1) / 4.0
    cells = [(M, N, h, s, args.rho0, args.rho1, args.method, g, t, args.theta,
              args.tol, args.max_iter, args.record_every, args.bcd_epochs,
              args.allow_diverge)
             for s in seeds for g in gammas for t in taus]
    results = _run_cells(_emd_cell, cells, args.workers)
    return _finish_sweep(args, results, args.emit.split(","))


# -- tvls -------------------------------------------------------------------

def _tvls_cell(params):
    (M, N, mrows, density, seed, r_path, lam, gamma, tau, theta, tol,
     max_iter, record_every, bcd_epochs) = params
    n = M * N
    if r_path:
        R = load_sparse(r_path)
    else:
        R = random_sparse_system(mrows, n, density, seed)
    rng = np.random.default_rng(seed + 7919)
    x_true = rng.random(n)
    b = R.apply(x_true)
    inst = tv_least_squares(R, b, lam, (M, N), tau, gamma, theta=theta,
                            tol=tol, max_iter=max_iter,
                            record_every=record_every, bcd_epochs=bcd_epochs)
    rep = inst.solve()
    last = rep.history[-1]
    return CellResult(seed, gamma, tau, rep.iters, rep.status,
                      last.rhat_full, last.rhat_half, rep.history)


def run_tvls(args):
    gammas = parse_number_list(args.gamma)
    taus = (parse_number_list(args.taus) if args.taus
            else parse_log_range(args.tau_exp))
    seeds = list(range(args.seeds))
    M, N = (int(v) for v in args.size.split(","))
    mrows = args.m_rows or (M * N) // 2
    cells = [(M, N, mrows, args.density, s, args.r, args.lam, g, t,
              args.theta, args.tol, args.max_iter, args.record_every,
              args.bcd_epochs)
             for s in seeds for g in gammas for t in taus]
    results = _run_cells(_tvls_cell, cells, args.workers)
    return _finish_sweep(args, results, args.emit.split(","))


# -- counterexample ---------------------------------------------------------

def run_counterexample(args):
    os.makedirs(args.out, exist_ok=True)
    rows = []
    if args.kind == "bilinear":
        for prod in parse_number_list(args.taus):
            t = float(np.sqrt(prod))
            dyn = ToyDynamics("bilinear", t, prod / t)
            mu1, mu2 = eig2(dyn.G)
            res = classify(dyn, np.array([1.0, 0.0]), max_iter=args.max_iter)
            print(f"tau*sigma={prod:.12g}: eigenvalues ({mu1:.12g}, {mu2:.12g}) "
                  f"verdict={res.verdict} final_norm={res.final_norm:.6g}")
            rows.append((prod, mu1.real, mu1.imag, mu2.real, mu2.imag,
                         res.verdict, res.final_norm))
        _write_csv(os.path.join(args.out, "counterexample.csv"),
                   ["tau_sigma", "mu1_re", "mu1_im", "mu2_re", "mu2_im",
                    "verdict", "final_norm"], rows)
    else:
        tau = parse_number(args.tau)
        grid = parse_number_list(args.rho3)
        table = rho2_boundary_scan(tau, grid)
        for rho3, sigma, dom in table:
            print(f"rho3={rho3:.6g} sigma={sigma:.6g} dominant_abs={dom:.12g}")
            rows.append((rho3, sigma, dom))
        _write_csv(os.path.join(args.out, "counterexample.csv"),
                   ["rho3", "sigma", "dominant_abs"], rows)
    return 0


# -- check ------------------------------------------------------------------

def _metric_from_file(path, dim=None):
    vals = np.loadtxt(path, ndmin=1).ravel()
    if vals.size == 1:
        if dim is None:
            raise ConfigurationError("scalar metric file needs a known dimension")
        return ScalarMetric(float(vals[0]), dim)
    return DiagonalMetric(vals)


def run_check(args):
    K = load_sparse(args.k) if args.k.endswith(".mtx") else load_dense(args.k)
    M1 = _metric_from_file(args.m1, K.cols)
    M2 = _metric_from_file(args.m2, K.rows)
    sigma = np.loadtxt(args.sigma_f).ravel() if args.sigma_f else None
    report = check_condition(M1, sigma, M2, K)
    print(f"s_hat = {report.s_hat:.12g}")
    print(f"threshold = {report.threshold:.12g}")
    print(f"margin = {report.margin:.12g}")
    print(f"verdict = {report.verdict}")
    print(f"converged = {report.converged}")
    return 0


def _add_common(p):
    p.add_argument("--config", help="flat key = value file; flags override")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=1000000)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--out", default="out")
    p.add_argument("--emit", default="csv,ratio")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--record-every", type=int, default=100)
    p.add_argument("--allow-diverge", action="store_true")


def build_parser():
    ap = _Parser(prog="prepdhg", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("game", help="matrix game sweep")
    _add_common(g)
    g.add_argument("--test", type=int, default=1, help="generator recipe 1-4")
    g.add_argument("--m", type=int, default=None)
    g.add_argument("--n", type=int, default=None)
    g.add_argument("--centered", action="store_true",
                   help="zero-mean uniform for recipe 1")
    g.add_argument("--gamma", default="1.0,0.751")
    g.add_argument("--tau-exp", default="-0.7:0.01:-0.3",
                   help="log10 range a:step:b for tau_tilde")
    g.set_defaults(func=run_game, tol=1e-5)

    bk = sub.add_parser("birkhoff", help="doubly-stochastic projection sweep")
    _add_common(bk)
    bk.add_argument("--n", type=int, default=50)
    bk.add_argument("--method", choices=["ebalm", "pdhg"], default="ebalm")
    bk.add_argument("--gamma", default="1.0,tight",
                    help="comma list of values or 'tight' (= bound/(1+tau/2))")
    bk.add_argument("--tau-exp", default="0.2:0.01:0.6")
    bk.add_argument("--theta", type=float, default=1e-4)
    bk.set_defaults(func=run_birkhoff, tol=1e-8)

    em = sub.add_parser("emd", help="minimal-flux transport sweep")
    _add_common(em)
    em.add_argument("--size", default="16,16", help="grid M,N")
    em.add_argument("--h", default=None, help="grid step (default (N-1)/4)")
    em.add_argument("--rho0", default=None, help="source grid file")
    em.add_argument("--rho1", default=None, help="target grid file")
    em.add_argument("--method", choices=["sgs", "iebalm"], default="sgs")
    em.add_argument("--gamma", default="1.0,0.75")
    em.add_argument("--taus", default=None, help="comma list of tau values")
    em.add_argument("--tau-exp", default="-2:0.25:-1")
    em.add_argument("--theta", type=float, default=1e-6)
    em.add_argument("--bcd-epochs", type=int, default=2)
    em.set_defaults(func=run_emd, tol=5e-5, max_iter=200000)

    tv = sub.add_parser("tvls", help="TV-regularized least squares sweep")
    _add_common(tv)
    tv.add_argument("--size", default="16,16", help="pixel grid M,N")
    tv.add_argument("--m-rows", type=int, default=None)
    tv.add_argument("--density", type=float, default=0.05)
    tv.add_argument("--r", default=None, help="system matrix .mtx")
    tv.add_argument("--lam", type=float, default=1.0)
    tv.add_argument("--gamma", default="1.0,0.75")
    tv.add_argument("--taus", default=None)
    tv.add_argument("--tau-exp", default="-2.5:0.25:-1.5")
    tv.add_argument("--theta", type=float, default=1e-3)
    tv.add_argument("--bcd-epochs", type=int, default=2)
    tv.set_defaults(func=run_tvls, tol=5e-6)

    ce = sub.add_parser("counterexample", help="2x2 tightness certificates")
    _add_common(ce)
    ce.add_argument("--kind", choices=["bilinear", "quadratic"],
                    default="bilinear")
    ce.add_argument("--taus", default="4/3",
                    help="bilinear: comma list of tau*sigma products")
    ce.add_argument("--tau", default="1.0", help="quadratic: tau value")
    ce.add_argument("--rho3", default="0.4,0.5,0.6",
                    help="quadratic: comma list of rho3 values")
    ce.set_defaults(func=run_counterexample, max_iter=100000)

    ck = sub.add_parser("check", help="convergence-condition check")
    _add_common(ck)
    ck.add_argument("--m1", required=True, help="scalar/diagonal file")
    ck.add_argument("--m2", required=True, help="scalar/diagonal file")
    ck.add_argument("--k", required=True, help="operator file (.mtx or text)")
    ck.add_argument("--sigma-f", default=None)
    ck.set_defaults(func=run_check)
    return ap


def main(argv=None) -> int:
    args_list = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, args_list)
        args = parser.parse_args(args_list)
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 ok, 2 bad input, 3 numerical failure, 4 certification
failure, 5 verification violation.  A negative verdict is not an error.
Every output starts with a header recording version, command line, seed
and tolerances; CSV headers are '#' lines, JSON output carries a "header"
object.  Nothing time-dependent is written, so reruns are byte-identical.
"""

from __future__ import annotations

import functools
import io
import json
import math
import os
import sys

import click
import numpy as np

from . import __version__
from . import compare as CMP
from . import verify as V
from .kernels import (ConcentratedKernel, DivergenceError, PowerLawPotential, constant_kernel,
                      hard_sphere_kernel, power_law_kernel, rutherford_kernel, symmetrize)
from .numerics import DomainError, NonConvergenceError
from .spectral import HeatKernel, WeightFunction, subordinate_kernel

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_CERTIFY, EXIT_VIOLATION = 0, 2, 3, 4, 5
KERNELS = ("power-law", "rutherford", "hard-sphere", "constant", "fractional", "heat",
           "concentrated")
SUITES = ("legendre", "inequality2d", "counterexample", "gamma2", "logsobolev", "all")


def thread_count():
    """Worker cap from FISHERLAB_THREADS (default 1)."""
    raw = os.environ.get("FISHERLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise click.UsageError(f"FISHERLAB_THREADS must be an integer, got {raw!r}")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return str(x)


def _command_line(ctx):
    parts = [ctx.command_path]
    for param in ctx.command.params:
        value = ctx.params.get(param.name)
        if value is None or param.name == "out":
            continue
        if isinstance(param, click.Argument):
            parts.append(str(value))
        else:
            flag = max(param.opts, key=len)
            parts.append(f"{flag}={value}")
    return " ".join(parts)


def _finite_or_none(values):
    return [float(v) if math.isfinite(v) else None for v in values]


def _header(ctx, seed=None, **tolerances):
    return {"version": __version__, "command": _command_line(ctx), "seed": seed,
            "tolerances": {k: v for k, v in sorted(tolerances.items()) if v is not None}}


class Output:
    """Collects text and writes it with LF endings to --out or stdout."""

    def __init__(self, path):
        self.path = path
        self.buf = io.StringIO()

    def csv(self, header, columns, rows):
        self.buf.write(f"# fisherlab {header['version']}\n")
        self.buf.write(f"# command: {header['command']}\n")
        seed = "none" if header["seed"] is None else _fmt(header["seed"])
        self.buf.write(f"# seed: {seed}\n")
        tol = ", ".join(f"{k}={_fmt(v)}" for k, v in header["tolerances"].items())
        self.buf.write(f"# tolerances: {tol}\n")
        for line in header.get("extra", ()):
            self.buf.write(f"# {line}\n")
        self.buf.write(",".join(columns) + "\n")
        for r in rows:
            self.buf.write(",".join(_fmt(v) for v in r) + "\n")

    def json(self, header, payload):
        self.buf.write(json.dumps({"header": header, **payload}, sort_keys=True, indent=2,
                                  default=_fmt) + "\n")

    def flush(self):
        text = self.buf.getvalue()
        if self.path:
            with open(self.path, "w", newline="\n", encoding="utf-8") as fh:
                fh.write(text)
        else:
            click.echo(text, nl=False)


def exit_policy(numeric_code=EXIT_NUMERIC):
    """Map library exceptions onto the exit-code policy."""
    def deco(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except (click.exceptions.Exit, click.ClickException):
                raise
            except (NonConvergenceError, DivergenceError, ArithmeticError) as exc:
                click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
                sys.exit(numeric_code)
            except (DomainError, ValueError, TypeError) as exc:
                click.echo(f"error: {exc}", err=True)
                sys.exit(EXIT_INPUT)
        return wrapper
    return deco


@click.group()
@click.version_option(__version__, prog_name="fisherlab")
def main():
    """Constants, kernel comparisons and verification checks for the
    spherical inequality behind Fisher information monotonicity."""


# ---------------------------------------------------------------------------
# kernel-eval
# ---------------------------------------------------------------------------

def build_kernel(name, q=None, d=3, s=None, t=None, eps=None, theta_min=1e-3, rel_tol=1e-7):
    if name == "power-law":
        if q is None:
            raise ValueError("--q is required for the power-law kernel")
        return power_law_kernel(PowerLawPotential(q, d), theta_min=theta_min, rel_tol=rel_tol)
    if name == "rutherford":
        return rutherford_kernel(d)
    if name == "hard-sphere":
        return hard_sphere_kernel(d)
    if name == "constant":
        return constant_kernel(d)
    if name == "fractional":
        if s is None:
            raise ValueError("--s is required for the fractional kernel")
        return subordinate_kernel(WeightFunction.fractional(s), d)
    if name == "heat":
        if t is None:
            raise ValueError("--t is required for the heat kernel")
        return HeatKernel(t, d)
    if name == "concentrated":
        return ConcentratedKernel(d, 0.01 if eps is None else eps)
    raise ValueError(f"unknown kernel {name!r}")


@main.command("kernel-eval")
@click.option("--kernel", "kernel_name", type=click.Choice(KERNELS), default="power-law")
@click.option("--q", type=str, default=None, help="Potential exponent, decimal or p/q.")
@click.option("--d", type=click.IntRange(2), default=3)
@click.option("--s", type=float, default=None)
@click.option("--t", type=float, default=None, help="Heat kernel time.")
@click.option("--eps", type=float, default=None, help="Width of the concentrated kernel.")
@click.option("--grid-n", type=click.IntRange(1), default=64)
@click.option("--theta-min", type=click.FloatRange(min=0, min_open=True), default=1e-3)
@click.option("--rel-tol", type=click.FloatRange(min=0, min_open=True), default=1e-7)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@exit_policy()
def kernel_eval(ctx, kernel_name, q, d, s, t, eps, grid_n, theta_min, rel_tol, fmt, out):
    """Tabulate b(theta) and b_sym(theta) at theta = pi i / n, i = 1..n."""
    from fractions import Fraction

    kernel = build_kernel(kernel_name, None if q is None else Fraction(q), d, s, t, eps,
                          theta_min, rel_tol)
    theta = math.pi * np.arange(1, grid_n + 1) / grid_n
    with np.errstate(divide="ignore", over="ignore"):
        b = kernel(theta)
        bsym = symmetrize(kernel)(np.minimum(theta, math.pi - theta))
    header = _header(ctx, None, rel_tol=rel_tol, theta_min=theta_min, grid_n=grid_n)
    meta = kernel.describe()
    o = Output(out)
    if fmt == "csv":
        header["extra"] = [f"kernel: {json.dumps(meta, sort_keys=True, default=str)}"]
        o.csv(header, ["theta", "b", "b_sym"], zip(theta, b, bsym))
    else:
        o.json(header, {"kernel": meta, "theta": theta.tolist(), "b": _finite_or_none(b),
                        "b_sym": _finite_or_none(bsym)})
    o.flush()


# ---------------------------------------------------------------------------
# table
# ---------------------------------------------------------------------------

TABLE_COLUMNS = ["q", "two_s", "gamma", "ratio", "bound", "certified_bound", "verdict",
                 "margin", "paper_two_s", "paper_gamma", "paper_ratio", "paper_bound", "status"]


@main.command("table")
@click.argument("which", type=click.Choice(CMP.TABLES))
@click.option("--grid-n", type=click.IntRange(16), default=CMP.SCAN_POINTS,
              help="Initial points of the kernel ratio scan.")
@click.option("--rel-tol", type=click.FloatRange(min=0, min_open=True), default=1e-7,
              help="Relative tolerance of the deviation-angle table.")
@click.option("--theta-min", type=click.FloatRange(min=0, min_open=True), default=1e-3)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@exit_policy()
def table(ctx, which, grid_n, rel_tol, theta_min, fmt, out):
    """Recompute one of the published tables next to the transcribed values."""
    rows = CMP.reproduce_table(which, workers=thread_count(), scan_points=grid_n,
                               kernel_rel_tol=rel_tol, theta_min=theta_min)
    header = _header(ctx, None, rel_tol=rel_tol, theta_min=theta_min, grid_n=grid_n)
    o = Output(out)
    if fmt == "csv":
        body = []
        for r in rows:
            p = r.paper
            verdict = None if r.verdict_pass is None else ("pass" if r.verdict_pass else "fail")
            body.append([r.q, r.two_s, r.gamma, r.ratio, r.bound, r.certified_bound, verdict,
                         r.margin, p["two_s"], p["gamma"], p["ratio"], p["bound"],
                         "ok" if r.error is None else r.error.replace(",", ";")])
        o.csv(header, TABLE_COLUMNS, body)
    else:
        o.json(header, {"table": which, "rows": [vars(r) for r in rows]})
    o.flush()
    if any(r.error for r in rows):
        sys.exit(EXIT_NUMERIC)


# ---------------------------------------------------------------------------
# certify
# ---------------------------------------------------------------------------

@main.command("certify")
@click.option("--q", type=str, default=None, help="Potential exponent, decimal or p/q.")
@click.option("--d", type=click.IntRange(2), default=3)
@click.option("--kernel", "kernel_name", type=click.Choice(["power-law", "hard-sphere",
                                                             "constant"]),
              default="power-law")
@click.option("--gamma", type=float, default=None,
              help="Kinetic exponent for hard-sphere/constant kernels (default 1).")
@click.option("--reference", type=click.Choice(CMP.REFERENCES), default="auto")
@click.option("--grid-n", type=click.IntRange(16), default=CMP.SCAN_POINTS)
@click.option("--rel-tol", type=click.FloatRange(min=0, min_open=True), default=1e-7)
@click.option("--theta-min", type=click.FloatRange(min=0, min_open=True), default=1e-3)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@exit_policy(numeric_code=EXIT_CERTIFY)
def certify(ctx, q, d, kernel_name, gamma, reference, grid_n, rel_tol, theta_min, out):
    """Monotonicity verdict with route provenance and error bars (JSON)."""
    from fractions import Fraction

    header = _header(ctx, None, rel_tol=rel_tol, theta_min=theta_min, grid_n=grid_n)
    o = Output(out)
    if kernel_name == "power-law":
        if q is None:
            raise ValueError("--q is required for the power-law kernel")
        cert = CMP.certify_power_law(Fraction(q), d, reference, theta_min=theta_min,
                                     kernel_rel_tol=rel_tol, scan_points=grid_n)
        o.json(header, cert.to_dict())
    else:
        kernel = hard_sphere_kernel(d) if kernel_name == "hard-sphere" else constant_kernel(d)
        verdict, report = CMP.certify_kernel(kernel, 1.0 if gamma is None else gamma)
        o.json(header, {"kernel": kernel_name, "d": d, "verdict": verdict.to_dict(),
                        "constants": report.to_dict()})
    o.flush()


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def run_suite(suite, seed=0, lmax=20, d=None, draws=None, grid_n=None):
    """Reports of one suite as a list of CheckReport."""
    reports = []
    grid = V.SphereGrid2D(grid_n) if grid_n else V.SphereGrid2D()
    if suite in ("legendre", "all"):
        for dim in ([d] if d else range(2, 7)):
            reports.append(V.check_legendre_inequality(dim, lmax))
    if suite in ("inequality2d", "all"):
        n = draws or 200
        fam = V.TestFunctionFamily("exp-trig-poly", 2, seed).draws(n)
        for kernel, bound in ((constant_kernel(2), 2.0), (hard_sphere_kernel(2), math.sqrt(2))):
            ratios = [V.inequality_2d_ratio(kernel, f, grid)[2] for f in fam]
            worst = float(min(ratios))
            reports.append(V.CheckReport("inequality2d", n, worst, worst - bound,
                                         worst >= bound - 1e-3,
                                         {"kernel": kernel.family, "bound": bound, "seed": seed}))
    if suite in ("counterexample", "all"):
        reports.append(V.check_counterexample())
    if suite in ("gamma2", "all"):
        reports.append(V.check_gamma2(seed=seed))
    if suite in ("logsobolev", "all"):
        n = draws or 50
        heat = HeatKernel(1.0, 3)
        reports.append(V.check_log_sobolev(constant_kernel(2), max(n, 100), 2, seed))
        reports.append(V.check_log_sobolev(heat, n, 3, seed))
        reports.append(V.check_dtofisher_s2(heat, n, seed))
        probe = V.check_dtofisher_s2(heat, n, seed, inflation=1.5)
        probe.check = "dtofisher-sharpness-probe"
        probe.details["note"] = "c_K inflated; failures are information, not violations"
        probe.passed = True
        reports.append(probe)
        reports.append(V.check_elementary_chain(seed=seed))
    return reports


@main.command("verify")
@click.argument("suite", type=click.Choice(SUITES))
@click.option("--seed", type=int, default=0)
@click.option("--lmax", type=click.IntRange(1), default=20)
@click.option("--d", type=click.IntRange(2), default=None)
@click.option("--draws", type=click.IntRange(1), default=None)
@click.option("--grid-n", type=click.IntRange(16), default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@exit_policy()
def verify(ctx, suite, seed, lmax, d, draws, grid_n, out):
    """Run a verification suite and emit a JSON report."""
    reports = run_suite(suite, seed, lmax, d, draws, grid_n)
    ok = all(r.passed for r in reports)
    header = _header(ctx, seed, legendre_tol=V.LEGENDRE_TOL, lmax=lmax, grid_n=grid_n)
    o = Output(out)
    o.json(header, {"suite": suite, "pass": ok, "reports": [r.to_dict() for r in reports]})
    o.flush()
    if not ok:
        sys.exit(EXIT_VIOLATION)


if __name__ == "__main__":
    main()

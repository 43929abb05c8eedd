from __future__ import annotations

import logging
import math
import warnings
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Annotated, List, Optional

import typer

from . import funcalg, operators
from .__about__ import __version__
from .config import FC_JOB_COUNT, FC_MAX_TERMS, FC_REPORT_DIR, InvalidEnvironmentVariable, validate_positive_int_env_var
from .exceptions import FractionalCalculusError, InvalidParams, NumericalFailure, TruncationWarning
from .fc_util import console, fmt_float, grid, print_and_log, table_to_csv, table_to_json, write_output
from .funcalg import MLSeries
from .mlf import PrabhakarParams, SeriesControl, prabhakar_e_terms
from .operators import NthLevelSpec, SampledFn
from .solvers import heat, ivp
from .verify import SUITES, SuiteReport, run_suite, write_report

"""
Parameters:
- FC_MAX_TERMS will be read from env var $FC_MAX_TERMS or .env file and caps every series
- functions are given as a named function (--function power:r=0.5, exp:a=1, sin:w=2)
  or as an ML series (--series '{"alpha": ..., "delta": ..., "terms": [...]}' or --series @file.json)
- verbose turns on logging
- debug turns on logging and sets the logging level to debug
"""

log = logging.getLogger("prabhakarcalculus")

app = typer.Typer(add_completion=False, help="Prabhakar fractional calculus: special functions, operators, solvers")


class OutputFormat(str, Enum):
    csv = "csv"
    json = "json"


class Operator(str, Enum):
    integral = "integral"
    pr_derivative = "pr-derivative"
    nth_level = "nth-level"


@dataclass(slots=True)
class CliConfig:
    subcommand: str
    out: Path | None
    format: OutputFormat
    tol: float | None
    seed: int = 0

    def series_control(self) -> SeriesControl:
        # Read at invocation so FC_MAX_TERMS set after import still applies
        max_terms = validate_positive_int_env_var("FC_MAX_TERMS", FC_MAX_TERMS)
        if self.tol is None:
            return SeriesControl(max_terms=max_terms).assert_valid()
        return SeriesControl(abs_tol=0.0, rel_tol=self.tol, max_terms=max_terms).assert_valid()

    def emit(self, header, rows, metadata: dict | None = None) -> None:
        rows = list(rows)
        text = table_to_json(header, rows, metadata) if self.format == OutputFormat.json else table_to_csv(header, rows)
        write_output(text, self.out)


def _setup_logging(verbose: bool, debug: bool) -> None:
    # CLI debug parameter sets log level to info or debug
    loglevel = logging.INFO
    if debug:
        loglevel = logging.DEBUG
        verbose = True

    logging.basicConfig(format=' %(asctime)s - %(name)s: %(message)s', datefmt='%H:%M:%S', level=loglevel)

    # Verbose sets whether logs are shown to the user at all.
    if not verbose:
        logging.disable()
    else:
        logging.disable(logging.NOTSET)
        for name in ("prabhakarcalculus.mlf", "prabhakarcalculus.funcalg", "prabhakarcalculus.operators"):
            logging.getLogger(name).setLevel(loglevel)


@contextmanager
def _exit_codes():
    """Map library errors to exit codes: 2 invalid input, 3 numerical failure."""
    try:
        yield
    except (InvalidParams, InvalidEnvironmentVariable) as exc:
        print_and_log(log, str(exc), logging.ERROR)
        raise typer.Exit(code=2) from exc
    except NumericalFailure as exc:
        print_and_log(log, f"{type(exc).__name__}: {exc}", logging.ERROR)
        raise typer.Exit(code=3) from exc


def _read_series(series: str) -> MLSeries:
    if series.startswith("@"):
        try:
            series = Path(series[1:]).read_text(encoding="utf-8")
        except OSError as exc:
            raise InvalidParams(f"could not read series file: {exc}") from exc
    return MLSeries.from_json(series)


def _parse_function(function: str, T: float) -> SampledFn:
    kind, _, arguments = function.partition(":")
    params = {}
    for argument in filter(None, arguments.split(",")):
        name, _, value = argument.partition("=")
        try:
            params[name.strip()] = float(value)
        except ValueError as exc:
            raise InvalidParams(f"bad function parameter {argument!r}") from exc
    return operators.named_function(kind.strip(), T, **params)


def _spec(
    alpha: float, beta: float, gamma: float, delta: float, beta_i: list[float] | None, theta_i: list[float] | None
) -> NthLevelSpec:
    if not beta_i and not theta_i:
        # Default to the Riemann-Liouville first level
        return NthLevelSpec.riemann_liouville(alpha, beta, gamma, delta)
    return NthLevelSpec(alpha, beta, gamma, delta, tuple(beta_i or ()), tuple(theta_i or ())).assert_valid()


# Shared options
Alpha = Annotated[float, typer.Option(help="Mittag-Leffler exponent alpha > 0")]
Beta = Annotated[float, typer.Option(help="Order beta")]
Gamma = Annotated[float, typer.Option(help="Upper parameter gamma")]
Delta = Annotated[float, typer.Option(help="Argument scale delta")]
BetaI = Annotated[Optional[List[float]], typer.Option("--beta-i", help="Level orders, repeat once per level")]
ThetaI = Annotated[Optional[List[float]], typer.Option("--theta-i", help="Level types in [0, 1], repeat per level")]
XFrom = Annotated[float, typer.Option(help="First grid point")]
XTo = Annotated[float, typer.Option(help="Last grid point")]
XSteps = Annotated[int, typer.Option(help="Number of grid points")]
Tol = Annotated[Optional[float], typer.Option(help="Relative tolerance override")]
Format = Annotated[OutputFormat, typer.Option("--format", help="Output format")]
Out = Annotated[Optional[Path], typer.Option(help="Output file, stdout when omitted")]
Verbose = Annotated[bool, typer.Option(help="Verbose logging")]
Debug = Annotated[bool, typer.Option(hidden=True)]


@app.callback()
def main() -> None:
    console.print(f"[blue] Prabhakar Calculus {__version__} [/]")


@app.command("eval-mlf")
def eval_mlf(
    alpha: Alpha = 1.0,
    beta: Beta = 1.0,
    gamma: Gamma = 1.0,
    z: Annotated[Optional[List[float]], typer.Option(help="Argument, repeat for several")] = None,
    z_from: Annotated[float, typer.Option(help="First argument of a grid")] = 0.0,
    z_to: Annotated[float, typer.Option(help="Last argument of a grid")] = 1.0,
    z_steps: Annotated[int, typer.Option(help="Number of grid arguments")] = 11,
    tol: Tol = None,
    output_format: Format = OutputFormat.csv,
    out: Out = None,
    verbose: Verbose = False,
    debug: Debug = False,
):
    """Evaluate E^gamma_{alpha,beta}(z). Failures are flagged per row."""
    _setup_logging(verbose, debug)
    cli = CliConfig("eval-mlf", out, output_format, tol)
    with _exit_codes():
        ctl = cli.series_control()
        PrabhakarParams(alpha, beta, gamma).assert_valid()
        arguments = z if z else grid(z_from, z_to, z_steps)
        rows = []
        for argument in arguments:
            try:
                result = prabhakar_e_terms(alpha, beta, gamma, argument, ctl)
                rows.append((argument, result.value, result.terms_used, "Cancellation" if result.cancelled else ""))
            except FractionalCalculusError as exc:
                rows.append((argument, math.nan, getattr(exc, "terms_used", None) or 0, type(exc).__name__))
        metadata = {"alpha": alpha, "beta": beta, "gamma": gamma, "max_terms": ctl.max_terms, "rel_tol": ctl.rel_tol}
        cli.emit(("z", "value", "terms_used", "flag"), rows, metadata)


@app.command("apply")
def apply(
    op: Annotated[Operator, typer.Option(help="Operator to apply")] = Operator.integral,
    function: Annotated[Optional[str], typer.Option(help="Named function, e.g. power:r=0.5")] = None,
    series: Annotated[Optional[str], typer.Option(help="ML series JSON, or @path to a JSON file")] = None,
    alpha: Alpha = 1.0,
    beta: Beta = 0.5,
    gamma: Gamma = 0.0,
    delta: Delta = 0.0,
    beta_i: BetaI = None,
    theta_i: ThetaI = None,
    x_from: XFrom = 0.1,
    x_to: XTo = 1.0,
    x_steps: XSteps = 10,
    tol: Tol = None,
    output_format: Format = OutputFormat.csv,
    out: Out = None,
    verbose: Verbose = False,
    debug: Debug = False,
):
    """Apply an operator on a grid, by the exact ML-series path and by quadrature."""
    _setup_logging(verbose, debug)
    cli = CliConfig("apply", out, output_format, tol)
    with _exit_codes():
        ctl = cli.series_control()
        if (function is None) == (series is None):
            raise InvalidParams("give exactly one of --function and --series")
        xs = grid(x_from, x_to, x_steps)
        T = max(xs)
        exact_input: MLSeries | None = None
        if series is not None:
            exact_input = _read_series(series)
            alpha, delta = exact_input.alpha, exact_input.delta
            sampled = SampledFn.from_series(exact_input, T, ctl)
        else:
            sampled = _parse_function(function, T)
            kind, _, _ = function.partition(":")
            if kind.strip() == "power":
                r = float(function.partition("r=")[2].split(",")[0] or 1.0)
                exact_input = funcalg.from_power(r, alpha, delta)

        params = PrabhakarParams(alpha, beta, gamma, delta).assert_valid()
        if op == Operator.integral:
            exact = funcalg.prabhakar_integrate(exact_input, beta, gamma) if exact_input else None

            def numeric(x: float) -> float:
                return operators.prabhakar_integral_quad(sampled, params, x, ctl)

        elif op == Operator.pr_derivative:
            exact = funcalg.pr_derivative(exact_input, beta, gamma) if exact_input else None

            def numeric(x: float) -> float:
                return operators.pr_derivative_series(sampled, params, x, ctl)

        else:
            spec = _spec(alpha, beta, gamma, delta, beta_i, theta_i)
            exact = funcalg.nth_level_derivative(exact_input, spec) if exact_input else None

            def numeric(x: float) -> float:
                return operators.nth_level_derivative_quad(sampled, spec, x, ctl)

        rows = []
        for x in xs:
            exact_value = funcalg.evaluate(exact, x, ctl) if exact is not None else None
            quad_value = numeric(x)
            difference = abs(exact_value - quad_value) if exact_value is not None else None
            rows.append((x, exact_value, quad_value, difference))
        metadata = {"op": op.value, "alpha": alpha, "beta": beta, "gamma": gamma, "delta": delta}
        if exact is not None:
            metadata["exact"] = exact.to_dict()
        cli.emit(("x", "exact", "quad", "defect"), rows, metadata)


@app.command("solve-ivp")
def solve_ivp(
    config: Annotated[Path, typer.Option(help="IVP problem JSON")],
    lam: Annotated[Optional[float], typer.Option("--lambda", help="Override the problem's lambda")] = None,
    x_from: XFrom = 0.1,
    x_to: XTo = 1.0,
    x_steps: XSteps = 10,
    i_max: Annotated[int, typer.Option(help="Truncation of the lambda series")] = 40,
    tol: Tol = None,
    output_format: Format = OutputFormat.csv,
    out: Out = None,
    verbose: Verbose = False,
    debug: Debug = False,
):
    """Solve D y = lambda y + f with RL initial data, with the operator residual per row."""
    _setup_logging(verbose, debug)
    cli = CliConfig("solve-ivp", out, output_format, tol)
    with _exit_codes():
        ctl = cli.series_control()
        problem = ivp.IVPProblem.from_file(config)
        if lam is not None:
            problem = ivp.IVPProblem(
                problem.spec, lam, problem.forcing, problem.initial_values, problem.uniform_initial_data
            ).assert_valid()
        xs = grid(x_from, x_to, x_steps)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", TruncationWarning)
            solution = ivp.solve_ivp(problem, i_max=i_max, x_max=max(xs), ctl=ctl)
        for warning in caught:
            print_and_log(log, str(warning.message), logging.WARNING)
        rows = []
        for x in xs:
            residual = ivp.ivp_residual(solution, problem, x, ctl).residual
            rows.append((x, ivp.evaluate_ivp(solution, x, ctl), residual))
        metadata = {
            "i_max": i_max,
            "c_k": [fmt_float(c) for c in solution.c_k],
            "warnings": [str(w.message) for w in caught],
        }
        cli.emit(("x", "y", "residual"), rows, metadata)


@app.command("solve-heat")
def solve_heat(
    config: Annotated[Path, typer.Option(help="Heat problem JSON")],
    t: Annotated[Optional[List[float]], typer.Option(help="Output time, repeat for several")] = None,
    i_max: Annotated[int, typer.Option(help="Default truncation of each mode series")] = 40,
    job_count: Annotated[int, typer.Option(help="Number of CPU workers. Default is all but one core.")] = FC_JOB_COUNT,
    output_format: Format = OutputFormat.csv,
    out: Out = None,
    verbose: Verbose = False,
    debug: Debug = False,
):
    """Solve the time-fractional heat equation; emits the field as (x, t, u) rows."""
    _setup_logging(verbose, debug)
    cli = CliConfig("solve-heat", out, output_format, None)
    with _exit_codes():
        ctl = cli.series_control()
        problem = heat.HeatProblem.from_file(config)
        times = t or problem.times or [0.5]
        field = heat.solve_heat(problem, times, i_max=i_max, ctl=ctl, job_count=job_count, progress=verbose)
        metadata = {"cutoffs": [fmt_float(c) for c in field.cutoffs], "grid_points": problem.grid_points}
        cli.emit(("x", "t", "u"), field.rows(), metadata)


@app.command("verify")
def verify(
    suite: Annotated[str, typer.Option(help=f"One of {', '.join(SUITES)} or all")] = "all",
    seed: Annotated[int, typer.Option(help="Corpus seed")] = 0,
    cases: Annotated[int, typer.Option(help="Cases per suite")] = 25,
    tol: Annotated[Optional[float], typer.Option(help="Defect tolerance override")] = None,
    job_count: Annotated[int, typer.Option(help="Number of CPU workers. Default is all but one core.")] = FC_JOB_COUNT,
    output_format: Format = OutputFormat.csv,
    out: Out = None,
    report_dir: Annotated[bool, typer.Option(help=f"Also write the report under {FC_REPORT_DIR}")] = False,
    verbose: Verbose = False,
    debug: Debug = False,
):
    """Run verification suites of the operator identities. Exits 4 if any case fails."""
    _setup_logging(verbose, debug)
    cli = CliConfig("verify", out, output_format, tol, seed)
    with _exit_codes():
        suites = SUITES if suite == "all" else (suite,)
        reports = [run_suite(name, seed, cases, tol, job_count, progress=verbose) for name in suites]
        rows = [row for report in reports for row in report.rows()]
        metadata = {
            "seed": seed,
            "suites": {r.suite: {"tolerance": r.tolerance, "failures": r.failures} for r in reports},
            "defect": "|lhs - rhs| / (1 + max(|lhs|, |rhs|))",
        }
        cli.emit(SuiteReport.HEADER, rows, metadata)
        if report_dir:
            for report in reports:
                path = write_report(report, FC_REPORT_DIR, cli.format.value)
                log.info(f"suite {report.suite} report written to {path}")

    failed = [report for report in reports if not report.passed]
    for report in failed:
        print_and_log(log, f"suite {report.suite}: {report.failures} failing cases", logging.ERROR)
    if failed:
        raise typer.Exit(code=4)
    console.print(f"[green] {len(reports)} suites passed")


def run() -> None:
    try:
        app()
    except KeyboardInterrupt as exc:
        raise typer.Exit(-1) from exc


if __name__ == "__main__":
    run()

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from . import funcalg, operators
from .exceptions import FractionalCalculusError, InvalidParams, TruncationWarning
from .fc_util import fmt_float, table_to_csv, table_to_json
from .funcalg import MLSeries, MLTerm
from .operators import NthLevelSpec
from .solvers import heat, ivp
from .typing_utils import ValueRange

if TYPE_CHECKING:
    from collections.abc import Callable
    from pathlib import Path
    from typing import Any, TypeAlias

    # (parameters, lhs, rhs, note); a non-empty note fails the case
    CaseOutcome: TypeAlias = tuple[dict[str, Any], float, float, str]

log = logging.getLogger(__name__)
log.setLevel(logging.WARNING)

SUITE_TOLERANCES = {
    "semigroup": 1e-10,
    "inversion": 1e-6,
    "thm31": 1e-6,
    "reductions": 1e-6,
    "ivp_residual": 1e-5,
    "heat_mode": 1e-5,
}
SUITES = tuple(SUITE_TOLERANCES)

# Draws are multiples of 1/256 so parameter sums stay exact in binary64
DYADIC_STEPS = 256
MAX_DRAWS = 1000

ALPHA_RANGE = ValueRange(0.25, 1.75)
BETA_RANGE = ValueRange(0.0, 1.5)
GAMMA_RANGE = ValueRange(-2.0, 2.0)
DELTA_RANGE = ValueRange(-1.0, 1.0)
COEFF_RANGE = ValueRange(-2.0, 2.0)
# The lambda series of the solvers converge fast enough at 40 terms only in this narrower box
SOLVER_BETA_RANGE = ValueRange(0.5, 0.875)
SOLVER_GAMMA_RANGE = ValueRange(-0.25, 0.25)
SOLVER_DELTA_RANGE = ValueRange(-0.5, 0.5)
EVALUATION_POINTS = (0.25, 0.5, 1.0)


def dyadic(rng: np.random.Generator, value_range: ValueRange, open_low: bool = False) -> float:
    steps = round((value_range.hi - value_range.lo) * DYADIC_STEPS)
    k = int(rng.integers(1 if open_low else 0, steps + 1))
    value = value_range.lo + k / DYADIC_STEPS
    # A width that is not a multiple of the step rounds up past hi
    if not value_range.contains(value):
        raise InvalidParams(f"dyadic draw {value} outside [{value_range.lo}, {value_range.hi}]")
    return value


def draw_spec(
    rng: np.random.Generator,
    levels: tuple[int, ...] = (1, 2, 3),
    beta_range: ValueRange = BETA_RANGE,
    gamma_range: ValueRange = GAMMA_RANGE,
    delta_range: ValueRange = DELTA_RANGE,
    single_initial_value: bool = False,
) -> NthLevelSpec:
    n = int(rng.choice(levels))
    alpha = dyadic(rng, ALPHA_RANGE)
    beta = dyadic(rng, beta_range)
    share = math.floor((n - beta) / n * DYADIC_STEPS) / DYADIC_STEPS
    if share < 0:
        raise InvalidParams("derivative order exceeds the level count")
    beta_i = tuple(dyadic(rng, ValueRange(0.0, share)) for _ in range(n))
    theta_i = tuple(dyadic(rng, ValueRange(0.0, 1.0)) for _ in range(n))
    spec = NthLevelSpec(alpha, beta, dyadic(rng, gamma_range), dyadic(rng, delta_range), beta_i, theta_i)
    if single_initial_value and spec.initial_count != 1:
        raise InvalidParams("needs beta + s_n < 1")
    return spec.assert_valid()


def draw_series(rng: np.random.Generator, alpha: float, delta: float, mu_range: ValueRange, count: int = 3) -> MLSeries:
    terms = [
        MLTerm(dyadic(rng, COEFF_RANGE, open_low=True), dyadic(rng, mu_range), dyadic(rng, GAMMA_RANGE))
        for _ in range(count)
    ]
    series = MLSeries.canonical(alpha, delta, terms)
    if not series.terms:
        raise InvalidParams("drawn series cancelled to zero")
    return series


def _worst(points, sides: Callable[[float], tuple[float, float]]) -> tuple[float, float, float]:
    """(x, lhs, rhs) at the point with the largest normalized defect."""
    worst = None
    for x in points:
        lhs, rhs = sides(x)
        if worst is None or not defect(lhs, rhs) <= defect(worst[1], worst[2]):
            worst = (x, lhs, rhs)
    return worst


def defect(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / (1 + max(abs(lhs), abs(rhs)))


def semigroup_case(rng: np.random.Generator) -> CaseOutcome:
    alpha = dyadic(rng, ALPHA_RANGE)
    delta = dyadic(rng, DELTA_RANGE)
    f = draw_series(rng, alpha, delta, ValueRange(0.25, 3.0))
    beta1, beta2 = (dyadic(rng, ValueRange(0.0, 2.0), open_low=True) for _ in range(2))
    gamma1, gamma2 = (dyadic(rng, GAMMA_RANGE) for _ in range(2))
    sequential = funcalg.prabhakar_integrate(funcalg.prabhakar_integrate(f, beta1, gamma1), beta2, gamma2)
    combined = funcalg.prabhakar_integrate(f, beta1 + beta2, gamma1 + gamma2)
    points = [dyadic(rng, ValueRange(0.0, 2.0), open_low=True) for _ in range(10)]
    x, lhs, rhs = _worst(points, lambda x: (funcalg.evaluate(sequential, x), funcalg.evaluate(combined, x)))
    params = {
        "f": f.to_dict(),
        "beta1": beta1,
        "beta2": beta2,
        "gamma1": gamma1,
        "gamma2": gamma2,
        "x": x,
    }
    return params, lhs, rhs, "" if sequential == combined else "term lists differ"


def _inversion_input(rng: np.random.Generator, spec: NthLevelSpec) -> MLSeries:
    rho = spec.beta + spec.s_n
    f = draw_series(rng, spec.alpha, spec.delta, ValueRange(rho + 0.25, rho + 2.0), count=2)
    if spec.s_n > 0 and rng.random() < 0.5:
        # Pure power at the kernel exponent: its initial value is the only nonzero one
        f = funcalg.add(f, MLSeries.canonical(spec.alpha, spec.delta, [MLTerm(dyadic(rng, COEFF_RANGE), rho, 0.0)]))
    return f


def inversion_case(rng: np.random.Generator) -> CaseOutcome:
    spec = draw_spec(rng, beta_range=ValueRange(1 / DYADIC_STEPS, BETA_RANGE.hi))
    f = _inversion_input(rng, spec)
    x, lhs, rhs = _worst(EVALUATION_POINTS, lambda x: operators.inversion_sides(f, spec, x))
    return {"spec": spec.to_dict(), "f": f.to_dict(), "x": x}, lhs, rhs, ""


def thm31_case(rng: np.random.Generator) -> CaseOutcome:
    spec = draw_spec(rng)
    f = _inversion_input(rng, spec)
    derivative = funcalg.nth_level_derivative(f, spec)

    def sides(x: float) -> tuple[float, float]:
        return funcalg.evaluate(derivative, x), operators.theorem31_decomposition(f, spec, x).total

    x, lhs, rhs = _worst(EVALUATION_POINTS, sides)
    return {"spec": spec.to_dict(), "f": f.to_dict(), "x": x}, lhs, rhs, ""


def reductions_case(rng: np.random.Generator) -> CaseOutcome:
    note = ""
    if rng.random() < 0.5:
        beta = dyadic(rng, ValueRange(0.0, 1.0), open_low=True)
        if beta == 1.0:
            raise InvalidParams("Hilfer reduction needs beta < 1")
        theta = dyadic(rng, ValueRange(0.0, 1.0))
        gamma = dyadic(rng, GAMMA_RANGE)
        spec = NthLevelSpec.hilfer(dyadic(rng, ALPHA_RANGE), beta, gamma, dyadic(rng, DELTA_RANGE), theta)
        if operators.inversion_kernels(spec) != operators.hilfer_prabhakar_inversion_kernels(
            spec.alpha, beta, gamma, theta
        ):
            note = "Hilfer-Prabhakar kernels differ"
    else:
        spec = draw_spec(rng)
    # Collapse the kernels: gamma = 0 or delta = 0
    if rng.random() < 0.5:
        spec = NthLevelSpec(spec.alpha, spec.beta, 0.0, spec.delta, spec.beta_i, spec.theta_i)
    else:
        spec = NthLevelSpec(spec.alpha, spec.beta, spec.gamma, 0.0, spec.beta_i, spec.theta_i)
    r = dyadic(rng, ValueRange(0.0, 2.5))
    if not r + 1 > spec.beta + spec.s_n:
        raise InvalidParams("power below the regular range")
    derivative = funcalg.nth_level_derivative(funcalg.from_power(r, spec.alpha, spec.delta), spec)

    def sides(x: float) -> tuple[float, float]:
        return funcalg.evaluate(derivative, x), math.gamma(r + 1) / math.gamma(r + 1 - spec.beta) * x ** (r - spec.beta)

    x, lhs, rhs = _worst(EVALUATION_POINTS, sides)
    return {"spec": spec.to_dict(), "r": r, "x": x}, lhs, rhs, note


def ivp_residual_case(rng: np.random.Generator) -> CaseOutcome:
    spec = draw_spec(
        rng,
        levels=(1, 2),
        beta_range=SOLVER_BETA_RANGE,
        gamma_range=SOLVER_GAMMA_RANGE,
        delta_range=SOLVER_DELTA_RANGE,
        single_initial_value=True,
    )
    forcing = None
    if rng.random() < 0.5:
        forcing = draw_series(rng, spec.alpha, spec.delta, ValueRange(1.0, 2.5), count=1)
    problem = ivp.IVPProblem(spec, dyadic(rng, ValueRange(-1.0, 1.0)), forcing, (dyadic(rng, COEFF_RANGE),))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        solution = ivp.solve_ivp(problem, i_max=40)
    derivative = funcalg.nth_level_derivative(solution.total, spec)

    def sides(x: float) -> tuple[float, float]:
        rhs = problem.lam * funcalg.evaluate(solution.total, x)
        if forcing is not None:
            rhs += funcalg.evaluate(forcing, x)
        return funcalg.evaluate(derivative, x), rhs

    x, lhs, rhs = _worst((0.25, 0.5, 0.875), sides)
    initial = funcalg.initial_value(solution.total, spec.beta + spec.s_n - 1)
    note = "" if abs(initial - problem.initial_values[0]) <= 1e-8 else f"initial value defect {initial!r}"
    params = {
        "spec": spec.to_dict(),
        "lambda": problem.lam,
        "forcing": forcing.to_dict() if forcing is not None else None,
        "a0": problem.initial_values[0],
        "x": x,
    }
    return params, lhs, rhs, note


def heat_mode_case(rng: np.random.Generator) -> CaseOutcome:
    spec = draw_spec(
        rng,
        levels=(1, 2),
        beta_range=SOLVER_BETA_RANGE,
        gamma_range=SOLVER_GAMMA_RANGE,
        delta_range=SOLVER_DELTA_RANGE,
        single_initial_value=True,
    )
    k_tilde = dyadic(rng, ValueRange(1 / 16, 0.25))
    omega = dyadic(rng, ValueRange(0.0, 2.0))
    grid = heat.spatial_grid(8.0, 16)
    problem = heat.HeatProblem(spec, k_tilde, 8.0, 16, heat.initial_profile("gaussian", {}, grid))
    t, lhs, rhs = _worst(EVALUATION_POINTS, lambda t: heat.heat_mode_residual(problem, omega, t))
    return {"spec": spec.to_dict(), "k_tilde": k_tilde, "omega": omega, "t": t}, lhs, rhs, ""


CASES: dict[str, Callable[[np.random.Generator], CaseOutcome]] = {
    "semigroup": semigroup_case,
    "inversion": inversion_case,
    "thm31": thm31_case,
    "reductions": reductions_case,
    "ivp_residual": ivp_residual_case,
    "heat_mode": heat_mode_case,
}


@dataclass(slots=True)
class CaseResult:
    case: int
    params: dict
    lhs: float
    rhs: float
    defect: float
    passed: bool
    note: str = ""


def run_case(suite: str, seed: int, index: int, tolerance: float) -> CaseResult:
    """One case, its own generator seeded by (seed, index). Inadmissible draws are redrawn."""
    rng = np.random.default_rng([seed, index])
    draw = CASES[suite]
    try:
        for attempt in range(MAX_DRAWS):
            try:
                params, lhs, rhs, note = draw(rng)
                break
            except InvalidParams as exc:
                log.debug(f"{suite} case {index}: draw {attempt} rejected: {exc}")
        else:
            raise InvalidParams(f"no admissible draw in {MAX_DRAWS} attempts")
    except FractionalCalculusError as exc:
        return CaseResult(index, {}, math.nan, math.nan, math.inf, False, f"{type(exc).__name__}: {exc}")
    case_defect = defect(lhs, rhs)
    passed = case_defect <= tolerance and not note
    log.debug(f"{suite} case {index}: defect {case_defect:.3e}")
    return CaseResult(index, params, lhs, rhs, case_defect, passed, note)


@dataclass(slots=True)
class SuiteReport:
    suite: str
    seed: int
    tolerance: float
    results: list[CaseResult] = field(default_factory=list)

    HEADER = ("suite", "case", "params", "lhs", "rhs", "defect", "passed", "note")

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.results)

    @property
    def failures(self) -> int:
        return sum(not result.passed for result in self.results)

    @property
    def max_defect(self) -> float:
        return max((result.defect for result in self.results), default=0.0)

    def rows(self):
        for r in self.results:
            params = json.dumps(r.params, sort_keys=True)
            yield (self.suite, r.case, params, r.lhs, r.rhs, r.defect, "true" if r.passed else "false", r.note)

    def to_csv(self) -> str:
        return table_to_csv(self.HEADER, self.rows())

    def to_json(self) -> str:
        metadata = {
            "suite": self.suite,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "cases": len(self.results),
            "failures": self.failures,
            "max_defect": fmt_float(self.max_defect),
            "defect": "|lhs - rhs| / (1 + max(|lhs|, |rhs|))",
        }
        return table_to_json(self.HEADER, self.rows(), metadata)


def run_suite(
    suite: str,
    seed: int = 0,
    cases: int = 25,
    tolerance: float | None = None,
    job_count: int = 1,
    progress: bool = False,
) -> SuiteReport:
    """Run a verification suite. Results come back ordered by case index whatever the worker count."""
    if suite not in CASES:
        raise InvalidParams(f"unknown suite {suite!r}, expected one of {', '.join(SUITES)}")
    if cases < 1:
        raise InvalidParams("a suite needs at least one case")
    tolerance = SUITE_TOLERANCES[suite] if tolerance is None else tolerance
    report = SuiteReport(suite, seed, tolerance)
    with tqdm(total=cases, dynamic_ncols=True, unit="case", colour="BLUE", disable=not progress) as pbar:
        with Parallel(n_jobs=job_count, return_as="generator") as parallel:
            for result in parallel(delayed(run_case)(suite, seed, index, tolerance) for index in range(cases)):
                report.results.append(result)
                pbar.update(1)
    return report


def write_report(report: SuiteReport, out_dir: Path, fmt: str = "csv") -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{report.suite}_seed{report.seed}.{fmt}"
    with open(path, "w", encoding="utf-8", newline="") as file:
        file.write(report.to_json() if fmt == "json" else report.to_csv())
    return path

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .. import funcalg
from ..exceptions import InvalidParams, TruncationWarning
from ..funcalg import MLSeries, MLTerm
from ..mlf import E2Params, SeriesControl, bivariate_e2, pochhammer
from ..operators import NthLevelSpec, SampledFn, convolve

if TYPE_CHECKING:
    from pathlib import Path

log = logging.getLogger(__name__)
log.setLevel(logging.WARNING)


@dataclass(frozen=True, slots=True)
class IVPProblem:
    """
    D y = lambda y + f(x) for the nth-level derivative D, with RL initial data
    a_k = (RL D^(beta + s_n - k - 1) y)(0+), k = 0 .. A-1.
    """

    spec: NthLevelSpec
    lam: float
    forcing: MLSeries | None = None
    initial_values: tuple[float, ...] = ()
    # Read every higher-j initial value of kernel k as a_k
    uniform_initial_data: bool = False

    def assert_valid(self) -> IVPProblem:
        self.spec.assert_valid()
        if not self.spec.beta > 0:
            raise InvalidParams("the IVP needs a positive derivative order beta")
        if not math.isfinite(self.lam):
            raise InvalidParams(f"lambda must be finite, got {self.lam}")
        if len(self.initial_values) > self.spec.initial_count:
            raise InvalidParams(
                f"{len(self.initial_values)} initial values given, the problem takes {self.spec.initial_count}"
            )
        if not all(math.isfinite(a) for a in self.initial_values):
            raise InvalidParams("initial values must be finite")
        if self.forcing is not None:
            if (self.forcing.alpha, self.forcing.delta) != (self.spec.alpha, self.spec.delta):
                raise InvalidParams("forcing must share alpha and delta with the operator")
            if not self.forcing.is_member():
                raise InvalidParams("forcing is not locally integrable")
        return self

    @property
    def padded_initial_values(self) -> tuple[float, ...]:
        missing = self.spec.initial_count - len(self.initial_values)
        return tuple(self.initial_values) + (0.0,) * missing

    def to_json(self) -> str:
        return json.dumps(
            {
                **self.spec.to_dict(),
                "lambda": self.lam,
                "forcing": self.forcing.to_dict() if self.forcing is not None else None,
                "a": list(self.initial_values),
                "uniform_initial_data": self.uniform_initial_data,
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(problem_json: str) -> IVPProblem:
        """
        Flat problem: {alpha, beta, gamma, delta, beta_i, theta_i, lambda, forcing, a}. The operator may also sit
        under "spec" and the initial data under "initial_values".
        """
        try:
            data = json.loads(problem_json)
            spec = NthLevelSpec.from_dict(data.get("spec", data))
            forcing = MLSeries.from_dict(data["forcing"]) if data.get("forcing") else None
            initial_values = data["a"] if "a" in data else data.get("initial_values", [])
            return IVPProblem(
                spec,
                float(data["lambda"]),
                forcing,
                tuple(float(a) for a in initial_values),
                bool(data.get("uniform_initial_data", False)),
            ).assert_valid()
        except json.JSONDecodeError as exc:
            raise InvalidParams(f"IVP problem is not valid JSON: {exc}") from exc
        except (AttributeError, KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidParams):
                raise
            raise InvalidParams(f"malformed IVP problem: {exc}") from exc

    @staticmethod
    def from_file(path: Path) -> IVPProblem:
        with open(path, encoding="utf-8") as file:
            return IVPProblem.from_json(file.read())


@dataclass(frozen=True, slots=True)
class IVPSolution:
    series_i_max: int
    lam: float
    # Homogeneous and forcing pieces of each outer power lambda^i
    homogeneous_terms: tuple[MLSeries, ...]
    particular: tuple[MLSeries, ...]
    c_k: tuple[float, ...]
    total: MLSeries = field(init=False)

    def __post_init__(self) -> None:
        pieces = [term for series in (*self.homogeneous_terms, *self.particular) for term in series.terms]
        first = self.homogeneous_terms[0]
        object.__setattr__(self, "total", MLSeries.canonical(first.alpha, first.delta, pieces))

    @property
    def homogeneous(self) -> MLSeries:
        first = self.homogeneous_terms[0]
        return MLSeries.canonical(
            first.alpha, first.delta, (t for series in self.homogeneous_terms for t in series.terms)
        )

    def outer_term(self, i: int) -> MLSeries:
        """The lambda^i contribution (homogeneous plus forcing)."""
        outer = self.homogeneous_terms[i]
        if self.particular:
            outer = funcalg.add(outer, self.particular[i])
        return outer

    def ratio_estimate(self, x: float, ctl: SeriesControl | None = None) -> float:
        """Ratio |T_imax| / |T_imax-1| of the last two outer terms at x; below 1 inside the convergence radius."""
        last = abs(funcalg.evaluate(self.outer_term(self.series_i_max), x, ctl))
        before = abs(funcalg.evaluate(self.outer_term(self.series_i_max - 1), x, ctl))
        if before == 0.0:
            return 0.0 if last == 0.0 else math.inf
        return last / before

    def tail_bound(self, x: float, ctl: SeriesControl | None = None) -> float:
        last = abs(funcalg.evaluate(self.outer_term(self.series_i_max), x, ctl))
        ratio = self.ratio_estimate(x, ctl)
        return last * ratio / (1 - ratio) if ratio < 1 else math.inf


def initial_constants(problem: IVPProblem) -> tuple[float, ...]:
    """c_k from the initial data: a_k, or the j-sum of the kernel weights when every higher-j value reads a_k."""
    spec = problem.spec
    values = problem.padded_initial_values
    if not problem.uniform_initial_data:
        return values
    constants = []
    for k, a_k in enumerate(values):
        weight = math.fsum(
            pochhammer(-spec.kernel_gamma, j) * spec.delta**j / math.factorial(j)
            for j in range(spec.initial_terms(k) + 1)
        )
        constants.append(weight * a_k)
    return tuple(constants)


def solve_ivp(
    problem: IVPProblem, i_max: int = 40, x_max: float = 1.0, ctl: SeriesControl | None = None
) -> IVPSolution:
    """
    Series solution y = sum_i lambda^i [sum_k c_k x^(beta(i+1)+s_n-k-1) E^{i gamma n + gamma(n-Theta_n)}_{alpha,...}
    + E^{alpha, beta(i+1), gamma n (i+1), delta} f]. Warns with TruncationWarning when the tail at x_max is large.
    """
    problem.assert_valid()
    if i_max < 1:
        raise InvalidParams(f"i_max must be at least 1, got {i_max}")
    spec = problem.spec
    c_k = initial_constants(problem)
    homogeneous_terms = []
    particular = []
    for i in range(i_max + 1):
        power = problem.lam**i
        homogeneous_terms.append(
            MLSeries.canonical(
                spec.alpha,
                spec.delta,
                (
                    MLTerm(power * c, (i + 1) * spec.beta + spec.s_n - k, i * spec.composite_gamma + spec.kernel_gamma)
                    for k, c in enumerate(c_k)
                    if c
                ),
            )
        )
        if problem.forcing is not None:
            image = funcalg.prabhakar_integrate(problem.forcing, (i + 1) * spec.beta, (i + 1) * spec.composite_gamma)
            particular.append(funcalg.scale(image, power))
    solution = IVPSolution(i_max, problem.lam, tuple(homogeneous_terms), tuple(particular), c_k)

    if x_max > 0 and problem.lam != 0:
        ctl = ctl or SeriesControl()
        tail = solution.tail_bound(x_max, ctl)
        scale = abs(funcalg.evaluate(solution.total, x_max, ctl)) if solution.total.terms else 0.0
        if tail > 1e-10 * max(1.0, scale):
            warnings.warn(
                TruncationWarning(f"lambda series truncated at i_max={i_max}, tail at x={x_max} about {tail:.3e}", tail)
            )
    return solution


def evaluate_ivp(solution: IVPSolution, x: float, ctl: SeriesControl | None = None) -> float:
    return funcalg.evaluate(solution.total, x, ctl)


@dataclass(frozen=True, slots=True)
class IVPResidual:
    residual: float
    initial_defects: tuple[float, ...]


def ivp_residual(
    solution: IVPSolution, problem: IVPProblem, x: float, ctl: SeriesControl | None = None
) -> IVPResidual:
    """Operator residual D y - lambda y - f at x, plus the defect of each initial value (RL limits at 0+)."""
    spec = problem.spec
    y = solution.total
    derivative = funcalg.nth_level_derivative(y, spec)
    residual = funcalg.evaluate(derivative, x, ctl) - problem.lam * funcalg.evaluate(y, x, ctl)
    if problem.forcing is not None:
        residual -= funcalg.evaluate(problem.forcing, x, ctl)
    defects = []
    for k, a_k in enumerate(problem.padded_initial_values):
        value = funcalg.initial_value(y, spec.beta + spec.s_n - k - 1)
        defects.append(abs(value - a_k))
    return IVPResidual(residual, tuple(defects))


def picard_ivp(problem: IVPProblem, iterations: int = 10) -> MLSeries:
    """Fixed-point iteration y <- y_0 + lambda E^{alpha, beta, gamma n, delta} y, run inside the algebra."""
    problem.assert_valid()
    spec = problem.spec
    start = MLSeries.canonical(
        spec.alpha,
        spec.delta,
        (MLTerm(c, spec.beta + spec.s_n - k, spec.kernel_gamma) for k, c in enumerate(initial_constants(problem)) if c),
    )
    if problem.forcing is not None:
        start = funcalg.add(start, funcalg.prabhakar_integrate(problem.forcing, spec.beta, spec.composite_gamma))
    y = start
    for _ in range(iterations):
        integral = funcalg.prabhakar_integrate(y, spec.beta, spec.composite_gamma)
        y = funcalg.add(start, funcalg.scale(integral, problem.lam))
    return y


def ivp_e2_form(
    solution: IVPSolution, problem: IVPProblem, x: float, ctl: SeriesControl | None = None
) -> float | None:
    """
    The solution through the bivariate E2 function: each homogeneous kernel k becomes
    c_k x^(beta+s_n-k-1) Gamma(a) E2(lambda x^beta, delta x^alpha) with a = gamma (n - Theta_n), and the forcing
    part a convolution with an E2 kernel, b = gamma n. None unless a and b are positive.
    """
    spec = problem.spec
    a = spec.kernel_gamma
    b = spec.composite_gamma
    # Positive upper parameters keep every Gamma(a + b m) finite and the E2 exponents nonnegative
    if not (a > 0 and b > 0):
        return None
    if not (math.isfinite(x) and x > 0):
        raise InvalidParams(f"evaluation point must be positive, got {x}")

    lam_arg = problem.lam * x**spec.beta
    delta_arg = spec.delta * x**spec.alpha
    total = 0.0
    for k, c in enumerate(solution.c_k):
        if not c:
            continue
        params = E2Params(
            gamma1=a,
            gamma2=1.0,
            alpha1=b,
            alpha2=0.0,
            alpha3=spec.beta,
            alpha4=b,
            beta1=1.0,
            beta2=spec.alpha,
            beta3=1.0,
            delta1=spec.beta + spec.s_n - k,
            delta2=a,
            delta3=1.0,
        )
        total += c * x ** (spec.beta + spec.s_n - k - 1) * math.gamma(a) * bivariate_e2(params, lam_arg, delta_arg, ctl)

    if problem.forcing is not None:
        kernel_params = E2Params(
            gamma1=b,
            gamma2=1.0,
            alpha1=b,
            alpha2=0.0,
            alpha3=spec.beta,
            alpha4=b,
            beta1=1.0,
            beta2=spec.alpha,
            beta3=1.0,
            delta1=spec.beta,
            delta2=b,
            delta3=1.0,
        )
        gamma_b = math.gamma(b)

        def kernel(u: float) -> float:
            return u ** (spec.beta - 1) * gamma_b * bivariate_e2(
                kernel_params, problem.lam * u**spec.beta, spec.delta * u**spec.alpha, ctl
            )

        forcing = SampledFn.from_series(problem.forcing, x, ctl)
        total += convolve(forcing, kernel, spec.beta - 1, x)
    return total

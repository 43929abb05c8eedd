from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .exceptions import InvalidParams, LeavesAlgebra
from .mlf import SeriesControl, is_pole, prabhakar_e, rgamma

if TYPE_CHECKING:
    from collections.abc import Iterable, Iterator
    from typing import TypeAlias

    from .operators import NthLevelSpec

    # (exponent e, weight w) of a pure power component w x^(e-1) / Gamma(e)
    Component: TypeAlias = tuple[float, float]

log = logging.getLogger(__name__)
log.setLevel(logging.WARNING)

# Exponents this close to an integer are treated as that integer
SNAP_TOL = 1e-12


def snap(value: float) -> float:
    nearest = round(value)
    if value != nearest and abs(value - nearest) <= SNAP_TOL * max(1.0, abs(value)):
        return float(nearest)
    return value


@dataclass(frozen=True, slots=True)
class MLTerm:
    """c x^(mu-1) E^gamma_{alpha,mu}(delta x^alpha), with alpha and delta carried by the owning MLSeries."""

    coeff: float
    mu: float
    gamma: float = 0.0

    def assert_valid(self) -> MLTerm:
        if not (math.isfinite(self.coeff) and math.isfinite(self.mu) and math.isfinite(self.gamma)):
            raise InvalidParams(f"non-finite ML term: {self}")
        return self

    def __str__(self) -> str:
        return f"{self.coeff!r},{self.mu!r},{self.gamma!r}"

    @staticmethod
    def from_str(term_str: str) -> MLTerm:
        parts = term_str.split(",")
        if len(parts) not in (2, 3):
            raise InvalidParams(f"ML term must be 'coeff,mu[,gamma]', got {term_str!r}")
        try:
            return MLTerm(*(float(part) for part in parts)).assert_valid()
        except ValueError as exc:
            raise InvalidParams(f"could not parse ML term {term_str!r}") from exc

    def key(self) -> tuple[float, float]:
        return (self.mu, self.gamma)


@dataclass(frozen=True, slots=True)
class MLSeries:
    """Finite sum of ML terms sharing alpha and delta. Build with MLSeries.canonical."""

    alpha: float
    delta: float
    terms: tuple[MLTerm, ...] = ()

    @classmethod
    def canonical(cls, alpha: float, delta: float, terms: Iterable[MLTerm] = ()) -> MLSeries:
        """Merge terms with identical (mu, gamma), drop zero coefficients and zero functions, sort by (mu, gamma)."""
        if not (math.isfinite(alpha) and alpha > 0 and math.isfinite(delta)):
            raise InvalidParams(f"invalid series parameters alpha={alpha}, delta={delta}")
        merged: dict[tuple[float, float], list[float]] = defaultdict(list)
        for term in terms:
            term.assert_valid()
            merged[(snap(term.mu), snap(term.gamma))].append(term.coeff)
        kept = []
        for (mu, gamma), coeffs in sorted(merged.items()):
            term = MLTerm(math.fsum(coeffs), mu, gamma)
            if term.coeff == 0.0 or _is_zero_function(term, alpha, delta):
                continue
            kept.append(term)
        return cls(float(alpha), float(delta), tuple(kept))

    def assert_valid(self) -> MLSeries:
        if self != MLSeries.canonical(self.alpha, self.delta, self.terms):
            raise InvalidParams("ML series is not in canonical form")
        return self

    def is_member(self) -> bool:
        """True if every term is locally integrable near 0, i.e. the series lies in the algebra."""
        try:
            for term in self.terms:
                vanishing_components(term, self.alpha, self.delta)
        except LeavesAlgebra:
            return False
        return True

    def __len__(self) -> int:
        return len(self.terms)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "delta": self.delta,
            "terms": [{"coeff": t.coeff, "mu": t.mu, "gamma": t.gamma} for t in self.terms],
        }

    @staticmethod
    def from_dict(data: dict) -> MLSeries:
        try:
            terms = [MLTerm(float(t["coeff"]), float(t["mu"]), float(t.get("gamma", 0.0))) for t in data["terms"]]
            return MLSeries.canonical(float(data["alpha"]), float(data.get("delta", 0.0)), terms)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidParams(f"malformed ML series: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_json(series_json: str) -> MLSeries:
        try:
            data = json.loads(series_json)
        except json.JSONDecodeError as exc:
            raise InvalidParams(f"ML series is not valid JSON: {exc}") from exc
        return MLSeries.from_dict(data)


def _components(term: MLTerm, alpha: float, delta: float, upto: float) -> Iterator[Component]:
    """
    Pure power components of a term, in order of increasing exponent, up to exponent `upto`.

    A term expands as sum_k w_k x^(alpha k + mu - 1) / Gamma(alpha k + mu), w_k = c (gamma)_k delta^k / k!.
    """
    weight = term.coeff
    k = 0
    while True:
        exponent = snap(alpha * k + term.mu)
        if exponent > upto + SNAP_TOL:
            return
        yield exponent, weight
        k += 1
        weight *= (term.gamma + k - 1) * delta / k
        if weight == 0.0:
            return


def _is_zero_function(term: MLTerm, alpha: float, delta: float) -> bool:
    # Finitely many components only when delta == 0 or gamma is a nonpositive integer
    if not (delta == 0.0 or term.gamma == 0.0 or is_pole(term.gamma)):
        return False
    if not is_pole(term.mu):
        return False
    last = term.mu + alpha * max(0.0, -term.gamma)
    return all(weight == 0.0 or is_pole(exponent) for exponent, weight in _components(term, alpha, delta, last))


def vanishing_components(term: MLTerm, alpha: float, delta: float) -> list[Component]:
    """
    Components with exponent <= 0. They must be zero functions (exponent at a Gamma pole), otherwise the term is
    not locally integrable and LeavesAlgebra is raised.
    """
    vanishing = []
    for exponent, weight in _components(term, alpha, delta, 0.0):
        if weight == 0.0:
            continue
        if not is_pole(exponent):
            raise LeavesAlgebra(f"term {term} has a non-integrable component x^{exponent - 1:g}")
        vanishing.append((exponent, weight))
    return vanishing


def _check_compatible(f: MLSeries, alpha: float, delta: float) -> None:
    if f.alpha != alpha or f.delta != delta:
        raise InvalidParams(f"series (alpha={f.alpha}, delta={f.delta}) does not match operator ({alpha}, {delta})")


def _assert_member(f: MLSeries, what: str) -> None:
    for term in f.terms:
        try:
            vanishing_components(term, f.alpha, f.delta)
        except LeavesAlgebra as exc:
            raise LeavesAlgebra(f"{what}: {exc}") from exc


def _kernel_image(f: MLSeries, order: float, gamma_op: float) -> MLSeries:
    """
    Apply the Prabhakar integral of the given order (>= 0) and kernel gamma.

    The formal image maps (c, mu, g) to (c, mu + order, g + gamma_op). Zero-function components of terms with
    mu <= 0 have zero image, so their formal images are subtracted.
    """
    if order == 0.0 and (gamma_op == 0.0 or f.delta == 0.0):
        return f
    terms = []
    for term in f.terms:
        for exponent, weight in vanishing_components(term, f.alpha, f.delta):
            terms.append(MLTerm(-weight, exponent + order, gamma_op))
        terms.append(MLTerm(term.coeff, term.mu + order, term.gamma + gamma_op))
    return MLSeries.canonical(f.alpha, f.delta, terms)


def _formal_shift(f: MLSeries, shift: float) -> MLSeries:
    # Pointwise exact for x > 0: d/dx [x^(mu-1) E^g_{a,mu}] = x^(mu-2) E^g_{a,mu-1}
    return MLSeries.canonical(f.alpha, f.delta, (MLTerm(t.coeff, t.mu + shift, t.gamma) for t in f.terms))


def from_power(r: float, alpha: float, delta: float = 0.0) -> MLSeries:
    """x^r as the single term (Gamma(r+1), r+1, 0)."""
    if not r > -1:
        raise InvalidParams(f"x^{r} is not locally integrable near 0")
    return MLSeries.canonical(alpha, delta, [MLTerm(math.gamma(r + 1), r + 1, 0.0)])


def scale(f: MLSeries, c: float) -> MLSeries:
    return MLSeries.canonical(f.alpha, f.delta, (MLTerm(c * t.coeff, t.mu, t.gamma) for t in f.terms))


def add(f: MLSeries, g: MLSeries) -> MLSeries:
    _check_compatible(g, f.alpha, f.delta)
    return MLSeries.canonical(f.alpha, f.delta, f.terms + g.terms)


def evaluate(f: MLSeries, x: float, ctl: SeriesControl | None = None) -> float:
    if not (math.isfinite(x) and x > 0):
        raise InvalidParams(f"evaluation point must be positive, got {x}")
    z = f.delta * x**f.alpha
    return math.fsum(t.coeff * x ** (t.mu - 1) * prabhakar_e(f.alpha, t.mu, t.gamma, z, ctl) for t in f.terms)


def leading_exponent(f: MLSeries) -> float:
    """Exponent p of the most singular nonzero power x^p in f near 0 (0 for the empty series)."""
    lowest = math.inf
    for term in f.terms:
        for exponent, weight in _components(term, f.alpha, f.delta, term.mu + f.alpha * 64):
            if weight != 0.0 and not is_pole(exponent):
                lowest = min(lowest, exponent - 1)
                break
    return 0.0 if lowest == math.inf else lowest


def prabhakar_integrate(f: MLSeries, beta: float, gamma_op: float) -> MLSeries:
    """Prabhakar integral with kernel x^(beta-1) E^gamma_op_{alpha,beta}(delta x^alpha), alpha and delta from f."""
    if not (math.isfinite(beta) and beta > 0):
        raise InvalidParams(f"integral order must be positive, got {beta}")
    if not math.isfinite(gamma_op):
        raise InvalidParams(f"kernel gamma must be finite, got {gamma_op}")
    return _kernel_image(f, beta, gamma_op)


def differentiate(f: MLSeries, n: int) -> MLSeries:
    if n < 1 or int(n) != n:
        raise InvalidParams(f"derivative order must be a positive integer, got {n}")
    for term in f.terms:
        if not term.mu > n:
            raise LeavesAlgebra(f"term {term} needs mu > {n} for an in-algebra derivative")
    return _formal_shift(f, -n)


def formal_derivative(f: MLSeries, k: int) -> MLSeries:
    """k-th classical derivative for x > 0, without the in-algebra requirement of differentiate."""
    if k < 0 or int(k) != k:
        raise InvalidParams(f"derivative order must be a nonnegative integer, got {k}")
    return _formal_shift(f, -k) if k else f


def rl_differintegral(f: MLSeries, rho: float) -> MLSeries:
    """Riemann-Liouville integral of order rho > 0, identity at 0, derivative of order -rho for rho < 0."""
    if rho > 0:
        return _kernel_image(f, rho, 0.0)
    if rho == 0:
        return f
    m = math.floor(-rho) + 1
    return _formal_shift(_kernel_image(f, m + rho, 0.0), -m)


def nth_level_derivative(f: MLSeries, spec: NthLevelSpec) -> MLSeries:
    """
    Exact nth-level Prabhakar derivative: the inner Prabhakar integral of order n - beta - s_n, n classical
    derivatives, then the outer Prabhakar integral of order s_n.
    """
    spec.assert_valid()
    _check_compatible(f, spec.alpha, spec.delta)
    _assert_member(f, "nth-level derivative input")
    inner = _kernel_image(f, spec.inner_order, spec.inner_gamma)
    shifted = _formal_shift(inner, -spec.n)
    result = _kernel_image(shifted, spec.outer_order, spec.outer_gamma)
    _assert_member(result, "nth-level derivative")
    return result


def pr_derivative(f: MLSeries, beta: float, gamma: float) -> MLSeries:
    """Prabhakar derivative of Riemann-Liouville type, d^m/dx^m of the integral of order m - beta with -gamma."""
    if not beta >= 0:
        raise InvalidParams(f"derivative order must be nonnegative, got {beta}")
    m = math.floor(beta) + 1
    return _formal_shift(_kernel_image(f, m - beta, -gamma), -m)


def pc_derivative(f: MLSeries, beta: float, gamma: float) -> MLSeries:
    """Prabhakar derivative of Caputo type: the integral of order m - beta with -gamma of f^(m)."""
    if not beta > 0:
        raise InvalidParams(f"derivative order must be positive, got {beta}")
    m = math.ceil(beta)
    return _kernel_image(_formal_shift(f, -m), m - beta, -gamma)


def ph_derivative(f: MLSeries, beta: float, gamma: float, theta: float) -> MLSeries:
    """Hilfer-Prabhakar derivative of type theta in [0, 1]."""
    if not 0 <= theta <= 1:
        raise InvalidParams(f"theta must lie in [0, 1], got {theta}")
    if not beta >= 0:
        raise InvalidParams(f"derivative order must be nonnegative, got {beta}")
    m = math.floor(beta) + 1
    inner = _kernel_image(f, (1 - theta) * (m - beta), -gamma * (1 - theta))
    return _kernel_image(_formal_shift(inner, -m), theta * (m - beta), -gamma * theta)


def initial_value(f: MLSeries, nu: float) -> float:
    """
    Limit at 0+ of the Riemann-Liouville differintegral of order nu (a derivative for nu > 0).

    Returns +-inf when the limit diverges.
    """
    g = rl_differintegral(f, -nu)
    contributions: dict[float, list[float]] = defaultdict(list)
    for term in g.terms:
        for exponent, weight in _components(term, g.alpha, g.delta, 1.0):
            value = weight * rgamma(exponent)
            if value != 0.0:
                contributions[exponent].append(value)
    for exponent in sorted(contributions):
        if exponent >= 1.0:
            break
        values = contributions[exponent]
        total = math.fsum(values)
        if abs(total) > 1e-13 * math.fsum(abs(v) for v in values):
            return math.copysign(math.inf, total)
    return math.fsum(contributions.get(1.0, []))


def first_level_power_derivative(
    r: float,
    alpha: float,
    beta: float,
    gamma: float,
    delta: float,
    theta: float,
    x: float,
    ctl: SeriesControl | None = None,
) -> float:
    """
    Closed form of the first-level (Hilfer type theta) Prabhakar derivative of x^r for r + 1 > beta + s,
    s = theta (1 - beta): Gamma(r+1) sum_k (-gamma theta)_k delta^k / k! x^(r-beta+alpha k)
    E^{-gamma (1-theta)}_{alpha, r+1-beta+alpha k}(delta x^alpha).
    """
    ctl = (ctl or SeriesControl()).assert_valid()
    if not (r > -1 and 0 <= theta <= 1 and 0 <= beta < 1 and x > 0):
        raise InvalidParams("need r > -1, theta in [0, 1], beta in [0, 1) and x > 0")
    z = delta * x**alpha
    total = 0.0
    weight = 1.0
    small_run = 0
    for k in range(ctl.max_terms):
        if k > 0:
            weight *= (-gamma * theta + k - 1) * z / k
            if weight == 0.0:
                break
        term = weight * x ** (r - beta) * prabhakar_e(alpha, r + 1 - beta + alpha * k, -gamma * (1 - theta), z, ctl)
        total += term
        if abs(term) <= ctl.threshold(total):
            small_run += 1
            if small_run >= 2:
                break
        else:
            small_run = 0
    return math.gamma(r + 1) * total

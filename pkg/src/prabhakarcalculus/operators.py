from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numpy.polynomial import Chebyshev
from numpy.polynomial import polynomial as P
from scipy import integrate

from . import funcalg
from .config import FC_QUAD_EPSABS, FC_QUAD_EPSREL, FC_QUAD_LIMIT
from .exceptions import (
    InsufficientSmoothness,
    InterpolationFailure,
    InvalidParams,
    LeavesAlgebra,
    QuadratureFailure,
)
from .funcalg import MLSeries, MLTerm, snap
from .mlf import PrabhakarParams, SeriesControl, pochhammer, prabhakar_coefficients, prabhakar_e, rgamma

if TYPE_CHECKING:
    from collections.abc import Callable
    from typing import TypeAlias

    RealFn: TypeAlias = Callable[[float], float]

log = logging.getLogger(__name__)
log.setLevel(logging.WARNING)

# Order of the RL derivative a SampledFn may need at most in the series formulas
_MAX_DERIVATIVES = 4


@dataclass(frozen=True, slots=True)
class NthLevelSpec:
    """
    Parameters of the nth-level Prabhakar derivative.

    The operator is the Prabhakar integral of order s_n with -gamma Theta_n, applied after n classical derivatives
    of the Prabhakar integral of order n - beta - s_n with -gamma (n - Theta_n).
    """

    alpha: float
    beta: float
    gamma: float
    delta: float
    beta_i: tuple[float, ...]
    theta_i: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta_i", tuple(float(b) for b in self.beta_i))
        object.__setattr__(self, "theta_i", tuple(float(t) for t in self.theta_i))

    @property
    def n(self) -> int:
        return len(self.beta_i)

    @property
    def s_n(self) -> float:
        return math.fsum(self.beta_i)

    @property
    def theta_sum(self) -> float:
        return math.fsum(self.theta_i)

    @property
    def inner_order(self) -> float:
        order = snap(self.n - self.beta - self.s_n)
        return 0.0 if abs(order) <= funcalg.SNAP_TOL else order

    @property
    def inner_gamma(self) -> float:
        return -self.gamma * (self.n - self.theta_sum)

    @property
    def outer_order(self) -> float:
        return self.s_n

    @property
    def outer_gamma(self) -> float:
        return -self.gamma * self.theta_sum

    @property
    def composite_gamma(self) -> float:
        """Upper parameter of the Prabhakar integral that inverts this derivative."""
        return self.gamma * self.n

    @property
    def kernel_gamma(self) -> float:
        return self.gamma * (self.n - self.theta_sum)

    @property
    def initial_count(self) -> int:
        """A = floor(beta + s_n) + 1 initial values."""
        return math.floor(snap(self.beta + self.s_n)) + 1

    def initial_terms(self, k: int) -> int:
        """B_k = floor((beta + s_n - k) / alpha), the last j in the correction sum for kernel k."""
        return math.floor(snap((self.beta + self.s_n - k) / self.alpha))

    def assert_valid(self) -> NthLevelSpec:
        """Checks the bounds of all the elements, throws InvalidParams if invalid"""
        scalars = (self.alpha, self.beta, self.gamma, self.delta, *self.beta_i, *self.theta_i)
        if not all(math.isfinite(v) for v in scalars):
            raise InvalidParams(f"non-finite nth-level parameters: {self}")
        if self.n < 1 or len(self.theta_i) != self.n:
            raise InvalidParams(f"need n >= 1 levels with matching beta_i and theta_i, got {self}")
        if not self.alpha > 0:
            raise InvalidParams(f"alpha must be positive, got {self.alpha}")
        if self.beta < 0:
            raise InvalidParams(f"derivative order beta must be nonnegative, got {self.beta}")
        if min(self.beta_i) < 0:
            raise InvalidParams(f"level orders beta_i must be nonnegative, got {self.beta_i}")
        if not all(0 <= theta <= 1 for theta in self.theta_i):
            raise InvalidParams(f"level types theta_i must lie in [0, 1], got {self.theta_i}")
        if self.n - self.beta - self.s_n < -funcalg.SNAP_TOL:
            raise InvalidParams(f"inner order n - beta - s_n = {self.n - self.beta - self.s_n} is negative")
        if not 0 <= self.beta + self.s_n <= 1:
            log.warning(f"beta + s_n = {self.beta + self.s_n} lies outside [0, 1]")
        if self.theta_sum > 1:
            log.warning(f"Theta_n = {self.theta_sum} exceeds 1")
        return self

    @classmethod
    def hilfer(cls, alpha: float, beta: float, gamma: float, delta: float, theta: float) -> NthLevelSpec:
        """First-level derivative of Hilfer type theta, s_1 = theta (1 - beta)."""
        if not 0 <= beta <= 1:
            raise InvalidParams(f"the Hilfer reduction needs beta in [0, 1], got {beta}")
        return cls(alpha, beta, gamma, delta, (theta * (1 - beta),), (theta,)).assert_valid()

    @classmethod
    def riemann_liouville(cls, alpha: float, beta: float, gamma: float, delta: float) -> NthLevelSpec:
        return cls.hilfer(alpha, beta, gamma, delta, 0.0)

    @classmethod
    def caputo(cls, alpha: float, beta: float, gamma: float, delta: float) -> NthLevelSpec:
        return cls.hilfer(alpha, beta, gamma, delta, 1.0)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "delta": self.delta,
            "beta_i": list(self.beta_i),
            "theta_i": list(self.theta_i),
        }

    @staticmethod
    def from_dict(data: dict) -> NthLevelSpec:
        try:
            return NthLevelSpec(
                float(data["alpha"]),
                float(data["beta"]),
                float(data.get("gamma", 0.0)),
                float(data.get("delta", 0.0)),
                tuple(data["beta_i"]),
                tuple(data["theta_i"]),
            ).assert_valid()
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidParams):
                raise
            raise InvalidParams(f"malformed nth-level spec: {exc}") from exc


@dataclass(frozen=True, slots=True)
class SampledFn:
    """
    A real function on (0, T] given as a callable.

    f(x) x^(-singularity_exponent) is bounded near 0. `derivatives` optionally holds f', f'', ... as SampledFn.
    """

    fn: RealFn
    T: float
    singularity_exponent: float = 0.0
    derivatives: tuple[SampledFn, ...] = ()

    def __call__(self, x: float) -> float:
        return float(self.fn(x))

    def assert_valid(self) -> SampledFn:
        if not (math.isfinite(self.T) and self.T > 0):
            raise InvalidParams(f"domain end T must be positive, got {self.T}")
        if not self.singularity_exponent > -1:
            raise InvalidParams(f"singularity exponent must exceed -1, got {self.singularity_exponent}")
        return self

    def derivative(self, k: int) -> SampledFn:
        if k == 0:
            return self
        if len(self.derivatives) < k:
            raise InsufficientSmoothness(f"function carries {len(self.derivatives)} derivatives, {k} needed")
        return self.derivatives[k - 1]

    @staticmethod
    def from_series(f: MLSeries, T: float, ctl: SeriesControl | None = None) -> SampledFn:
        def sampled(series: MLSeries) -> RealFn:
            return lambda x: funcalg.evaluate(series, x, ctl) if x > 0 else funcalg.initial_value(series, 0.0)

        derivatives = []
        for k in range(1, _MAX_DERIVATIVES + 1):
            df = funcalg.formal_derivative(f, k)
            exponent = funcalg.leading_exponent(df)
            if exponent <= -1:
                break
            derivatives.append(SampledFn(sampled(df), T, min(exponent, 0.0)))
        return SampledFn(sampled(f), T, min(funcalg.leading_exponent(f), 0.0), tuple(derivatives)).assert_valid()


def _power(x: float, r: float) -> float:
    if x > 0:
        return x**r
    if r == 0:
        return 1.0
    return 0.0 if r > 0 else math.inf


def named_function(kind: str, T: float = 1.0, **params: float) -> SampledFn:
    """Test functions: power (x^r), exp (e^(a x)) and sin (sin(w x)), each with classical derivatives."""
    if kind == "power":
        r = float(params.get("r", 1.0))
        if not r > -1:
            raise InvalidParams(f"x^{r} is not locally integrable near 0")
        derivatives = []
        coeff = 1.0
        for k in range(1, _MAX_DERIVATIVES + 1):
            coeff *= r - k + 1
            exponent = r - k
            if coeff == 0.0:
                derivatives.append(SampledFn(lambda x: 0.0, T))
            elif exponent > -1:
                derivatives.append(SampledFn(lambda x, c=coeff, e=exponent: c * _power(x, e), T, min(exponent, 0.0)))
            else:
                break
        return SampledFn(lambda x: _power(x, r), T, min(r, 0.0), tuple(derivatives)).assert_valid()
    if kind == "exp":
        a = float(params.get("a", 1.0))
        derivatives = tuple(SampledFn(lambda x, k=k: a**k * math.exp(a * x), T) for k in range(1, _MAX_DERIVATIVES + 1))
        return SampledFn(lambda x: math.exp(a * x), T, 0.0, derivatives).assert_valid()
    if kind == "sin":
        w = float(params.get("w", 1.0))
        derivatives = tuple(
            SampledFn(lambda x, k=k: w**k * math.sin(w * x + k * math.pi / 2), T)
            for k in range(1, _MAX_DERIVATIVES + 1)
        )
        return SampledFn(lambda x: math.sin(w * x), T, 0.0, derivatives).assert_valid()
    raise InvalidParams(f"unknown function kind {kind!r}, expected power, exp or sin")


class PrabhakarKernel:
    """u^(beta-1) E^gamma_{alpha,beta}(delta u^alpha) for 0 < u <= u_max, from cached Taylor coefficients."""

    def __init__(self, p: PrabhakarParams, u_max: float, ctl: SeriesControl | None = None) -> None:
        self.params = p.assert_valid()
        if p.gamma == 0.0 or p.delta == 0.0:
            coefficients = np.array([rgamma(p.beta)])
        else:
            coefficients = prabhakar_coefficients(p.alpha, p.beta, p.gamma, abs(p.delta) * u_max**p.alpha, ctl)
        # Drop leading structural zeros so the power prefactor carries the true singularity
        lead = 0
        while lead < len(coefficients) - 1 and coefficients[lead] == 0.0:
            lead += 1
        self.lead = lead
        self.coefficients = coefficients[lead:]
        self.exponent = p.beta - 1 + p.alpha * lead
        if self.coefficients[0] == 0.0:
            self.exponent = 0.0

    def __call__(self, u: float) -> float:
        p = self.params
        z = p.delta * u**p.alpha
        return p.delta**self.lead * u**self.exponent * float(P.polyval(z, self.coefficients))


def _quad(integrand: RealFn, what: str, epsabs: float, epsrel: float) -> float:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        value, abserr = integrate.quad(integrand, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel, limit=FC_QUAD_LIMIT)
    if not math.isfinite(value) or (caught and abserr > 1e-7 * max(1.0, abs(value))):
        raise QuadratureFailure(f"quadrature of {what} failed: value {value}, error estimate {abserr}", abserr=abserr)
    if caught:
        log.debug(f"quadrature of {what} accepted with error estimate {abserr:.2e}: {caught[0].message}")
    return value


def convolve(
    f: SampledFn,
    kernel: RealFn,
    kernel_exponent: float,
    x: float,
    epsabs: float = FC_QUAD_EPSABS,
    epsrel: float = FC_QUAD_EPSREL,
) -> float:
    """
    int_0^x kernel(x - t) f(t) dt, split at x/2.

    The left half substitutes t = (x/2) w^(1/(1+p)) to absorb f ~ t^p, the right half substitutes
    x - t = (x/2) v^(1/(1+q)) to absorb kernel(u) ~ u^q.
    """
    half = x / 2
    a = 1 + min(f.singularity_exponent, 0.0)
    b = 1 + min(kernel_exponent, 0.0)

    def left(w: float) -> float:
        if w <= 0.0:
            return 0.0
        t = half * w ** (1 / a)
        if t <= 0.0:
            return 0.0
        return f(t) * kernel(x - t) * half / a * w ** (1 / a - 1)

    def right(v: float) -> float:
        if v <= 0.0:
            return 0.0
        u = half * v ** (1 / b)
        return f(x - u) * kernel(u) * half / b * v ** (1 / b - 1)

    return _quad(left, "left half", epsabs, epsrel) + _quad(right, "right half", epsabs, epsrel)


def _check_point(f: SampledFn, x: float) -> None:
    if not (math.isfinite(x) and 0 < x <= f.T * (1 + 1e-12)):
        raise InvalidParams(f"evaluation point {x} outside (0, {f.T}]")


def rl_integral(f: SampledFn, order: float, x: float) -> float:
    """Riemann-Liouville integral (1/Gamma(order)) int_0^x (x-t)^(order-1) f(t) dt."""
    if not order > 0:
        raise InvalidParams(f"integral order must be positive, got {order}")
    _check_point(f, x)
    scale = rgamma(order)
    return convolve(f, lambda u: scale * u ** (order - 1), order - 1, x)


def rl_derivative(f: SampledFn, order: float, x: float) -> float:
    """
    Riemann-Liouville derivative: sum_{k<m} f^(k)(0) x^(k-order) / Gamma(k-order+1) plus the RL integral of order
    m - order of f^(m), m = floor(order) + 1.
    """
    if order < 0:
        raise InvalidParams(f"derivative order must be nonnegative, got {order}")
    _check_point(f, x)
    if order == 0:
        return f(x)
    if order == int(order):
        return f.derivative(int(order))(x)
    m = math.floor(order) + 1
    f_m = f.derivative(m)
    total = 0.0
    for k in range(m):
        at_zero = f.derivative(k)(0.0)
        if not math.isfinite(at_zero):
            raise InsufficientSmoothness(f"derivative {k} is unbounded at 0")
        total += at_zero * x ** (k - order) * rgamma(k - order + 1)
    return total + rl_integral(f_m, m - order, x)


def _prabhakar_quad(f: SampledFn, kernel: PrabhakarKernel, x: float, epsabs: float, epsrel: float) -> float:
    p = kernel.params
    if p.beta == 0.0:
        # Zero-order operator: identity plus the k >= 1 series remainder
        if p.gamma == 0.0 or p.delta == 0.0:
            return f(x)
        return f(x) + convolve(f, kernel, kernel.exponent, x, epsabs, epsrel)
    return convolve(f, kernel, kernel.exponent, x, epsabs, epsrel)


def prabhakar_integral_quad(
    f: SampledFn | MLSeries, p: PrabhakarParams, x: float, ctl: SeriesControl | None = None
) -> float:
    """Prabhakar integral int_0^x (x-t)^(beta-1) E^gamma_{alpha,beta}(delta (x-t)^alpha) f(t) dt by quadrature."""
    p.assert_valid()
    if p.beta < 0:
        raise InvalidParams(f"integral order must be nonnegative, got {p.beta}")
    if isinstance(f, MLSeries):
        f = SampledFn.from_series(f, x, ctl)
    _check_point(f, x)
    return _prabhakar_quad(f, PrabhakarKernel(p, x, ctl), x, FC_QUAD_EPSABS, FC_QUAD_EPSREL)


def _rl_differintegral_value(f: SampledFn | MLSeries, order: float, x: float, ctl: SeriesControl | None) -> float:
    if isinstance(f, MLSeries):
        return funcalg.evaluate(funcalg.rl_differintegral(f, order), x, ctl)
    if order > 0:
        return rl_integral(f, order, x)
    return rl_derivative(f, -order, x)


def _weighted_series(
    weight_gamma: float,
    p: PrabhakarParams,
    x: float,
    order_of: Callable[[int], float],
    f: SampledFn | MLSeries,
    ctl: SeriesControl | None,
) -> float:
    ctl = (ctl or SeriesControl()).assert_valid()
    total = 0.0
    small_run = 0
    weight = 1.0
    for k in range(ctl.max_terms):
        if k > 0:
            weight *= (weight_gamma + k - 1) * p.delta / k
            if weight == 0.0:
                break
        term = weight * _rl_differintegral_value(f, order_of(k), x, ctl)
        total += term
        if abs(term) <= ctl.threshold(total):
            small_run += 1
            if small_run >= 2:
                break
        else:
            small_run = 0
    return total


def prabhakar_integral_series(
    f: SampledFn | MLSeries, p: PrabhakarParams, x: float, ctl: SeriesControl | None = None
) -> float:
    """sum_k ((gamma)_k delta^k / k!) I^(alpha k + beta) f(x) with RL integrals I."""
    p.assert_valid()
    if p.beta < 0:
        raise InvalidParams(f"integral order must be nonnegative, got {p.beta}")
    return _weighted_series(p.gamma, p, x, lambda k: p.alpha * k + p.beta, f, ctl)


def pr_derivative_series(
    f: SampledFn | MLSeries, p: PrabhakarParams, x: float, ctl: SeriesControl | None = None
) -> float:
    """RL-type Prabhakar derivative as sum_k ((-gamma)_k delta^k / k!) I^(alpha k - beta) f(x)."""
    p.assert_valid()
    if p.beta < 0:
        raise InvalidParams(f"derivative order must be nonnegative, got {p.beta}")
    return _weighted_series(-p.gamma, p, x, lambda k: p.alpha * k - p.beta, f, ctl)


class PanelDerivative:
    """
    n-th derivative of a sampled function on (0, x], from Chebyshev fits on geometrically graded panels
    [x r^(j+1), x r^j]. Below the last panel the derivative is extended by a power law.

    Panels are fitted from x inwards. A panel is resolved once its fit agrees with the half-degree fit to
    fit_tol relative to the largest derivative seen so far, so panels where the derivative is negligible
    are not refined into the sampling noise of g.
    """

    def __init__(
        self,
        g: RealFn,
        x: float,
        n: int,
        ratio: float = 0.25,
        panel_count: int = 10,
        max_degree: int = 64,
        fit_tol: float = 1e-6,
    ) -> None:
        self.x = x
        self.ratio = ratio
        self.edges = [x * ratio**j for j in range(panel_count + 1)]
        self.pieces: list[Chebyshev] = []
        self.scale = 0.0
        for j in range(panel_count):
            piece, peak = self._fit_panel(g, self.edges[j + 1], self.edges[j], n, max_degree, fit_tol, self.scale)
            self.pieces.append(piece)
            self.scale = max(self.scale, peak)
        self.tail_exponent = self._estimate_tail()

    @staticmethod
    def _fit_panel(
        g: RealFn, a: float, b: float, n: int, max_degree: int, fit_tol: float, reference: float
    ) -> tuple[Chebyshev, float]:
        degree = 16
        check = np.linspace(a, b, 9)
        while degree <= max_degree:
            # Chebyshev-Lobatto nodes; every other node is the Lobatto set of half the degree
            nodes = a + (b - a) * (1 + np.cos(np.pi * np.arange(degree + 1) / degree)) / 2
            values = np.array([g(float(y)) for y in nodes])
            fine = Chebyshev.fit(nodes, values, degree, domain=[a, b]).deriv(n)
            coarse = Chebyshev.fit(nodes[::2], values[::2], degree // 2, domain=[a, b]).deriv(n)
            fine_values = fine(check)
            peak = float(np.max(np.abs(fine_values)))
            if float(np.max(np.abs(fine_values - coarse(check)))) <= fit_tol * max(peak, reference) + 1e-12:
                return fine, peak
            degree *= 2
        raise InterpolationFailure(f"derivative of order {n} on [{a:.3e}, {b:.3e}] unresolved at degree {max_degree}")

    def _estimate_tail(self) -> float:
        t_far, t_near = self.edges[-2], self.edges[-1]
        d_far, d_near = self.pieces[-2](t_far), self.pieces[-1](t_near)
        if d_far == 0.0 or d_near == 0.0 or math.copysign(1.0, d_far) != math.copysign(1.0, d_near):
            return 0.0
        exponent = math.log(abs(d_near / d_far)) / math.log(t_near / t_far)
        return min(max(exponent, -0.99), 8.0)

    def __call__(self, t: float) -> float:
        last = self.edges[-1]
        if t < last:
            return float(self.pieces[-1](last)) * (t / last) ** self.tail_exponent
        j = min(int(math.log(self.x / t) / math.log(1 / self.ratio)), len(self.pieces) - 1)
        return float(self.pieces[max(j, 0)](t))


def boundary_terms(f: SampledFn, spec: NthLevelSpec) -> MLSeries | None:
    """
    sum_{k<n} f^(k)(0) x^(nu-n+k) E^g_{alpha,nu-n+k+1}(delta x^alpha), with nu and g the inner order and gamma.

    These are the terms left over when the n derivatives of the inner integral are moved onto f. None when f
    does not carry n derivatives or one of f(0), ..., f^(n-1)(0) is unbounded.
    """
    try:
        f.derivative(spec.n)
        at_zero = [f.derivative(k)(0.0) for k in range(spec.n)]
    except InsufficientSmoothness:
        return None
    if not all(math.isfinite(value) for value in at_zero):
        return None
    terms = [
        MLTerm(value, spec.inner_order - (spec.n - 1 - k), spec.inner_gamma) for k, value in enumerate(at_zero) if value
    ]
    return MLSeries.canonical(spec.alpha, spec.delta, terms)


def _differentiated_inner(f: SampledFn, spec: NthLevelSpec, x: float, ctl: SeriesControl | None) -> SampledFn:
    """
    d^n/dx^n of the inner Prabhakar integral of f, sampled on (0, x].

    Uses the inner integral of f^(n) plus the boundary terms where f is smooth enough, and panel differentiation
    of sampled inner integrals otherwise. A singularity exponent of -1 or below marks a derivative that is not
    locally integrable.
    """
    inner_kernel = PrabhakarKernel(PrabhakarParams(spec.alpha, spec.inner_order, spec.inner_gamma, spec.delta), x, ctl)
    boundary = boundary_terms(f, spec)
    if boundary is not None:
        f_n = f.derivative(spec.n)

        def moved(y: float) -> float:
            value = _prabhakar_quad(f_n, inner_kernel, y, 1e-13, 1e-11)
            if len(boundary):
                value += funcalg.evaluate(boundary, y, ctl)
            return value

        exponent = min(f_n.singularity_exponent, funcalg.leading_exponent(boundary), 0.0)
        return SampledFn(moved, x, exponent)

    log.debug(f"function carries {len(f.derivatives)} derivatives, differentiating sampled inner integrals")
    cache: dict[float, float] = {}

    def inner(y: float) -> float:
        if y not in cache:
            cache[y] = _prabhakar_quad(f, inner_kernel, y, 0.0, 1e-13)
        return cache[y]

    derivative = PanelDerivative(inner, x, spec.n)
    log.debug(f"nth-level quadrature used {len(cache)} inner integrals, tail exponent {derivative.tail_exponent:.3f}")
    return SampledFn(derivative, x, min(derivative.tail_exponent, 0.0))


def nth_level_derivative_quad(
    f: SampledFn | MLSeries, spec: NthLevelSpec, x: float, ctl: SeriesControl | None = None
) -> float:
    """nth-level derivative by quadrature: inner integral, n-fold derivative, outer integral."""
    spec.assert_valid()
    if isinstance(f, MLSeries):
        f = SampledFn.from_series(f, x, ctl)
    _check_point(f, x)

    g_n = _differentiated_inner(f, spec, x, ctl)
    outer = PrabhakarParams(spec.alpha, spec.outer_order, spec.outer_gamma, spec.delta)
    if outer.beta == 0.0 and (outer.gamma == 0.0 or outer.delta == 0.0):
        return g_n(x)
    if g_n.singularity_exponent <= -1:
        raise InsufficientSmoothness(f"the {spec.n}-th derivative of the inner integral is not locally integrable")
    return _prabhakar_quad(g_n, PrabhakarKernel(outer, x, ctl), x, FC_QUAD_EPSABS, FC_QUAD_EPSREL)


def initial_weights(f: MLSeries, spec: NthLevelSpec) -> list[float]:
    """
    W_k = sum_{j <= B_k} ((-gamma (n - Theta_n))_j delta^j / j!) (RL D^(beta + s_n - k - 1 - alpha j) f)(0+),
    k = 0 .. A-1, the initial data weighting the inversion and decomposition corrections.
    """
    spec.assert_valid()
    weights = []
    for k in range(spec.initial_count):
        values = []
        for j in range(spec.initial_terms(k) + 1):
            coefficient = pochhammer(-spec.kernel_gamma, j) * spec.delta**j / math.factorial(j)
            if coefficient == 0.0:
                continue
            value = funcalg.initial_value(f, spec.beta + spec.s_n - k - 1 - spec.alpha * j)
            if not math.isfinite(value):
                raise LeavesAlgebra(f"initial value of order {spec.beta + spec.s_n - k - 1 - spec.alpha * j} diverges")
            values.append(coefficient * value)
        weights.append(math.fsum(values))
    return weights


def inversion_kernels(spec: NthLevelSpec) -> tuple[MLTerm, ...]:
    """Unit kernels x^(beta+s_n-k-1) E^{gamma (n-Theta_n)}_{alpha,beta+s_n-k}(delta x^alpha) that do not vanish."""
    spec.assert_valid()
    kernels = []
    for k in range(spec.initial_count):
        term = MLTerm(1.0, snap(spec.beta + spec.s_n - k), snap(spec.kernel_gamma))
        if MLSeries.canonical(spec.alpha, spec.delta, [term]).terms:
            kernels.append(term)
    return tuple(kernels)


def hilfer_prabhakar_inversion_kernels(alpha: float, beta: float, gamma: float, theta: float) -> tuple[MLTerm, ...]:
    """The single kernel t^(beta + theta (1 - beta) - 1) E^{gamma (1 - theta)}_{alpha, beta + theta (1 - beta)}."""
    if not (0 <= theta <= 1 and 0 < beta < 1):
        raise InvalidParams("the Hilfer-Prabhakar inversion needs beta in (0, 1) and theta in [0, 1]")
    return (MLTerm(1.0, snap(beta + theta * (1 - beta)), snap(gamma * (1 - theta))),)


def inversion_correction(f: MLSeries, spec: NthLevelSpec) -> MLSeries:
    """The correction sum of the inversion identity as an ML series: sum_k W_k times kernel k."""
    weights = initial_weights(f, spec)
    terms = [
        MLTerm(weight, spec.beta + spec.s_n - k, spec.kernel_gamma) for k, weight in enumerate(weights) if weight
    ]
    return MLSeries.canonical(spec.alpha, spec.delta, terms)


def inversion_sides(f: MLSeries, spec: NthLevelSpec, x: float, ctl: SeriesControl | None = None) -> tuple[float, float]:
    """(E^{alpha,beta,gamma n,delta}[D f](x), f(x) - correction(x)) for the inversion identity."""
    if not spec.beta > 0:
        raise InvalidParams("the inversion identity needs a positive derivative order")
    derivative = funcalg.nth_level_derivative(f, spec)
    recovered = funcalg.prabhakar_integrate(derivative, spec.beta, spec.composite_gamma)
    lhs = funcalg.evaluate(recovered, x, ctl)
    rhs = funcalg.evaluate(f, x, ctl) - funcalg.evaluate(inversion_correction(f, spec), x, ctl)
    return lhs, rhs


def inversion_residual(f: MLSeries, spec: NthLevelSpec, x: float, ctl: SeriesControl | None = None) -> float:
    lhs, rhs = inversion_sides(f, spec, x, ctl)
    return lhs - rhs


@dataclass(frozen=True, slots=True)
class Decomposition:
    first: float
    second: float

    @property
    def total(self) -> float:
        return self.first - self.second


def theorem31_decomposition(
    f: MLSeries, spec: NthLevelSpec, x: float, ctl: SeriesControl | None = None
) -> Decomposition:
    """
    Split the nth-level derivative into the RL-type Prabhakar derivative of order beta with gamma n, and the
    correction sum_{alpha j + k <= beta + s_n} W_k x^(s_n-k-1) E^{-gamma Theta_n}_{alpha, s_n-k}(delta x^alpha).
    """
    spec.assert_valid()
    if not (math.isfinite(x) and x > 0):
        raise InvalidParams(f"evaluation point must be positive, got {x}")
    first = funcalg.evaluate(funcalg.pr_derivative(f, spec.beta, spec.composite_gamma), x, ctl)
    z = spec.delta * x**spec.alpha
    second = math.fsum(
        weight * x ** (spec.s_n - k - 1) * prabhakar_e(spec.alpha, spec.s_n - k, spec.outer_gamma, z, ctl)
        for k, weight in enumerate(initial_weights(f, spec))
        if weight
    )
    return Decomposition(first, second)

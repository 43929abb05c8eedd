from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from typing import TYPE_CHECKING

import numpy as np
from scipy import special

from .config import FC_ABS_TOL, FC_MAX_TERMS, FC_REL_TOL
from .exceptions import InvalidParams, NonConvergence

if TYPE_CHECKING:
    from typing import TypeAlias

    # Log of the magnitude and the sign of a real number, sign 0 meaning exactly zero
    SignedLog: TypeAlias = tuple[float, float]

log = logging.getLogger(__name__)
log.setLevel(logging.WARNING)

# Smallest relative rounding error from cancellation that is reported
CANCELLATION_REL_TOL = 1e-12
_EPS = float(np.finfo(float).eps)


@dataclass(frozen=True, slots=True)
class PrabhakarParams:
    alpha: float
    beta: float
    gamma: float = 0.0
    delta: float = 0.0

    def assert_valid(self) -> PrabhakarParams:
        """Checks the bounds of all the elements, throws InvalidParams if invalid"""
        if not all(math.isfinite(getattr(self, f.name)) for f in fields(self)):
            raise InvalidParams(f"non-finite Prabhakar parameters: {self}")
        if not self.alpha > 0:
            raise InvalidParams(f"alpha must be positive, got {self.alpha}")
        return self


@dataclass(frozen=True, slots=True)
class SeriesControl:
    abs_tol: float = FC_ABS_TOL
    rel_tol: float = FC_REL_TOL
    max_terms: int = FC_MAX_TERMS

    def assert_valid(self) -> SeriesControl:
        if self.max_terms < 1:
            raise InvalidParams("max_terms must be at least 1")
        if self.abs_tol < 0 or self.rel_tol < 0:
            raise InvalidParams("tolerances must be nonnegative")
        if self.abs_tol == 0 and self.rel_tol == 0:
            raise InvalidParams("at least one of abs_tol and rel_tol must be positive")
        return self

    def threshold(self, partial_sum: float) -> float:
        return max(self.abs_tol, self.rel_tol * abs(partial_sum))


@dataclass(frozen=True, slots=True)
class SeriesResult:
    value: float
    terms_used: int
    last_term: float
    # log10 of the largest term over |value|: decimal digits cancelled in the sum
    lost_digits: float = 0.0
    # Rounding from the largest term exceeds the requested tolerance
    cancelled: bool = False


@dataclass(frozen=True, slots=True)
class E2Params:
    gamma1: float
    gamma2: float
    alpha1: float
    alpha2: float
    alpha3: float
    alpha4: float
    beta1: float
    beta2: float
    beta3: float
    delta1: float
    delta2: float
    delta3: float

    def assert_valid(self) -> E2Params:
        if not all(math.isfinite(getattr(self, f.name)) for f in fields(self)):
            raise InvalidParams(f"non-finite E2 parameters: {self}")
        exponents = (self.alpha1, self.alpha2, self.alpha3, self.alpha4, self.beta1, self.beta2, self.beta3)
        if min(exponents) < 0:
            raise InvalidParams("E2 exponents must be nonnegative")
        # The Gamma denominators must grow along both summation axes
        if self.alpha3 + self.alpha4 <= 0 or self.beta2 + self.beta3 <= 0:
            raise InvalidParams("E2 double series does not decay along one of its axes")
        if min(exponents) == 0:
            log.debug(f"E2 evaluated with degenerate zero exponents: {self}")
        return self


def is_pole(a: float) -> bool:
    """True where Gamma has a pole, i.e. a is a nonpositive integer."""
    return a <= 0 and a == math.floor(a)


def rgamma(a: float) -> float:
    """Reciprocal Gamma as an entire function: exactly 0 at the poles of Gamma."""
    if is_pole(a):
        return 0.0
    return float(special.rgamma(a))


def pochhammer(gamma: float, k: int) -> float:
    """Rising factorial (gamma)_k = gamma (gamma+1) ... (gamma+k-1) as a direct product."""
    if k < 0:
        raise InvalidParams(f"Pochhammer index must be nonnegative, got {k}")
    result = 1.0
    for j in range(k):
        factor = gamma + j
        if factor == 0.0:
            return 0.0
        result *= factor
    return result


def _signed_log_rgamma(a: float) -> SignedLog:
    if is_pole(a):
        return -math.inf, 0.0
    return -float(special.gammaln(a)), float(special.gammasgn(a))


def _summed(
    p: PrabhakarParams, z: float, total: float, terms_used: int, last_term: float, peak: float, ctl: SeriesControl
) -> SeriesResult:
    if peak <= abs(total):
        return SeriesResult(total, terms_used, last_term)
    lost = math.log10(peak / abs(total)) if total != 0.0 else math.inf
    cancelled = peak * _EPS > max(ctl.threshold(total), CANCELLATION_REL_TOL * abs(total))
    if cancelled:
        log.warning(
            f"E^{p.gamma}_{{{p.alpha},{p.beta}}}({z}) lost {lost:.1f} digits to cancellation, largest term {peak:.3e}"
        )
    return SeriesResult(total, terms_used, last_term, lost, cancelled)


def prabhakar_e_terms(
    alpha: float, beta: float, gamma: float, z: float, ctl: SeriesControl | None = None
) -> SeriesResult:
    """
    Sum the Prabhakar series E^gamma_{alpha,beta}(z) = sum_k (gamma)_k z^k / (k! Gamma(alpha k + beta)).

    Terms are accumulated in log space with sign tracking. Summation stops once two consecutive
    non-structural terms fall below the tolerance, or exactly when the Pochhammer symbol vanishes.
    The largest term magnitude is tracked; the digits it cancels are reported on the result.
    """
    ctl = (ctl or SeriesControl()).assert_valid()
    params = PrabhakarParams(alpha, beta, gamma).assert_valid()
    if not math.isfinite(z):
        raise InvalidParams(f"argument must be finite, got {z}")

    if z == 0.0 or gamma == 0.0:
        head = rgamma(beta)
        return SeriesResult(head, 1, head)

    log_z = math.log(abs(z))
    z_sign = 1.0 if z > 0 else -1.0
    log_coef = 0.0  # log |(gamma)_k z^k / k!|
    coef_sign = 1.0
    total = 0.0
    term = 0.0
    previous_magnitude = math.inf
    magnitude = math.inf
    peak = 0.0
    small_run = 0
    for k in range(ctl.max_terms):
        if k > 0:
            factor = gamma + k - 1
            if factor == 0.0:
                # (gamma)_k vanishes from here on: the sum is an exact polynomial
                return _summed(params, z, total, k, term, peak, ctl)
            log_coef += math.log(abs(factor)) + log_z - math.log(k)
            coef_sign *= (1.0 if factor > 0 else -1.0) * z_sign

        log_rg, rg_sign = _signed_log_rgamma(alpha * k + beta)
        if rg_sign == 0.0:
            # Structural zero from the reciprocal Gamma, not a small term
            continue

        previous_magnitude = magnitude
        magnitude = math.exp(log_coef + log_rg)
        peak = max(peak, magnitude)
        term = coef_sign * rg_sign * magnitude
        total += term
        if magnitude <= ctl.threshold(total):
            small_run += 1
            if small_run >= 2:
                return _summed(params, z, total, k + 1, term, peak, ctl)
        else:
            small_run = 0

    if magnitude < previous_magnitude:
        log.warning(
            f"E^{gamma}_{{{alpha},{beta}}}({z}) truncated at max_terms={ctl.max_terms}, last term {magnitude:.3e}"
        )
        return _summed(params, z, total, ctl.max_terms, term, peak, ctl)
    raise NonConvergence(
        f"Prabhakar series for alpha={alpha}, beta={beta}, gamma={gamma}, z={z} did not converge "
        f"within {ctl.max_terms} terms",
        terms_used=ctl.max_terms,
    )


def prabhakar_e(alpha: float, beta: float, gamma: float, z: float, ctl: SeriesControl | None = None) -> float:
    return prabhakar_e_terms(alpha, beta, gamma, z, ctl).value


def prabhakar_coefficients(
    alpha: float, beta: float, gamma: float, radius: float, ctl: SeriesControl | None = None
) -> np.ndarray:
    """
    Taylor coefficients c_k = (gamma)_k / (k! Gamma(alpha k + beta)) of E^gamma_{alpha,beta}, truncated so
    that the discarded tail is below tolerance everywhere on |z| <= radius.

    Evaluate with numpy.polynomial.polynomial.polyval. Used where the same kernel is sampled many times.
    """
    ctl = (ctl or SeriesControl()).assert_valid()
    PrabhakarParams(alpha, beta, gamma).assert_valid()
    radius = abs(radius)
    coefficients: list[float] = []
    log_coef = 0.0
    coef_sign = 1.0
    bound = 0.0
    small_run = 0
    log_radius = math.log(radius) if radius > 0 else -math.inf
    for k in range(ctl.max_terms):
        if k > 0:
            factor = gamma + k - 1
            if factor == 0.0 or radius == 0.0:
                break
            log_coef += math.log(abs(factor)) - math.log(k)
            coef_sign *= 1.0 if factor > 0 else -1.0
        log_rg, rg_sign = _signed_log_rgamma(alpha * k + beta)
        if rg_sign == 0.0:
            coefficients.append(0.0)
            continue
        coefficient = coef_sign * rg_sign * math.exp(log_coef + log_rg)
        coefficients.append(coefficient)
        reach = math.exp(log_coef + log_rg + k * log_radius) if radius > 0 else (1.0 if k == 0 else 0.0)
        bound += reach
        if reach <= ctl.threshold(bound):
            small_run += 1
            if small_run >= 2:
                break
        else:
            small_run = 0
    else:
        raise NonConvergence(
            f"Prabhakar coefficients for alpha={alpha}, beta={beta}, gamma={gamma} did not settle on |z| <= {radius}",
            terms_used=ctl.max_terms,
        )
    return np.asarray(coefficients, dtype=float)


def _signed_log_poch(g: float, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Generalized Pochhammer Gamma(g+s)/Gamma(g) for real index s, as (log|.|, sign)."""
    if is_pole(g):
        # Gamma(g) is infinite; the ratio is the limit computed by scipy
        values = special.poch(g, s)
        with np.errstate(divide="ignore"):
            return np.log(np.abs(values)), np.sign(values)
    upper = g + s
    poles = (upper <= 0) & (upper == np.floor(upper))
    log_abs = special.gammaln(upper) - special.gammaln(g)
    sign = special.gammasgn(upper) * special.gammasgn(g)
    # Gamma(g+s) infinite: genuinely unbounded factor
    log_abs = np.where(poles, np.inf, log_abs)
    sign = np.where(poles, 1.0, sign)
    return log_abs, sign


def _signed_log_rgamma_array(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    poles = (a <= 0) & (a == np.floor(a))
    log_abs = np.where(poles, -np.inf, -special.gammaln(a))
    sign = np.where(poles, 0.0, special.gammasgn(a))
    return log_abs, sign


def _signed_log_power(base: float, exponent: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if base == 0.0:
        zero_power = exponent == 0
        return np.where(zero_power, 0.0, -np.inf), np.where(zero_power, 1.0, 0.0)
    sign = np.where(exponent % 2 == 0, 1.0, np.sign(base))
    return exponent * math.log(abs(base)), sign


def _e2_terms(p: E2Params, x: float, y: float, size: int) -> np.ndarray:
    m = np.arange(size, dtype=float)[:, None]
    n = np.arange(size, dtype=float)[None, :]
    parts = [
        _signed_log_poch(p.gamma1, p.alpha1 * m + p.beta1 * n),
        _signed_log_poch(p.gamma2, p.alpha2 * m + 0.0 * n),
        _signed_log_rgamma_array(p.delta1 + p.alpha3 * m + p.beta2 * n),
        _signed_log_rgamma_array(p.delta2 + p.alpha4 * m + 0.0 * n),
        _signed_log_rgamma_array(p.delta3 + 0.0 * m + p.beta3 * n),
        _signed_log_power(x, m + 0.0 * n),
        _signed_log_power(y, n + 0.0 * m),
    ]
    sign = np.ones((size, size))
    log_abs = np.zeros((size, size))
    for part_log, part_sign in parts:
        sign = sign * part_sign
        log_abs = log_abs + np.where(part_sign == 0.0, 0.0, part_log)
    with np.errstate(over="ignore", invalid="ignore"):
        terms = np.where(sign == 0.0, 0.0, sign * np.exp(log_abs))
    return terms


def bivariate_e2(p: E2Params, x: float, y: float, ctl: SeriesControl | None = None) -> float:
    """
    Double series sum_{m,n} (g1)_{a1 m + b1 n} (g2)_{a2 m} x^m y^n / [Gamma(d1 + a3 m + b2 n) Gamma(d2 + a4 m)
    Gamma(d3 + b3 n)], truncated to a square whose outer L-shaped band is below tolerance.
    """
    ctl = (ctl or SeriesControl()).assert_valid()
    p.assert_valid()
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidParams("E2 arguments must be finite")

    cap = max(16, min(ctl.max_terms, 1024))
    size = 16
    while True:
        terms = _e2_terms(p, x, y, size)
        if not np.all(np.isfinite(terms)):
            raise NonConvergence(f"E2 terms overflowed at truncation size {size}", terms_used=size)
        total = float(terms.sum())
        band = float(max(np.abs(terms[-2:, :]).max(), np.abs(terms[:, -2:]).max()))
        if band <= ctl.threshold(total):
            return total
        if size >= cap:
            raise NonConvergence(f"E2 double series did not converge within {cap}x{cap} terms", terms_used=size)
        size *= 2

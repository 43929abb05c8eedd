from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from joblib import Parallel, delayed
from tqdm import tqdm

from .. import funcalg
from ..exceptions import InvalidParams, ModeDivergence
from ..funcalg import MLSeries, MLTerm
from ..mlf import SeriesControl, prabhakar_e
from ..operators import NthLevelSpec

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

log = logging.getLogger(__name__)
log.setLevel(logging.WARNING)

# Modes whose spectral amplitude is below this fraction of the largest are dropped instead of failing
AMPLITUDE_FLOOR = 1e-14
# Largest relative rounding error accepted from cancellation inside a mode series
PRECISION = 1e-8


def spatial_grid(half_width: float, grid_points: int) -> np.ndarray:
    """x_j = -L + 2 L j / N, the periodic grid matched by numpy.fft.rfftfreq(N, d=2L/N)."""
    return -half_width + 2 * half_width * np.arange(grid_points) / grid_points


def initial_profile(kind: str, params: dict, grid: np.ndarray) -> np.ndarray:
    """gaussian (amplitude, center, sigma), cosine (amplitude, mode) or explicit samples."""
    params = params or {}
    if kind == "gaussian":
        amplitude = float(params.get("amplitude", 1.0))
        center = float(params.get("center", 0.0))
        sigma = float(params.get("sigma", 1.0))
        if not sigma > 0:
            raise InvalidParams(f"sigma must be positive, got {sigma}")
        return amplitude * np.exp(-((grid - center) ** 2) / (2 * sigma**2))
    if kind == "cosine":
        amplitude = float(params.get("amplitude", 1.0))
        half_width = -float(grid[0])
        # Whole periods on [-L, L) keep the profile periodic
        omega = math.pi * int(params.get("mode", 1)) / half_width
        return amplitude * np.cos(omega * grid)
    if kind == "samples":
        values = np.asarray(params.get("values", []), dtype=float)
        if values.shape != grid.shape:
            raise InvalidParams(f"expected {grid.shape[0]} samples, got {values.shape}")
        return values
    raise InvalidParams(f"unknown profile kind {kind!r}, expected gaussian, cosine or samples")


@dataclass(frozen=True, slots=True, eq=False)
class HeatProblem:
    """
    D_t u = k_tilde u_xx on [-L, L) with periodic spectral discretization, D_t the nth-level derivative in time,
    and the RL initial datum of order beta + s_n - 1 equal to the profile u0.
    """

    spec: NthLevelSpec
    k_tilde: float
    half_width: float
    grid_points: int
    u0: np.ndarray
    # Output times named by the problem file, used when none are given on the command line
    times: tuple[float, ...] = ()

    def assert_valid(self) -> HeatProblem:
        self.spec.assert_valid()
        if not (math.isfinite(self.k_tilde) and self.k_tilde > 0):
            raise InvalidParams(f"diffusivity must be positive, got {self.k_tilde}")
        if not (math.isfinite(self.half_width) and self.half_width > 0):
            raise InvalidParams(f"half width must be positive, got {self.half_width}")
        n = self.grid_points
        if n < 2 or n & (n - 1):
            raise InvalidParams(f"grid points must be a power of two, got {n}")
        if self.u0.shape != (n,) or not np.all(np.isfinite(self.u0)):
            raise InvalidParams("initial profile must hold one finite sample per grid point")
        if self.spec.initial_count != 1:
            raise InvalidParams("the heat solver takes a single initial datum, it needs beta + s_n < 1")
        if not all(math.isfinite(t) and t > 0 for t in self.times):
            raise InvalidParams(f"times must be positive, got {self.times}")
        scale = float(np.max(np.abs(self.u0)))
        if max(abs(self.u0[0]), abs(self.u0[-1])) > 1e-8 * scale:
            log.warning("initial profile does not decay at the domain ends, it is treated as periodic")
        return self

    @property
    def grid(self) -> np.ndarray:
        return spatial_grid(self.half_width, self.grid_points)

    @property
    def omega(self) -> np.ndarray:
        return 2 * np.pi * np.fft.rfftfreq(self.grid_points, d=2 * self.half_width / self.grid_points)

    @staticmethod
    def from_json(problem_json: str) -> HeatProblem:
        """
        Flat problem: the operator keys {alpha, beta, gamma, delta, beta_i, theta_i} with {k_tilde, L, N, u0, times},
        u0 = {kind, params...} and the parameters inline or under "params". Also read: the operator under "spec",
        "half_width" for L, "grid_points" for N and "profile" for u0.
        """
        try:
            data = json.loads(problem_json)
            spec = NthLevelSpec.from_dict(data.get("spec", data))
            half_width = float(data["L"] if "L" in data else data.get("half_width", 10.0))
            grid_points = int(data["N"] if "N" in data else data.get("grid_points", 256))
            profile = data["u0"] if "u0" in data else data.get("profile", {"kind": "gaussian"})
            params = {key: value for key, value in profile.items() if key not in ("kind", "params")}
            params.update(profile.get("params") or {})
            u0 = initial_profile(profile.get("kind", "gaussian"), params, spatial_grid(half_width, grid_points))
            times = tuple(float(t) for t in data.get("times", ()))
            return HeatProblem(spec, float(data["k_tilde"]), half_width, grid_points, u0, times).assert_valid()
        except json.JSONDecodeError as exc:
            raise InvalidParams(f"heat problem is not valid JSON: {exc}") from exc
        except (AttributeError, KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidParams):
                raise
            raise InvalidParams(f"malformed heat problem: {exc}") from exc

    @staticmethod
    def from_file(path: Path) -> HeatProblem:
        with open(path, encoding="utf-8") as file:
            return HeatProblem.from_json(file.read())


@dataclass(slots=True)
class HeatField:
    times: tuple[float, ...]
    grid: np.ndarray
    # values[i, j] = u(grid[i], times[j])
    values: np.ndarray
    # Smallest dropped angular frequency per time, inf when every mode was resolved
    cutoffs: tuple[float, ...] = field(default_factory=tuple)

    def rows(self):
        for j, t in enumerate(self.times):
            for i, x in enumerate(self.grid):
                yield float(x), t, float(self.values[i, j])


def _time_exponents(spec: NthLevelSpec, i: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = (i + 1) * spec.beta + spec.s_n
    gamma = i * spec.composite_gamma + spec.kernel_gamma
    return mu, gamma


def _mode_factors(
    spec: NthLevelSpec, k_tilde: float, omega: np.ndarray, t: float, i_max: int, tol: float, ctl: SeriesControl | None
) -> tuple[np.ndarray, np.ndarray]:
    """
    Phi(omega, t) = sum_i (-k_tilde omega^2)^i t^(mu_i - 1) E^{gamma_i}_{alpha, mu_i}(delta t^alpha) for every mode,
    and a per-mode flag telling if the sum converged without cancellation loss.
    """
    count = 4 * i_max + 1
    i = np.arange(count)
    mu, gamma = _time_exponents(spec, i)
    z = spec.delta * t**spec.alpha
    time_part = np.array([prabhakar_e(spec.alpha, float(m), float(g), z, ctl) for m, g in zip(mu, gamma)])
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        log_time = np.log(np.abs(time_part)) + (mu - 1) * math.log(t)
        time_sign = np.sign(time_part)
        q = k_tilde * omega**2
        log_q = np.log(q)
        log_terms = i[:, None] * log_q[None, :] + log_time[:, None]
        signs = time_sign[:, None] * np.where(i % 2 == 0, 1.0, -1.0)[:, None]
        terms = np.where(time_sign[:, None] == 0.0, 0.0, signs * np.exp(log_terms))
        # omega = 0 keeps only the i = 0 term
        terms[:, q == 0.0] = 0.0
        terms[0, q == 0.0] = time_part[0] * t ** (mu[0] - 1)
    partial = np.cumsum(terms, axis=0)
    magnitude = np.abs(terms)
    threshold = tol * np.maximum(np.abs(partial), 1e-300)
    small = magnitude <= threshold
    settled = small[:-1] & small[1:]
    converged = np.any(settled, axis=0) & np.all(np.isfinite(terms), axis=0)
    stop = np.argmax(settled, axis=0) + 1
    values = partial[stop, np.arange(len(omega))]
    peak = np.max(np.where(np.isfinite(magnitude), magnitude, np.inf), axis=0)
    # Rounding from the largest term, against the mode itself or the omega = 0 response
    scale = np.maximum(np.abs(values), abs(time_part[0]) * t ** (mu[0] - 1))
    precise = peak * np.finfo(float).eps * 16 <= PRECISION * scale
    return np.where(converged, values, 0.0), converged & precise


def _field_at(
    problem: HeatProblem, t: float, i_max: int, tol: float, ctl: SeriesControl | None
) -> tuple[np.ndarray, float]:
    coefficients = np.fft.rfft(problem.u0)
    omega = problem.omega
    factors, resolved = _mode_factors(problem.spec, problem.k_tilde, omega, t, i_max, tol, ctl)
    amplitude = np.abs(coefficients)
    negligible = amplitude <= AMPLITUDE_FLOOR * amplitude.max()
    failing = ~resolved & ~negligible
    if np.any(failing):
        cutoff = float(omega[np.argmax(failing)])
        raise ModeDivergence(f"mode series at t={t} diverges or loses precision from omega={cutoff:.6g}", cutoff)
    dropped = ~resolved
    cutoff = float(omega[np.argmax(dropped)]) if np.any(dropped) else math.inf
    if np.any(dropped):
        log.info(f"t={t}: {int(dropped.sum())} negligible modes dropped from omega={cutoff:.6g}")
    values = np.fft.irfft(np.where(dropped, 0.0, coefficients * factors), n=problem.grid_points)
    return values, cutoff


def solve_heat(
    problem: HeatProblem,
    times: Sequence[float],
    i_max: int = 40,
    tol: float = 1e-12,
    ctl: SeriesControl | None = None,
    job_count: int = 1,
    progress: bool = False,
) -> HeatField:
    """
    Spectral solution u(x, t) = sum_omega u0_hat(omega) Phi(omega, t) e^{i omega x}, every mode summed over i up to
    4 i_max terms. Negligible modes that fail are dropped and the cutoff recorded; others raise ModeDivergence.
    """
    problem.assert_valid()
    times = tuple(float(t) for t in times)
    if not times or not all(math.isfinite(t) and t > 0 for t in times):
        raise InvalidParams("times must be positive")
    if i_max < 1:
        raise InvalidParams(f"i_max must be at least 1, got {i_max}")

    results = Parallel(n_jobs=job_count, return_as="generator")(
        delayed(_field_at)(problem, t, i_max, tol, ctl) for t in times
    )
    if progress:
        results = tqdm(results, total=len(times), dynamic_ncols=True, unit="time", colour="BLUE")
    columns = []
    cutoffs = []
    for values, cutoff in results:
        columns.append(values)
        cutoffs.append(cutoff)
    return HeatField(times, problem.grid, np.stack(columns, axis=1), tuple(cutoffs))


def heat_mode_series(problem: HeatProblem, omega: float, i_max: int = 40) -> MLSeries:
    """Phi(omega, t) truncated at i_max, as an ML series in t."""
    spec = problem.spec
    q = -problem.k_tilde * omega**2
    terms = []
    for i in range(i_max + 1):
        coeff = q**i
        mu = (i + 1) * spec.beta + spec.s_n
        terms.append(MLTerm(coeff, mu, i * spec.composite_gamma + spec.kernel_gamma))
    return MLSeries.canonical(spec.alpha, spec.delta, terms)


def heat_mode_residual(
    problem: HeatProblem, omega: float, t: float, i_max: int = 40, ctl: SeriesControl | None = None
) -> tuple[float, float]:
    """(D_t Phi)(t) and -k_tilde omega^2 Phi(t) for one mode."""
    phi = heat_mode_series(problem, omega, i_max)
    derivative = funcalg.nth_level_derivative(phi, problem.spec)
    return funcalg.evaluate(derivative, t, ctl), -problem.k_tilde * omega**2 * funcalg.evaluate(phi, t, ctl)

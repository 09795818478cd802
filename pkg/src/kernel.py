# src/kernel.py

from __future__ import annotations

import logging
import math
import os
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, special

from .errors import ConfigError, DomainError, SolverError


logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Свои исключения
# ---------------------------------------------------------------------------

class KernelDomainError(DomainError):
    """Kernel evaluated outside t >= 0, or a non-positive step was supplied."""
    pass


class KernelToleranceError(ConfigError):
    """Tolerance for a tail or series computation is not positive."""
    pass


class SeriesDivergenceError(SolverError):
    """Discrete series did not reach its truncation criterion within the term cap."""
    pass


# ---------------------------------------------------------------------------
# Параметры по умолчанию (переопределяются через окружение)
# ---------------------------------------------------------------------------

SERIES_TOL = float(os.getenv("NSFD_SERIES_TOL", "1e-12"))
SERIES_MAX_TERMS = int(float(os.getenv("NSFD_SERIES_MAX_TERMS", "1e8")))

_FIRST_CHUNK = 1024
_MAX_CHUNK = 1 << 20

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class _KernelBase(BaseModel):
    """
    Common interface of the infectivity kernels A(t).

    Every family implements the closed-form pieces it has; the module-level
    functions below validate arguments and dispatch here.
    """

    model_config = ConfigDict(frozen=True)

    def value(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tail(self, t0: float, tol: float) -> float:
        raise NotImplementedError

    def total_variation(self) -> float:
        raise NotImplementedError

    def supremum(self) -> float:
        raise NotImplementedError

    def laplace(self, r: float, tol: float) -> float:
        raise NotImplementedError

    def derivative(self, t: float, order: int) -> float:
        raise KernelDomainError(f"{self.family} kernel has no closed-form derivative.")

    def tail_closure(
        self, t_m: float, h: float, tol: float, rate: float = 0.0
    ) -> float | None:
        """
        Remainder h * sum_{n>m} A(t_n) e^{-rate t_n} in closed form, or None
        when the kernel has no closure or it is not yet accurate to tol at t_m.
        """
        return None


class PowerLawKernel(_KernelBase):
    """A(t) = (1 + t)^(-p), p > 1."""

    family: Literal["power_law"] = "power_law"
    p: float = Field(gt=1.0)

    def value(self, t: np.ndarray) -> np.ndarray:
        return np.power(1.0 + t, -self.p)

    def tail(self, t0: float, tol: float) -> float:
        return (1.0 + t0) ** (1.0 - self.p) / (self.p - 1.0)

    def total_variation(self) -> float:
        # монотонно убывает от A(0) = 1 до нуля
        return 1.0

    def supremum(self) -> float:
        return 1.0

    def laplace(self, r: float, tol: float) -> float:
        if r < 0.0:
            return math.inf
        if r == 0.0:
            return self.tail(0.0, tol)
        value, _ = integrate.quad(
            lambda s: (1.0 + s) ** (-self.p) * math.exp(-r * s),
            0.0,
            math.inf,
            epsabs=tol,
            epsrel=1e-13,
            limit=400,
        )
        return value

    def derivative(self, t: float, order: int) -> float:
        coeff = 1.0
        for k in range(order):
            coeff *= -(self.p + k)
        return coeff * (1.0 + t) ** (-self.p - order)

    def _damped(self, t: float, order: int, rate: float) -> float:
        # k-я производная A(t) e^{-rate t} по формуле Лейбница
        if rate == 0.0:
            return self.derivative(t, order) if order else float(self.value(np.float64(t)))
        total = 0.0
        for j in range(order + 1):
            total += math.comb(order, j) * self.derivative(t, j) * (-rate) ** (order - j)
        return total * math.exp(-rate * t)

    def _damped_tail(self, t0: float, rate: float, tol: float) -> float:
        if rate == 0.0:
            return self.tail(t0, tol)
        value, _ = integrate.quad(
            lambda u: (1.0 + t0 + u) ** (-self.p) * math.exp(-rate * u),
            0.0,
            math.inf,
            epsabs=tol,
            epsrel=1e-13,
            limit=400,
        )
        return value * math.exp(-rate * t0)

    def tail_closure(
        self, t_m: float, h: float, tol: float, rate: float = 0.0
    ) -> float | None:
        # Euler–Maclaurin для A(t) e^{-rate t}; следующий отброшенный член служит оценкой ошибки
        if 1.0 + t_m < 10.0 * h:
            return None
        next_term = h ** 6 / 30240.0 * abs(self._damped(t_m, 5, rate))
        if next_term > tol:
            return None
        return (
            self._damped_tail(t_m, rate, tol)
            - 0.5 * h * self._damped(t_m, 0, rate)
            - h ** 2 / 12.0 * self._damped(t_m, 1, rate)
            + h ** 4 / 720.0 * self._damped(t_m, 3, rate)
        )


class GaussianKernel(_KernelBase):
    """A(t) = exp(-(t - mu)^2 / (2 sigma^2)) / (sigma sqrt(2 pi))."""

    family: Literal["gaussian"] = "gaussian"
    mu: float
    sigma: float = Field(gt=0.0)

    def value(self, t: np.ndarray) -> np.ndarray:
        z = (t - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * _SQRT_2PI)

    def tail(self, t0: float, tol: float) -> float:
        return float(special.ndtr((self.mu - t0) / self.sigma))

    def total_variation(self) -> float:
        a0 = float(self.value(np.float64(0.0)))
        if self.mu <= 0.0:
            return a0
        # подъём до моды и спад до нуля
        return 2.0 * self.supremum() - a0

    def supremum(self) -> float:
        return float(self.value(np.float64(max(self.mu, 0.0))))

    def laplace(self, r: float, tol: float) -> float:
        # сдвинутая гауссиана: e^{-r mu + r^2 sigma^2 / 2} * Phi((mu - r sigma^2) / sigma)
        s2 = self.sigma * self.sigma
        log_value = (
            -r * self.mu
            + 0.5 * r * r * s2
            + float(special.log_ndtr((self.mu - r * s2) / self.sigma))
        )
        return math.exp(log_value) if log_value < 700.0 else math.inf

    def derivative(self, t: float, order: int) -> float:
        # A^(k)(t) = (-1)^k He_k(z) A(t) / sigma^k
        z = (t - self.mu) / self.sigma
        sign = -1.0 if order % 2 else 1.0
        return (
            sign
            * float(special.eval_hermitenorm(order, z))
            * float(self.value(np.float64(t)))
            / self.sigma ** order
        )


class ExponentialKernel(_KernelBase):
    """A(t) = lam * e^{-lam t} (normalized) or e^{-lam t}."""

    family: Literal["exponential"] = "exponential"
    lam: float = Field(gt=0.0)
    normalized: bool = True

    @property
    def _scale(self) -> float:
        return self.lam if self.normalized else 1.0

    def value(self, t: np.ndarray) -> np.ndarray:
        return self._scale * np.exp(-self.lam * t)

    def tail(self, t0: float, tol: float) -> float:
        return self._scale / self.lam * math.exp(-self.lam * t0)

    def total_variation(self) -> float:
        return self._scale

    def supremum(self) -> float:
        return self._scale

    def laplace(self, r: float, tol: float) -> float:
        if r <= -self.lam:
            return math.inf
        return self._scale / (self.lam + r)

    def derivative(self, t: float, order: int) -> float:
        return self._scale * (-self.lam) ** order * math.exp(-self.lam * t)


class TabulatedKernel(_KernelBase):
    """
    Piecewise-linear kernel through (grid[i], values[i]); zero outside
    [grid[0], grid[-1]].
    """

    family: Literal["tabulated"] = "tabulated"
    grid: tuple[float, ...]
    values: tuple[float, ...]

    @model_validator(mode="after")
    def check_table(self) -> "TabulatedKernel":
        if len(self.grid) < 2:
            raise ValueError("table must contain at least two points")
        if len(self.grid) != len(self.values):
            raise ValueError(
                f"grid and values differ in length ({len(self.grid)} vs {len(self.values)})"
            )
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(v))):
            raise ValueError("table contains non-finite entries")
        if g[0] < 0.0:
            raise ValueError("grid must start at t >= 0")
        if np.any(np.diff(g) <= 0.0):
            raise ValueError("grid must be strictly increasing")
        if np.any(v < 0.0):
            raise ValueError("values must be non-negative")
        return self

    def value(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.grid, self.values, left=0.0, right=0.0)

    def tail(self, t0: float, tol: float) -> float:
        g = np.asarray(self.grid, dtype=float)
        if t0 >= g[-1]:
            return 0.0
        start = max(t0, g[0])
        inner = g[g > start]
        points = np.concatenate(([start], inner))
        # трапеции точны на кусочно-линейной функции
        return float(integrate.trapezoid(self.value(points), points))

    def total_variation(self) -> float:
        v = np.asarray(self.values, dtype=float)
        jump_in = v[0] if self.grid[0] > 0.0 else 0.0
        return float(jump_in + np.sum(np.abs(np.diff(v))) + v[-1])

    def supremum(self) -> float:
        return float(max(self.values))

    def laplace(self, r: float, tol: float) -> float:
        g = self.grid
        if -r * g[-1] > 700.0:
            return math.inf
        value, _ = integrate.quad(
            lambda s: float(self.value(np.float64(s))) * math.exp(-r * s),
            g[0],
            g[-1],
            points=g[1:-1] or None,
            epsabs=tol,
            epsrel=1e-13,
            limit=50 + 2 * len(g),
        )
        return value


Kernel = Annotated[
    Union[PowerLawKernel, GaussianKernel, ExponentialKernel, TabulatedKernel],
    Field(discriminator="family"),
]


# ---------------------------------------------------------------------------
# Операции над ядром
# ---------------------------------------------------------------------------

def _check_tol(tol: float, op_name: str) -> None:
    if not tol > 0.0:
        raise KernelToleranceError(f"Operation '{op_name}' requires tol > 0, got {tol}.")


def evaluate(kernel: Kernel, t: float | np.ndarray) -> float | np.ndarray:
    """Evaluate A(t); scalar in, scalar out, array in, array out."""
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0.0):
        raise KernelDomainError(f"Kernel is defined for t >= 0 only, got {t!r}.")
    out = kernel.value(arr)
    if out.ndim == 0:
        return float(out)
    return out


def integral_tail(kernel: Kernel, t0: float, tol: float = SERIES_TOL) -> float:
    """Return the integral of A over [t0, +inf)."""
    _check_tol(tol, "integral_tail")
    if not t0 >= 0.0:
        raise KernelDomainError(f"Tail integral needs t0 >= 0, got {t0}.")
    return kernel.tail(float(t0), tol)


def deriv_l1(kernel: Kernel) -> float:
    """Total variation of A on [0, +inf), i.e. the L1 norm of A'."""
    return kernel.total_variation()


def supremum(kernel: Kernel) -> float:
    return kernel.supremum()


def laplace(kernel: Kernel, r: float, tol: float = SERIES_TOL) -> float:
    """Laplace transform of A at r; +inf where the integral diverges."""
    _check_tol(tol, "laplace")
    return kernel.laplace(float(r), tol)


def _truncate_series(
    kernel: Kernel,
    h: float,
    tol: float,
    max_terms: int,
    op_name: str,
    rate: float = 0.0,
) -> tuple[int, list[float], float]:
    """
    Sum A(t_1) w(t_1), A(t_2) w(t_2), ... in growing chunks, w(t) = e^{-rate t}.

    Returns the index of the last summed term, the chunk sums and the
    closed-form remainder h * sum_{n>last} A(t_n) w(t_n) (0 when the dual
    criterion stopped the summation).
    """
    _check_tol(tol, op_name)
    if not h > 0.0:
        raise KernelDomainError(f"Operation '{op_name}' needs h > 0, got {h}.")

    partials: list[float] = []
    start = 1
    chunk = _FIRST_CHUNK
    remainder = 0.0

    while True:
        idx = np.arange(start, start + chunk, dtype=float)
        terms = kernel.value(idx * h)
        if rate:
            terms = terms * np.exp(-rate * idx * h)
        partials.append(float(np.sum(terms)))
        last = start + chunk - 1
        t_last = last * h
        weight = math.exp(-rate * t_last)

        if (
            weight * float(kernel.value(np.float64(t_last))) <= tol
            and weight * kernel.tail(t_last, tol) <= tol
        ):
            break

        closure = kernel.tail_closure(t_last, h, tol, rate)
        if closure is not None:
            remainder = closure
            break

        if last >= max_terms:
            raise SeriesDivergenceError(
                f"Series h*sum A(t_n) for {kernel.family} kernel with h={h} "
                f"did not reach tol={tol} within {max_terms} terms."
            )
        start = last + 1
        chunk = min(2 * chunk, _MAX_CHUNK, max_terms - last)

    logger.debug("[Kernel] %s series, h=%g: %d terms summed", kernel.family, h, last)
    return last, partials, remainder


def discrete_series(
    kernel: Kernel,
    h: float,
    tol: float = SERIES_TOL,
    *,
    max_terms: int = SERIES_MAX_TERMS,
) -> float:
    """
    Right-rectangle series h * sum_{n>=0} A(t_{n+1}).

    Terms are summed in growing chunks. Summation stops once the last term is
    below tol and the remaining integral mass is below tol, or once the
    kernel's closed-form remainder is accurate to tol.

    :raises SeriesDivergenceError: if more than max_terms terms are needed.
    """
    _, partials, remainder = _truncate_series(kernel, h, tol, max_terms, "discrete_series")
    return h * math.fsum(partials) + remainder


def series_truncation(
    kernel: Kernel,
    h: float,
    tol: float = SERIES_TOL,
    *,
    max_terms: int = SERIES_MAX_TERMS,
) -> tuple[int, float]:
    """
    Truncation used by discrete_series: (number of summed terms, remainder
    h * sum beyond them).
    """
    last, _, remainder = _truncate_series(kernel, h, tol, max_terms, "series_truncation")
    return last, remainder


def damped_series(
    kernel: Kernel,
    h: float,
    rate: float,
    tol: float = SERIES_TOL,
    *,
    max_terms: int = SERIES_MAX_TERMS,
) -> float:
    """
    Weighted series h * sum_{n>=1} A(t_n) e^{-rate t_n} for rate >= 0.

    Same truncation rules as discrete_series, applied to the weighted terms;
    the closed-form remainder (power law) carries the weight as well.
    """
    if not rate >= 0.0:
        raise KernelDomainError(f"Damped series needs rate >= 0, got {rate}.")
    _, partials, remainder = _truncate_series(
        kernel, h, tol, max_terms, "damped_series", float(rate)
    )
    return h * math.fsum(partials) + remainder


def derivative(kernel: Kernel, t: float, order: int = 1) -> float:
    """
    Derivative A^(order)(t) of an analytic kernel.

    :raises KernelDomainError: for t < 0, order < 1, or a tabulated kernel.
    """
    if not t >= 0.0:
        raise KernelDomainError(f"Kernel is defined for t >= 0 only, got {t!r}.")
    if order < 1:
        raise KernelDomainError(f"Derivative order must be at least 1, got {order}.")
    return kernel.derivative(float(t), order)

# src/indicators.py

"""
Эпидемические индикаторы: R0, R0(h), ошибка квадратуры tau(h), темпы роста
(непрерывный и дискретный критерий инвазии), финальный размер и диагностика
дискретного соотношения финального размера на траектории.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .errors import DomainError
from .kernel import (
    SERIES_TOL,
    Kernel,
    damped_series,
    discrete_series,
    integral_tail,
    laplace,
    series_truncation,
)
from .model import EpidemicModel, validate
from .roots import RootNotFoundError, bisect, expand_bracket
from .solver_models import IndicatorReport, Trajectory


logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Свои исключения
# ---------------------------------------------------------------------------

class SteadyStateRequiredError(DomainError):
    """Diagnostic needs a trajectory that reached numerical steady state."""
    pass


def _check_step(h: float, op_name: str) -> None:
    if not h > 0.0:
        raise DomainError(f"Operation '{op_name}' needs h > 0, got {h}.")


def _require_steady_state(trajectory: Trajectory, op_name: str) -> float:
    if trajectory.S_inf_h is None:
        raise SteadyStateRequiredError(
            f"Operation '{op_name}' needs a trajectory that reached steady state "
            f"({trajectory.scheme.value}, h={trajectory.h}, {len(trajectory)} points)."
        )
    return trajectory.S_inf_h


# ---- Reproduction numbers ---- #

def r0_continuous(model: EpidemicModel, tol: float = SERIES_TOL) -> float:
    """R0 = beta N * int_0^inf A."""
    return model.beta * model.N * integral_tail(model.kernel, 0.0, tol)


def r0_discrete(model: EpidemicModel, h: float, tol: float = SERIES_TOL) -> float:
    """R0(h) = beta N * h * sum_{n>=0} A(t_{n+1})."""
    _check_step(h, "r0_discrete")
    return model.beta * model.N * discrete_series(model.kernel, h, tol)


def tau(kernel: Kernel, h: float, tol: float = SERIES_TOL) -> float:
    """Quadrature error of the right-rectangle series for int_0^inf A."""
    _check_step(h, "tau")
    return integral_tail(kernel, 0.0, tol) - discrete_series(kernel, h, tol)


# ---- Growth rates ---- #

def growth_rate_continuous(model: EpidemicModel, tol: float = SERIES_TOL) -> float:
    """
    Real root r of beta N * int_0^inf A(s) e^{-rs} ds = 1.

    The residual is decreasing in r and equals R0 - 1 at r = 0, so the bracket
    is expanded upwards when R0 > 1 and downwards otherwise.

    :raises RootNotFoundError: when the residual has no zero (e.g. a power-law
        kernel below threshold, whose transform is infinite for r < 0).
    """
    validate(model)
    scale = model.beta * model.N

    def g(r: float) -> float:
        return scale * laplace(model.kernel, r, tol) - 1.0

    g0 = g(0.0)
    if abs(g0) <= tol:
        return 0.0
    a, g_a, b, g_b = expand_bracket(g, 0.0, 1.0 if g0 > 0.0 else -1.0, g_start=g0)
    r = bisect(g, a, b, ftol=tol, g_lo=g_a, g_hi=g_b)
    logger.debug("[Indicators] continuous growth rate %.12g (R0 - 1 = %.3g)", r, g0)
    return r


def _discrete_transform(kernel: Kernel, h: float, tol: float):
    """
    r -> h * sum_{k>=1} A(t_k) x^k, x = 1/(1+rh).

    Kernels that discrete_series truncates outright reuse its m terms. For a
    kernel with a closed-form remainder and r >= 0 the weighted series is
    truncated on its own, with the weight carried into the remainder.
    """
    m, remainder = series_truncation(kernel, h, tol)
    k = np.arange(1, m + 1, dtype=float)
    a = kernel.value(k * h)
    mask = a > 0.0
    k, log_a = k[mask], np.log(a[mask])

    def transform(r: float) -> float:
        if r < 0.0 and remainder > 0.0:
            # ряд без экспоненциальных моментов расходится при r < 0
            return math.inf
        log_x = -math.log1p(r * h)
        if remainder > 0.0:
            return damped_series(kernel, h, -log_x / h, tol)
        with np.errstate(over="ignore"):
            return h * float(np.sum(np.exp(log_a + k * log_x)))

    return transform


def growth_rate_discrete(model: EpidemicModel, h: float, tol: float = SERIES_TOL) -> float:
    """
    Root r in (-1/h, inf) of 1 = h beta N * sum_{n>=0} A(t_{n+1}) (1 + rh)^{-(n+1)}.

    :raises RootNotFoundError: when the truncated residual has no zero.
    """
    validate(model)
    _check_step(h, "growth_rate_discrete")
    transform = _discrete_transform(model.kernel, h, tol)
    scale = model.beta * model.N

    def g(r: float) -> float:
        return scale * transform(r) - 1.0

    g0 = g(0.0)
    if abs(g0) <= tol:
        return 0.0
    if g0 > 0.0:
        a, g_a, b, g_b = expand_bracket(g, 0.0, 1.0, g_start=g0)
    else:
        a, g_a, b, g_b = expand_bracket(g, 0.0, -0.5 / h, g_start=g0, limit=-1.0 / h)
    r = bisect(g, a, b, ftol=tol, g_lo=g_a, g_hi=g_b)
    logger.debug("[Indicators] discrete growth rate %.12g at h=%g", r, h)
    return r


def r0_from_growth_rate(model: EpidemicModel, r: float, tol: float = SERIES_TOL) -> float:
    """R0 implied by a growth rate r: int A / int A e^{-rs}."""
    value = laplace(model.kernel, r, tol)
    if not (math.isfinite(value) and value > 0.0):
        raise DomainError(f"Laplace transform at r={r} is {value}; no R0 corresponds.")
    return integral_tail(model.kernel, 0.0, tol) / value


def r0_h_from_growth_rate(
    model: EpidemicModel, h: float, r: float, tol: float = SERIES_TOL
) -> float:
    """Discrete counterpart of r0_from_growth_rate."""
    _check_step(h, "r0_h_from_growth_rate")
    if not r > -1.0 / h:
        raise DomainError(f"Discrete growth rate must exceed -1/h = {-1.0 / h}, got {r}.")
    value = _discrete_transform(model.kernel, h, tol)(r)
    if not (math.isfinite(value) and value > 0.0):
        raise DomainError(f"Discrete transform at r={r} is {value}; no R0(h) corresponds.")
    return discrete_series(model.kernel, h, tol) / value


# ---- Final size ---- #

def final_size_from_relation(R0: float, N: float, S0: float, tol: float = SERIES_TOL) -> float:
    """
    Unique S_inf in (0, S0] with log(S0 / S_inf) = R0 (1 - S_inf / N),
    by bisection to absolute tolerance tol * N.
    """
    if not (R0 > 0.0 and N > 0.0 and 0.0 < S0 <= N):
        raise DomainError(
            f"Final size relation needs R0 > 0 and 0 < S0 <= N, got R0={R0}, S0={S0}, N={N}."
        )

    def f(s: float) -> float:
        return math.log(S0 / s) - R0 * (1.0 - s / N)

    f_hi = f(S0)
    if f_hi == 0.0:
        return S0

    # нижняя граница: делим, пока невязка не станет положительной
    lo = 0.5 * S0
    f_lo = f(lo)
    while f_lo <= 0.0:
        lo *= 0.5
        if lo == 0.0:
            raise RootNotFoundError(
                f"Final size relation: no lower bracket for R0={R0}, S0={S0}, N={N}."
            )
        f_lo = f(lo)

    return bisect(f, lo, S0, xtol=tol * N, g_lo=f_lo, g_hi=f_hi)


def discrete_final_size_check(
    trajectory: Trajectory, model: EpidemicModel, tol: float = SERIES_TOL
) -> float:
    """
    Relative residual |h beta sum_n phi_{n+1} - R0(h) (1 - S_inf(h)/N)| / max(1, R0(h)).

    The sum over phi is taken on the committed trajectory; infectivity beyond
    the last mesh point is closed with the remaining discrete kernel mass of
    the initial infectives and of every committed infection.
    """
    S_inf = _require_steady_state(trajectory, "discrete_final_size_check")
    h, beta, N = trajectory.h, model.beta, model.N
    S, phi = trajectory.S, trajectory.phi
    L = len(trajectory) - 1

    series = discrete_series(model.kernel, h, tol)
    mass = series / h
    # cum[i] = sum_{m=1}^{i} A(t_m)
    a = model.kernel.value(np.arange(1, L + 1) * h)
    cum = np.concatenate(([0.0], np.cumsum(a)))

    # новые заражения шага j: h beta S_{j+1} phi_j
    infections = h * beta * S[1:] * phi[:-1]
    tails = mass - cum[L - np.arange(L)]
    phi_sum = (
        float(np.sum(phi[1:]))
        + model.initial_infected * (mass - cum[L])
        + float(np.sum(infections * tails))
    )

    r0_h = beta * N * series
    lhs = h * beta * phi_sum
    rhs = r0_h * (1.0 - S_inf / N)
    residual = abs(lhs - rhs) / max(1.0, r0_h)
    logger.debug("[Indicators] final size identity: lhs=%.15g rhs=%.15g", lhs, rhs)
    return residual


def u_factor(trajectory: Trajectory, model: EpidemicModel) -> float:
    """
    U(h) = sum_n log(1 + h beta phi_n) / (h beta sum_n phi_n) over the steps
    that produced the last S; exactly 1 when no infectivity was recorded.
    """
    hb = trajectory.h * model.beta
    phi = trajectory.phi[:-1]
    denom = hb * float(np.sum(phi))
    if denom == 0.0:
        return 1.0
    return float(np.sum(np.log1p(hb * phi))) / denom


def product_form_residual(trajectory: Trajectory, model: EpidemicModel) -> float:
    """|log S_last + sum_n log(1 + h beta phi_n) - log S0|, the relative gap of the product form."""
    S0, S_last = float(trajectory.S[0]), float(trajectory.S[-1])
    if S0 == 0.0:
        return 0.0
    hb = trajectory.h * model.beta
    log_product = float(np.sum(np.log1p(hb * trajectory.phi[:-1])))
    return abs(math.log(S_last) + log_product - math.log(S0))


def limit_consistency_gap(
    trajectory: Trajectory, model: EpidemicModel, tol: float = SERIES_TOL
) -> float:
    """log(S0 / S_inf(h)) - (N - S_inf(h)) beta h sum A(t_{n+1}); tends to 0 with h."""
    S_inf = _require_steady_state(trajectory, "limit_consistency_gap")
    if model.S0 == 0.0:
        raise DomainError("limit_consistency_gap is undefined for S0 = 0.")
    series = discrete_series(model.kernel, trajectory.h, tol)
    return math.log(model.S0 / S_inf) - (model.N - S_inf) * model.beta * series


# ---- Report ---- #

def _optional_rate(op, *args) -> float | None:
    try:
        return op(*args)
    except RootNotFoundError as e:
        logger.warning("[Indicators] %s: %s", op.__name__, e)
        return None


def indicator_report(
    model: EpidemicModel,
    h: float,
    tol: float = SERIES_TOL,
    trajectory: Trajectory | None = None,
) -> IndicatorReport:
    """
    Assemble every indicator for (model, h). Trajectory-based fields are
    filled only for a trajectory that reached steady state.
    """
    validate(model)
    R0 = r0_continuous(model, tol)
    R0_h = r0_discrete(model, h, tol)
    if model.S0 > 0.0:
        S_inf_relation = final_size_from_relation(R0, model.N, model.S0, tol)
    else:
        S_inf_relation = 0.0

    fields = {
        "R0": R0,
        "R0_h": R0_h,
        "tau_h": tau(model.kernel, h, tol),
        "r_continuous": _optional_rate(growth_rate_continuous, model, tol),
        "r_discrete": _optional_rate(growth_rate_discrete, model, h, tol),
        "S_inf_relation": S_inf_relation,
    }
    if trajectory is not None and trajectory.S_inf_h is not None:
        fields.update(
            S_inf_h=trajectory.S_inf_h,
            U_h=u_factor(trajectory, model),
            final_size_residual=discrete_final_size_check(trajectory, model, tol),
        )
    return IndicatorReport(**fields)

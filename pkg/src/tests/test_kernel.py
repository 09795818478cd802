# tests/test_kernel.py

import math

import numpy as np
import pytest
from pydantic import ValidationError

from ..errors import ConfigError, DomainError
from ..kernel import (
    ExponentialKernel,
    GaussianKernel,
    KernelDomainError,
    KernelToleranceError,
    PowerLawKernel,
    SeriesDivergenceError,
    TabulatedKernel,
    damped_series,
    deriv_l1,
    derivative,
    discrete_series,
    evaluate,
    integral_tail,
    laplace,
    series_truncation,
    supremum,
)


ZETA2 = math.pi ** 2 / 6.0


# ---------------------------------------------------------------------------
# Вспомогательные функции
# ---------------------------------------------------------------------------

def _gaussian() -> GaussianKernel:
    return GaussianKernel(mu=0.2, sigma=0.4)


def _kernels() -> list:
    return [
        PowerLawKernel(p=2.0),
        PowerLawKernel(p=3.5),
        _gaussian(),
        GaussianKernel(mu=-0.5, sigma=1.0),
        ExponentialKernel(lam=1.0),
        ExponentialKernel(lam=0.3, normalized=False),
        TabulatedKernel(grid=(0.0, 1.0, 2.0), values=(0.0, 1.0, 0.0)),
        TabulatedKernel(grid=(0.5, 1.5, 4.0), values=(2.0, 0.5, 0.25)),
    ]


def _dense_total_variation(kernel, t_end: float, n: int) -> float:
    t = np.linspace(0.0, t_end, n)
    return float(np.sum(np.abs(np.diff(kernel.value(t)))) + kernel.value(np.float64(t_end)))


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def test_evaluate_power_law() -> None:
    k = PowerLawKernel(p=2.0)
    assert evaluate(k, 0.1) == pytest.approx(1.0 / 1.21, rel=1e-15)
    assert evaluate(k, 0.0) == 1.0


def test_evaluate_gaussian_at_mode() -> None:
    assert evaluate(_gaussian(), 0.2) == pytest.approx(1.0 / (0.4 * math.sqrt(2.0 * math.pi)), rel=1e-14)
    assert evaluate(_gaussian(), 0.2) == pytest.approx(0.997356, abs=1e-6)


def test_evaluate_vectorized_returns_array() -> None:
    out = evaluate(ExponentialKernel(lam=2.0), np.array([0.0, 1.0]))
    assert isinstance(out, np.ndarray)
    assert out == pytest.approx([2.0, 2.0 * math.exp(-2.0)])


def test_evaluate_tabulated_interpolates_and_extends_by_zero() -> None:
    k = TabulatedKernel(grid=(0.0, 1.0, 2.0), values=(0.0, 1.0, 0.0))
    assert evaluate(k, 0.5) == pytest.approx(0.5)
    assert evaluate(k, 1.5) == pytest.approx(0.5)
    assert evaluate(k, 3.0) == 0.0

    shifted = TabulatedKernel(grid=(1.0, 2.0), values=(1.0, 1.0))
    assert evaluate(shifted, 0.5) == 0.0


def test_evaluate_negative_time_raises_domain_error() -> None:
    with pytest.raises(KernelDomainError) as excinfo:
        evaluate(PowerLawKernel(p=2.0), -0.1)
    assert "t >= 0" in str(excinfo.value)
    assert isinstance(excinfo.value, DomainError)


def test_evaluate_is_non_negative_on_dense_sample() -> None:
    t = np.linspace(0.0, 100.0, 20001)
    for k in _kernels():
        assert np.all(evaluate(k, t) >= 0.0), k.family


# ---------------------------------------------------------------------------
# Валидация параметров
# ---------------------------------------------------------------------------

def test_power_law_requires_p_above_one() -> None:
    with pytest.raises(ValidationError):
        PowerLawKernel(p=1.0)


def test_gaussian_requires_positive_sigma() -> None:
    with pytest.raises(ValidationError):
        GaussianKernel(mu=0.0, sigma=0.0)


@pytest.mark.parametrize(
    "grid, values, message",
    [
        ((0.0,), (1.0,), "at least two points"),
        ((0.0, 1.0), (1.0,), "differ in length"),
        ((0.0, 0.0), (1.0, 1.0), "strictly increasing"),
        ((-1.0, 1.0), (1.0, 1.0), "t >= 0"),
        ((0.0, 1.0), (1.0, -0.5), "non-negative"),
        ((0.0, 1.0), (1.0, float("nan")), "non-finite"),
    ],
)
def test_tabulated_rejects_invalid_tables(grid, values, message) -> None:
    with pytest.raises(ValidationError) as excinfo:
        TabulatedKernel(grid=grid, values=values)
    assert message in str(excinfo.value)


# ---------------------------------------------------------------------------
# integral_tail, deriv_l1, supremum, laplace
# ---------------------------------------------------------------------------

def test_integral_tail_closed_forms() -> None:
    assert integral_tail(PowerLawKernel(p=2.0), 0.0) == pytest.approx(1.0, rel=1e-15)
    assert integral_tail(_gaussian(), 0.0) == pytest.approx(0.6914624612740131, rel=1e-12)
    assert integral_tail(ExponentialKernel(lam=1.0), 3.0) == pytest.approx(math.exp(-3.0), rel=1e-14)
    assert integral_tail(ExponentialKernel(lam=2.0, normalized=False), 0.0) == pytest.approx(0.5)


def test_integral_tail_tabulated_is_exact_on_segments() -> None:
    k = TabulatedKernel(grid=(0.0, 1.0, 2.0), values=(0.0, 1.0, 0.0))
    assert integral_tail(k, 0.0) == pytest.approx(1.0, rel=1e-15)
    assert integral_tail(k, 0.5) == pytest.approx(0.875, rel=1e-15)
    assert integral_tail(k, 5.0) == 0.0


def test_integral_tail_rejects_bad_arguments() -> None:
    with pytest.raises(KernelToleranceError) as excinfo:
        integral_tail(PowerLawKernel(p=2.0), 0.0, tol=0.0)
    assert "tol > 0" in str(excinfo.value)
    assert isinstance(excinfo.value, ConfigError)

    with pytest.raises(KernelDomainError):
        integral_tail(PowerLawKernel(p=2.0), -1.0)


def test_deriv_l1_values() -> None:
    assert deriv_l1(PowerLawKernel(p=2.0)) == 1.0
    assert deriv_l1(_gaussian()) == pytest.approx(1.1145480851, rel=1e-9)
    assert deriv_l1(TabulatedKernel(grid=(0.0, 1.0, 2.0), values=(0.0, 1.0, 0.0))) == pytest.approx(2.0)


def test_deriv_l1_matches_dense_total_variation() -> None:
    for k in (_gaussian(), ExponentialKernel(lam=1.0), PowerLawKernel(p=3.5)):
        dense = _dense_total_variation(k, 200.0, 2_000_001)
        assert deriv_l1(k) == pytest.approx(dense, rel=1e-4), k.family


def test_deriv_l1_tabulated_counts_support_jumps() -> None:
    k = TabulatedKernel(grid=(0.5, 1.5, 4.0), values=(2.0, 0.5, 0.25))
    # скачок 2 в начале, спады 1.5 и 0.25, скачок 0.25 в конце
    assert deriv_l1(k) == pytest.approx(4.0)


def test_derivative_matches_finite_differences() -> None:
    step = 1e-5
    for kernel in (PowerLawKernel(p=2.5), _gaussian(), ExponentialKernel(lam=3.0, normalized=False)):
        for t in (0.3, 1.0, 2.5):
            central = (evaluate(kernel, t + step) - evaluate(kernel, t - step)) / (2.0 * step)
            assert derivative(kernel, t) == pytest.approx(central, rel=1e-6, abs=1e-12)

            second = (derivative(kernel, t + step) - derivative(kernel, t - step)) / (2.0 * step)
            assert derivative(kernel, t, 2) == pytest.approx(second, rel=1e-6, abs=1e-12)


def test_derivative_closed_forms() -> None:
    assert derivative(PowerLawKernel(p=2.0), 0.0, 3) == pytest.approx(-24.0)
    assert derivative(ExponentialKernel(lam=2.0), 0.0, 2) == pytest.approx(8.0)
    assert derivative(_gaussian(), 0.2) == 0.0


def test_derivative_rejects_bad_arguments() -> None:
    with pytest.raises(KernelDomainError) as excinfo:
        derivative(TabulatedKernel(grid=(0.0, 1.0), values=(1.0, 0.0)), 0.5)
    assert "no closed-form derivative" in str(excinfo.value)

    with pytest.raises(KernelDomainError):
        derivative(PowerLawKernel(p=2.0), -1.0)
    with pytest.raises(KernelDomainError):
        derivative(PowerLawKernel(p=2.0), 1.0, 0)


def test_supremum_values() -> None:
    assert supremum(PowerLawKernel(p=2.0)) == 1.0
    assert supremum(_gaussian()) == pytest.approx(evaluate(_gaussian(), 0.2))
    negative_mode = GaussianKernel(mu=-0.5, sigma=1.0)
    assert supremum(negative_mode) == pytest.approx(evaluate(negative_mode, 0.0))
    assert supremum(ExponentialKernel(lam=3.0)) == 3.0


def test_laplace_closed_forms() -> None:
    assert laplace(ExponentialKernel(lam=1.0), 1.0) == pytest.approx(0.5)
    assert laplace(ExponentialKernel(lam=1.0), -1.0) == math.inf
    assert laplace(PowerLawKernel(p=2.0), -0.1) == math.inf
    assert laplace(PowerLawKernel(p=2.0), 0.0) == pytest.approx(1.0)
    assert laplace(_gaussian(), 0.0) == pytest.approx(0.6914624612740131, rel=1e-12)


def test_laplace_matches_quadrature() -> None:
    from scipy import integrate

    for k in (_gaussian(), PowerLawKernel(p=2.0)):
        for r in (0.3, 1.7):
            expected, _ = integrate.quad(
                lambda s: float(k.value(np.float64(s))) * math.exp(-r * s),
                0.0,
                120.0,
                epsabs=1e-14,
                epsrel=1e-12,
                limit=400,
            )
            assert laplace(k, r) == pytest.approx(expected, rel=1e-8), (k.family, r)

    # треугольник на [0, 2]: точная формула
    tri = TabulatedKernel(grid=(0.0, 1.0, 2.0), values=(0.0, 1.0, 0.0))
    r = 0.5
    expected = (1.0 - math.exp(-r)) ** 2 / r ** 2
    assert laplace(tri, r) == pytest.approx(expected, rel=1e-9)


# ---------------------------------------------------------------------------
# discrete_series
# ---------------------------------------------------------------------------

def test_discrete_series_zeta_identities() -> None:
    k = PowerLawKernel(p=2.0)
    assert discrete_series(k, 1.0) == pytest.approx(ZETA2 - 1.0, rel=1e-11)
    partial = sum(1.0 / m ** 2 for m in range(1, 11))
    assert discrete_series(k, 0.1) == pytest.approx(10.0 * (ZETA2 - partial), rel=1e-11)
    assert discrete_series(k, 0.1) == pytest.approx(0.951663, abs=1e-6)


def test_discrete_series_zero_kernel() -> None:
    k = TabulatedKernel(grid=(0.0, 1.0), values=(0.0, 0.0))
    assert discrete_series(k, 0.5) == 0.0


def test_discrete_series_exponential_geometric_sum() -> None:
    h = 0.25
    q = math.exp(-h)
    assert discrete_series(ExponentialKernel(lam=1.0), h) == pytest.approx(h * q / (1.0 - q), rel=1e-12)


def test_discrete_series_slow_power_law_uses_closure() -> None:
    k = PowerLawKernel(p=1.2)
    terms, remainder = series_truncation(k, 0.5)
    assert remainder > 0.0
    assert terms < 10 ** 7

    # независимая проверка: прямая сумма + хвост Эйлера–Маклорена с большим запасом
    n = np.arange(1, 200_001, dtype=float)
    head = 0.5 * math.fsum((1.0 + 0.5 * n) ** -1.2)
    t_m = 0.5 * 200_000
    tail = (1.0 + t_m) ** -0.2 / 0.2 - 0.25 * (1.0 + t_m) ** -1.2
    assert discrete_series(k, 0.5) == pytest.approx(head + tail, rel=1e-9)


@pytest.mark.parametrize("h, rate", [(1.0, 1e-3), (1.0, 0.05), (0.1, 0.2)])
def test_damped_series_matches_direct_sum(h: float, rate: float) -> None:
    k = PowerLawKernel(p=2.0)
    n = np.arange(1, 400_001, dtype=float)
    direct = h * math.fsum((1.0 + h * n) ** -2.0 * np.exp(-rate * h * n))
    assert damped_series(k, h, rate) == pytest.approx(direct, abs=1e-11)


def test_damped_series_without_damping() -> None:
    for k in _kernels():
        assert damped_series(k, 0.5, 0.0) == pytest.approx(discrete_series(k, 0.5), rel=1e-14)


def test_damped_series_rejects_negative_rate() -> None:
    with pytest.raises(KernelDomainError) as excinfo:
        damped_series(PowerLawKernel(p=2.0), 1.0, -0.1)
    assert "rate >= 0" in str(excinfo.value)


def test_discrete_series_bound_by_integral_and_variation() -> None:
    tol = 1e-12
    for k in _kernels():
        for h in (1.0, 0.5, 0.1, 0.01):
            bound = integral_tail(k, 0.0, tol) + h * deriv_l1(k) + 2.0 * tol
            assert discrete_series(k, h, tol) <= bound, (k.family, h)


def test_quadrature_error_shrinks_with_step() -> None:
    for k in (_gaussian(), ExponentialKernel(lam=1.0), PowerLawKernel(p=2.0)):
        gaps = [abs(integral_tail(k, 0.0) - discrete_series(k, h)) for h in (1.0, 0.5, 0.1, 0.01, 0.001)]
        assert all(b < a for a, b in zip(gaps, gaps[1:])), (k.family, gaps)


def test_discrete_series_rejects_bad_arguments() -> None:
    with pytest.raises(KernelDomainError) as excinfo:
        discrete_series(PowerLawKernel(p=2.0), 0.0)
    assert "h > 0" in str(excinfo.value)

    with pytest.raises(KernelToleranceError):
        discrete_series(PowerLawKernel(p=2.0), 0.1, tol=-1.0)


def test_discrete_series_divergence_guard() -> None:
    with pytest.raises(SeriesDivergenceError) as excinfo:
        discrete_series(ExponentialKernel(lam=1e-3), 0.1, max_terms=10)
    assert "did not reach tol" in str(excinfo.value)


def main() -> int:
    """Запустить все тесты в этом файле как самостоятельный скрипт."""
    import pytest
    from pathlib import Path

    return pytest.main([str(Path(__file__))])

if __name__ == "__main__":
    raise SystemExit(main())

# tests/test_roots.py

import math

import pytest

from ..errors import SolverError
from ..roots import RootNotFoundError, bisect, expand_bracket


# ---------------------------------------------------------------------------
# expand_bracket
# ---------------------------------------------------------------------------

def test_expand_bracket_doubles_step() -> None:
    calls = []

    def g(x: float) -> float:
        calls.append(x)
        return 5.0 - x

    assert expand_bracket(g, 0.0, 1.0) == (3.0, 2.0, 7.0, -2.0)
    assert calls == [0.0, 1.0, 3.0, 7.0]


def test_expand_bracket_uses_given_start_value() -> None:
    calls = []

    def g(x: float) -> float:
        calls.append(x)
        return 5.0 - x

    expand_bracket(g, 0.0, 1.0, g_start=5.0)
    assert 0.0 not in calls


def test_expand_bracket_approaches_limit_without_reaching_it() -> None:
    a, g_a, b, g_b = expand_bracket(lambda x: x + 0.9, 0.0, -0.5, limit=-1.0)

    assert a == pytest.approx(-0.875)
    assert g_a == pytest.approx(0.025)
    assert b == pytest.approx(-0.9375)
    assert g_b == pytest.approx(-0.0375)


def test_expand_bracket_skips_nan() -> None:
    def g(x: float) -> float:
        return math.nan if 2.0 < x < 4.0 else 5.0 - x

    assert expand_bracket(g, 0.0, 1.0) == (1.0, 4.0, 7.0, -2.0)


def test_expand_bracket_without_sign_change_raises() -> None:
    with pytest.raises(RootNotFoundError) as excinfo:
        expand_bracket(lambda x: 1.0, 0.0, -0.5, limit=-1.0)
    assert "No sign change" in str(excinfo.value)
    assert isinstance(excinfo.value, SolverError)

    with pytest.raises(RootNotFoundError):
        expand_bracket(lambda x: 1.0, 0.0, 1.0, max_iter=10)


def test_expand_bracket_rejects_zero_step() -> None:
    with pytest.raises(ValueError):
        expand_bracket(lambda x: x, 0.0, 0.0)


# ---------------------------------------------------------------------------
# bisect
# ---------------------------------------------------------------------------

def test_bisect_finds_square_root() -> None:
    root = bisect(lambda x: x * x - 2.0, 0.0, 2.0)
    assert root == pytest.approx(math.sqrt(2.0), abs=1e-15)


def test_bisect_stops_on_tolerances() -> None:
    root = bisect(lambda x: x - 0.3, 0.0, 1.0, xtol=1e-3)
    assert abs(root - 0.3) <= 1e-3

    root = bisect(lambda x: x - 0.3, 0.0, 1.0, ftol=1e-6)
    assert abs(root - 0.3) <= 1e-6


def test_bisect_returns_zero_endpoint() -> None:
    assert bisect(lambda x: x - 1.0, 1.0, 3.0) == 1.0
    assert bisect(lambda x: x - 3.0, 1.0, 3.0) == 3.0


def test_bisect_without_sign_change_raises() -> None:
    with pytest.raises(RootNotFoundError) as excinfo:
        bisect(lambda x: x * x + 1.0, -1.0, 1.0)
    assert "no sign change" in str(excinfo.value)


def test_bisect_iteration_cap() -> None:
    with pytest.raises(RootNotFoundError) as excinfo:
        bisect(lambda x: x - 0.3, 0.0, 1.0, max_iter=3)
    assert "did not converge" in str(excinfo.value)


def test_bisect_refuses_jump_over_zero() -> None:
    def g(x: float) -> float:
        return math.inf if x < 1.0 else -1.0

    with pytest.raises(RootNotFoundError) as excinfo:
        bisect(g, 0.0, 2.0)
    assert "jumps over zero" in str(excinfo.value)


def main() -> int:
    """Запустить все тесты в этом файле как самостоятельный скрипт."""
    import pytest
    from pathlib import Path

    return pytest.main([str(Path(__file__))])

if __name__ == "__main__":
    raise SystemExit(main())

# src/roots.py

"""
Скалярные корни монотонных невязок: расширение скобки и бисекция.

Используется для темпов роста (критерий инвазии, непрерывный и дискретный)
и для соотношения финального размера.
"""

from __future__ import annotations

import logging
import math
import os
from typing import Callable

from .errors import SolverError


logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Свои исключения
# ---------------------------------------------------------------------------

class RootNotFoundError(SolverError):
    """No sign change could be bracketed, or bisection stopped on a jump."""
    pass


ROOT_MAX_ITER = int(os.getenv("NSFD_ROOT_MAX_ITER", "400"))


Residual = Callable[[float], float]


def _same_sign(a: float, b: float) -> bool:
    return (a > 0.0) == (b > 0.0)


def expand_bracket(
    g: Residual,
    start: float,
    step: float,
    *,
    g_start: float | None = None,
    limit: float | None = None,
    max_iter: int = ROOT_MAX_ITER,
) -> tuple[float, float, float, float]:
    """
    Walk away from `start` in the direction of `step`, doubling the step,
    until g changes sign with respect to g(start).

    When `limit` is given the walk never reaches it: a step that would cross
    it is replaced by halving the remaining distance.

    :returns: (a, g(a), b, g(b)) where a is the last point with the sign of
        g(start) and b the first point with the opposite sign.
    :raises RootNotFoundError: if no sign change is found within max_iter steps.
    """
    if step == 0.0:
        raise ValueError("expand_bracket needs a non-zero step")
    a = start
    g_a = g(start) if g_start is None else g_start
    x = start
    for _ in range(max_iter):
        nxt = x + step
        if limit is not None and (nxt - limit) * step >= 0.0:
            nxt = 0.5 * (x + limit)
            if nxt == x:
                break
        g_next = g(nxt)
        x = nxt
        step *= 2.0
        if math.isnan(g_next):
            continue
        if not _same_sign(g_next, g_a):
            return a, g_a, nxt, g_next
        a, g_a = nxt, g_next
    raise RootNotFoundError(
        f"No sign change found walking from {start} "
        f"(last point {x}, residual {g_a}, limit {limit})."
    )


def bisect(
    g: Residual,
    lo: float,
    hi: float,
    *,
    ftol: float = 0.0,
    xtol: float = 0.0,
    g_lo: float | None = None,
    g_hi: float | None = None,
    max_iter: int = ROOT_MAX_ITER,
) -> float:
    """
    Bisection on a bracket with a sign change.

    Stops when |g(mid)| <= ftol, when the bracket is narrower than xtol, or
    when it can no longer be split in floating point. A collapsed bracket is
    accepted as a root only if g is finite on both of its ends; an infinite
    end means g jumps over zero and RootNotFoundError is raised.
    """
    g_lo = g(lo) if g_lo is None else g_lo
    g_hi = g(hi) if g_hi is None else g_hi
    if g_lo == 0.0:
        return lo
    if g_hi == 0.0:
        return hi
    if _same_sign(g_lo, g_hi):
        raise RootNotFoundError(
            f"Bracket [{lo}, {hi}] has no sign change (g = {g_lo}, {g_hi})."
        )

    for it in range(max_iter):
        if abs(hi - lo) <= xtol:
            break
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        g_mid = g(mid)
        if abs(g_mid) <= ftol:
            logger.debug("[Roots] root %r after %d bisections", mid, it + 1)
            return mid
        if _same_sign(g_mid, g_lo):
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    else:
        raise RootNotFoundError(
            f"Bisection did not converge in {max_iter} iterations on [{lo}, {hi}]."
        )

    if not (math.isfinite(g_lo) and math.isfinite(g_hi)):
        raise RootNotFoundError(
            f"Residual jumps over zero at {hi if math.isfinite(g_hi) else lo} "
            f"(g = {g_lo}, {g_hi}); there is no root."
        )
    return lo if abs(g_lo) <= abs(g_hi) else hi

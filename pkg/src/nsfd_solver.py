# src/nsfd_solver.py

from __future__ import annotations

import logging
import os
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .model import EpidemicModel, phi0, phi0_mesh, validate
from .solver_models import Scheme, SolverConfig, Trajectory


logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Свои исключения
# ---------------------------------------------------------------------------

class StepBudgetError(ConfigError):
    """Requested mesh is larger than the configured step cap."""
    pass


# защита памяти: O(M) массивы и O(M^2) работа
MAX_STEPS = int(float(os.getenv("NSFD_MAX_STEPS", "2e6")))


def mesh_steps(config: SolverConfig, max_steps: int | None = None) -> int:
    """Number of steps M = round(t_max / h), guarded by the step cap."""
    cap = MAX_STEPS if max_steps is None else max_steps
    steps = config.steps
    if steps > cap:
        raise StepBudgetError(
            f"Mesh with h={config.h}, t_max={config.t_max} needs {steps} steps; "
            f"cap is {cap} (NSFD_MAX_STEPS)."
        )
    return steps


def is_quiet(S_n: float, S_prev: float, phi_n: float, N: float, config: SolverConfig) -> bool:
    """One step of the steady-state test: small infectivity and small change of S."""
    return phi_n < config.eps_phi * N and abs(S_n - S_prev) < config.eps_s * max(S_n, 1.0)


def compensated_sum(terms: np.ndarray) -> float:
    """
    Sum in index order with compensated accumulation.

    The running sum is np.cumsum; the rounding error of every partial sum is
    recovered exactly (TwoSum) and the errors are added back at the end.
    """
    if terms.size == 0:
        return 0.0
    partial = np.cumsum(terms)
    prev, s = partial[:-1], partial[1:]
    b_virtual = s - prev
    errors = (prev - (s - b_virtual)) + (terms[1:] - b_virtual)
    return float(partial[-1] + np.sum(errors))


def _convolution(
    a_rev: np.ndarray,
    w: np.ndarray,
    n: int,
    M: int,
    cutoff: int | None,
) -> float:
    # sum_{j=0}^{n} A(t_{n+1-j}) w_j, где a_rev[i] = A(t_{M-i})
    lo = 0 if cutoff is None else max(0, n + 1 - cutoff)
    return compensated_sum(a_rev[M - n - 1 + lo:M] * w[lo:n + 1])


def nsfd_step(
    S_history: Sequence[float],
    phi_history: Sequence[float],
    model: EpidemicModel,
    h: float,
    n: int,
) -> tuple[float, float]:
    """
    One step of the scheme from t_n to t_{n+1}.

    S_history holds S_0..S_n (S_n is the last entry used), phi_history holds
    phi_0..phi_n. The implicit S-update is taken in closed form
    S_{n+1} = S_n / (1 + h beta phi_n).
    """
    if n < 0 or len(S_history) < n + 1 or len(phi_history) < n + 1:
        raise DomainError(f"Step n={n} needs S_0..S_n and phi_0..phi_n.")
    S_hist = np.asarray(S_history[:n + 1], dtype=float)
    phi_hist = np.asarray(phi_history[:n + 1], dtype=float)
    hb = h * model.beta

    S_next = S_hist[n] / (1.0 + hb * phi_hist[n])
    S_shift = np.append(S_hist[1:], S_next)
    lags = (n + 1 - np.arange(n + 1)) * h
    conv = compensated_sum(model.kernel.value(lags) * (S_shift * phi_hist))
    phi_next = phi0(model, (n + 1) * h) + hb * conv
    return float(S_next), float(phi_next)


def nsfd_run(model: EpidemicModel, config: SolverConfig) -> Trajectory:
    """
    Integrate the model on t_n = n h up to t_max, or until the steady-state
    window fires when config.stop_at_steady_state is set.
    """
    validate(model)
    M = mesh_steps(config)
    h, beta, N = config.h, model.beta, model.N
    hb = h * beta
    cutoff = config.history_cutoff

    times = np.arange(M + 1) * h
    a = model.kernel.value(times)
    a_rev = a[::-1].copy()
    forcing = phi0_mesh(model, times)

    S = np.empty(M + 1)
    phi = np.empty(M + 1)
    w = np.empty(M + 1)
    S[0] = model.S0
    phi[0] = forcing[0]

    streak = 0
    steady_step: int | None = None
    last = M
    for n in range(M):
        S[n + 1] = S[n] / (1.0 + hb * phi[n])
        w[n] = S[n + 1] * phi[n]
        phi[n + 1] = forcing[n + 1] + hb * _convolution(a_rev, w, n, M, cutoff)

        if is_quiet(S[n + 1], S[n], phi[n + 1], N, config):
            streak += 1
            if streak >= config.window and steady_step is None:
                steady_step = n + 1
                if config.stop_at_steady_state:
                    last = n + 1
                    break
        else:
            streak = 0

    logger.debug(
        "[NSFD] h=%g: %d steps, steady state at step %s", h, last, steady_step
    )
    trajectory = Trajectory(
        times=times[:last + 1],
        S=S[:last + 1],
        phi=phi[:last + 1],
        scheme=Scheme.NSFD,
        h=h,
        N=N,
    )
    S_inf = steady_state(trajectory, config)
    return trajectory.model_copy(
        update={
            "steady_state_reached": S_inf is not None,
            "steady_state_step": steady_step if S_inf is not None else None,
            "S_inf_h": S_inf,
        }
    )


def steady_state(trajectory: Trajectory, config: SolverConfig) -> float | None:
    """
    S_inf(h) = last S_n when the trailing `window` steps all pass the
    steady-state test; None otherwise.
    """
    S, phi = trajectory.S, trajectory.phi
    window = config.window
    if len(S) < window + 1:
        return None
    for n in range(len(S) - window, len(S)):
        if not is_quiet(S[n], S[n - 1], phi[n], trajectory.N, config):
            return None
    return float(S[-1])

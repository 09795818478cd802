# src/dq_reference.py

from __future__ import annotations

import logging
import math
import os

import numpy as np

from .errors import SolverError
from .model import EpidemicModel, phi0_mesh, validate
from .nsfd_solver import compensated_sum, mesh_steps, steady_state
from .solver_models import Scheme, SolverConfig, Trajectory, ViolationReport


logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Свои исключения
# ---------------------------------------------------------------------------

class DQStepError(SolverError):
    """
    The implicit trapezoidal step could not be resolved.

    Carries the step index, the step size and the trajectory committed before
    the failing step.
    """

    def __init__(self, n: int, h: float, reason: str, partial: Trajectory | None = None) -> None:
        self.n = n
        self.h = h
        self.reason = reason
        self.partial = partial
        super().__init__(f"Trapezoidal DQ step n={n} (h={h}) failed: {reason}")


DQ_TOL = float(os.getenv("NSFD_DQ_TOL", "1e-12"))
DQ_MAX_ITER = int(os.getenv("NSFD_DQ_MAX_ITER", "100"))

_TINY = 1e-300


def _resolve_step(
    c: float,
    B: float,
    kappa: float,
    gamma: float,
    S_guess: float,
    phi_guess: float,
    tol: float,
    max_iter: int,
) -> tuple[float, float, int]:
    """
    Fixed-point iteration for the pair of implicit equations
        phi = c + kappa * S * phi
        S   = B - gamma * S * phi
    each solved for its own unknown in turn.
    """
    S, phi = S_guess, phi_guess
    for it in range(1, max_iter + 1):
        denom = 1.0 - kappa * S
        if denom == 0.0:
            raise ArithmeticError("phi-equation is singular (kappa * S = 1)")
        phi_new = c / denom
        S_new = B / (1.0 + gamma * phi_new)
        if not (math.isfinite(phi_new) and math.isfinite(S_new)):
            raise ArithmeticError("iterates are not finite")
        change = max(
            abs(S_new - S) / max(abs(S_new), _TINY),
            abs(phi_new - phi) / max(abs(phi_new), _TINY),
        )
        S, phi = S_new, phi_new
        if change <= tol:
            return S, phi, it
    raise ArithmeticError(f"no convergence after {max_iter} iterations")


def trapz_dq_run(
    model: EpidemicModel,
    config: SolverConfig,
    *,
    tol: float = DQ_TOL,
    max_iter: int = DQ_MAX_ITER,
) -> Trajectory:
    """
    Fully implicit trapezoidal direct quadrature for the coupled S/phi system.

    The whole horizon is integrated (no steady-state stop) so the mesh matches
    an NSFD run with stop_at_steady_state disabled.

    :raises DQStepError: when a step cannot be resolved; the partial
        trajectory is attached to the exception.
    """
    validate(model)
    M = mesh_steps(config)
    h, beta, N = config.h, model.beta, model.N
    kappa = 0.5 * h * beta * float(model.kernel.value(np.float64(0.0)))
    gamma = 0.5 * h * beta

    times = np.arange(M + 1) * h
    a = model.kernel.value(times)
    a_rev = a[::-1].copy()
    forcing = phi0_mesh(model, times)

    S = np.empty(M + 1)
    phi = np.empty(M + 1)
    v = np.empty(M + 1)
    S[0] = model.S0
    phi[0] = forcing[0]
    v[0] = S[0] * phi[0]

    total_iter = 0
    for n in range(M):
        # sum_{j=0}^{n} w_j A(t_{n+1-j}) S_j phi_j, w_0 = h/2, остальные h
        conv = h * compensated_sum(a_rev[M - n - 1:M] * v[:n + 1]) - 0.5 * h * a[n + 1] * v[0]
        c = forcing[n + 1] + beta * conv
        B = S[n] * (1.0 - gamma * phi[n])
        try:
            S[n + 1], phi[n + 1], iterations = _resolve_step(
                c, B, kappa, gamma, S[n], phi[n], tol, max_iter
            )
        except ArithmeticError as e:
            partial = Trajectory(
                times=times[:n + 1],
                S=S[:n + 1],
                phi=phi[:n + 1],
                scheme=Scheme.TRAPEZOIDAL_DQ,
                h=h,
                N=N,
            )
            logger.debug("[TrapezoidalDQ] breakdown at step %d (h=%g): %s", n, h, e)
            raise DQStepError(n, h, str(e), partial) from e
        v[n + 1] = S[n + 1] * phi[n + 1]
        total_iter += iterations

    logger.debug("[TrapezoidalDQ] h=%g: %d steps, %d fixed-point iterations", h, M, total_iter)
    trajectory = Trajectory(
        times=times,
        S=S,
        phi=phi,
        scheme=Scheme.TRAPEZOIDAL_DQ,
        h=h,
        N=N,
    )
    S_inf = steady_state(trajectory, config)
    return trajectory.model_copy(
        update={"steady_state_reached": S_inf is not None, "S_inf_h": S_inf}
    )


def property_violations(trajectory: Trajectory) -> ViolationReport:
    """
    Indices where S_n < 0, phi_n < 0, or S_{n+1} > S_n, each beyond the
    rounding slack 1e-12 * N.
    """
    slack = 1e-12 * trajectory.N
    S, phi = trajectory.S, trajectory.phi
    return ViolationReport(
        negative_S=np.flatnonzero(S < -slack).tolist(),
        negative_phi=np.flatnonzero(phi < -slack).tolist(),
        increasing_S=np.flatnonzero(np.diff(S) > slack).tolist(),
    )

# src/studies.py

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar

import numpy as np

from .dq_reference import DQStepError, property_violations, trapz_dq_run
from .errors import ConfigError, DomainError
from .indicators import final_size_from_relation, r0_continuous
from .model import EpidemicModel
from .nsfd_solver import nsfd_run
from .solver_models import (
    ConvergenceRow,
    FinalSizeRow,
    SchemeComparison,
    SolverConfig,
    Trajectory,
    build_solver_config,
)


logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Свои исключения
# ---------------------------------------------------------------------------

class MeshNestingError(ConfigError):
    """Coarse mesh points are not points of the reference mesh."""
    pass


# число удвоений горизонта, если стационар не найден
HORIZON_DOUBLINGS = 3

_NEST_RTOL = 1e-9

T = TypeVar("T")
R = TypeVar("R")


def _fan_out(fn: Callable[[T], R], items: Sequence[T], workers: Optional[int]) -> List[R]:
    """Map fn over items, in a process pool when workers > 1; order is preserved."""
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _with(config: SolverConfig, **changes) -> SolverConfig:
    return build_solver_config(**{**config.model_dump(), **changes})


def _run_full(args: tuple[EpidemicModel, SolverConfig]) -> Trajectory:
    model, config = args
    return nsfd_run(model, config)


# --------- СХОДИМОСТЬ --------- #

def _nesting_ratio(h: float, h_ref: float, T_end: float) -> int:
    if not (h_ref > 0.0 and h > h_ref):
        raise MeshNestingError(f"Reference step must satisfy 0 < h_ref < h, got h={h}, h_ref={h_ref}.")
    ratio = round(h / h_ref)
    if abs(ratio * h_ref - h) > _NEST_RTOL * h:
        raise MeshNestingError(f"h_ref={h_ref} does not divide h={h}.")
    M, M_ref = round(T_end / h), round(T_end / h_ref)
    if M * ratio != M_ref:
        raise MeshNestingError(
            f"Horizon T={T_end} gives {M} coarse and {M_ref} reference steps; "
            f"expected {M * ratio}."
        )
    return ratio


def _errors_against(
    coarse: Trajectory, reference: Trajectory, ratio: int
) -> tuple[float, float, float, float]:
    S_ref = reference.S[::ratio]
    phi_ref = reference.phi[::ratio]
    dS = np.abs(coarse.S - S_ref)
    dphi = np.abs(coarse.phi - phi_ref)
    return (
        float(np.max(dS)),
        float(np.max(dphi)),
        float(np.max(dS / np.maximum(np.abs(S_ref), 1e-300))),
        float(np.max(dphi / np.maximum(np.abs(phi_ref), 1e-300))),
    )


def _study_config(h: float, T_end: float) -> SolverConfig:
    return build_solver_config(h=h, t_max=T_end, stop_at_steady_state=False)


def error_vs_reference(
    model: EpidemicModel, h: float, h_ref: float, T_end: float
) -> tuple[float, float]:
    """
    Max absolute differences of S and phi between NSFD runs at h and at h_ref,
    taken over the coarse mesh on [0, T_end].
    """
    ratio = _nesting_ratio(h, h_ref, T_end)
    coarse = nsfd_run(model, _study_config(h, T_end))
    reference = nsfd_run(model, _study_config(h_ref, T_end))
    errS, errPhi, _, _ = _errors_against(coarse, reference, ratio)
    return errS, errPhi


def experimental_order(errors: Sequence[tuple[float, float]]) -> List[Optional[float]]:
    """
    Orders log(err_i / err_{i+1}) / log(h_i / h_{i+1}) between consecutive
    (h, err) pairs; None where an error is zero.
    """
    if len(errors) < 2:
        raise DomainError(f"Experimental order needs at least two (h, err) pairs, got {len(errors)}.")
    hs = [h for h, _ in errors]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise DomainError(f"Step sizes must be strictly decreasing, got {hs}.")

    orders: List[Optional[float]] = []
    for (h0, e0), (h1, e1) in zip(errors, errors[1:]):
        if e0 == 0.0 or e1 == 0.0:
            orders.append(None)
        else:
            orders.append(math.log(e0 / e1) / math.log(h0 / h1))
    return orders


def convergence_table(
    model: EpidemicModel,
    h_list: Iterable[float],
    h_ref: float,
    T_end: float,
    *,
    workers: Optional[int] = None,
) -> List[ConvergenceRow]:
    """
    Errors and experimental orders for every h against a single reference run.
    Rows go from the coarsest h to the finest; orders use the absolute errors
    and are attached to the finer row of each pair.
    """
    hs = sorted(set(float(h) for h in h_list), reverse=True)
    if not hs:
        raise DomainError("Convergence table needs at least one step size.")
    ratios = [_nesting_ratio(h, h_ref, T_end) for h in hs]

    logger.info("[Studies] convergence: reference h=%g on [0, %g]", h_ref, T_end)
    runs = _fan_out(
        _run_full,
        [(model, _study_config(h, T_end)) for h in [h_ref, *hs]],
        workers,
    )
    reference, coarse_runs = runs[0], runs[1:]

    errs = [_errors_against(c, reference, r) for c, r in zip(coarse_runs, ratios)]
    ordS: List[Optional[float]] = [None]
    ordPhi: List[Optional[float]] = [None]
    if len(hs) > 1:
        ordS += experimental_order([(h, e[0]) for h, e in zip(hs, errs)])
        ordPhi += experimental_order([(h, e[1]) for h, e in zip(hs, errs)])

    rows = [
        ConvergenceRow(
            h=h,
            errS_abs=e[0],
            errPhi_abs=e[1],
            errS_rel=e[2],
            errPhi_rel=e[3],
            ordS=oS,
            ordPhi=oP,
        )
        for h, e, oS, oP in zip(hs, errs, ordS, ordPhi)
    ]
    for row in rows:
        logger.info(
            "[Studies] h=%g errS=%.3e errPhi=%.3e ordS=%s ordPhi=%s",
            row.h, row.errS_abs, row.errPhi_abs, row.ordS, row.ordPhi,
        )
    return rows


# --------- ФИНАЛЬНЫЙ РАЗМЕР --------- #

def _relation_value(model: EpidemicModel, tol: float) -> float:
    if model.S0 == 0.0:
        return 0.0
    return final_size_from_relation(r0_continuous(model, tol), model.N, model.S0, tol)


def _sweep_entry(args: tuple[EpidemicModel, SolverConfig, float]) -> FinalSizeRow:
    model, config, relation = args
    current = config
    for attempt in range(HORIZON_DOUBLINGS + 1):
        trajectory = nsfd_run(model, current)
        if trajectory.S_inf_h is not None:
            return FinalSizeRow(
                h=config.h,
                S_inf_h=trajectory.S_inf_h,
                S_inf_relation=relation,
                complete=True,
                t_max_used=current.t_max,
            )
        if attempt < HORIZON_DOUBLINGS:
            logger.info(
                "[Studies] h=%g: no steady state by t=%g, doubling horizon",
                config.h, current.t_max,
            )
            current = _with(current, t_max=2.0 * current.t_max)
    logger.warning("[Studies] h=%g: steady state not reached by t=%g", config.h, current.t_max)
    return FinalSizeRow(
        h=config.h,
        S_inf_h=None,
        S_inf_relation=relation,
        complete=False,
        t_max_used=current.t_max,
    )


def final_size_sweep(
    model: EpidemicModel,
    h_list: Iterable[float],
    config: SolverConfig,
    *,
    workers: Optional[int] = None,
) -> List[FinalSizeRow]:
    """
    Steady-state S_inf(h) for every h next to the relation-based S_inf.
    Rows that never reach steady state are flagged incomplete.
    """
    hs = sorted(set(float(h) for h in h_list), reverse=True)
    relation = _relation_value(model, config.tail_tol)
    entries = [
        (model, _with(config, h=h, stop_at_steady_state=True), relation)
        for h in hs
    ]
    rows = _fan_out(_sweep_entry, entries, workers)
    logger.info("[Studies] final size sweep: %d rows, relation value %.6g", len(rows), relation)
    return rows


# --------- СРАВНЕНИЕ СХЕМ --------- #

def scheme_comparison(
    model: EpidemicModel,
    h: float,
    config: SolverConfig,
    beta: Optional[float] = None,
) -> SchemeComparison:
    """
    NSFD and trapezoidal DQ on the same mesh with their violation reports.
    A DQ breakdown is part of the result: the partial trajectory is kept and
    the failing step is recorded. beta, when given, replaces the model's
    contact rate.
    """
    if beta is not None:
        model = model.with_beta(beta)
    run_config = _with(config, h=h, stop_at_steady_state=False)
    nsfd = nsfd_run(model, run_config)
    breakdown: Optional[int] = None
    try:
        trapz = trapz_dq_run(model, run_config)
    except DQStepError as e:
        logger.info("[Studies] trapezoidal DQ broke down at step %d (h=%g)", e.n, h)
        trapz, breakdown = e.partial, e.n

    comparison = SchemeComparison(
        nsfd=nsfd,
        trapz=trapz,
        nsfd_violations=property_violations(nsfd),
        trapz_violations=property_violations(trapz),
        dq_breakdown_step=breakdown,
    )
    logger.info(
        "[Studies] comparison h=%g: nsfd violations=%d, trapz violations=%d",
        h, comparison.nsfd_violations.count, comparison.trapz_violations.count,
    )
    return comparison

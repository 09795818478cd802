# src/cli.py

import csv
import functools
import logging
import os
import sys
from typing import Iterable, List, Optional, Sequence

import click

from .config_driver import ConfigDriver, ProblemConfig
from .dq_reference import trapz_dq_run
from .errors import ConfigError, DomainError, SolverError
from .indicators import indicator_report
from .nsfd_solver import nsfd_run
from .solver_models import Trajectory
from .studies import convergence_table, final_size_sweep, scheme_comparison


logger = logging.getLogger(__name__)

LOG_LEVEL = os.getenv("NSFD_LOG_LEVEL", "WARNING")

# расхождение R0 и R0(h), начиная с которого печатается note=
_NOTE_GAP = 0.05


class _CliGroup(click.Group):
    """Usage errors share exit code 1 with configuration errors."""

    def make_context(self, *args, **kwargs):
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as e:
            e.exit_code = 1
            raise

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = 1
            raise


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    raise SystemExit(code)


def _exit_codes(command):
    """0 success, 1 configuration/domain/IO error, 2 solver error."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (ConfigError, DomainError) as e:
            _fail(str(e), 1)
        except SolverError as e:
            _fail(str(e), 2)
        except OSError as e:
            _fail(f"{e.filename or ''}: {e.strerror or e}", 1)

    return wrapper


# ---- Форматирование ---- #

def _fmt(value: Optional[float]) -> str:
    if value is None:
        return ""
    return format(float(value), ".15g")


def _write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_trajectory(path: str, trajectory: Trajectory) -> None:
    _write_csv(
        path,
        ("t", "S", "phi"),
        (
            (_fmt(t), _fmt(s), _fmt(p))
            for t, s, p in zip(trajectory.times, trajectory.S, trajectory.phi)
        ),
    )


def _h_list(ctx, param, value: Optional[str]) -> Optional[List[float]]:
    if value is None:
        return None
    try:
        hs = [float(item) for item in value.split(",") if item.strip()]
    except ValueError as e:
        raise click.BadParameter(f"expected comma-separated numbers, got {value!r}") from e
    if not hs:
        raise click.BadParameter("at least one step size is required")
    return hs


def _load(path: str) -> ProblemConfig:
    return ConfigDriver().load(path)


def _horizon(problem: ProblemConfig, tmax: Optional[float]) -> float:
    if tmax is not None:
        return tmax
    if "t_max" in problem.solver:
        return float(problem.solver["t_max"])
    raise ConfigError(
        f'"{problem.source}": horizon is given neither as --tmax nor as solver.t_max.'
    )


# ---- Команды ---- #

@click.group(cls=_CliGroup)
@click.option(
    "--log-level",
    default=LOG_LEVEL,
    show_default=True,
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    help="Diagnostics on stderr.",
)
def cli(log_level: str) -> None:
    """NSFD solver for the age-of-infection epidemic model."""
    logging.basicConfig(
        level=log_level.upper(),
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@click.argument("config")
@click.option("--h", "h", type=float, default=None, help="Step size (default: solver.h).")
@click.option("--tmax", type=float, default=None, help="Horizon (default: solver.t_max).")
@click.option("--scheme", type=click.Choice(["nsfd", "trapz"]), default="nsfd", show_default=True)
@click.option("--out", required=True, help="Output CSV with columns t,S,phi.")
@_exit_codes
def simulate(config: str, h: Optional[float], tmax: Optional[float], scheme: str, out: str) -> None:
    """Integrate the model on the full horizon and write the trajectory."""
    problem = _load(config)
    solver = problem.solver_config(h=h, t_max=tmax, stop_at_steady_state=False)
    run = nsfd_run if scheme == "nsfd" else trapz_dq_run
    trajectory = run(problem.model, solver)
    _write_trajectory(out, trajectory)
    logger.info("[CLI] simulate: %d rows written to %s", len(trajectory), out)


@cli.command()
@click.argument("config")
@click.option("--h", "h", type=float, default=None, help="Step size (default: solver.h).")
@click.option("--simulate", "run_simulation", is_flag=True, help="Also run NSFD to steady state.")
@click.option("--tmax", type=float, default=None, help="Horizon for --simulate.")
@_exit_codes
def indicators(config: str, h: Optional[float], run_simulation: bool, tmax: Optional[float]) -> None:
    """
    Print R0, R0_h, tau_h, growth rates and final sizes as key=value lines.

    A trailing note= line appears when R0_h differs from R0 by more than 5%.
    """
    problem = _load(config)
    if h is None:
        h = problem.solver.get("h")
    if h is None:
        raise ConfigError(f'"{config}": step size is given neither as --h nor as solver.h.')
    h = float(h)

    trajectory = None
    tol = float(problem.solver.get("tail_tol", 1e-12))
    if run_simulation:
        solver = problem.solver_config(h=h, t_max=_horizon(problem, tmax))
        trajectory = nsfd_run(problem.model, solver)
        if trajectory.S_inf_h is None:
            logger.warning("[CLI] no steady state by t=%g; trajectory fields omitted", solver.t_max)
        tol = solver.tail_tol

    report = indicator_report(problem.model, h, tol, trajectory)
    lines = [
        ("R0", report.R0),
        ("R0_h", report.R0_h),
        ("tau_h", report.tau_h),
        ("r_continuous", report.r_continuous),
        ("r_discrete", report.r_discrete),
        ("S_inf_relation", report.S_inf_relation),
    ]
    if run_simulation:
        lines += [
            ("S_inf_h", report.S_inf_h),
            ("U_h", report.U_h),
            ("final_size_residual", report.final_size_residual),
        ]
    for key, value in lines:
        click.echo(f"{key}={'nan' if value is None else _fmt(value)}")

    if report.R0 > 0.0 and abs(report.R0 - report.R0_h) > _NOTE_GAP * report.R0:
        click.echo(
            f"note=R0_h differs from R0 by {100.0 * abs(report.R0 - report.R0_h) / report.R0:.1f}%; "
            f"h={_fmt(h)} under-resolves the kernel"
        )


@cli.command()
@click.argument("config")
@click.option("--h-list", "h_list", required=True, callback=_h_list, help="Comma-separated steps.")
@click.option("--h-ref", "h_ref", type=float, required=True, help="Reference step.")
@click.option("--tmax", type=float, default=None, help="Horizon (default: solver.t_max).")
@click.option("--out", required=True, help="Output CSV.")
@click.option("--workers", type=int, default=1, show_default=True, help="Worker processes.")
@_exit_codes
def converge(
    config: str,
    h_list: List[float],
    h_ref: float,
    tmax: Optional[float],
    out: str,
    workers: int,
) -> None:
    """Errors against a reference run and experimental orders."""
    problem = _load(config)
    rows = convergence_table(problem.model, h_list, h_ref, _horizon(problem, tmax), workers=workers)
    _write_csv(
        out,
        ("h", "errS_abs", "errPhi_abs", "errS_rel", "errPhi_rel", "ordS", "ordPhi"),
        (
            (
                _fmt(r.h), _fmt(r.errS_abs), _fmt(r.errPhi_abs), _fmt(r.errS_rel),
                _fmt(r.errPhi_rel), _fmt(r.ordS), _fmt(r.ordPhi),
            )
            for r in rows
        ),
    )


@cli.command()
@click.argument("config")
@click.option("--h", "h", type=float, default=None, help="Step size (default: solver.h).")
@click.option("--tmax", type=float, default=None, help="Horizon (default: solver.t_max).")
@click.option("--beta", type=float, default=None, help="Contact rate (default: model.beta).")
@click.option("--out-prefix", "out_prefix", required=True, help="Writes <prefix>_nsfd.csv, <prefix>_trapz.csv.")
@_exit_codes
def compare(
    config: str, h: Optional[float], tmax: Optional[float], beta: Optional[float], out_prefix: str
) -> None:
    """NSFD against trapezoidal DQ on one mesh, with violation counts."""
    problem = _load(config)
    solver = problem.solver_config(h=h, t_max=tmax)
    result = scheme_comparison(problem.model, solver.h, solver, beta=beta)
    if result.dq_breakdown_step == 0:
        raise SolverError(
            f"Trapezoidal DQ failed at its first step (h={solver.h}); nothing to compare."
        )

    _write_trajectory(f"{out_prefix}_nsfd.csv", result.nsfd)
    _write_trajectory(f"{out_prefix}_trapz.csv", result.trapz)
    click.echo(f"nsfd_violations={result.nsfd_violations.count}")
    click.echo(f"trapz_violations={result.trapz_violations.count}")
    if result.dq_breakdown_step is not None:
        click.echo(f"trapz_breakdown_step={result.dq_breakdown_step}")


@cli.command()
@click.argument("config")
@click.option("--h-list", "h_list", required=True, callback=_h_list, help="Comma-separated steps.")
@click.option("--tmax", type=float, default=None, help="Initial horizon (default: solver.t_max).")
@click.option("--out", required=True, help="Output CSV.")
@click.option("--workers", type=int, default=1, show_default=True, help="Worker processes.")
@_exit_codes
def sweep(config: str, h_list: List[float], tmax: Optional[float], out: str, workers: int) -> None:
    """Steady-state final size for every step next to the final size relation."""
    problem = _load(config)
    solver = problem.solver_config(h=h_list[0], t_max=_horizon(problem, tmax))
    rows = final_size_sweep(problem.model, h_list, solver, workers=workers)
    _write_csv(
        out,
        ("h", "S_inf_h", "S_inf_relation", "abs_diff", "complete"),
        (
            (
                _fmt(r.h), _fmt(r.S_inf_h), _fmt(r.S_inf_relation),
                _fmt(r.abs_diff), "true" if r.complete else "false",
            )
            for r in rows
        ),
    )

from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from .errors import ConfigError


class SolverConfigError(ConfigError):
    """Solver settings violate their invariants (h <= 0, t_max < h, ...)."""
    pass


class Scheme(str, Enum):
    NSFD = "NSFD"
    TRAPEZOIDAL_DQ = "TrapezoidalDQ"


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    h: float = Field(gt=0.0)
    t_max: float = Field(gt=0.0)
    eps_phi: float = Field(default=1e-12, gt=0.0)
    eps_s: float = Field(default=1e-12, gt=0.0)
    window: int = Field(default=10, ge=1)
    tail_tol: float = Field(default=1e-12, gt=0.0)
    history_cutoff: Optional[int] = Field(default=None, ge=1)
    stop_at_steady_state: bool = True

    @model_validator(mode="after")
    def check_horizon(self) -> "SolverConfig":
        if self.t_max < self.h:
            raise ValueError("t_max must be at least h")
        return self

    @property
    def steps(self) -> int:
        return int(round(self.t_max / self.h))


def build_solver_config(**fields) -> SolverConfig:
    try:
        return SolverConfig(**fields)
    except ValidationError as e:
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
            for err in e.errors()
        )
        raise SolverConfigError(f"Invalid solver configuration: {details}") from e


class Trajectory(BaseModel):
    """Mesh times t_n = n h with S_n and phi_n; arrays are read-only."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    S: np.ndarray
    phi: np.ndarray
    scheme: Scheme
    h: float
    N: float
    steady_state_reached: bool = False
    steady_state_step: Optional[int] = None
    S_inf_h: Optional[float] = None

    @field_validator("times", "S", "phi", mode="before")
    @classmethod
    def to_array(cls, v):
        arr = np.array(v, dtype=float, copy=True)
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def check_lengths(self) -> "Trajectory":
        if not (len(self.times) == len(self.S) == len(self.phi)):
            raise ValueError(
                f"times, S and phi differ in length "
                f"({len(self.times)}, {len(self.S)}, {len(self.phi)})"
            )
        return self

    def __setstate__(self, state) -> None:
        # pickle не сохраняет флаг writeable
        super().__setstate__(state)
        for arr in (self.times, self.S, self.phi):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.times)


class ViolationReport(BaseModel):
    """Индексы нарушений положительности и монотонности."""

    negative_S: List[int] = []
    negative_phi: List[int] = []
    # индекс n шага n -> n+1, на котором S выросло
    increasing_S: List[int] = []

    @property
    def indices(self) -> List[int]:
        return sorted(set(self.negative_S) | set(self.negative_phi) | set(self.increasing_S))

    @property
    def count(self) -> int:
        return len(self.negative_S) + len(self.negative_phi) + len(self.increasing_S)

    @property
    def is_empty(self) -> bool:
        return self.count == 0


class IndicatorReport(BaseModel):
    R0: float
    R0_h: float
    tau_h: float
    r_continuous: Optional[float] = None
    r_discrete: Optional[float] = None
    S_inf_relation: float
    S_inf_h: Optional[float] = None
    U_h: Optional[float] = None
    final_size_residual: Optional[float] = None


class ConvergenceRow(BaseModel):
    h: float
    errS_abs: float
    errPhi_abs: float
    errS_rel: float
    errPhi_rel: float
    ordS: Optional[float] = None
    ordPhi: Optional[float] = None


class FinalSizeRow(BaseModel):
    h: float
    S_inf_h: Optional[float] = None
    S_inf_relation: float
    complete: bool
    t_max_used: float

    @property
    def abs_diff(self) -> Optional[float]:
        if self.S_inf_h is None:
            return None
        return abs(self.S_inf_h - self.S_inf_relation)


class SchemeComparison(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    nsfd: Trajectory
    trapz: Trajectory
    nsfd_violations: ViolationReport
    trapz_violations: ViolationReport
    dq_breakdown_step: Optional[int] = None

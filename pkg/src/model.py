# src/model.py

from __future__ import annotations

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from .errors import ConfigError, DomainError
from .kernel import Kernel


# ---------------------------------------------------------------------------
# Свои исключения
# ---------------------------------------------------------------------------

class ModelValidationError(ConfigError):
    """Epidemic problem data violates one of its invariants."""
    pass


class EpidemicModel(BaseModel):
    """
    Данные задачи: ядро A(s), численность N, начальное число восприимчивых S0
    и коэффициент контактов beta. Начальная инфекционность фиксирована:
    phi0(t) = (N - S0) A(t).
    """

    model_config = ConfigDict(frozen=True)

    kernel: Kernel
    N: float
    S0: float
    beta: float

    @model_validator(mode="after")
    def check_invariants(self) -> "EpidemicModel":
        if not self.N > 0.0:
            raise ValueError("N must be positive")
        if not self.beta > 0.0:
            raise ValueError("beta must be positive")
        if not self.S0 >= 0.0:
            raise ValueError("S0 must be non-negative")
        if self.S0 > self.N:
            raise ValueError("S0 exceeds N")
        return self

    @property
    def initial_infected(self) -> float:
        return self.N - self.S0

    def with_beta(self, beta: float) -> "EpidemicModel":
        return build_model(kernel=self.kernel, N=self.N, S0=self.S0, beta=beta)


def build_model(**fields) -> EpidemicModel:
    """
    Собрать модель из полей; ошибки pydantic превращаются в ModelValidationError
    с именем поля в сообщении.
    """
    try:
        return EpidemicModel(**fields)
    except ValidationError as e:
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'model'}: {err['msg']}"
            for err in e.errors()
        )
        raise ModelValidationError(f"Invalid epidemic model: {details}") from e


def validate(model: EpidemicModel) -> EpidemicModel:
    """Re-check the invariants of an existing model and return it unchanged."""
    build_model(kernel=model.kernel, N=model.N, S0=model.S0, beta=model.beta)
    return model


def phi0(model: EpidemicModel, t: float) -> float:
    """Initial infectivity (N - S0) A(t)."""
    if not t >= 0.0:
        raise DomainError(f"phi0 is defined for t >= 0 only, got {t}.")
    return model.initial_infected * float(model.kernel.value(np.float64(t)))


def phi0_mesh(model: EpidemicModel, times: np.ndarray) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if np.any(times < 0.0):
        raise DomainError("phi0 mesh contains negative times.")
    return model.initial_infected * model.kernel.value(times)

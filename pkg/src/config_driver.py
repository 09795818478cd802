# src/config_driver.py

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import parse
from pydantic import BaseModel, ConfigDict, TypeAdapter, ValidationError

from .errors import ConfigError
from .kernel import Kernel
from .model import EpidemicModel, build_model
from .solver_models import SolverConfig, build_solver_config


# ---------------------------------------------------------------------------
# Свои исключения
# ---------------------------------------------------------------------------

class ConfigDriverError(ConfigError):
    """Base class for all config driver errors."""
    pass


class SpecificationError(ConfigDriverError):
    """Raised when there is a problem with specification.json or its contents."""
    pass


class ConfigFileError(ConfigDriverError):
    """Raised when a problem file (or a table it references) is missing or malformed."""
    pass


class ConfigKeyError(ConfigDriverError):
    """Raised for unknown, duplicate, missing or badly typed keys."""
    pass


SPEC_PATH = os.getenv(
    "NSFD_SPEC_PATH",
    str(Path(__file__).resolve().parent.parent / "configs" / "specification.json"),
)

_TYPES = {"float", "int", "bool", "choice", "path"}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}

_KERNEL_ADAPTER = TypeAdapter(Kernel)


class ProblemConfig(BaseModel):
    """
    Разобранный файл задачи: модель и частичные настройки решателя
    (ключи solver.*, которые были указаны в файле).
    """

    model_config = ConfigDict(frozen=True)

    source: str
    model: EpidemicModel
    solver: Dict[str, Union[float, int]] = {}

    def solver_config(self, **overrides: Any) -> SolverConfig:
        """
        SolverConfig from the file's solver.* keys; keyword overrides that are
        not None win (command-line flags).
        """
        fields = dict(self.solver)
        fields.update({k: v for k, v in overrides.items() if v is not None})
        for name in ("h", "t_max"):
            if name not in fields:
                raise ConfigKeyError(
                    f'"{self.source}": step setting "{name}" is given neither on the '
                    f"command line nor as solver.{name}."
                )
        return build_solver_config(**fields)


class ConfigDriver:
    """
    JSON-based driver that loads the key specification and parses flat
    problem files against it.

    A problem file holds one `key = value` per line; `#` starts a comment:

        kernel.family = power_law
        kernel.p = 2
        model.N = 10
        model.S0 = 9
        model.beta = 0.3

    specification.json is an array of objects like:

    [
      {
        "key": "kernel.p",
        "field": "p",
        "type": "float",
        "family": "power_law",
        "required": true,
        "description": "Exponent p > 1 of A(t) = (1 + t)^(-p)."
      },
      ...
    ]

    Keys with a "family" apply only to that kernel family.
    """

    def __init__(self, spec_path: Optional[str] = None) -> None:
        """
        :param spec_path: Path to specification.json (default: NSFD_SPEC_PATH).
        :raises SpecificationError: if the specification is missing or invalid.
        """
        self._spec_path = spec_path or SPEC_PATH

        if not os.path.isfile(self._spec_path):
            raise SpecificationError(
                f'Specification file "{self._spec_path}" does not exist or is not a file.'
            )

        try:
            with open(self._spec_path, "r", encoding="utf-8") as f:
                spec_data = json.load(f)
        except Exception as e:
            raise SpecificationError(
                f'Failed to read specification file "{self._spec_path}": {e}'
            ) from e

        if not isinstance(spec_data, list):
            raise SpecificationError(
                f'Specification file "{self._spec_path}" must contain a JSON array of keys.'
            )

        # self._keys[key] = {"field", "type", "family", "required", "choices", "description"}
        self._keys: Dict[str, Dict[str, Any]] = {}

        for entry in spec_data:
            self._process_spec_entry(entry)

        if "kernel.family" not in self._keys:
            raise SpecificationError('Specification must define the "kernel.family" key.')

    def _process_spec_entry(self, entry: Dict[str, Any]) -> None:
        """Validate a single specification entry."""
        if not isinstance(entry, dict):
            raise SpecificationError(
                f"Each specification entry must be an object, got: {type(entry).__name__}"
            )

        key = entry.get("key")
        field = entry.get("field")
        kind = entry.get("type")

        if not key or not isinstance(key, str):
            raise SpecificationError(f"Specification entry is missing a valid 'key' field: {entry}")
        if not field or not isinstance(field, str):
            raise SpecificationError(f"Specification entry for '{key}' is missing a valid 'field' field.")
        if kind not in _TYPES:
            raise SpecificationError(
                f"Specification entry for '{key}' has invalid 'type' {kind!r}; "
                f"expected one of {sorted(_TYPES)}."
            )
        choices = entry.get("choices")
        if kind == "choice" and (
            not isinstance(choices, list) or not choices or not all(isinstance(c, str) for c in choices)
        ):
            raise SpecificationError(
                f"Specification entry for '{key}' must list its 'choices' as strings."
            )

        if key in self._keys:
            raise SpecificationError(f"Duplicate key in specification: '{key}'")

        self._keys[key] = {
            "field": field,
            "type": kind,
            "family": entry.get("family"),
            "required": bool(entry.get("required", False)),
            "choices": choices,
            "description": entry.get("description"),
        }

    def has_key(self, key: str) -> bool:
        """Return True if the key is defined in the specification."""
        return key in self._keys

    def required_keys(self, family: str) -> set:
        """Keys a problem file with the given kernel family must contain."""
        return {
            key
            for key, meta in self._keys.items()
            if meta["required"] and meta["family"] in (None, family)
        }

    def describe_key(self, key: str) -> Dict[str, Any]:
        """
        Return { "key", "field", "type", "family", "required", "description" }.

        :raises ConfigKeyError: if the key is unknown.
        """
        meta = self._keys.get(key)
        if meta is None:
            raise ConfigKeyError(f'Unknown key "{key}".')
        return {"key": key, **{k: v for k, v in meta.items() if k != "choices"}}

    def _with_description(self, key: str) -> str:
        description = self.describe_key(key)["description"]
        return f"{key} ({description})" if description else key

    # --------- РАЗБОР ФАЙЛА --------- #

    def read_pairs(self, path: str) -> Dict[str, str]:
        """
        Read raw `key = value` pairs.

        :raises ConfigFileError: unreadable file or a line that is not `key = value`.
        :raises ConfigKeyError: unknown or duplicate key.
        """
        try:
            with open(path, "r", encoding="utf-8") as f:
                lines = f.read().splitlines()
        except OSError as e:
            raise ConfigFileError(f'Failed to read config file "{path}": {e}') from e

        pairs: Dict[str, str] = {}
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            result = parse.parse("{key}={value}", line)
            if result is None:
                raise ConfigFileError(f'"{path}", line {lineno}: expected "key = value", got "{raw}".')
            key, value = result["key"].strip(), result["value"].strip()
            if not self.has_key(key):
                raise ConfigKeyError(f'"{path}", line {lineno}: unknown key "{key}".')
            if key in pairs:
                raise ConfigKeyError(f'"{path}", line {lineno}: duplicate key "{key}".')
            if not value:
                raise ConfigKeyError(f'"{path}", line {lineno}: key "{key}" has an empty value.')
            pairs[key] = value
        return pairs

    def _coerce(self, key: str, value: str, base_dir: Path) -> Any:
        meta = self._keys[key]
        kind = meta["type"]
        try:
            if kind == "float":
                return float(value)
            if kind == "int":
                return int(value)
        except ValueError as e:
            raise ConfigKeyError(f'Key "{key}" expects {kind}, got "{value}".') from e
        if kind == "bool":
            lowered = value.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ConfigKeyError(f'Key "{key}" expects true/false, got "{value}".')
        if kind == "choice":
            if value not in meta["choices"]:
                raise ConfigKeyError(
                    f'Key "{key}" must be one of {", ".join(meta["choices"])}; got "{value}".'
                )
            return value
        return base_dir / value

    def _read_table(self, path: Path) -> tuple[tuple[float, ...], tuple[float, ...]]:
        try:
            data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        except (OSError, ValueError) as e:
            raise ConfigFileError(f'Failed to read kernel table "{path}": {e}') from e
        if data.shape[1] != 2:
            raise ConfigFileError(
                f'Kernel table "{path}" must have two columns (t, A), got {data.shape[1]}.'
            )
        return tuple(data[:, 0].tolist()), tuple(data[:, 1].tolist())

    def load(self, path: str) -> ProblemConfig:
        """
        Parse and validate a problem file.

        :raises ConfigFileError, ConfigKeyError: malformed file or keys.
        :raises ModelValidationError: model invariants violated.
        """
        pairs = self.read_pairs(path)
        base_dir = Path(path).resolve().parent

        if "kernel.family" not in pairs:
            raise ConfigKeyError(f'"{path}": missing required key(s): kernel.family.')
        family = self._coerce("kernel.family", pairs["kernel.family"], base_dir)

        missing = self.required_keys(family) - set(pairs)
        if missing:
            listed = "; ".join(self._with_description(key) for key in sorted(missing))
            raise ConfigKeyError(f'"{path}": missing required key(s): {listed}')
        foreign: List[str] = [
            key for key in pairs
            if self._keys[key]["family"] not in (None, family)
        ]
        if foreign:
            raise ConfigKeyError(
                f'"{path}": key(s) {", ".join(sorted(foreign))} do not apply to {family} kernels.'
            )

        kernel_fields: Dict[str, Any] = {}
        model_fields: Dict[str, Any] = {}
        solver_fields: Dict[str, Any] = {}
        for key, raw in pairs.items():
            value = self._coerce(key, raw, base_dir)
            field = self._keys[key]["field"]
            section = key.split(".", 1)[0]
            if section == "kernel":
                kernel_fields[field] = value
            elif section == "model":
                model_fields[field] = value
            else:
                solver_fields[field] = value

        if "table" in kernel_fields:
            grid, values = self._read_table(kernel_fields.pop("table"))
            kernel_fields.update(grid=grid, values=values)

        try:
            kernel = _KERNEL_ADAPTER.validate_python(kernel_fields)
        except ValidationError as e:
            details = "; ".join(
                f"kernel.{'.'.join(str(p) for p in err['loc'][1:]) or family}: {err['msg']}"
                for err in e.errors()
            )
            raise ConfigKeyError(f'"{path}": invalid kernel: {details}') from e

        model = build_model(kernel=kernel, **model_fields)
        return ProblemConfig(source=str(path), model=model, solver=solver_fields)

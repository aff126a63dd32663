"""Run configuration loaded from TOML plus command-line overrides."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .llm import BackendConfig, ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MODES = ("single", "chained")
SYNONYM_SOURCES = ("llm", "identity")


@dataclass(frozen=True)
class RunConfig:
    trials: Optional[Path]
    backends: dict
    model: str
    mode: str = "single"
    column_map: dict = field(default_factory=dict)
    templates: Optional[Path] = None
    repair_prefixes: bool = False
    max_retries: Optional[int] = None
    concurrency: int = 1
    out: Path = Path("out")
    run: str = "run"
    pricing: Optional[Path] = None
    replay: Optional[Path] = None
    record: Optional[Path] = None
    synonyms: str = "llm"
    label: Optional[str] = None
    n_extrapolate: int = 6200
    include_human: bool = True
    strict_ingest: bool = False
    resume: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.synonyms not in SYNONYM_SOURCES:
            raise ConfigError(f"synonyms must be one of {SYNONYM_SOURCES}")
        if self.model not in self.backends:
            raise ConfigError(f"model {self.model!r} is not among the configured backends {sorted(self.backends)}")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        if self.max_retries is not None and self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")

    @property
    def run_dir(self) -> Path:
        return self.out / self.run

    @property
    def model_label(self) -> str:
        if self.label:
            return self.label
        return self.model if self.mode == "single" else f"{self.model}-chained"

    @property
    def model_dir(self) -> Path:
        return self.run_dir / self.model_label

    def backend_config(self) -> BackendConfig:
        """The selected backend with run-level overrides applied."""
        cfg = self.backends[self.model]
        changes = {"concurrency": max(cfg.concurrency, self.concurrency)}
        if self.max_retries is not None:
            changes["max_retries"] = self.max_retries
        if self.replay is not None:
            changes.update(kind="replay", fixture=str(self.replay))
        return replace(cfg, **changes)

    def pricing_path(self) -> Path:
        from .costing import default_pricing_path

        return self.pricing or default_pricing_path()

    def validate(self, *, need_trials: bool = False) -> None:
        missing = []
        if need_trials and (self.trials is None or not self.trials.exists()):
            missing.append(f"trials file {self.trials}")
        if self.templates is not None and not self.templates.is_dir():
            missing.append(f"template directory {self.templates}")
        if self.pricing is not None and not self.pricing.exists():
            missing.append(f"pricing file {self.pricing}")
        backend = self.backend_config()
        if backend.kind == "replay" and not Path(backend.fixture).exists():
            missing.append(f"replay fixture {backend.fixture}")
        if missing:
            raise ConfigError("missing: " + ", ".join(missing))


def _path(base: Path, value) -> Optional[Path]:
    if value is None or value == "":
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def _backend(name: str, data: dict, base: Path) -> BackendConfig:
    known = set(BackendConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"backend {name!r}: unknown keys {sorted(unknown)}")
    data = dict(data)
    if data.get("fixture"):
        data["fixture"] = str(_path(base, data["fixture"]))
    if "model_id" not in data or "kind" not in data:
        raise ConfigError(f"backend {name!r} needs 'kind' and 'model_id'")
    return BackendConfig(**data)


def build_config(data: dict, base: Path = Path("."), **overrides) -> RunConfig:
    data = dict(data)
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    backends_raw = data.pop("backends", {})
    if not backends_raw:
        raise ConfigError("no [backends] configured")
    backends = {name: _backend(name, b, base) for name, b in backends_raw.items()}
    model = data.pop("model", None) or (next(iter(backends)) if len(backends) == 1 else None)
    if model is None:
        raise ConfigError("several backends configured; select one with 'model' or --model")
    known = set(RunConfig.__dataclass_fields__) - {"backends", "model"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    for key in ("trials", "templates", "out", "pricing", "replay", "record"):
        if key in data:
            data[key] = _path(base, data[key])
    if data.get("out") is None:
        data["out"] = base / "out"
    return RunConfig(backends=backends, model=model, **data)


def load_config(path, **overrides) -> RunConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return build_config(data, path.parent, **overrides)

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List

import yaml
from pydantic import ValidationError

from .catalog import problem_from_section
from .config import Settings
from .errors import ConfigError
from .models import ExperimentConfig

logger = logging.getLogger(__name__)


def list_presets(settings: Settings) -> Dict[str, ExperimentConfig]:
    experiments_dir = settings.experiments_dir
    candidates: List[Path] = []
    for pattern in ("*.yaml", "*.yml"):
        candidates.extend(sorted(experiments_dir.glob(pattern)))
    unique_paths: List[Path] = []
    seen: set[str] = set()
    for path in candidates:
        resolved = str(path.resolve())
        if resolved in seen:
            continue
        seen.add(resolved)
        unique_paths.append(path)
    unique_paths.sort(key=lambda p: str(p))
    logger.info("Discovering presets in %s; files: %s", experiments_dir.resolve(), [p.name for p in unique_paths])
    presets: Dict[str, ExperimentConfig] = {}
    for path in unique_paths:
        preset = load_experiment_file(path)
        presets[preset.id] = preset
    return presets


def load_preset(settings: Settings, preset_id: str) -> ExperimentConfig:
    preset_files: List[Path] = []
    for pattern in (f"{preset_id}.yaml", f"{preset_id}.yml"):
        preset_files.extend(settings.experiments_dir.glob(pattern))
    if not preset_files:
        raise ConfigError(f"Preset '{preset_id}' not found in {settings.experiments_dir}.", error_code="preset_not_found")
    return load_experiment_file(preset_files[0])


def load_experiment_file(path: Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"Experiment file '{path}' cannot be read: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"Experiment file '{path.name}' is not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"Experiment file '{path.name}' must contain a mapping.")
    data.setdefault("id", path.stem)
    try:
        config = ExperimentConfig(**data)
    except ValidationError as exc:
        errors = exc.errors()
        reason = errors[0].get("msg", str(exc)) if errors else str(exc)
        where = ".".join(str(part) for part in errors[0].get("loc", ())) if errors else ""
        message = f"Experiment file '{path.name}' is invalid: {where + ': ' if where else ''}{reason}"
        raise ConfigError(message, error_code="invalid_preset") from exc
    _validate_problems(config)
    return config


def _validate_problems(config: ExperimentConfig) -> None:
    # building each section surfaces unknown keys and kinds at load time
    for name, section in config.problems.items():
        if not isinstance(section, dict):
            raise ConfigError(f"Problem section '{name}' must be a mapping.")
        problem_from_section(name, section)

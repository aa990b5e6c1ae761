from pathlib import Path
from typing import Any, Optional, Union

import yaml
from pydantic import BaseSettings, ValidationError

from siamprint.core.exceptions import ConfigError
from siamprint.schemas.run import RunConfig

PRESETS_DIR = Path(__file__).resolve().parent.parent / 'configs'
SCALE_PRESETS = ('desk', 'paper')


class Settings(BaseSettings):
    app_title: str = 'siamprint'
    app_description: str = (
        'Semi-Siamese change detection for 3D printing defects'
    )
    log_level: str = 'INFO'
    log_format: str = '%(asctime)s %(levelname)s %(name)s: %(message)s'
    loader_workers: int = 0
    loader_queue_size: int = 4
    progress_bars: bool = True

    class Config:
        env_file = '.env'
        env_prefix = 'SIAMPRINT_'


settings = Settings()


def preset_path(scale: str) -> Path:
    if scale not in SCALE_PRESETS:
        raise ConfigError(
            f'Unknown scale preset {scale!r}; '
            f'expected one of {", ".join(SCALE_PRESETS)}.'
        )
    return PRESETS_DIR / f'{scale}.yaml'


def _parse_override_value(raw: str) -> Any:
    try:
        return yaml.safe_load(raw)
    except yaml.YAMLError:
        return raw


def apply_overrides(
    data: dict[str, Any],
    overrides: dict[str, Any],
) -> dict[str, Any]:
    """Set dotted keys (``train.epochs``) on a nested config mapping."""
    for dotted_key, value in overrides.items():
        if value is None:
            continue
        node = data
        *parents, leaf = dotted_key.split('.')
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(
                    f'Cannot override {dotted_key!r}: {part!r} is not a '
                    'section.'
                )
            node = child
        if isinstance(value, str):
            value = _parse_override_value(value)
        node[leaf] = value
    return data


def read_config_file(path: Union[str, Path]) -> dict[str, Any]:
    path = Path(path)
    try:
        with path.open('r', encoding='utf-8') as stream:
            data = yaml.safe_load(stream) or {}
    except OSError as error:
        raise ConfigError(f'Cannot read config file {path}: {error}.')
    except yaml.YAMLError as error:
        raise ConfigError(f'Config file {path} is not valid YAML: {error}.')
    if not isinstance(data, dict):
        raise ConfigError(f'Config file {path} must contain a mapping.')
    return data


def load_run_config(
    config_path: Optional[Union[str, Path]] = None,
    scale: Optional[str] = None,
    overrides: Optional[dict[str, Any]] = None,
) -> RunConfig:
    """Resolve preset, file and flag overrides, in that order."""
    data: dict[str, Any] = {}
    if scale is not None:
        data = read_config_file(preset_path(scale))
    if config_path is not None:
        data = _merge(data, read_config_file(config_path))
    data = apply_overrides(data, overrides or {})
    try:
        return RunConfig.parse_obj(data)
    except ValidationError as error:
        raise ConfigError(f'Invalid run configuration:\n{error}')


def dump_run_config(config: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', encoding='utf-8') as stream:
        yaml.safe_dump(
            config.to_plain(), stream, sort_keys=True,
            default_flow_style=False,
        )
    return path


def _merge(base: dict[str, Any], update: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged

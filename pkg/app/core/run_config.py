"""
Builds a RunConfig from four layers, highest precedence first:

    CLI flags  >  environment  >  JSON config file  >  defaults
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from pydantic import ValidationError

from app.core import app_config
from app.core.errors import InvalidParamError, ParseError
from app.schemas.config_schema import RunConfig

# environment variable -> dotted RunConfig field
ENV_FIELDS: Dict[str, str] = {
    "EALD_LAMBDA": "anonymization.mcadams_lambda",
    "EALD_WIN_MS": "anonymization.frame.win_ms",
    "EALD_SHIFT_MS": "anonymization.frame.shift_ms",
    "EALD_LPC_ORDER": "anonymization.frame.lpc_order",
    "EALD_FRAME_COUNT": "sampling.frame_count",
    "EALD_SEGMENT_S": "sampling.audio_segment_s",
    "EALD_MEL_BINS": "sampling.mel_bins",
    "EALD_MAX_SEGMENTS": "sampling.max_segments",
    "EALD_WORKERS": "workers",
    "EALD_SEED": "seed",
    "EALD_MODES": "modes",
    "EALD_SIGMA_POLICY": "sigma_policy",
    "EALD_JUDGE_MODEL": "clients.judge_model",
    "MLLM_ENDPOINT": "clients.mllm_endpoint",
    "JUDGE_ENDPOINT": "clients.judge_endpoint",
    "DETECTOR_ENDPOINT": "clients.detector_endpoint",
    "CLIENT_TOKEN": "clients.token",
    "CLIENT_TIMEOUT_S": "clients.timeout_s",
    "CLIENT_MAX_ATTEMPTS": "clients.max_attempts",
    "CLIENT_MAX_IN_FLIGHT": "clients.max_in_flight",
}


def _set_path(target: Dict[str, Any], dotted: str, value: Any) -> None:
    *parents, leaf = dotted.split(".")
    node = target
    for key in parents:
        node = node.setdefault(key, {})
    node[leaf] = value


def deep_merge(base: Dict[str, Any],
               update: Mapping[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; None in ``update`` leaves ``base`` alone."""
    merged = dict(base)
    for key, value in update.items():
        if value is None:
            continue
        if isinstance(value, Mapping):
            current = merged.get(key)
            merged[key] = deep_merge(
                current if isinstance(current, dict) else {}, value)
        else:
            merged[key] = value
    return merged


def env_layer(env: Mapping[str, str]) -> Dict[str, Any]:
    layer: Dict[str, Any] = {}
    for name, dotted in ENV_FIELDS.items():
        raw = env.get(name)
        if raw is None or raw == "":
            continue
        value: Any = raw
        if dotted == "modes":
            value = [m.strip() for m in raw.split(",") if m.strip()]
        _set_path(layer, dotted, value)
    return layer


def file_layer(config_file: Union[str, Path]) -> Dict[str, Any]:
    text = Path(config_file).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"config file {config_file}: {e.msg}",
                         line=e.lineno) from None
    if not isinstance(data, dict):
        raise ParseError(f"config file {config_file} must hold an object")
    return data


def load_run_config(config_file: Optional[Union[str, Path]] = None,
                    env: Optional[Mapping[str, str]] = None,
                    overrides: Optional[Mapping[str, Any]] = None
                    ) -> RunConfig:
    """Merge the layers and validate the result."""
    env = os.environ if env is None else env
    merged: Dict[str, Any] = {"workers": app_config.WORKERS}
    if config_file is not None:
        merged = deep_merge(merged, file_layer(config_file))
    merged = deep_merge(merged, env_layer(env))
    merged = deep_merge(merged, overrides or {})
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        raise InvalidParamError(f"invalid run configuration: {e}") from None

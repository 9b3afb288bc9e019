"""JSON model configuration files.

Format::

    {"model": "singular_matern",
     "params": {"phi": 1.0, "rho": 0.5, "nu": 0.51, "alpha": 0.1},
     "normalize": true}
"""

import json
from pathlib import Path

from .errors import InvalidArgumentError
from .models import MODEL_KINDS, make_model, normalize_amplitude

__all__ = ["ConfigError", "parse_model_config", "model_to_config"]

_TOP_KEYS = {"model", "params", "normalize"}


class ConfigError(InvalidArgumentError):
    """Schema or constraint violation in a model configuration."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def parse_model_config(source, normalize_tol=1e-12):
    """Build a model from a JSON file path, a JSON string or a dict.

    Raises
    ------
    ConfigError
        Naming the offending field for unknown keys, wrong types, or
        parameter constraints violated by the model.
    """
    if isinstance(source, dict):
        cfg = source
    else:
        text = str(source)
        path = Path(text)
        if not text.lstrip().startswith("{"):
            if not path.is_file():
                raise ConfigError(f"config file not found: {text}")
            text = path.read_text()
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise ConfigError("top level must be an object")
    unknown = sorted(set(cfg) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}", f"$.{unknown[0]}")
    kind = cfg.get("model")
    if not isinstance(kind, str):
        raise ConfigError("required string field is missing", "$.model")
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model {kind!r}; expected one of {sorted(MODEL_KINDS)}", "$.model")
    params = cfg.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("must be an object", "$.params")
    # chebyshev_exponential has a variable parameter list and checks its own keys
    allowed = set(MODEL_KINDS[kind].param_names)
    for key, val in params.items():
        if allowed and key not in allowed:
            raise ConfigError(f"unknown parameter {key!r} for {kind}", f"$.params.{key}")
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError("must be a number", f"$.params.{key}")
    normalize = cfg.get("normalize", False)
    if not isinstance(normalize, bool):
        raise ConfigError("must be true or false", "$.normalize")
    try:
        model = make_model(kind, params)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc), "$.params") from None
    if normalize:
        model = normalize_amplitude(model, tol=normalize_tol)
    return model


def model_to_config(model, normalize=False):
    return {"model": model.kind, "params": dict(model.params), "normalize": bool(normalize)}

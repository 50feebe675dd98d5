"""Input validation helpers shared by the estimators, config parsing and CLI."""

import math

from .core import ThresholdSchedule, validate_schedule
from .kernels import KernelPolicy
from .models import MODEL_REGISTRY, SimulatorModel, get_model

__all__ = ["as_thresholds", "check_method", "check_positive_int", "resolve_model"]


def as_thresholds(value) -> ThresholdSchedule:
    """Coerce a list, tuple or comma-separated string into a valid schedule.

    String entries such as ``"inf"`` parse to infinity.
    """
    if isinstance(value, ThresholdSchedule):
        return value
    if isinstance(value, str):
        value = [part.strip() for part in value.split(",") if part.strip()]
    try:
        eps = tuple(float(e) for e in value)
    except (TypeError, ValueError) as err:
        raise ValueError(f"thresholds must be numbers, got {value!r}") from err
    return validate_schedule(eps)


def check_method(value) -> KernelPolicy:
    """Resolve a kernel-policy name, listing the valid ones on failure."""
    try:
        return KernelPolicy(value)
    except ValueError:
        names = ", ".join(p.value for p in KernelPolicy)
        raise ValueError(f"unknown method {value!r}; choose one of: {names}") from None


def check_positive_int(value, name, minimum=1) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def check_positive_float(value, name) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return value


def resolve_model(model, model_options=None) -> SimulatorModel:
    """Accept a registered model name or a ready-made model instance."""
    if isinstance(model, SimulatorModel):
        if model_options:
            raise ValueError("model_options only apply when the model is given by name")
        return model
    if isinstance(model, str):
        return get_model(model, **(model_options or {}))
    known = ", ".join(sorted(MODEL_REGISTRY))
    raise ValueError(f"model must be a SimulatorModel or one of: {known}")

"""Input validation helpers shared across modules."""

import math

import numpy as np

NORM_TOL = 1e-12


class ConfigError(ValueError):
    """Raised for malformed channels, classes, policies or scenarios."""


class InfeasibleError(ArithmeticError):
    """Raised when a requested quantity does not exist (e.g. no finite N)."""


class NonConvergenceError(ArithmeticError):
    """Raised when a numerical limit estimate fails to settle."""


def check_probability_vector(p, name="distribution", size=None):
    """Return ``p`` as a read-only float array after checking it is a pmf.

    Entries must be finite and non-negative and sum to one within
    ``NORM_TOL``. Nothing is renormalized.
    """
    arr = np.array(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ConfigError(f"{name} must be a non-empty 1-d vector")
    if size is not None and arr.size != size:
        raise ConfigError(f"{name} has length {arr.size}, expected {size}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ConfigError(f"{name} has negative or non-finite entries")
    if abs(arr.sum() - 1.0) > NORM_TOL:
        raise ConfigError(f"{name} sums to {arr.sum()!r}, not 1")
    arr.setflags(write=False)
    return arr


def check_stochastic(kernel, name="transition", shape=None):
    """Return ``kernel`` as a read-only array whose last axis is a pmf."""
    arr = np.array(kernel, dtype=float)
    if arr.ndim < 2:
        raise ConfigError(f"{name} must have at least 2 axes")
    if shape is not None and tuple(arr.shape) != tuple(shape):
        raise ConfigError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    if min(arr.shape) < 1:
        raise ConfigError(f"{name} has an empty alphabet")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ConfigError(f"{name} has negative or non-finite entries")
    sums = arr.sum(axis=-1)
    if np.max(np.abs(sums - 1.0)) > NORM_TOL:
        raise ConfigError(f"{name} rows do not sum to 1 (worst {sums.flat[np.argmax(np.abs(sums - 1))]!r})")
    arr.setflags(write=False)
    return arr


def check_rho(rho):
    """Check the Gallager parameter lies in (0, 1]."""
    rho = float(rho)
    if not (0.0 < rho <= 1.0):
        raise ConfigError(f"rho must lie in (0, 1], got {rho!r}")
    return rho


def check_schedule(s, n_classes=None, max_total=None):
    """Return ``s`` as a tuple of non-negative ints."""
    try:
        out = tuple(int(v) for v in s)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"schedule {s!r} is not an integer vector") from exc
    if any(int(v) != v for v in s):
        raise ConfigError(f"schedule {s!r} is not an integer vector")
    if any(v < 0 for v in out):
        raise ConfigError(f"schedule {s!r} has negative entries")
    if n_classes is not None and len(out) != n_classes:
        raise ConfigError(f"schedule {s!r} has length {len(out)}, expected {n_classes}")
    if max_total is not None and sum(out) > max_total:
        raise ConfigError(f"schedule {s!r} schedules more than K={max_total} messages")
    return out


def check_positive_int(value, name, minimum=1):
    if isinstance(value, bool) or int(value) != value or int(value) < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_positive_float(value, name):
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be finite and > 0, got {value!r}")
    return value


def check_rates(X, n_classes):
    """Validate arrival-rate vectors as an ``(n_samples, n_classes)`` array."""
    from sklearn.utils import check_array

    arr = check_array(np.atleast_2d(np.asarray(X, dtype=float)), ensure_all_finite=True)
    if arr.shape[1] != n_classes:
        raise ConfigError(f"rate vectors have {arr.shape[1]} columns, expected {n_classes}")
    if np.any(arr < 0):
        raise ConfigError("arrival rates must be non-negative")
    return arr

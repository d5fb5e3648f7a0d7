"""Input validation helpers shared by the public API."""

import math
import numbers

SEED_MAX = 2**63 - 1


class DomainError(ValueError):
    """An argument lies outside the domain of the requested operation."""


def check_probability(value, name="p"):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise DomainError(f"{name} must be a real number, got {value!r}")
    value = float(value)
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise DomainError(f"{name} must lie in [0, 1], got {value}")
    return value


def check_int(value, name, minimum=None, maximum=None):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    value = int(value)
    if minimum is not None and value < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise DomainError(f"{name} must be <= {maximum}, got {value}")
    return value


def check_seed(seed, name="seed"):
    return check_int(seed, name, 0, SEED_MAX)


def check_levels(levels, name="N_levels", minimum=1):
    levels = [check_int(n, name, minimum) for n in levels]
    if not levels:
        raise DomainError(f"{name} must not be empty")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise DomainError(f"{name} must be strictly increasing, got {levels}")
    return levels

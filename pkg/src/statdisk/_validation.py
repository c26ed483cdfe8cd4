"""Small input validation helpers shared by the public API."""
import numbers

import numpy as np

from .errors import DimensionMismatch, ResolutionTooLow


def as_point(x, dim, name="x"):
    x = np.asarray(x, dtype=float)
    if x.shape != (dim,):
        raise DimensionMismatch(f"{name} must have shape ({dim},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def as_points(x, dim, name="x"):
    """Accept one point or a stack of points; always return shape (m, dim)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionMismatch(f"{name} must have trailing dimension {dim}, got {x.shape}")
    return x


def check_unit(zeta, tol=1e-12):
    zeta = complex(zeta)
    if abs(abs(zeta) - 1.0) > tol:
        raise ValueError(f"|zeta| must be 1, got {abs(zeta)!r}")
    return zeta


def check_power_of_two(N, name="N"):
    if not isinstance(N, numbers.Integral) or N < 1 or (N & (N - 1)):
        raise ValueError(f"{name} must be a positive power of two, got {N!r}")
    return int(N)


def check_resolution(N, M, min_N=32, min_M=8):
    check_power_of_two(N)
    if N < min_N or M < min_M:
        raise ResolutionTooLow(f"need N >= {min_N} and M >= {min_M}, got N={N}, M={M}")
    return int(N), int(M)


def check_positive(value, name):
    value = float(value)
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value

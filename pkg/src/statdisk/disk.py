"""Discrete function spaces on the closed unit disk.

Angles are ``θ_k = 2πk/N``.  Interior rings sit at the positive half of the
2M first-kind Chebyshev points, ``r_m = cos(π(2m-1)/(4M))``, so a Fourier mode
of angular order j is interpolated in r by folding it onto [-1, 1] with parity
(-1)^j.  The Cauchy-Green transform is applied mode by mode as a radial
Volterra integral (Gauss-Legendre in s, Chebyshev interpolation of the source).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial.legendre import leggauss

from ._validation import check_power_of_two, check_resolution
from .errors import DimensionMismatch

EPS_HOL = 1e-10


def mode_numbers(N: int) -> np.ndarray:
    return np.fft.fftfreq(N, 1.0 / N).astype(int)


class PolarGrid:
    """Angles, rings and cached mode operators for a given (N, M)."""

    def __init__(self, N: int, M: int):
        self.N = check_power_of_two(N)
        self.M = int(M)
        if self.M < 2:
            raise ValueError("need at least two rings")
        self.theta = 2 * np.pi * np.arange(self.N) / self.N
        self.zeta = np.exp(1j * self.theta)
        self.radii = np.cos(np.pi * (2 * np.arange(1, self.M + 1) - 1) / (4 * self.M))
        self.modes = mode_numbers(self.N)
        self.kmin = -self.N // 2 + 1
        self.kmax = self.N // 2 - 2
        self.kvals = np.arange(self.kmin, self.kmax + 1)
        # column of the FFT array holding each mode
        self.slot = {int(k): int(k % self.N) for k in range(-self.N // 2, self.N // 2)}

    @property
    def points(self) -> np.ndarray:
        return self.radii[:, None] * self.zeta[None, :]

    def __repr__(self):
        return f"PolarGrid(N={self.N}, M={self.M})"

    def __eq__(self, other):
        return isinstance(other, PolarGrid) and (self.N, self.M) == (other.N, other.M)

    def __hash__(self):
        return hash((self.N, self.M))

    def ops(self) -> "ModeOperators":
        return mode_operators(self.N, self.M)

    def mode_slots(self, shift: int = 0) -> np.ndarray:
        return np.array([self.slot[int(k + shift)] for k in self.kvals])


# --------------------------------------------------------------------------- radial interpolation

def _cheb_nodes(M: int) -> np.ndarray:
    i = np.arange(1, 2 * M + 1)
    return np.cos(np.pi * (2 * i - 1) / (4 * M))


@lru_cache(maxsize=None)
def _values_to_coeffs(M: int) -> np.ndarray:
    """Chebyshev coefficients from values at the 2M first-kind nodes."""
    P = 2 * M
    i = np.arange(1, P + 1)
    ang = np.pi * (2 * i - 1) / (2 * P)
    Cm = (2.0 / P) * np.cos(np.outer(np.arange(P), ang))
    Cm[0] *= 0.5
    return Cm


def folded_rows(M: int, s, parity: int, derivative: int = 0) -> np.ndarray:
    """Rows mapping ring values g(r_1..r_M) to g^{(derivative)}(s) for g with g(-r) = parity·g(r)."""
    s = np.atleast_1d(np.asarray(s, float))
    coef = _values_to_coeffs(M)
    if derivative:
        coef = C.chebder(coef, m=derivative, axis=0)
    full = C.chebvander(s, coef.shape[0] - 1) @ coef  # (len(s), 2M)
    return full[:, :M] + parity * full[:, ::-1][:, :M]


@dataclass(frozen=True)
class ModeOperators:
    """Per-mode radial operators.

    For every u-mode k (source mode k+1): ``T[k]`` gives u_k on the rings,
    ``V[k] = (k/r) T[k]``, ``B[k]`` gives u_k(1).  ``q1``, ``dq1`` evaluate the
    source mode k+1 and its r-derivative at r = 1.
    """

    kvals: np.ndarray
    T: np.ndarray
    V: np.ndarray
    B: np.ndarray
    q1: np.ndarray
    dq1: np.ndarray
    center_u0: np.ndarray
    center_v1: np.ndarray
    center_q0: np.ndarray
    diff_even: np.ndarray
    diff_odd: np.ndarray


@lru_cache(maxsize=16)
def mode_operators(N: int, M: int) -> ModeOperators:
    grid_r = np.cos(np.pi * (2 * np.arange(1, M + 1) - 1) / (4 * M))
    kvals = np.arange(-N // 2 + 1, N // 2 - 1)
    Q = M + N // 4 + 8
    xg, wg = leggauss(Q)
    T = np.zeros((kvals.size, M, M))
    B = np.zeros((kvals.size, M))
    q1 = np.zeros((kvals.size, M))
    dq1 = np.zeros((kvals.size, M))
    for idx, k in enumerate(kvals):
        par = 1 if (k + 1) % 2 == 0 else -1
        q1[idx] = folded_rows(M, 1.0, par)[0]
        dq1[idx] = folded_rows(M, 1.0, par, 1)[0]
        for m, r in enumerate(grid_r):
            if k >= 0:
                s = r + (1 - r) * (xg + 1) / 2
                w = wg * (1 - r) / 2
                T[idx, m] = -2 * (w * (r / s) ** k) @ folded_rows(M, s, par)
            else:
                s = r * (xg + 1) / 2
                w = wg * r / 2
                T[idx, m] = 2 * (w * (s / r) ** (-k)) @ folded_rows(M, s, par)
        if k < 0:
            s = (xg + 1) / 2
            B[idx] = 2 * (wg / 2 * s ** (-k)) @ folded_rows(M, s, par)
    V = (kvals[:, None, None] / grid_r[None, :, None]) * T
    s = (xg + 1) / 2
    center_u0 = -2 * (wg / 2) @ folded_rows(M, s, -1)
    center_v1 = -2 * (wg / 2 / s) @ folded_rows(M, s, 1)
    center_q0 = folded_rows(M, 0.0, 1)[0]
    diff_even = folded_rows(M, grid_r, 1, 1)
    diff_odd = folded_rows(M, grid_r, -1, 1)
    return ModeOperators(kvals, T, V, B, q1, dq1, center_u0, center_v1, center_q0, diff_even, diff_odd)


# --------------------------------------------------------------------------- traces

@dataclass
class DiskTrace:
    """Boundary samples (N, d) and ring samples (M, N, d) of a map Δ̄ → ℂ^d."""

    grid: PolarGrid
    boundary: np.ndarray
    interior: np.ndarray | None = None
    holomorphic: bool = False
    center: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.boundary = np.asarray(self.boundary, complex)
        if self.boundary.ndim != 2 or self.boundary.shape[0] != self.grid.N:
            raise DimensionMismatch(f"boundary must be (N={self.grid.N}, d)")
        if self.interior is not None:
            self.interior = np.asarray(self.interior, complex)
            expect = (self.grid.M, self.grid.N, self.boundary.shape[1])
            if self.interior.shape != expect:
                raise DimensionMismatch(f"interior must have shape {expect}")
        if self.holomorphic and self.negative_mass() > EPS_HOL:
            raise ValueError("trace flagged holomorphic has negative-frequency content")

    @property
    def dim(self) -> int:
        return self.boundary.shape[1]

    @property
    def N(self):
        return self.grid.N

    def coefficients(self) -> np.ndarray:
        """Fourier coefficients, FFT ordering, normalized so boundary = Σ ĉ_k ζ^k."""
        return np.fft.fft(self.boundary, axis=0) / self.grid.N

    def negative_mass(self) -> float:
        c = self.coefficients()
        tot = np.sum(np.abs(c) ** 2)
        if tot == 0:
            return 0.0
        return float(np.sqrt(np.sum(np.abs(c[self.grid.modes < 0]) ** 2) / tot))

    def taylor(self, z) -> np.ndarray:
        """Evaluate the nonnegative-frequency part of the trace as a polynomial."""
        c = self.coefficients()
        ks = self.grid.modes
        z = np.asarray(z, complex)
        keep = ks >= 0
        return np.tensordot(z[..., None] ** ks[keep], c[keep], axes=([-1], [0]))

    @classmethod
    def from_function(cls, f, grid: PolarGrid, holomorphic: bool = False, **kw):
        """Sample a vectorized f: ℂ-array → (..., d) on the grid."""
        b = np.asarray(f(grid.zeta), complex)
        inner = np.asarray(f(grid.points), complex)
        c = np.asarray(f(np.zeros(1, complex)), complex)[0]
        return cls(grid, b, inner, holomorphic, c, **kw)

    @classmethod
    def from_coefficients(cls, coeffs, grid: PolarGrid, **kw):
        """Polynomial Σ_k coeffs[k] ζ^k (k ≥ 0) on the grid."""
        coeffs = np.asarray(coeffs, complex)
        ks = np.arange(coeffs.shape[0])

        def f(z):
            return np.tensordot(z[..., None] ** ks, coeffs, axes=([-1], [0]))

        return cls.from_function(f, grid, holomorphic=True, **kw)

    # ------------------------------------------------------------------ IO
    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            head = ["theta"]
            for j in range(self.dim):
                head += [f"re_{j}", f"im_{j}"]
            w.writerow(head)
            for th, row in zip(self.grid.theta, self.boundary):
                vals = [format(th, ".17g")]
                for v in row:
                    vals += [format(v.real, ".17g"), format(v.imag, ".17g")]
                w.writerow(vals)

    @classmethod
    def from_csv(cls, path, M: int = 16):
        with Path(path).open() as fh:
            rows = list(csv.reader(fh))
        data = np.array(rows[1:], float)
        N = data.shape[0]
        grid = PolarGrid(N, M)
        if not np.allclose(data[:, 0], grid.theta, atol=1e-12):
            raise ValueError("CSV angles are not the uniform grid")
        b = data[:, 1::2] + 1j * data[:, 2::2]
        return cls(grid, b)

    def interior_to_json(self, path) -> None:
        if self.interior is None:
            raise ValueError("trace carries no interior values")
        rings = []
        for r, ring in zip(self.grid.radii, self.interior):
            rings.append({"r": float(r), "values": [[[float(v.real), float(v.imag)] for v in pt] for pt in ring]})
        doc = {"N": self.grid.N, "M": self.grid.M, "dim": self.dim, "rings": rings}
        Path(path).write_text(json.dumps(doc))

    @staticmethod
    def interior_from_json(path) -> np.ndarray:
        doc = json.loads(Path(path).read_text())
        arr = np.array([ring["values"] for ring in doc["rings"]], float)
        return arr[..., 0] + 1j * arr[..., 1]


@dataclass(frozen=True)
class BoundaryMultiplier:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("multiplier must be a finite real vector")
        object.__setattr__(self, "values", v)

    def scaled(self, t: float) -> "BoundaryMultiplier":
        return BoundaryMultiplier(t * self.values)


# --------------------------------------------------------------------------- Cauchy-Green

@dataclass
class DiskField:
    """Values of F = H + T[q] and of ∂F, plus point functionals used by the solvers."""

    interior: np.ndarray      # (..., M, N, d)
    d_interior: np.ndarray    # ∂F on rings
    boundary: np.ndarray      # (..., N, d)
    at_zero: np.ndarray       # F(0)
    dx_zero: np.ndarray       # F_x(0) = ∂F(0) + ∂̄F(0)
    dx_one: np.ndarray        # F_x(1)
    dxx_one: np.ndarray       # F_xx(1)


def evaluate_field(grid: PolarGrid, coeffs, source) -> DiskField:
    """F = Σ_k c_k ζ^k + T[q], where T is the Cauchy-Green solution operator.

    T[q] solves ∂̄u = q with no nonnegative boundary modes.  Linear in
    (coeffs, source); leading batch axes are carried through.
    ``coeffs`` has shape (..., K+1, d); ``source`` has shape (..., M, N, d) or None.
    """
    coeffs = np.asarray(coeffs, complex)
    N, M = grid.N, grid.M
    batch = coeffs.shape[:-2]
    K1, d = coeffs.shape[-2:]
    ks = np.arange(K1)
    r = grid.radii

    modes = np.zeros(batch + (M, N, d), complex)
    dmodes = np.zeros(batch + (M, N, d), complex)
    bmodes = np.zeros(batch + (N, d), complex)
    modes[..., :, ks % N, :] = coeffs[..., None, :, :] * (r[:, None] ** ks)[..., None]
    dmodes[..., :, (ks[1:] - 1) % N, :] = (coeffs[..., None, 1:, :] * ks[1:, None]
                                           * (r[:, None] ** (ks[1:] - 1))[..., None])
    bmodes[..., ks % N, :] = coeffs
    at_zero = coeffs[..., 0, :].copy()
    dx_zero = coeffs[..., 1, :].copy() if K1 > 1 else np.zeros(batch + (d,), complex)
    dx_one = np.einsum("k,...kd->...d", ks.astype(float), coeffs)
    dxx_one = np.einsum("k,...kd->...d", (ks * (ks - 1)).astype(float), coeffs)

    if source is not None:
        ops = grid.ops()
        qhat = np.fft.fft(np.asarray(source, complex), axis=-2) / N  # (..., M, N, d)
        src = qhat[..., :, grid.mode_slots(1), :]                     # (..., M, nk, d)
        src = np.moveaxis(src, -2, -3)                                 # (..., nk, M, d)
        u = ops.T @ src
        du = ops.V @ src + src
        ub = (ops.B[:, None, :] @ src)[..., 0, :]
        kslots = grid.mode_slots(0)
        dslots = grid.mode_slots(-1)
        modes[..., :, kslots, :] += np.moveaxis(u, -3, -2)
        dmodes[..., :, dslots, :] += np.moveaxis(du, -3, -2)
        bmodes[..., kslots, :] += ub
        # point functionals
        kv = ops.kvals.astype(float)
        q1 = (ops.q1[:, None, :] @ src)[..., 0, :]
        dq1 = (ops.dq1[:, None, :] @ src)[..., 0, :]
        dx_one = dx_one + np.einsum("...kd->...d", kv[:, None] * ub + 2 * q1)
        dxx_one = dxx_one + np.einsum(
            "...kd->...d", (kv * (kv - 1))[:, None] * ub + 2 * kv[:, None] * q1 + 2 * dq1)
        s0 = grid.slot
        at_zero = at_zero + np.einsum("i,...id->...d", ops.center_u0, qhat[..., :, s0[1], :])
        dx_zero = dx_zero + np.einsum("i,...id->...d", ops.center_v1, qhat[..., :, s0[2], :]) \
            + np.einsum("i,...id->...d", ops.center_q0, qhat[..., :, s0[0], :])

    interior = np.fft.ifft(modes, axis=-2) * N
    d_interior = np.fft.ifft(dmodes, axis=-2) * N
    boundary = np.fft.ifft(bmodes, axis=-2) * N
    return DiskField(interior, d_interior, boundary, at_zero, dx_zero, dx_one, dxx_one)


def cauchy_green_extend(trace: DiskTrace, source=None) -> DiskTrace:
    """Holomorphic extension of the nonnegative-frequency part of ``trace`` plus T[source]."""
    grid = trace.grid
    c = trace.coefficients()
    K = grid.N // 2 - 1
    coeffs = c[:K + 1]
    if source is not None:
        source = np.asarray(source, complex)
        if source.ndim == 2:
            source = source[..., None]
        if source.shape != (grid.M, grid.N, trace.dim):
            raise DimensionMismatch("source must live on the trace's polar grid")
    fld = evaluate_field(grid, coeffs, source)
    return DiskTrace(grid, fld.boundary, fld.interior, center=fld.at_zero,
                     meta={"dx_zero": fld.dx_zero})


def radial_derivative(grid: PolarGrid, values) -> np.ndarray:
    """∂/∂r of ring data (M, N, d), spectral in θ and parity-folded Chebyshev in r."""
    ops = grid.ops()
    vhat = np.fft.fft(values, axis=1)
    out = np.empty_like(vhat)
    for slot, k in enumerate(grid.modes):
        D = ops.diff_even if k % 2 == 0 else ops.diff_odd
        out[:, slot] = D @ vhat[:, slot]
    return np.fft.ifft(out, axis=1)


def angular_derivative(grid: PolarGrid, values) -> np.ndarray:
    ik = 1j * grid.modes.astype(float)
    ik[grid.N // 2] = 0.0
    return np.fft.ifft(ik[None, :, None] * np.fft.fft(values, axis=1), axis=1)


def real_partials(grid: PolarGrid, values):
    """(F_x, F_y) on the rings from polar derivatives."""
    Fr = radial_derivative(grid, values)
    Ft = angular_derivative(grid, values)
    r = grid.radii[:, None, None]
    c = np.cos(grid.theta)[None, :, None]
    s = np.sin(grid.theta)[None, :, None]
    return c * Fr - s * Ft / r, s * Fr + c * Ft / r


def dbar_residual(trace: DiskTrace, lifted) -> np.ndarray:
    """F_y - 𝕁(F) F_x at every interior node, as real vectors (M, N, 4n).

    ``lifted`` maps complex states (..., 2n) to real (..., 4n, 4n) matrices.
    """
    from .cotangent import state_to_real

    check_resolution(trace.grid.N, trace.grid.M)
    if trace.interior is None:
        raise ValueError("trace has no interior values")
    Fx, Fy = real_partials(trace.grid, trace.interior)
    E = lifted(trace.interior)
    return state_to_real(Fy) - np.einsum("...ab,...b->...a", E, state_to_real(Fx))


def hilbert_conjugate(values) -> np.ndarray:
    """Harmonic conjugate of a real boundary function (multiplier -i·sgn(k))."""
    v = np.asarray(values, float)
    N = v.shape[0]
    k = mode_numbers(N)
    mult = -1j * np.sign(k)
    if N % 2 == 0:
        mult[N // 2] = 0.0
    shape = (N,) + (1,) * (v.ndim - 1)
    return np.fft.ifft(mult.reshape(shape) * np.fft.fft(v, axis=0), axis=0).real

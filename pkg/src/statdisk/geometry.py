"""Domains, almost complex structures and their deformations.

Points of ℝ^{2n} use the interleaved chart ``x[2j] = Re z_j``,
``x[2j+1] = Im z_j``.  All fields are vectorised over leading axes: a
structure evaluated on an array of shape ``(..., 2n)`` returns ``(..., 2n, 2n)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._validation import as_point
from .errors import (
    DerivativeUnavailable,
    GridEmpty,
    NotInDistribution,
    NotOnBoundary,
)

H_J = 1e-5
DELTA_GRAD = 1e-8
PROJECTION_STEPS = 50
PROJECTION_TOL = 1e-13


def standard_matrix(n: int) -> np.ndarray:
    """J_st on ℝ^{2n}: multiplication by i in each complex coordinate."""
    return np.kron(np.eye(n), np.array([[0.0, -1.0], [1.0, 0.0]]))


def to_complex(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[..., 0::2] + 1j * x[..., 1::2]


def to_real(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


class AlmostComplexStructure:
    """A field x ↦ J(x) with first derivatives.

    ``deriv(x)[..., j, a, i]`` is ∂J^a_i/∂x^j.  When no analytic derivative
    is supplied, central differences with step ``step`` are used.
    """

    def __init__(
        self,
        n: int,
        field: Callable[[np.ndarray], np.ndarray],
        derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        *,
        step: float = H_J,
        constant: bool = False,
        standard: bool = False,
        label: str = "custom",
        allow_fd: bool = True,
    ):
        self.n = int(n)
        self.dim = 2 * self.n
        self._field = field
        self._derivative = derivative
        self.step = float(step)
        self.constant = bool(constant)
        self.standard = bool(standard)
        self.label = label
        self.allow_fd = allow_fd

    def __call__(self, x):
        return self._field(np.asarray(x, dtype=float))

    @property
    def has_analytic_derivative(self) -> bool:
        return self._derivative is not None or self.constant

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        d = self.dim
        if self.constant:
            return np.zeros(x.shape[:-1] + (d, d, d))
        if self._derivative is not None:
            return self._derivative(x)
        if not self.allow_fd:
            raise DerivativeUnavailable(f"structure {self.label!r} has no derivative")
        h = self.step
        out = np.empty(x.shape[:-1] + (d, d, d))
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            out[..., j, :, :] = (self(x + e) - self(x - e)) / (2 * h)
        return out

    def square_defect(self, points) -> float:
        """sup ‖J(x)² + I‖ over the given points."""
        Jx = self(np.atleast_2d(points))
        return float(np.abs(Jx @ Jx + np.eye(self.dim)).max())

    def describe(self) -> dict:
        return {"label": self.label, "n": self.n}


def standard_structure(n: int) -> AlmostComplexStructure:
    J0 = standard_matrix(n)

    def field(x):
        return np.broadcast_to(J0, np.shape(x)[:-1] + J0.shape).copy()

    return AlmostComplexStructure(n, field, constant=True, standard=True, label="standard")


def constant_structure(matrix) -> AlmostComplexStructure:
    """Any constant J with J² = -I (integrable)."""
    matrix = np.array(matrix, dtype=float)
    d = matrix.shape[0]
    if matrix.shape != (d, d) or d % 2:
        raise ValueError("constant structure needs an even square matrix")

    def field(x):
        return np.broadcast_to(matrix, np.shape(x)[:-1] + matrix.shape).copy()

    is_std = np.array_equal(matrix, standard_matrix(d // 2))
    return AlmostComplexStructure(d // 2, field, constant=True, standard=is_std, label="constant")


# --------------------------------------------------------------------------- generators

@dataclass(frozen=True)
class AffineGenerator:
    """S(x) = C0 + Σ_j x_j C1[j]; a smooth matrix field with exact derivative."""

    C0: np.ndarray
    C1: np.ndarray
    label: str = "affine"

    @property
    def dim(self):
        return self.C0.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.C0 + np.einsum("...j,jab->...ab", x, self.C1)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.C1, x.shape[:-1] + self.C1.shape)

    def scaled(self, c: float) -> "AffineGenerator":
        return AffineGenerator(c * self.C0, c * self.C1, f"{self.label}*{c:g}")


def zero_generator(n: int) -> AffineGenerator:
    d = 2 * n
    return AffineGenerator(np.zeros((d, d)), np.zeros((d, d, d)), "zero")


def random_generator(n: int, seed: int = 0, scale: float = 1.0) -> AffineGenerator:
    """Affine field with ‖S(x)‖₂ ≲ scale on the unit ball (entries ~ N(0, 1/d))."""
    d = 2 * n
    rng = np.random.default_rng(seed)
    C0 = rng.normal(size=(d, d)) / (2 * np.sqrt(d))
    C1 = rng.normal(size=(d, d, d)) / (2 * d)
    return AffineGenerator(scale * C0, scale * C1, f"random-affine(seed={seed},scale={scale:g})")


GENERATORS = {
    "zero": lambda n, seed, scale: zero_generator(n),
    "random-affine": random_generator,
}


def generator_from_id(ident: str, n: int, seed: int = 0, scale: float = 1.0) -> AffineGenerator:
    try:
        make = GENERATORS[ident]
    except KeyError:
        raise ValueError(f"unknown generator {ident!r}; known: {sorted(GENERATORS)}") from None
    return make(n, seed, scale)


class DeformationPath:
    """J_t(x) = (I + tS(x)) J_st (I + tS(x))⁻¹."""

    def __init__(self, generator, n: Optional[int] = None, t_max: float = np.inf):
        self.generator = generator
        self.n = int(n if n is not None else generator.dim // 2)
        self.t_max = float(t_max)
        self._J0 = standard_matrix(self.n)

    def at(self, t: float) -> AlmostComplexStructure:
        t = float(t)
        if not 0.0 <= t <= self.t_max:
            raise ValueError(f"t={t} outside [0, {self.t_max}]")
        n, J0, S = self.n, self._J0, self.generator
        if t == 0.0:
            out = standard_structure(n)
            out.t = 0.0
            return out
        eye = np.eye(2 * n)

        def field(x):
            P = eye + t * S(x)
            return np.swapaxes(np.linalg.solve(np.swapaxes(P, -1, -2), np.swapaxes(P @ J0, -1, -2)), -1, -2)

        dS = getattr(S, "derivative", None)
        derivative = None
        if dS is not None:
            def derivative(x):
                P = eye + t * S(x)
                Pinv = np.linalg.inv(P)
                Jx = P @ J0 @ Pinv
                dP = t * dS(x)  # (..., j, a, b)
                # d(P J0 P⁻¹) = dP J0 P⁻¹ - P J0 P⁻¹ dP P⁻¹
                A = dP @ (J0 @ Pinv)[..., None, :, :]
                B = Jx[..., None, :, :] @ dP @ Pinv[..., None, :, :]
                return A - B

        label = f"deformation({getattr(S, 'label', 'S')}, t={t:g})"
        out = AlmostComplexStructure(n, field, derivative, label=label)
        out.t = t
        return out


# --------------------------------------------------------------------------- domains

class Domain:
    """Base class: a sublevel set {ρ < 0} of a smooth function on ℝ^{2n}."""

    kind = "abstract"

    def __init__(self, n: int, interior_point=None):
        self.n = int(n)
        self.dim = 2 * self.n
        self.interior_point = (np.zeros(self.dim) if interior_point is None
                               else np.asarray(interior_point, float))

    def rho(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    def grad_complex(self, x):
        """w-coefficients of dρ: ρ_{z_j} = (∂_{2j}ρ - i ∂_{2j+1}ρ)/2."""
        g = self.grad(x)
        return 0.5 * (g[..., 0::2] - 1j * g[..., 1::2])

    def outward_normal(self, x):
        g = self.grad(x)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def boundary_project(self, x, *, steps=PROJECTION_STEPS, tol=PROJECTION_TOL):
        """Newton on ρ along ∇ρ until |ρ| < tol."""
        x = np.array(x, dtype=float)
        for _ in range(steps):
            r = self.rho(x)
            if np.all(np.abs(r) < tol):
                break
            g = self.grad(x)
            gg = np.sum(g * g, axis=-1)
            if np.any(gg < DELTA_GRAD ** 2):
                raise DerivativeUnavailable("gradient of rho vanishes during projection")
            x = x - (r / gg)[..., None] * g
        return x

    def sample_boundary(self, count: int, rng=None):
        """Random boundary points: rays from the interior point, then projection."""
        rng = np.random.default_rng(rng)
        u = rng.normal(size=(count, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        pts = np.empty_like(u)
        for i, direction in enumerate(u):
            pts[i] = self._ray_hit(direction)
        return self.boundary_project(pts)

    def sample_interior(self, count: int, rng=None, depth=(0.1, 0.9)):
        rng = np.random.default_rng(rng)
        b = self.sample_boundary(count, rng)
        s = rng.uniform(*depth, size=(count, 1))
        return self.interior_point + s * (b - self.interior_point)

    def _ray_hit(self, direction):
        x0 = self.interior_point
        lo, hi = 0.0, 1.0
        while self.rho(x0 + hi * direction) < 0:
            hi *= 2.0
            if hi > 1e6:
                raise ValueError("ray does not leave the domain")
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.rho(x0 + mid * direction) < 0:
                lo = mid
            else:
                hi = mid
        return x0 + hi * direction

    def check_boundary(self, x, tol=1e-9):
        x = as_point(x, self.dim)
        r = float(self.rho(x))
        if abs(r) >= tol:
            raise NotOnBoundary(f"|rho(x)| = {abs(r):.3e} >= {tol:g}")
        g = self.grad(x)
        if np.linalg.norm(g) <= DELTA_GRAD:
            raise DerivativeUnavailable("grad rho vanishes at boundary point")
        return x

    def to_dict(self) -> dict:
        raise NotImplementedError


class Ellipsoid(Domain):
    """ρ = Σ a_j |z_j - c_j|² - R²; weights may be negative (Levi-test quadrics)."""

    kind = "ellipsoid"

    def __init__(self, weights, radius: float = 1.0, center=None):
        w = np.asarray(weights, dtype=float)
        n = w.size
        super().__init__(n, interior_point=center)
        self.weights = w
        self.radius = float(radius)
        self.center = self.interior_point.copy()
        self._w2 = np.repeat(w, 2)

    def rho(self, x):
        y = np.asarray(x, float) - self.center
        return np.sum(self._w2 * y * y, axis=-1) - self.radius ** 2

    def grad(self, x):
        return 2.0 * self._w2 * (np.asarray(x, float) - self.center)

    def hess(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(np.diag(2.0 * self._w2), x.shape[:-1] + (self.dim, self.dim)).copy()

    def _ray_hit(self, direction):
        if np.all(self.weights > 0):
            s = self.radius / np.sqrt(np.sum(self._w2 * direction * direction))
            return self.center + s * direction
        return super()._ray_hit(direction)

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "weights": self.weights.tolist(),
                "radius": self.radius, "center": self.center.tolist()}


class Ball(Ellipsoid):
    kind = "ball"

    def __init__(self, n: int, radius: float = 1.0, center=None):
        super().__init__(np.ones(int(n)), radius, center)

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "radius": self.radius, "center": self.center.tolist()}


class PolynomialDomain(Domain):
    """ρ(x) = Σ c_α x^α over multi-indices α ∈ ℕ^{2n} in the real chart."""

    kind = "polynomial"

    def __init__(self, n: int, terms, interior_point=None):
        super().__init__(n, interior_point)
        exps, coefs = [], []
        for alpha, c in terms:
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.dim or min(alpha) < 0:
                raise ValueError(f"bad multi-index {alpha}")
            exps.append(alpha)
            coefs.append(float(c))
        if not exps:
            raise ValueError("polynomial domain needs at least one term")
        self.exponents = np.array(exps, dtype=int)
        self.coefficients = np.array(coefs)
        if self.rho(self.interior_point) >= 0:
            raise ValueError("interior_point is not inside the domain")

    @staticmethod
    def _pow(x, e):
        # x^e with 0^0 = 1, safe for negative exponents produced by differentiation
        return np.where(e >= 0, np.power(x, np.maximum(e, 0)), 0.0)

    def _monomials(self, x, shift=None):
        x = np.asarray(x, float)[..., None, :]
        e = self.exponents if shift is None else self.exponents - shift
        return np.prod(self._pow(x, e), axis=-1)

    def rho(self, x):
        return self._monomials(x) @ self.coefficients

    def grad(self, x):
        x = np.asarray(x, float)
        out = np.empty(x.shape)
        for j in range(self.dim):
            s = np.zeros(self.dim, int)
            s[j] = 1
            out[..., j] = self._monomials(x, s) @ (self.coefficients * self.exponents[:, j])
        return out

    def hess(self, x):
        x = np.asarray(x, float)
        out = np.empty(x.shape + (self.dim,))
        for i in range(self.dim):
            for j in range(i, self.dim):
                s = np.zeros(self.dim, int)
                s[i] += 1
                s[j] += 1
                if i == j:
                    fac = self.exponents[:, i] * (self.exponents[:, i] - 1)
                else:
                    fac = self.exponents[:, i] * self.exponents[:, j]
                out[..., i, j] = out[..., j, i] = self._monomials(x, s) @ (self.coefficients * fac)
        return out

    def to_dict(self):
        return {"kind": self.kind, "n": self.n,
                "terms": [[list(map(int, a)), float(c)] for a, c in zip(self.exponents, self.coefficients)],
                "interior_point": self.interior_point.tolist()}


def domain_from_dict(spec: dict) -> Domain:
    kind = spec.get("kind")
    if kind == "ball":
        return Ball(int(spec["n"]), float(spec.get("radius", 1.0)), spec.get("center"))
    if kind == "ellipsoid":
        return Ellipsoid(spec["weights"], float(spec.get("radius", 1.0)), spec.get("center"))
    if kind == "polynomial":
        return PolynomialDomain(int(spec["n"]), spec["terms"], spec.get("interior_point"))
    raise ValueError(f"unknown domain kind {kind!r}")


# --------------------------------------------------------------------------- diagnostics

def _theta_form_derivative(domain: Domain, J: AlmostComplexStructure, x):
    """Ω_ij = ∂_iθ_j - ∂_jθ_i for θ = -dρ∘J."""
    g = domain.grad(x)
    Hs = domain.hess(x)
    Jx = J(x)
    D = J.deriv(x)
    dtheta = -(Hs @ Jx) - np.einsum("a,iaj->ij", g, D)
    return dtheta - dtheta.T, Jx


def _distribution_basis(domain, Jx, x):
    g = domain.grad(x)
    C = np.vstack([g, Jx.T @ g])
    _, s, vt = np.linalg.svd(C)
    return vt[2:].T, C


def levi_form(domain: Domain, J: AlmostComplexStructure, x, v, tol: float = 1e-9) -> float:
    """dd^cρ(v, Jv) on the complex tangent space; positive on strictly pseudoconvex boundaries."""
    x = domain.check_boundary(x, tol)
    v = as_point(v, domain.dim, "v")
    Omega, Jx = _theta_form_derivative(domain, J, x)
    g = domain.grad(x)
    scale = np.linalg.norm(g) * max(np.linalg.norm(v), 1.0)
    if abs(g @ v) > tol * scale or abs(g @ (Jx @ v)) > tol * scale:
        raise NotInDistribution("v is not in ker dρ ∩ ker dρ∘J")
    return float(v @ Omega @ (Jx @ v))


@dataclass
class PseudoconvexityReport:
    min_eigenvalue: float
    worst_point: np.ndarray
    eigenvalues: np.ndarray
    passed: bool


def levi_eigenvalues(domain: Domain, J: AlmostComplexStructure, x) -> np.ndarray:
    Omega, Jx = _theta_form_derivative(domain, J, x)
    B, _ = _distribution_basis(domain, Jx, x)
    Q = B.T @ (Omega @ Jx) @ B
    return np.linalg.eigvalsh(0.5 * (Q + Q.T))


def check_strong_pseudoconvexity(domain: Domain, J: AlmostComplexStructure, grid, tol: float = 1e-9):
    grid = np.atleast_2d(np.asarray(grid, float))
    if grid.size == 0:
        raise GridEmpty("empty boundary grid")
    mins = np.empty(len(grid))
    for k, x in enumerate(grid):
        domain.check_boundary(x, tol)
        mins[k] = levi_eigenvalues(domain, J, x).min()
    worst = int(np.argmin(mins))
    return PseudoconvexityReport(float(mins[worst]), grid[worst].copy(), mins, bool(mins[worst] > 0))


def sample_cotangent_grid(domain: Domain, count: int, rng=None):
    """Pairs (x, p): x in the closed domain, p on the unit covector sphere."""
    rng = np.random.default_rng(rng)
    half = count // 2
    xs = np.vstack([domain.sample_interior(count - half, rng), domain.sample_boundary(half, rng)])
    ps = rng.normal(size=xs.shape)
    ps /= np.linalg.norm(ps, axis=1, keepdims=True)
    return xs, ps


def deformation_norm(J, J0, xs, ps) -> float:
    """Discrete sup of the operator norm of 𝕁 - 𝕁' over (x, p/|p|)."""
    from .cotangent import lift_structure

    xs = np.atleast_2d(np.asarray(xs, float))
    ps = np.atleast_2d(np.asarray(ps, float))
    if xs.size == 0:
        raise GridEmpty("empty cotangent grid")
    ps = ps / np.linalg.norm(ps, axis=1, keepdims=True)
    diff = lift_structure(J, xs, ps) - lift_structure(J0, xs, ps)
    return float(np.linalg.norm(diff, ord=2, axis=(-2, -1)).max())

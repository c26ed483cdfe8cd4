"""Cotangent bundle: lifted structure, circle action on covectors, conormal model.

A cotangent point is (x, p) with p the chart components of a covector.  The
fiber complex coordinate is ``w_j = (p[2j] - i p[2j+1]) / 2`` so that the
standard lifted structure is multiplication by i on (z, w).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RankDeficient
from .geometry import AlmostComplexStructure, Domain, standard_matrix, to_complex, to_real

DELTA_RANK = 1e-7


@dataclass(frozen=True)
class CotangentPoint:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, float)
        p = np.asarray(self.p, float)
        if x.shape != p.shape or x.ndim != 1 or x.size % 2:
            raise ValueError("base point and covector must be equal-length even vectors")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise ValueError("non-finite cotangent point")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    def as_state(self) -> np.ndarray:
        return real_to_state(np.concatenate([self.x, self.p]))


# --------------------------------------------------------------------------- chart helpers

def fiber_to_complex(p):
    p = np.asarray(p, float)
    return 0.5 * (p[..., 0::2] - 1j * p[..., 1::2])


def fiber_to_real(w):
    w = np.asarray(w, complex)
    out = np.empty(w.shape[:-1] + (2 * w.shape[-1],))
    out[..., 0::2] = 2.0 * w.real
    out[..., 1::2] = -2.0 * w.imag
    return out


def state_to_real(Z):
    """(z, w) ∈ ℂ^{2n} → (x, p) ∈ ℝ^{4n}.  Also valid for tangent vectors."""
    Z = np.asarray(Z, complex)
    n = Z.shape[-1] // 2
    return np.concatenate([to_real(Z[..., :n]), fiber_to_real(Z[..., n:])], axis=-1)


def real_to_state(X):
    X = np.asarray(X, float)
    d = X.shape[-1] // 2
    return np.concatenate([to_complex(X[..., :d]), fiber_to_complex(X[..., d:])], axis=-1)


def standard_lift(n: int) -> np.ndarray:
    J0 = standard_matrix(n)
    d = 2 * n
    out = np.zeros((2 * d, 2 * d))
    out[:d, :d] = J0
    out[d:, d:] = J0.T
    return out


# --------------------------------------------------------------------------- action and lift

def c_action(J: AlmostComplexStructure, x, zeta, p):
    """Re(ζ) p - Im(ζ) J(x)ᵀ p."""
    p = np.asarray(p, float)
    zeta = np.asarray(zeta, complex)
    Jt_p = np.einsum("...ai,...a->...i", J(x), p)
    return zeta.real[..., None] * p - zeta.imag[..., None] * Jt_p


def mixed_block(Jx, D, p):
    """Curvature-like block of the lift, linear in p; indexed [j, i] (row dp_j, column dx_i)."""
    P = np.einsum("...a,...jai->...ji", p, D)
    pJ = np.einsum("...a,...al->...l", p, Jx)
    X = np.einsum("...l,...mli->...mi", pJ, D)
    Y = np.einsum("...mi,...mj->...ij", X, Jx)
    return 0.5 * (P.swapaxes(-1, -2) - P + Y.swapaxes(-1, -2) - Y)


def lift_structure(J: AlmostComplexStructure, x, p) -> np.ndarray:
    """The canonical lift as a real (4n, 4n) matrix acting on (dx, dp)."""
    x = np.asarray(x, float)
    p = np.asarray(p, float)
    x, p = np.broadcast_arrays(x, p)
    Jx = J(x)
    d = Jx.shape[-1]
    out = np.zeros(x.shape[:-1] + (2 * d, 2 * d))
    out[..., :d, :d] = Jx
    out[..., d:, d:] = np.swapaxes(Jx, -1, -2)
    if not J.constant:
        out[..., d:, :d] = mixed_block(Jx, J.deriv(x), p)
    return out


def lift_structure_state(J: AlmostComplexStructure, Z) -> np.ndarray:
    """Lift evaluated at complex states (z, w)."""
    X = state_to_real(Z)
    d = X.shape[-1] // 2
    return lift_structure(J, X[..., :d], X[..., d:])


# --------------------------------------------------------------------------- conormal model

class ConormalModel:
    """ρ̃(t, x, p) = (ρ(x), p - t ∇ρ(x)) together with the structure used for rotations."""

    def __init__(self, domain: Domain, J: AlmostComplexStructure, delta_rank: float = DELTA_RANK):
        if J.n != domain.n:
            raise ValueError("structure and domain dimensions differ")
        self.domain = domain
        self.J = J
        self.delta_rank = float(delta_rank)

    def evaluate(self, t, x, p):
        x = np.asarray(x, float)
        g = self.domain.grad(x)
        r = self.domain.rho(x)
        return np.concatenate([np.atleast_1d(r)[..., None] if np.ndim(r) else [r],
                               np.asarray(p, float) - np.asarray(t)[..., None] * g], axis=-1)

    def jacobian(self, t, x, p) -> np.ndarray:
        """d ρ̃ / d(t, x, p), shape (2n+1, 4n+1); analytic via the domain Hessian."""
        x = np.asarray(x, float)
        d = x.size
        g = self.domain.grad(x)
        H = self.domain.hess(x)
        out = np.zeros((d + 1, 2 * d + 1))
        out[0, 1:d + 1] = g
        out[1:, 0] = -g
        out[1:, 1:d + 1] = -t * H
        out[1:, d + 1:] = np.eye(d)
        return out

    def multiplier(self, x, p) -> float:
        g = self.domain.grad(x)
        return float(np.dot(p, g) / np.dot(g, g))

    def tangent_basis(self, x, p) -> np.ndarray:
        """Orthonormal basis (4n, 2n) of the tangent space of the conormal bundle at (x, p)."""
        x = np.asarray(x, float)
        p = np.asarray(p, float)
        t = self.multiplier(x, p)
        Jac = self.jacobian(t, x, p)
        _, s, vt = np.linalg.svd(Jac)
        rank_floor = self.delta_rank * s[0]
        if s[-1] <= rank_floor:
            raise RankDeficient(f"conormal Jacobian rank-deficient (σ_min = {s[-1]:.2e})")
        null = vt[Jac.shape[0]:].T[1:]
        q, r = np.linalg.qr(null)
        if np.abs(np.diag(r)).min() <= self.delta_rank:
            raise RankDeficient("tangent space collapses after dropping the multiplier direction")
        return q


def conormal_defect(model: ConormalModel, zeta, t, x, p) -> np.ndarray:
    """ρ̃(t, ζ⁻¹·α): the covector is rotated so that its fiber coordinate becomes ζ⁻¹ w."""
    zeta = complex(zeta)
    if abs(abs(zeta) - 1.0) > 1e-12:
        raise ValueError("zeta must be unimodular")
    rotated = c_action(model.J, x, zeta, p)
    return model.evaluate(float(t), x, rotated)


def totally_real_angle(model: ConormalModel, x, p, tol: float = 1e-9) -> float:
    """Smallest principal angle between T_α𝒩 and its image under the lifted structure.

    Angles are measured in the metric |dx|² + |dp|²/|p|², which the fiber
    scalings (x, p) ↦ (x, tp) preserve, so the value depends only on the ray of α.
    """
    x = np.asarray(x, float)
    p = np.asarray(p, float)
    t = model.multiplier(x, p)
    defect = model.evaluate(t, x, p)
    scale = max(1.0, np.linalg.norm(p))
    if np.abs(defect).max() > tol * scale:
        raise ValueError(f"(x, p) is not on the conormal bundle (defect {np.abs(defect).max():.2e})")
    if t == 0.0:
        raise ValueError("zero covector is excluded from the conormal bundle")
    d = x.size
    W = np.concatenate([np.ones(d), np.full(d, 1.0 / np.linalg.norm(p))])
    Q1, _ = np.linalg.qr(W[:, None] * model.tangent_basis(x, p))
    image = W[:, None] * (lift_structure(model.J, x, p) @ (Q1 / W[:, None]))
    Q2, r = np.linalg.qr(image)
    if np.abs(np.diag(r)).min() <= model.delta_rank:
        raise RankDeficient("lifted tangent image is degenerate")
    s = np.linalg.svd(Q1.T @ Q2, compute_uv=False)
    return float(np.arccos(np.clip(s[0], -1.0, 1.0)))

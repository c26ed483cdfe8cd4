"""Nonlinear Riemann-Hilbert solver for stationary disks.

A disk is F = (z, w): Δ̄ → ℂ^{2n} with base part z and fiber part w.  It is
represented as F = H + T[q], where H is a polynomial of degree K = N/4 (the
unknowns) and q = Q̃(F)·∂F closes the 𝕁-holomorphy equation, found by Picard
iteration.  Boundary conditions use a reduced map ϱ(ζ, F(ζ)) ∈ ℝ^{2n} from which
the real multiplier λ has been eliminated.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cotangent import (
    c_action,
    fiber_to_complex,
    fiber_to_real,
    lift_structure,
    real_to_state,
    standard_lift,
    state_to_real,
)
from .disk import DiskField, DiskTrace, PolarGrid, evaluate_field, BoundaryMultiplier
from .errors import (
    ConeViolation,
    DegenerateVelocity,
    DimensionMismatch,
    LeftDomain,
    NewtonDiverged,
    StepUnderflow,
)
from .geometry import AlmostComplexStructure, Domain, to_complex, to_real

log = logging.getLogger(__name__)

FD_STEP = 1e-6


@dataclass
class SolverOptions:
    N: int = 64
    M: int = 16
    tol: float = 1e-10
    max_iter: int = 25
    max_halvings: int = 20
    picard_tol: float = 1e-14
    picard_max: int = 300
    fd_step: float = FD_STEP
    chunk: int = 64

    @property
    def K(self):
        return self.N // 4


# --------------------------------------------------------------------------- reduced boundary map

class BoundaryMap:
    """ϱ(ζ, x, p): zero iff ζ⁻¹·p is a real multiple of dρ at a boundary point x.

    With w' the fiber coordinate of the rotated covector and ρ_z the complex
    gradient, a = ⟨w', c⟩, b = ⟨ρ_z, c⟩ for a frozen reference direction c:
    components are ρ, Im(a b̄) and Re/Im(⟨w', c_j⟩ b - a ⟨ρ_z, c_j⟩), j ≥ 2.
    """

    def __init__(self, domain: Domain, J: AlmostComplexStructure, reference):
        self.domain = domain
        self.J = J
        n = domain.n
        c = np.asarray(reference, complex)
        c = c / np.linalg.norm(c)
        q, _ = np.linalg.qr(np.column_stack([c, np.eye(n)]))
        frame = q[:, :n].copy()
        frame[:, 0] = c
        self.reference = c
        self.frame = frame

    @classmethod
    def from_base_trace(cls, domain, J, z_boundary):
        rz = domain.grad_complex(to_real(z_boundary))
        rz = rz / np.linalg.norm(rz, axis=1, keepdims=True)
        _, _, vh = np.linalg.svd(rz)
        return cls(domain, J, vh[0])

    def _pieces(self, zeta, X):
        d = X.shape[-1] // 2
        x, p = X[..., :d], X[..., d:]
        rot = c_action(self.J, x, zeta, p)
        wp = fiber_to_complex(rot)
        rz = self.domain.grad_complex(x)
        A = wp @ self.frame.conj()
        Bv = rz @ self.frame.conj()
        return x, A, Bv

    def __call__(self, zeta, X):
        X = np.asarray(X, float)
        x, A, Bv = self._pieces(zeta, X)
        a, b = A[..., :1], Bv[..., :1]
        cross = A[..., 1:] * b - a * Bv[..., 1:]
        parts = [self.domain.rho(x)[..., None], (a * b.conj()).imag]
        if cross.shape[-1]:
            tail = np.stack([cross.real, cross.imag], axis=-1).reshape(cross.shape[:-1] + (-1,))
            parts.append(tail)
        return np.concatenate(parts, axis=-1)

    def multiplier(self, zeta, X):
        _, A, Bv = self._pieces(zeta, np.asarray(X, float))
        a, b = A[..., 0], Bv[..., 0]
        return (a * b.conj()).real / np.abs(b) ** 2

    def real_jacobian(self, zeta, X, h=FD_STEP):
        """Central differences of ϱ in the 4n real coordinates: (..., 2n, 4n)."""
        X = np.asarray(X, float)
        D = X.shape[-1]
        cols = []
        for c in range(D):
            e = np.zeros(D)
            e[c] = h
            cols.append((self(zeta, X + e) - self(zeta, X - e)) / (2 * h))
        return np.stack(cols, axis=-1)

    def wirtinger(self, zeta, X, h=FD_STEP):
        """G with dϱ = 2 Re(G ĥ) for complex displacements ĥ of (z, w)."""
        return wirtinger_from_real(self.real_jacobian(zeta, X, h))

    def multiplier_gradient(self, zeta, X, h=FD_STEP):
        X = np.asarray(X, float)
        D = X.shape[-1]
        cols = []
        for c in range(D):
            e = np.zeros(D)
            e[c] = h
            cols.append((self.multiplier(zeta, X + e) - self.multiplier(zeta, X - e)) / (2 * h))
        return wirtinger_from_real(np.stack(cols, axis=-1)[..., None, :])[..., 0, :]


def _apply(mats, vecs):
    """Batched matrix-vector product over matching leading axes."""
    return (mats @ vecs[..., None])[..., 0]


def wirtinger_from_real(R):
    """Convert a real Jacobian (..., r, 4n) in (x, p) to the complex one in (z, w)."""
    D = R.shape[-1]
    d = D // 2
    n = d // 2
    G = np.empty(R.shape[:-1] + (d,), complex)
    G[..., :n] = 0.5 * (R[..., 0:d:2] - 1j * R[..., 1:d:2])
    G[..., n:] = R[..., d::2] + 1j * R[..., d + 1::2]
    return G


# --------------------------------------------------------------------------- solutions

@dataclass
class StationarySolution:
    grid: PolarGrid
    coeffs: np.ndarray
    source: np.ndarray | None
    trace: DiskTrace
    multiplier: BoundaryMultiplier
    mu: float
    residuals: dict
    iterations: int
    history: list
    provenance: dict
    reference: np.ndarray
    field: DiskField = None

    @property
    def n(self):
        return self.coeffs.shape[1] // 2

    def base_boundary(self):
        return self.trace.boundary[:, :self.n]

    def base_interior(self):
        return self.trace.interior[..., :self.n]

    def fiber_boundary(self):
        return self.trace.boundary[:, self.n:]

    def velocity_at_zero(self):
        return to_real(self.field.dx_zero[:self.n])

    def velocity_at_one(self):
        return to_real(self.field.dx_one[:self.n])

    def evaluate(self, zeta):
        """Base point F(ζ) at arbitrary |ζ| ≤ 1 (holomorphic part exact, correction interpolated)."""
        return evaluate_disk(self, zeta)[..., :self.n]

    def summary(self) -> dict:
        return {
            "kind": self.provenance.get("kind"),
            "mu": float(self.mu),
            "iterations": int(self.iterations),
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "N": self.grid.N,
            "M": self.grid.M,
        }


def evaluate_disk(sol: StationarySolution, zeta) -> np.ndarray:
    """Full state at points of the closed disk.

    The polynomial part is exact.  The Cauchy-Green correction T[q] is
    evaluated per mode by radial interpolation of its ring values.
    """
    from .disk import folded_rows

    zeta = np.asarray(zeta, complex)
    ks = np.arange(sol.coeffs.shape[0])
    out = np.tensordot(zeta[..., None] ** ks, sol.coeffs, axes=([-1], [0]))
    if sol.source is None:
        return out
    grid = sol.grid
    M = grid.M
    corr = sol.trace.interior - np.tensordot(grid.points[..., None] ** ks, sol.coeffs, axes=([-1], [0]))
    chat = np.fft.fft(corr, axis=1) / grid.N
    r = np.abs(zeta).ravel()
    ang = np.angle(zeta).ravel()
    res = np.zeros((r.size, corr.shape[-1]), complex)
    for slot, k in enumerate(grid.modes):
        rows = folded_rows(M, r, 1 if k % 2 == 0 else -1)
        res += (rows @ chat[:, slot]) * np.exp(1j * k * ang)[:, None]
    return out + res.reshape(zeta.shape + (corr.shape[-1],))


# --------------------------------------------------------------------------- the discrete problem

class _Problem:
    """Residual and Jacobian for the interior-point (𝓡) or boundary-point (𝓡′) problem."""

    def __init__(self, domain, J, kind, x0, v0, opts: SolverOptions, bmap: BoundaryMap, nu=0.0):
        self.domain, self.J, self.kind = domain, J, kind
        self.n = domain.n
        self.x0 = np.asarray(x0, float)
        self.v0 = np.asarray(v0, float)
        self.nu = float(nu)
        self.opts = opts
        self.grid = PolarGrid(opts.N, opts.M)
        self.bmap = bmap
        self.K = opts.K
        self.d = 2 * self.n
        self.J0 = standard_lift(self.n)
        self.Jx0 = J(self.x0)
        self.standard = bool(getattr(J, "standard", False))
        self.weight = np.sqrt(2 * np.pi / self.grid.N)
        self.n_coef = 2 * (self.K + 1) * self.d
        self.n_unknown = self.n_coef + (1 if kind == "center" else 0)

    # ---- packing
    def unpack(self, U):
        nc = (self.K + 1) * self.d
        c = (U[:nc] + 1j * U[nc:2 * nc]).reshape(self.K + 1, self.d)
        mu = U[self.n_coef] if self.kind == "center" else 1.0
        return c, mu

    def pack(self, coeffs, mu=None):
        flat = np.asarray(coeffs, complex).reshape(-1)
        out = [flat.real, flat.imag]
        if self.kind == "center":
            out.append([1.0 if mu is None else mu])
        return np.concatenate(out)

    # ---- interior closure
    def qtilde(self, X):
        E = lift_structure(self.J, X[..., :self.d], X[..., self.d:])
        return np.linalg.solve(self.J0 + E, self.J0 - E)

    def solve_field(self, coeffs, q0=None):
        if self.standard:
            return evaluate_field(self.grid, coeffs, None), None, None
        q = np.zeros((self.grid.M, self.grid.N, self.d), complex) if q0 is None else q0
        prev = np.inf
        for it in range(self.opts.picard_max):
            fld = evaluate_field(self.grid, coeffs, q)
            X = state_to_real(fld.interior)
            Qt = self.qtilde(X)
            qn = real_to_state(_apply(Qt, state_to_real(fld.d_interior)))
            step = np.abs(qn - q).max()
            q = qn
            scale = max(1.0, np.abs(q).max())
            if step <= self.opts.picard_tol * scale:
                break
            if it > 5 and step > 10 * prev:
                raise NewtonDiverged("Picard iteration for the interior diverged", [step])
            prev = step
        else:
            if step > 1e-10:
                raise NewtonDiverged(f"Picard iteration stalled at {step:.2e}", [step])
        fld = evaluate_field(self.grid, coeffs, q)
        return fld, q, self.qtilde(state_to_real(fld.interior))

    # ---- residual
    def blocks(self, U, q0=None):
        coeffs, mu = self.unpack(U)
        fld, q, Qt = self.solve_field(coeffs, q0)
        n = self.n
        Xb = state_to_real(fld.boundary)
        rb = self.bmap(self.grid.zeta, Xb)
        out = {"boundary": rb}
        p1 = fiber_to_real(fld.boundary[0, n:])
        v1 = to_real(fld.dx_one[:n])
        if self.kind == "center":
            out["center"] = to_real(fld.at_zero[:n]) - self.x0
            out["direction"] = to_real(fld.dx_zero[:n]) - mu * self.v0
            out["normalization"] = np.array([p1 @ v1 - 1.0])
        else:
            out["anchor"] = to_real(fld.boundary[0, :n]) - self.x0
            out["velocity"] = v1 - self.v0
            out["tangency"] = np.array([to_real(fld.dxx_one[:n]) @ (self.Jx0 @ v1) - self.nu])
            out["normalization"] = np.array([p1 @ v1 - 1.0])
        return out, fld, q, Qt

    def vector(self, blocks):
        parts = [self.weight * blocks["boundary"].ravel()]
        for key in self.row_keys():
            parts.append(blocks[key])
        return np.concatenate(parts)

    def row_keys(self):
        if self.kind == "center":
            return ["center", "direction", "normalization"]
        return ["anchor", "velocity", "tangency", "normalization"]

    def sup(self, blocks):
        return max(float(np.abs(v).max()) for v in blocks.values())

    def interior_ok(self, fld):
        rho = self.domain.rho(to_real(fld.interior[..., :self.n]))
        return bool(np.all(rho < 0))

    # ---- Jacobian
    def _direction_coeffs(self, cols):
        """Unit coefficient perturbations for the given unknown indices."""
        nc = (self.K + 1) * self.d
        P = len(cols)
        dc = np.zeros((P, nc), complex)
        for r, j in enumerate(cols):
            if j < nc:
                dc[r, j] = 1.0
            elif j < 2 * nc:
                dc[r, j - nc] = 1j
        return dc.reshape(P, self.K + 1, self.d)

    def _tangent_W(self, fld, Qt):
        """Derivative of Q̃(F)·∂F with respect to the real coordinates of F."""
        X = state_to_real(fld.interior)
        dF = state_to_real(fld.d_interior)
        h = self.opts.fd_step
        D = X.shape[-1]
        W = np.empty(X.shape + (D,))
        for c in range(D):
            e = np.zeros(D)
            e[c] = h
            dQ = (self.qtilde(X + e) - self.qtilde(X - e)) / (2 * h)
            W[..., c] = _apply(dQ, dF)
        return W

    def tangent_fields(self, dcoeffs, W, Qt):
        """Linearized F for a batch of coefficient directions (tangent Picard)."""
        if W is None:
            return evaluate_field(self.grid, dcoeffs, None)
        dq = np.zeros(dcoeffs.shape[:-2] + (self.grid.M, self.grid.N, self.d), complex)
        for it in range(self.opts.picard_max):
            fld = evaluate_field(self.grid, dcoeffs, dq)
            lin = _apply(W, state_to_real(fld.interior)) + _apply(Qt, state_to_real(fld.d_interior))
            dqn = real_to_state(lin)
            step = np.abs(dqn - dq).max()
            dq = dqn
            if step <= self.opts.picard_tol * max(1.0, np.abs(dq).max()):
                break
        return evaluate_field(self.grid, dcoeffs, dq)

    def jacobian(self, U, fld, Qt):
        coeffs, mu = self.unpack(U)
        n = self.n
        Xb = state_to_real(fld.boundary)
        Rb = self.bmap.real_jacobian(self.grid.zeta, Xb, self.opts.fd_step)  # (N, 2n, 4n)
        W = None if Qt is None else self._tangent_W(fld, Qt)
        p1 = fiber_to_real(fld.boundary[0, n:])
        v1 = to_real(fld.dx_one[:n])
        rows = self.grid.N * self.d + (4 * n + 1 if self.kind == "center" else 4 * n + 2)
        Jm = np.zeros((rows, self.n_unknown))
        for start in range(0, self.n_coef, self.opts.chunk):
            cols = list(range(start, min(start + self.opts.chunk, self.n_coef)))
            dfld = self.tangent_fields(self._direction_coeffs(cols), W, Qt)
            dXb = state_to_real(dfld.boundary)  # (P, N, 4n)
            rb = np.einsum("kra,pka->pkr", Rb, dXb).reshape(len(cols), -1) * self.weight
            dp1 = fiber_to_real(dfld.boundary[:, 0, n:])
            dv1 = to_real(dfld.dx_one[:, :n])
            norm = dp1 @ v1 + dv1 @ p1
            if self.kind == "center":
                extra = [to_real(dfld.at_zero[:, :n]), to_real(dfld.dx_zero[:, :n]), norm[:, None]]
            else:
                dxx = to_real(dfld.dxx_one[:, :n])
                xx = to_real(fld.dxx_one[:n])
                tang = dxx @ (self.Jx0 @ v1) + (dv1 @ self.Jx0.T) @ xx
                extra = [to_real(dfld.boundary[:, 0, :n]), dv1, tang[:, None], norm[:, None]]
            Jm[:, cols] = np.concatenate([rb] + extra, axis=1).T
        if self.kind == "center":
            off = self.grid.N * self.d + 2 * n
            Jm[off:off + 2 * n, self.n_coef] = -self.v0
        return Jm

    # ---- Newton
    def newton(self, U0, q0=None, zero_rows=None):
        opts = self.opts
        U = np.array(U0, float)
        blocks, fld, q, Qt = self.blocks(U, q0)
        history = [self.sup(blocks)]
        R = self.vector(blocks)
        it = 0
        while True:
            if history[-1] < opts.tol and self.interior_ok(fld):
                break
            if it >= opts.max_iter:
                raise NewtonDiverged(f"no convergence in {opts.max_iter} iterations "
                                     f"(residual {history[-1]:.3e})", history)
            Jm = self.jacobian(U, fld, Qt)
            dU = np.linalg.lstsq(Jm, -R, rcond=None)[0]
            alpha = 1.0
            accepted = False
            left = False
            nR = np.linalg.norm(R)
            for _ in range(opts.max_halvings + 1):
                Ut = U + alpha * dU
                try:
                    bt, ft, qt, Qtt = self.blocks(Ut, q)
                except NewtonDiverged:
                    alpha *= 0.5
                    continue
                if not self.interior_ok(ft):
                    left = True
                    alpha *= 0.5
                    continue
                Rt = self.vector(bt)
                st = self.sup(bt)
                if np.linalg.norm(Rt) <= (1 - 1e-4 * alpha) * nR or st < opts.tol:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                if left:
                    raise LeftDomain("every damped step left the domain")
                raise NewtonDiverged(f"line search failed at residual {history[-1]:.3e}", history)
            U, blocks, fld, q, Qt, R = Ut, bt, ft, qt, Qtt, Rt
            history.append(st)
            it += 1
            log.debug("newton %d: residual %.3e (alpha %.3g)", it, st, alpha)
        return U, blocks, fld, q, Qt, it, history


def _finish(prob: _Problem, U, blocks, fld, q, Qt, it, history, provenance) -> StationarySolution:
    coeffs, mu = prob.unpack(U)
    grid = prob.grid
    trace = DiskTrace(grid, fld.boundary, fld.interior, center=fld.at_zero)
    lam = BoundaryMultiplier(prob.bmap.multiplier(grid.zeta, state_to_real(fld.boundary)))
    residuals = {k: float(np.abs(v).max()) for k, v in blocks.items()}
    if q is not None:
        again = real_to_state(_apply(Qt, state_to_real(fld.d_interior)))
        residuals["dbar"] = float(np.abs(again - q).max())
    else:
        residuals["dbar"] = 0.0
    prov = dict(provenance)
    prov.update(kind=prob.kind, structure=prob.J.label, x0=prob.x0.tolist(), v0=prob.v0.tolist())
    return StationarySolution(grid, coeffs, q, trace, lam, float(mu), residuals, it, history,
                              prov, prob.bmap.reference.copy(), fld)


# --------------------------------------------------------------------------- initial guesses

def _holomorphic_part(values, K):
    c = np.fft.fft(values, axis=0) / values.shape[0]
    return c[:K + 1]


def affine_guess(domain: Domain, x0, v0, opts: SolverOptions, phases: int = 32):
    """ζ ↦ x₀ + s ζ v₀ with s the smallest boundary distance over the rotations e^{iθ}v₀.

    The fiber is the holomorphic part of ζ ρ_z along the guess.
    """
    x0 = np.asarray(x0, float)
    vc = to_complex(np.asarray(v0, float))
    s = np.inf
    for th in 2 * np.pi * np.arange(phases) / phases:
        v = to_real(np.exp(1j * th) * vc)
        lo, hi = 0.0, 1.0
        while domain.rho(x0 + hi * v) < 0:
            hi *= 2
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if domain.rho(x0 + mid * v) < 0 else (lo, mid)
        s = min(s, lo)
    return _guess_from_base(domain, [to_complex(x0), s * vc], opts)


def _guess_from_base(domain, base_coeffs, opts: SolverOptions):
    K, N = opts.K, opts.N
    n = domain.n
    zeta = np.exp(2j * np.pi * np.arange(N) / N)
    base = np.zeros((K + 1, n), complex)
    for k, c in enumerate(base_coeffs):
        base[k] = c
    z = np.tensordot(zeta[:, None] ** np.arange(K + 1), base, axes=([1], [0]))
    rz = domain.grad_complex(to_real(z))
    fiber = _holomorphic_part(zeta[:, None] * rz, K)
    coeffs = np.concatenate([base, fiber], axis=1)
    # scale the fiber to satisfy the lift normalization
    v1 = to_real(np.arange(K + 1) @ base)
    p1 = fiber_to_real(fiber.sum(axis=0))
    val = p1 @ v1
    if abs(val) > 1e-14:
        coeffs[:, n:] /= val
    return coeffs, z


def _resample_coeffs(coeffs, K):
    out = np.zeros((K + 1, coeffs.shape[1]), complex)
    m = min(K + 1, coeffs.shape[0])
    out[:m] = coeffs[:m]
    return out


# --------------------------------------------------------------------------- public solvers

def _check_dims(domain, J, *vecs):
    if J.n != domain.n:
        raise DimensionMismatch("structure and domain dimensions differ")
    for v in vecs:
        if np.asarray(v).shape != (domain.dim,):
            raise DimensionMismatch(f"expected a vector of length {domain.dim}")


def evaluate_center_operator(domain, J, x0, v0, coeffs, mu, opts: SolverOptions | None = None,
                             reference=None, fiber_scale: float = 1.0):
    """Residual blocks of 𝓡 at a candidate given by its holomorphic coefficients and μ."""
    opts = opts or SolverOptions()
    _check_dims(domain, J, x0, v0)
    coeffs = np.array(coeffs, complex)
    if coeffs.ndim != 2 or coeffs.shape[1] != 2 * domain.n:
        raise DimensionMismatch("coefficients must have shape (K+1, 2n)")
    coeffs = _resample_coeffs(coeffs, opts.K)
    coeffs[:, domain.n:] *= fiber_scale
    if reference is None:
        z = np.tensordot(np.exp(2j * np.pi * np.arange(opts.N) / opts.N)[:, None] ** np.arange(opts.K + 1),
                         coeffs[:, :domain.n], axes=([1], [0]))
        bmap = BoundaryMap.from_base_trace(domain, J, z)
    else:
        bmap = BoundaryMap(domain, J, reference)
    prob = _Problem(domain, J, "center", x0, v0, opts, bmap)
    blocks, fld, q, Qt = prob.blocks(prob.pack(coeffs, mu))
    lam = bmap.multiplier(prob.grid.zeta, state_to_real(fld.boundary))
    blocks = dict(blocks)
    blocks["multiplier"] = lam
    return blocks


def solve_stationary_center(domain: Domain, J: AlmostComplexStructure, x0, v0, initial=None,
                            opts: SolverOptions | None = None) -> StationarySolution:
    """Stationary disk with F(0) = x₀ and F_x(0) = μ v₀ (μ > 0 unknown)."""
    opts = opts or SolverOptions()
    x0 = np.asarray(x0, float)
    v0 = np.asarray(v0, float)
    _check_dims(domain, J, x0, v0)
    if domain.rho(x0) >= 0:
        raise ValueError("x0 must lie inside the domain")
    if np.linalg.norm(v0) < 1e-12:
        raise DegenerateVelocity("v0 vanishes")
    q0 = None
    if initial is None:
        coeffs, z = affine_guess(domain, x0, v0, opts)
        mu = np.abs(coeffs[1, :domain.n]).max() / np.abs(to_complex(v0)).max()
        bmap = BoundaryMap.from_base_trace(domain, J, z)
    else:
        coeffs = _resample_coeffs(initial.coeffs, opts.K)
        mu = initial.mu * _velocity_ratio(initial, v0)
        bmap = BoundaryMap(domain, J, initial.reference)
        if initial.source is not None and initial.grid == PolarGrid(opts.N, opts.M):
            q0 = initial.source
    prob = _Problem(domain, J, "center", x0, v0, opts, bmap)
    U, blocks, fld, q, Qt, it, hist = prob.newton(prob.pack(coeffs, mu), q0)
    return _finish(prob, U, blocks, fld, q, Qt, it, hist, {"t": getattr(J, "t", None)})


def _velocity_ratio(initial, v0):
    old = np.asarray(initial.provenance.get("v0", v0), float)
    den = np.dot(v0, v0)
    return float(np.dot(old, v0) / den) if den else 1.0


def conical_velocity(domain: Domain, J: AlmostComplexStructure, x0, v0):
    """Project v₀ onto {v : dρ(J(x₀) v) = 0}, the admissible vertex velocities."""
    g = J(x0).T @ domain.grad(x0)
    return v0 - (g @ v0) / (g @ g) * g


def solve_stationary_boundary(domain: Domain, J: AlmostComplexStructure, x0, v0, nu: float = 0.0,
                              a: float = 0.0, initial=None,
                              opts: SolverOptions | None = None) -> StationarySolution:
    """Stationary disk with F(1) = x₀, F_x(1) = v₀ and prescribed tangency parameter ν."""
    opts = opts or SolverOptions()
    x0 = np.asarray(x0, float)
    v0 = np.asarray(v0, float)
    _check_dims(domain, J, x0, v0)
    x0 = domain.check_boundary(x0, 1e-9)
    normal = domain.outward_normal(x0)
    if not np.dot(v0, normal) > a:
        raise ConeViolation(f"<v0, normal> = {np.dot(v0, normal):.4g} is not > a = {a:g}")
    v_adm = conical_velocity(domain, J, x0, v0)
    if initial is None:
        coeffs, z = _boundary_guess(domain, x0, v_adm, opts, nu)
        bmap = BoundaryMap.from_base_trace(domain, J, z)
        q0 = None
    else:
        coeffs = _resample_coeffs(initial.coeffs, opts.K)
        bmap = BoundaryMap(domain, J, initial.reference)
        q0 = initial.source if (initial.source is not None and initial.grid == PolarGrid(opts.N, opts.M)) else None
    prob = _Problem(domain, J, "boundary", x0, v_adm, opts, bmap, nu=nu)
    U, blocks, fld, q, Qt, it, hist = prob.newton(prob.pack(coeffs), q0)
    prov = {"t": getattr(J, "t", None), "nu": float(nu), "a": float(a),
            "v0_requested": v0.tolist(), "projection_shift": float(np.linalg.norm(v0 - v_adm))}
    return _finish(prob, U, blocks, fld, q, Qt, it, hist, prov)


def _parabolic(zeta, sigma):
    """Disk automorphism fixing 1 with derivative 1 there and second derivative -iσ."""
    return (2j * zeta + sigma * (1 - zeta)) / (2j + sigma * (1 - zeta))


def _boundary_guess(domain, x0, v0, opts, nu=0.0):
    """Chord through x₀ along v₀, reparametrized by a parabolic automorphism carrying ν."""
    xc = to_complex(x0)
    vc = to_complex(v0)
    # straight chord x₀ + s(ζ - 1)v₀ with s chosen so the far end is on the boundary
    lo, hi = 0.0, 1.0
    while domain.rho(x0 - 2 * hi * v0) < 0:
        hi *= 2
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if domain.rho(x0 - 2 * mid * v0) < 0 else (lo, mid)
    s = max(0.5 * (lo + hi), 1e-3)
    if nu == 0.0:
        return _guess_from_base(domain, [xc - s * vc, s * vc], opts)
    # same image as the chord; the tangency of x₀ + s(ψ - 1)v₀ is -σ s²|v₀|²
    sigma = -nu / (s * s * np.dot(v0, v0))
    zeta = np.exp(2j * np.pi * np.arange(opts.N) / opts.N)
    psi = np.fft.fft(_parabolic(zeta, sigma)) / opts.N
    base = [xc - s * vc + s * psi[0] * vc] + [s * c * vc for c in psi[1:opts.K + 1]]
    return _guess_from_base(domain, base, opts)


# --------------------------------------------------------------------------- linearization

@dataclass
class LinearizedData:
    A: np.ndarray           # (M, N, 2n, 2n) complex
    B: np.ndarray
    Qtilde: np.ndarray | None
    G: "object"             # indices.MatrixLoop
    g_row: np.ndarray       # (N, 2n): dλ = 2 Re(g·ĥ)
    grid: PolarGrid
    weight: float


def linearize(solution: StationarySolution, domain: Domain, J: AlmostComplexStructure,
              opts: SolverOptions | None = None) -> LinearizedData:
    from .indices import MatrixLoop

    opts = opts or SolverOptions(N=solution.grid.N, M=solution.grid.M)
    grid = solution.grid
    d = 2 * domain.n
    bmap = BoundaryMap(domain, J, solution.reference)
    Xb = state_to_real(solution.trace.boundary)
    G = bmap.wirtinger(grid.zeta, Xb, opts.fd_step)
    g_row = bmap.multiplier_gradient(grid.zeta, Xb, opts.fd_step)
    if getattr(J, "standard", False):
        A = np.zeros((grid.M, grid.N, d, d), complex)
        return LinearizedData(A, A.copy(), None, MatrixLoop(G), g_row, grid, np.sqrt(2 * np.pi / grid.N))
    prob = _Problem(domain, J, solution.provenance.get("kind", "center"),
                    solution.provenance["x0"], solution.provenance["v0"],
                    SolverOptions(N=grid.N, M=grid.M, fd_step=opts.fd_step), bmap)
    fld = solution.field
    Qt = prob.qtilde(state_to_real(fld.interior))
    W = prob._tangent_W(fld, Qt)
    eye = np.eye(d, dtype=complex)
    Le = real_to_state(-np.einsum("...ab,cb->...ca", W, state_to_real(eye)))       # L(e_c)
    Lie = real_to_state(-np.einsum("...ab,cb->...ca", W, state_to_real(1j * eye)))  # L(i e_c)
    A = np.swapaxes(0.5 * (Le - 1j * Lie), -1, -2)
    B = np.swapaxes(0.5 * (Le + 1j * Lie), -1, -2)
    return LinearizedData(A, B, Qt, MatrixLoop(G), g_row, grid, np.sqrt(2 * np.pi / grid.N))


def newton_jacobian(solution: StationarySolution, domain, J, opts: SolverOptions | None = None):
    """The Gauss-Newton matrix of the discrete problem at a solution."""
    opts = opts or SolverOptions(N=solution.grid.N, M=solution.grid.M)
    prob = _problem_for(solution, domain, J, opts)
    U = prob.pack(solution.coeffs, solution.mu)
    blocks, fld, q, Qt = prob.blocks(U, solution.source)
    return prob.jacobian(U, fld, Qt), prob


def _problem_for(solution, domain, J, opts):
    prov = solution.provenance
    bmap = BoundaryMap(domain, J, solution.reference)
    return _Problem(domain, J, prov["kind"], prov["x0"], prov["v0"], opts, bmap, nu=prov.get("nu", 0.0))


# --------------------------------------------------------------------------- tangency

def tangency_parameter(disk, J: AlmostComplexStructure | None = None) -> float:
    """⟨f_xx(1), J(f(1)) f_x(1)⟩ with the flat connection.

    ``disk`` is a StationarySolution or a holomorphic DiskTrace of the base map.
    """
    if isinstance(disk, StationarySolution):
        n = disk.n
        fx = to_real(disk.field.dx_one[:n])
        fxx = to_real(disk.field.dxx_one[:n])
        x1 = to_real(disk.field.boundary[0, :n])
    else:
        c = disk.coefficients()
        ks = disk.grid.modes.astype(float)
        keep = ks >= 0
        fx = to_real(ks[keep] @ c[keep])
        fxx = to_real((ks * (ks - 1))[keep] @ c[keep])
        x1 = to_real(disk.boundary[0])
    if np.linalg.norm(fx) < 1e-10:
        raise DegenerateVelocity("velocity at ζ = 1 vanishes")
    Jx = np.kron(np.eye(len(fx) // 2), [[0.0, -1.0], [1.0, 0.0]]) if J is None else J(x1)
    return float(fxx @ (Jx @ fx))


# --------------------------------------------------------------------------- continuation

@dataclass
class ContinuationResult:
    family: list
    t_values: list
    t_reached: float
    halvings: int
    log: list = field(default_factory=list)


def continuation_path(domain: Domain, path, base: StationarySolution, t_target: float,
                      steps: int = 2, min_step: float = 1e-6,
                      opts: SolverOptions | None = None) -> ContinuationResult:
    """March J_t from t = 0 to t_target: previous solution as predictor, Newton as corrector."""
    opts = opts or SolverOptions(N=base.grid.N, M=base.grid.M)
    prov = base.provenance
    kind = prov.get("kind", "center")
    t = 0.0
    dt = t_target / max(1, steps)
    family, ts, records = [base], [0.0], []
    halvings = 0
    current = base
    while t < t_target - 1e-15:
        t_next = min(t_target, t + dt)
        J = path.at(t_next)
        try:
            if kind == "center":
                sol = solve_stationary_center(domain, J, prov["x0"], prov["v0"], initial=current, opts=opts)
            else:
                sol = solve_stationary_boundary(domain, J, prov["x0"], prov["v0"], nu=prov.get("nu", 0.0),
                                                initial=current, opts=opts)
        except (NewtonDiverged, LeftDomain) as exc:
            records.append({"t": t_next, "status": "failed", "detail": str(exc)})
            dt *= 0.5
            halvings += 1
            if dt < min_step:
                raise StepUnderflow(f"continuation stalled after t = {t:.6g}", t, family) from exc
            continue
        records.append({"t": t_next, "status": "ok", "iterations": sol.iterations,
                        "residual": max(sol.residuals.values())})
        t = t_next
        current = sol
        family.append(sol)
        ts.append(t)
    return ContinuationResult(family, ts, t, halvings, records)

"""Families of stationary disks: circular atlases, the generalized Riemann map,
the log exhaustion, and conical atlases at a boundary vertex.

Directions are handled in a fixed linear frame P of ℝ^{2n} with
J(x₀) P = P J_st, so complex scalars act on frame coordinates in the usual way.
A center atlas stores one disk per direction u (F(0) = x₀, F_x(0) ∥ P u).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from types import SimpleNamespace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .disk import folded_rows
from .errors import (
    ConeViolation,
    InterpolationGap,
    InverseFailed,
    LeftDomain,
    NewtonDiverged,
    OpenCaseRefused,
    PartialAtlas,
)
from .geometry import AlmostComplexStructure, Domain, standard_matrix, to_complex, to_real
from .indices import good_boundary_test
from .rhsolver import (
    SolverOptions,
    StationarySolution,
    _apply,
    _problem_for,
    evaluate_disk,
    solve_stationary_boundary,
    solve_stationary_center,
    tangency_parameter,
)

log = logging.getLogger(__name__)

DEDUP = 1e-9


# --------------------------------------------------------------------------- frames and grids

def complex_frame(Jx: np.ndarray) -> np.ndarray:
    """Real matrix P with Jx P = P J_st, built by orthonormalizing standard vectors."""
    d = Jx.shape[0]
    cols = []
    for _ in range(d // 2):
        span = np.column_stack(cols) if cols else np.zeros((d, 0))
        best, best_norm = None, -1.0
        for e in np.eye(d):
            if span.shape[1]:
                q, _ = np.linalg.qr(span)
                r = e - q @ (q.T @ e)
            else:
                r = e
            nr = np.linalg.norm(r)
            if nr > best_norm + 1e-12:
                best, best_norm = r, nr
        best = best / best_norm
        cols += [best, Jx @ best]
    P = np.column_stack(cols)
    if abs(np.linalg.det(P)) < 1e-10:
        raise ValueError("failed to build a complex frame")
    return P


def sphere_directions(n: int, moduli: int = 2, phases: int = 4) -> np.ndarray:
    """Product grid on S^{2n-1} ⊂ ℂⁿ: moduli on the positive orthant, uniform phases.

    Returned in a fixed sweep order, deduplicated at angular distance 1e-9.
    """
    if n == 1:
        ph = 2 * np.pi * np.arange(phases) / phases
        return dedupe(to_real(np.exp(1j * ph)[:, None]))
    angles = []
    # moduli: points on the positive part of S^{n-1} via nested angles
    levels = (np.arange(moduli) + 0.5) / moduli * (np.pi / 2)
    grids = np.meshgrid(*([levels] * (n - 1)), indexing="ij")
    for idx in np.ndindex(*(grids[0].shape)):
        a = [g[idx] for g in grids]
        mod = np.ones(n)
        for k, ang in enumerate(a):
            mod[k] *= np.cos(ang)
            mod[k + 1:] *= np.sin(ang)
        angles.append(mod)
    ph = 2 * np.pi * np.arange(phases) / phases
    out = []
    for mod in angles:
        for pidx in np.ndindex(*([phases] * n)):
            out.append(mod * np.exp(1j * ph[list(pidx)]))
    return dedupe(to_real(np.array(out)))


def dedupe(directions, tol: float = DEDUP) -> np.ndarray:
    dirs = np.asarray(directions, float)
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    keep = []
    for v in dirs:
        if all(np.arccos(np.clip(v @ k, -1, 1)) > tol for k in keep):
            keep.append(v)
    return np.array(keep)


def _complex_orthogonal_basis(u: np.ndarray) -> np.ndarray:
    """Real orthonormal basis (2n, 2n-2) of the complement of span{u, J_st u}."""
    d = u.size
    J0 = standard_matrix(d // 2)
    A = np.column_stack([u, J0 @ u])
    q, _ = np.linalg.qr(np.column_stack([A, np.eye(d)]))
    return q[:, 2:d]


def _best_phase(u, dirs):
    """Nearest direction to u up to a complex phase: (index, φ) with u ≈ e^{iφ} dirs[index]."""
    uc = to_complex(u)
    dc = to_complex(dirs)
    inner = dc.conj() @ uc
    dist = np.sqrt(np.maximum(0.0, 2 - 2 * np.abs(inner)))
    i = int(np.argmin(dist))
    return i, float(np.angle(inner[i])), float(dist[i])


def rotate_phase(u, phi):
    return to_real(np.exp(1j * phi) * to_complex(u))


def _rotated_seed(sol: StationarySolution, phi: float, v0):
    """Reparametrize ζ ↦ e^{iφ}ζ: base c_k e^{ikφ}, fiber e^{-iφ} c_k e^{ikφ}."""
    n = sol.n
    k = np.arange(sol.coeffs.shape[0])
    rot = np.exp(1j * k * phi)[:, None]
    c = sol.coeffs * rot
    c[:, n:] *= np.exp(-1j * phi)
    prov = dict(sol.provenance)
    prov["v0"] = list(np.asarray(v0, float))
    return SimpleNamespace(coeffs=c, mu=sol.mu, reference=sol.reference, source=None,
                           grid=sol.grid, provenance=prov)


# --------------------------------------------------------------------------- atlas

@dataclass
class FoliationAtlas:
    kind: str
    domain: Domain
    J: AlmostComplexStructure
    x0: np.ndarray
    directions: np.ndarray
    solutions: list
    frame: np.ndarray
    opts: SolverOptions
    a: float | None = None
    normal: np.ndarray | None = None
    good: list = field(default_factory=list)
    failed: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.domain.n

    def velocity(self, u):
        return self.frame @ np.asarray(u, float)

    def solved(self):
        return [(i, s) for i, s in enumerate(self.solutions) if s is not None]

    def summary(self) -> dict:
        res = [max(s.residuals.values()) for s in self.solutions if s is not None]
        out = {
            "kind": self.kind,
            "x0": self.x0.tolist(),
            "a": self.a,
            "directions": int(len(self.directions)),
            "solved": int(len(res)),
            "failed": [int(i) for i in self.failed],
            "good_boundary": [bool(g) for g in self.good],
            "max_residual": float(max(res)) if res else None,
        }
        out.update(self.stats)
        return out

    def export(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for i, sol in self.solved():
            sol.trace.to_csv(d / f"disk_{i:04d}.csv")
        index = self.summary()
        index["grid"] = self.directions.tolist()
        (d / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True))


SEED_RADIUS = 0.5


def _seed_for(atlas_dirs, sols, u, velocity, radius=SEED_RADIUS):
    solved = [i for i, s in enumerate(sols) if s is not None]
    if not solved:
        return None, None
    i, phi, dist = _best_phase(u, atlas_dirs[solved])
    if dist > radius:
        return None, None
    j = solved[i]
    return _rotated_seed(sols[j], phi, velocity), j


def build_center_foliation(domain: Domain, J: AlmostComplexStructure, x0, directions=None,
                           resolution=(2, 4), opts: SolverOptions | None = None,
                           check_good: bool = True, cross_check: bool = False,
                           seed_atlas: "FoliationAtlas | None" = None,
                           raise_partial: bool = True) -> FoliationAtlas:
    """One center disk per direction, each seeded from its nearest solved neighbor."""
    opts = opts or SolverOptions()
    x0 = np.asarray(x0, float)
    if domain.rho(x0) >= 0:
        raise ValueError("center must be an interior point")
    dirs = sphere_directions(domain.n, *resolution) if directions is None else dedupe(directions)
    P = complex_frame(J(x0))
    sols, good, failed = [], [], []
    crossed = []
    for i, u in enumerate(dirs):
        v = P @ u
        seed = None
        if seed_atlas is not None:
            seed, _ = _seed_for(seed_atlas.directions, seed_atlas.solutions, u, v)
        if seed is None:
            seed, _ = _seed_for(dirs[:i], sols, u, v)
        try:
            try:
                sol = solve_stationary_center(domain, J, x0, v, initial=seed, opts=opts)
            except (NewtonDiverged, LeftDomain):
                if seed is None:
                    raise
                sol = solve_stationary_center(domain, J, x0, v, initial=None, opts=opts)
        except (NewtonDiverged, LeftDomain) as exc:
            log.warning("direction %d failed: %s", i, exc)
            sols.append(None)
            good.append(False)
            failed.append(i)
            continue
        sols.append(sol)
        good.append(bool(good_boundary_test(sol, domain, J).invertible) if check_good else True)
        if cross_check and i > 0:
            other = solve_stationary_center(domain, J, x0, v, initial=None, opts=opts)
            crossed.append(float(np.abs(other.coeffs - sol.coeffs).max()))
    atlas = FoliationAtlas("center", domain, J, x0, dirs, sols, P, opts, good=good, failed=failed)
    atlas.stats["direction_limit_error"] = _direction_limit(atlas)
    if crossed:
        atlas.stats["cross_seed_max_difference"] = max(crossed)
    if failed and raise_partial:
        raise PartialAtlas(f"{len(failed)} directions failed", atlas, failed)
    return atlas


def _direction_limit(atlas) -> float:
    """max over disks of |(F(ζ) - x₀)/ζ - F_x(0)| on the innermost ring, relative to |F_x(0)|."""
    worst = 0.0
    for i, sol in atlas.solved():
        r = sol.grid.radii[-1]
        inner = to_real(sol.base_interior()[-1, 0])
        quot = (inner - atlas.x0) / r
        v = sol.velocity_at_zero()
        worst = max(worst, float(np.linalg.norm(quot - v) / np.linalg.norm(v) / r))
    return worst


def continue_atlas(atlas: FoliationAtlas, path, t_target: float, steps: int = 1,
                   check_good: bool = True) -> FoliationAtlas:
    """Continue every disk of an atlas along a deformation path to t_target."""
    from .rhsolver import continuation_path
    from .errors import StepUnderflow

    J = path.at(t_target)
    sols, good, failed, halvings = [], [], [], []
    for i, sol in enumerate(atlas.solutions):
        if sol is None:
            sols.append(None)
            good.append(False)
            failed.append(i)
            continue
        try:
            res = continuation_path(atlas.domain, path, sol, t_target, steps=steps, opts=atlas.opts)
        except StepUnderflow as exc:
            log.warning("direction %d stalled at t=%g", i, exc.last_t)
            sols.append(None)
            good.append(False)
            failed.append(i)
            continue
        last = res.family[-1]
        sols.append(last)
        halvings.append(res.halvings)
        good.append(bool(good_boundary_test(last, atlas.domain, J).invertible) if check_good else True)
    dirs, frame = atlas.directions, atlas.frame
    if atlas.kind == "center":
        # J(x₀) moved with t: re-express each velocity in the new frame so that
        # frame @ u is again exactly the velocity each disk was solved for
        frame = complex_frame(J(atlas.x0))
        dirs = atlas.directions.copy()
        for i, sol in enumerate(sols):
            v = atlas.frame @ atlas.directions[i]
            w = np.linalg.solve(frame, v)
            c = np.linalg.norm(w)
            dirs[i] = w / c
            if sol is not None:
                prov = dict(sol.provenance, v0=list(v / c))
                sols[i] = replace(sol, mu=sol.mu * c, provenance=prov)
    out = FoliationAtlas(atlas.kind, atlas.domain, J, atlas.x0, dirs, sols, frame,
                         atlas.opts, atlas.a, atlas.normal, good, failed)
    out.stats["t"] = float(t_target)
    out.stats["halvings"] = int(sum(halvings))
    if out.kind == "vertex":
        out.stats.update(conical_checks(out))
    return out


# --------------------------------------------------------------------------- Riemann map

def _disk_for_direction(atlas: FoliationAtlas, u):
    u = np.asarray(u, float)
    u = u / np.linalg.norm(u)
    solved = [i for i, s in enumerate(atlas.solutions) if s is not None]
    if not solved:
        raise InterpolationGap("atlas has no solved disks")
    i, phi, dist = _best_phase(u, atlas.directions[solved])
    spacing = atlas.stats.get("gap_radius", 1.0)
    if dist > spacing:
        raise InterpolationGap(f"direction is {dist:.3f} away from the nearest solved disk")
    j = solved[i]
    v = atlas.frame @ u
    sol = atlas.solutions[j]
    if dist < 1e-14 and abs(phi) < 1e-14:
        return sol
    seed = _rotated_seed(sol, phi, v)
    try:
        return solve_stationary_center(atlas.domain, atlas.J, atlas.x0, v, initial=seed, opts=atlas.opts)
    except (NewtonDiverged, LeftDomain):
        return solve_stationary_center(atlas.domain, atlas.J, atlas.x0, v, initial=None, opts=atlas.opts)


def riemann_map_eval(atlas: FoliationAtlas, w) -> np.ndarray:
    """exp(w) = F^{(w/|w|)}(|w|) for w in the closed unit ball (frame coordinates)."""
    if atlas.kind != "center":
        raise ValueError("Riemann map needs a center atlas")
    w = np.asarray(w, float)
    r = float(np.linalg.norm(w))
    if r > 1 + 1e-12:
        raise ValueError("w must lie in the closed unit ball")
    if r == 0.0:
        return atlas.x0.copy()
    sol = _disk_for_direction(atlas, w / r)
    if abs(r - 1.0) < 1e-14:
        return to_real(sol.base_boundary()[0])
    return to_real(sol.evaluate(np.array(r, complex)))


# --------------------------------------------------------------------------- local leaf charts

def _jet(grid, coeffs, interior, zeta0):
    """Value and first/second Cartesian derivatives of F = H + correction at ζ₀."""
    zeta0 = complex(zeta0)
    ks = np.arange(coeffs.shape[0])
    z = zeta0
    H = (z ** ks) @ coeffs
    H1 = (ks * z ** np.maximum(ks - 1, 0)) @ coeffs
    H2 = (ks * (ks - 1) * z ** np.maximum(ks - 2, 0)) @ coeffs
    out = {"v": H, "x": H1, "y": 1j * H1, "xx": H2, "xy": 1j * H2, "yy": -H2}
    if interior is None:
        return out
    poly_rings = np.tensordot(grid.points[..., None] ** ks, coeffs, axes=([-1], [0]))
    corr = interior - poly_rings
    chat = np.fft.fft(corr, axis=1) / grid.N
    r, th = abs(z), np.angle(z)
    f = np.zeros((6, coeffs.shape[1]), complex)  # v, r, θ, rr, rθ, θθ
    for slot, k in enumerate(grid.modes):
        par = 1 if k % 2 == 0 else -1
        e = np.exp(1j * k * th)
        g0 = folded_rows(grid.M, r, par)[0] @ chat[:, slot]
        g1 = folded_rows(grid.M, r, par, 1)[0] @ chat[:, slot]
        g2 = folded_rows(grid.M, r, par, 2)[0] @ chat[:, slot]
        f[0] += g0 * e
        f[1] += g1 * e
        f[2] += 1j * k * g0 * e
        f[3] += g2 * e
        f[4] += 1j * k * g1 * e
        f[5] += -(k * k) * g0 * e
    c, s = np.cos(th), np.sin(th)
    v, fr, ft, frr, frt, ftt = f
    out["v"] = out["v"] + v
    out["x"] = out["x"] + c * fr - s / r * ft
    out["y"] = out["y"] + s * fr + c / r * ft
    out["xx"] = out["xx"] + (c * c * frr - 2 * c * s / r * frt + s * s / r ** 2 * ftt
                             + s * s / r * fr + 2 * c * s / r ** 2 * ft)
    out["yy"] = out["yy"] + (s * s * frr + 2 * c * s / r * frt + c * c / r ** 2 * ftt
                             + c * c / r * fr - 2 * c * s / r ** 2 * ft)
    out["xy"] = out["xy"] + (c * s * frr + (c * c - s * s) / r * frt - c * s / r ** 2 * ftt
                             - c * s / r * fr - (c * c - s * s) / r ** 2 * ft)
    return out


class LeafChart:
    """Second-order chart (s, ζ) ↦ F^{(u(s))}(ζ) around one atlas leaf.

    u(s) = normalize(u + Σ s_a e_a) with e_a spanning the complex-orthogonal
    complement of u.  First derivatives in s come from the implicit-function
    theorem on the Newton matrix; second derivatives from a symmetric stencil
    of residual evaluations along the first-order curve.
    """

    def __init__(self, atlas: FoliationAtlas, u, solution: StationarySolution | None = None,
                 stencil: float = 1e-3):
        self.atlas = atlas
        self.u = np.asarray(u, float) / np.linalg.norm(u)
        self.sol = solution if solution is not None else _disk_for_direction(atlas, self.u)
        self.E = _complex_orthogonal_basis(self.u)
        self.h = stencil
        opts = atlas.opts
        self.prob = _problem_for(self.sol, atlas.domain, atlas.J, opts)
        U = self.prob.pack(self.sol.coeffs, self.sol.mu)
        self.U = U
        blocks, fld, q, Qt = self.prob.blocks(U, self.sol.source)
        self.fld, self.q, self.Qt = fld, q, Qt
        self.Jm = self.prob.jacobian(U, fld, Qt)
        self.W = None if Qt is None else self.prob._tangent_W(fld, Qt)
        self.pinv = np.linalg.pinv(self.Jm)
        m = self.E.shape[1]
        self.m = m
        n = atlas.n
        rows = self.Jm.shape[0]
        off = self.prob.grid.N * self.prob.d + 2 * n
        dR = np.zeros((rows, m))
        for a in range(m):
            dR[off:off + 2 * n, a] = -self.sol.mu * (atlas.frame @ self.E[:, a])
        self.Us = -self.pinv @ dR
        self._tangent = [self._tangent_field(self.Us[:, a]) for a in range(m)]
        self._second = None

    def direction(self, s):
        v = self.u + self.E @ np.asarray(s, float)
        return v / np.linalg.norm(v)

    def _tangent_field(self, dU):
        dc, _ = self.prob.unpack(dU)
        return self.prob.tangent_fields(dc[None], self.W, self.Qt), dc

    def _field_at(self, s):
        U = self.U + self.Us @ s
        self.prob.v0 = self.atlas.frame @ self.direction(s)
        blocks, fld, q, Qt = self.prob.blocks(U, self.q)
        self.prob.v0 = self.atlas.frame @ self.u
        coeffs, _ = self.prob.unpack(U)
        return self.prob.vector(blocks), coeffs, fld

    def _second_order(self):
        """Second s-derivatives: list over pairs (a, b) of (dU_ab, stencil jets callback data)."""
        if self._second is not None:
            return self._second
        m, h = self.m, self.h
        R0, c0, f0 = self._field_at(np.zeros(m))
        pts = {}

        def at(s):
            key = tuple(np.round(np.asarray(s) / h).astype(int))
            if key not in pts:
                pts[key] = self._field_at(np.asarray(s, float))
            return pts[key]

        second = {}
        for a in range(m):
            for b in range(a, m):
                ea = np.eye(m)[a] * h
                eb = np.eye(m)[b] * h
                if a == b:
                    st = [(ea, 1.0), (np.zeros(m), -2.0), (-ea, 1.0)]
                    scale = h * h
                else:
                    st = [(ea + eb, 1.0), (ea - eb, -1.0), (-ea + eb, -1.0), (-ea - eb, 1.0)]
                    scale = 4 * h * h
                Rab = sum(w * (at(s)[0] if np.any(s) else R0) for s, w in st) / scale
                dU = -self.pinv @ Rab
                second[(a, b)] = (st, scale, self._tangent_field(dU))
        self._second = (second, pts, (R0, c0, f0))
        return self._second

    def jets(self, zeta0, second: bool = True):
        """Ψ and its derivatives at (s = 0, ζ₀) in parameters y = (s_1..s_m, Re ζ, Im ζ)."""
        n = self.atlas.n
        grid = self.prob.grid
        base = _jet(grid, self.sol.coeffs, None if self.sol.source is None else self.fld.interior, zeta0)

        def real(vec):
            return to_real(vec[:n])

        m = self.m
        D = 2 * n
        dim = m + 2
        D1 = np.zeros((D, dim))
        D2 = np.zeros((D, dim, dim))
        for a, (tf, dc) in enumerate(self._tangent):
            jt = _jet(grid, dc[0] if dc.ndim == 3 else dc, tf.interior[0], zeta0)
            D1[:, a] = real(jt["v"])
            D2[:, a, m] = D2[:, m, a] = real(jt["x"])
            D2[:, a, m + 1] = D2[:, m + 1, a] = real(jt["y"])
        D1[:, m] = real(base["x"])
        D1[:, m + 1] = real(base["y"])
        D2[:, m, m] = real(base["xx"])
        D2[:, m, m + 1] = D2[:, m + 1, m] = real(base["xy"])
        D2[:, m + 1, m + 1] = real(base["yy"])
        if second and m:
            sec, pts, (R0, c0, f0) = self._second_order()
            for (a, b), (st, scale, (tf, dc)) in sec.items():
                acc = np.zeros(D)
                for s, w in st:
                    if np.any(s):
                        _, cs, fs = pts[tuple(np.round(np.asarray(s) / self.h).astype(int))]
                    else:
                        cs, fs = c0, f0
                    acc += w * real(_jet(grid, cs, fs.interior if self.sol.source is not None else None,
                                         zeta0)["v"])
                lin = real(_jet(grid, dc[0] if dc.ndim == 3 else dc, tf.interior[0], zeta0)["v"])
                D2[:, a, b] = D2[:, b, a] = acc / scale + lin
        return real(base["v"]), D1, D2

    def exhaustion(self, zeta0):
        """u = log|ζ| at x = Ψ(0, ζ₀), with gradient, Hessian and Levi-form defect."""
        x, D1, D2 = self.jets(zeta0)
        m = self.m
        xi = np.array([zeta0.real, zeta0.imag])
        r2 = xi @ xi
        g_l = np.zeros(m + 2)
        g_l[m:] = xi / r2
        H_l = np.zeros((m + 2, m + 2))
        H_l[m:, m:] = (r2 * np.eye(2) - 2 * np.outer(xi, xi)) / r2 ** 2
        Dinv = np.linalg.inv(D1)
        grad = Dinv.T @ g_l
        Hu = Dinv.T @ (H_l - np.einsum("m,mab->ab", grad, D2)) @ Dinv
        Jx = self.atlas.J(x)
        Dj = self.atlas.J.deriv(x)
        Q = Hu + Jx.T @ Hu @ Jx
        M1 = np.einsum("a,jl,jai->li", grad, Jx, Dj)
        M2 = np.einsum("b,jbi->ji", Jx.T @ grad, Dj)
        Q = Q + M1 + M2
        Q = 0.5 * (Q + Q.T)
        eig = np.linalg.eigvalsh(Q)
        return {"x": x, "u": float(np.log(abs(zeta0))), "gradient": grad, "hessian": Hu,
                "levi_eigenvalues": eig, "defect": float(min(0.0, eig[0])),
                "min_eigenvalue": float(eig[0]), "chart_sigma_min": float(np.linalg.svd(D1, compute_uv=False)[-1])}


def riemann_jacobian(atlas: FoliationAtlas, w) -> np.ndarray:
    """Derivative of w ↦ exp(w) at w ≠ 0, through the leaf chart at w/|w|."""
    w = np.asarray(w, float)
    r = float(np.linalg.norm(w))
    if r == 0 or r >= 1:
        raise ValueError("w must satisfy 0 < |w| < 1")
    u = w / r
    chart = LeafChart(atlas, u)
    _, D1, _ = chart.jets(complex(r), second=False)
    J0 = standard_matrix(atlas.n)
    param = np.column_stack([r * chart.E, u, J0 @ u])
    return D1 @ np.linalg.inv(param)


def exhaustion_at_parameter(atlas: FoliationAtlas, u, zeta0, chart: LeafChart | None = None) -> dict:
    """Exhaustion data at the point F^{(u)}(ζ₀) of the atlas leaf in direction u."""
    chart = chart or LeafChart(atlas, u)
    return chart.exhaustion(complex(zeta0))


def inverse_riemann_map(atlas: FoliationAtlas, x, tol: float = 1e-12, max_iter: int = 30):
    """w with exp(w) = x, by Newton in leaf-chart coordinates. Returns (w, chart, ζ)."""
    x = np.asarray(x, float)
    P = atlas.frame
    w = np.linalg.solve(P, x - atlas.x0)
    if np.linalg.norm(w) == 0:
        raise InverseFailed("x is the center")
    r = np.linalg.norm(w)
    if r >= 1:
        w = w / r * 0.99
    u = w / np.linalg.norm(w)
    zeta = complex(np.linalg.norm(w))
    for it in range(max_iter):
        try:
            chart = LeafChart(atlas, u)
        except (NewtonDiverged, LeftDomain, InterpolationGap) as exc:
            raise InverseFailed(f"leaf solve failed: {exc}") from exc
        xs, D1, _ = chart.jets(zeta, second=False)
        res = x - xs
        if np.linalg.norm(res) < tol:
            wc = zeta * to_complex(u)
            return to_real(wc), chart, zeta
        step = np.linalg.lstsq(D1, res, rcond=None)[0]
        m = chart.m
        u = chart.direction(step[:m])
        zeta = zeta + complex(step[m], step[m + 1])
        if abs(zeta) >= 1:
            zeta = zeta / abs(zeta) * 0.999
    raise InverseFailed(f"inverse map did not converge (|residual| = {np.linalg.norm(res):.2e})")


def exhaustion_eval(atlas: FoliationAtlas, x) -> dict:
    """u(x) = log|exp⁻¹(x)| and the subharmonicity defect of u at x."""
    x = np.asarray(x, float)
    if np.linalg.norm(x - atlas.x0) == 0:
        raise InverseFailed("u is -inf at the center")
    w, chart, zeta = inverse_riemann_map(atlas, x)
    out = chart.exhaustion(zeta)
    out["w"] = w
    return out


# --------------------------------------------------------------------------- conical atlas

@dataclass
class ConicalSpec:
    vertex: np.ndarray
    a: float
    normal: np.ndarray | None = None

    def __post_init__(self):
        if not self.a > 0:
            raise OpenCaseRefused("cone level a must be > 0; the a = 0 case is not handled")
        self.vertex = np.asarray(self.vertex, float)


def cone_directions(domain: Domain, J: AlmostComplexStructure, spec: ConicalSpec,
                    levels: int = 2, ring: int = 4) -> np.ndarray:
    """Unit vectors v = cos β ν̃ + sin β ω with ⟨v, ν⟩ > a and dρ(J v) = 0."""
    x0 = spec.vertex
    nu = domain.outward_normal(x0) if spec.normal is None else np.asarray(spec.normal, float)
    g = J(x0).T @ domain.grad(x0)
    g = g / np.linalg.norm(g)
    nt = nu - (nu @ g) * g
    nt /= np.linalg.norm(nt)
    c = nt @ nu
    if c <= spec.a:
        raise ConeViolation("the admissible hyperplane misses the cone")
    beta_max = np.arccos(spec.a / c)
    d = domain.dim
    q, _ = np.linalg.qr(np.column_stack([nt, g, np.eye(d)]))
    W = q[:, 2:d]  # orthonormal basis of H₀ ∩ ν̃^⊥
    out = [nt]
    k = W.shape[1]
    for lev in range(1, levels + 1):
        beta = beta_max * lev / (levels + 1)
        if k == 1:
            omegas = [W[:, 0], -W[:, 0]]
        else:
            omegas = [W @ w for w in _sphere_points(k, ring)]
        for om in omegas:
            out.append(np.cos(beta) * nt + np.sin(beta) * om)
    return dedupe(np.array(out))


def _sphere_points(k, count):
    if k == 2:
        ang = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    rng = np.random.default_rng(0)
    p = rng.normal(size=(count, k))
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def build_conical_foliation(domain: Domain, J: AlmostComplexStructure, spec: ConicalSpec,
                            levels: int = 2, ring: int = 4, opts: SolverOptions | None = None,
                            check_good: bool = True, pairs: int = 50, seed: int = 0,
                            raise_partial: bool = True) -> FoliationAtlas:
    """Boundary-anchored disks with tangency 0 over the cone directions."""
    opts = opts or SolverOptions()
    x0 = domain.check_boundary(spec.vertex, 1e-9)
    nu = domain.outward_normal(x0)
    dirs = cone_directions(domain, J, spec, levels, ring)
    sols, good, failed = [], [], []
    for i, v in enumerate(dirs):
        try:
            sol = solve_stationary_boundary(domain, J, x0, v, nu=0.0, a=spec.a, opts=opts)
        except (NewtonDiverged, LeftDomain) as exc:
            log.warning("cone direction %d failed: %s", i, exc)
            sols.append(None)
            good.append(False)
            failed.append(i)
            continue
        sols.append(sol)
        good.append(bool(good_boundary_test(sol, domain, J).invertible) if check_good else True)
    atlas = FoliationAtlas("vertex", domain, J, x0, dirs, sols, np.eye(domain.dim), opts,
                           a=spec.a, normal=nu, good=good, failed=failed)
    atlas.stats.update(conical_checks(atlas, pairs=pairs, seed=seed))
    if failed and raise_partial:
        raise PartialAtlas(f"{len(failed)} cone directions failed", atlas, failed)
    return atlas


def conical_checks(atlas: FoliationAtlas, pairs: int = 50, seed: int = 0, sep: float = 0.2) -> dict:
    """Tangency, anchoring and cone membership per disk, plus an injectivity spot check."""
    rng = np.random.default_rng(seed)
    tang, anchor, cone = [], [], []
    for _, sol in atlas.solved():
        tang.append(abs(tangency_parameter(sol, atlas.J)))
        anchor.append(float(np.abs(to_real(sol.base_boundary()[0]) - atlas.x0).max()))
        cone.append(float(sol.velocity_at_one() @ atlas.normal))
    solved = atlas.solved()
    min_gap = np.inf
    jac_min = np.inf
    if len(solved) >= 2:
        for _ in range(pairs):
            i, j = rng.choice(len(solved), size=2, replace=False)
            zi, zj = [_away_from_one(rng, sep) for _ in range(2)]
            pi = solved[i][1].evaluate(np.array(zi))
            pj = solved[j][1].evaluate(np.array(zj))
            min_gap = min(min_gap, float(np.linalg.norm(to_real(pi) - to_real(pj))))
    return {"max_abs_tangency": float(max(tang)) if tang else None,
            "max_anchor_error": float(max(anchor)) if anchor else None,
            "min_normal_velocity": float(min(cone)) if cone else None,
            "injectivity_min_gap": float(min_gap) if np.isfinite(min_gap) else None,
            "injectivity_pairs": int(pairs)}


def _away_from_one(rng, sep):
    while True:
        r = np.sqrt(rng.uniform(0.05, 0.9))
        z = r * np.exp(1j * rng.uniform(0, 2 * np.pi))
        if abs(z - 1) > sep:
            return z


def center_disjointness(atlas: FoliationAtlas, pairs: int = 50, seed: int = 0, rmin: float = 0.2) -> float:
    """Min distance between image points of distinct leaves (parameters away from 0)."""
    rng = np.random.default_rng(seed)
    solved = atlas.solved()
    best = np.inf
    for _ in range(pairs):
        i, j = rng.choice(len(solved), size=2, replace=False)
        ui, uj = atlas.directions[solved[i][0]], atlas.directions[solved[j][0]]
        if abs(to_complex(ui).conj() @ to_complex(uj)) > 1 - 1e-9:
            continue  # same complex line: same leaf up to rotation
        zi = np.sqrt(rng.uniform(rmin ** 2, 0.8)) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        zj = np.sqrt(rng.uniform(rmin ** 2, 0.8)) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        pi = to_real(solved[i][1].evaluate(np.array(zi)))
        pj = to_real(solved[j][1].evaluate(np.array(zj)))
        best = min(best, float(np.linalg.norm(pi - pj)))
    return best


# --------------------------------------------------------------------------- estimators


def _structure_from(spec, n):
    from .geometry import DeformationPath, generator_from_id, standard_structure

    if spec is None or spec == "standard" or spec.get("kind", "standard") == "standard":
        return standard_structure(n), None
    gen = generator_from_id(spec.get("generator", "random-affine"), n, int(spec.get("seed", 0)),
                            float(spec.get("scale", 1.0)))
    path = DeformationPath(gen, n)
    return path.at(float(spec.get("t", 0.0))), path


class CircularFoliation(BaseEstimator, TransformerMixin):
    """Circular-type foliation through an interior center.

    ``fit`` builds the atlas; ``transform`` is the generalized Riemann map
    (unit ball → domain), ``inverse_transform`` its inverse, and
    ``score_samples`` the log exhaustion u.
    """

    def __init__(self, domain=None, structure="standard", center=None, resolution=(2, 4),
                 N=64, M=16, continuation_steps=1):
        self.domain = domain
        self.structure = structure
        self.center = center
        self.resolution = resolution
        self.N = N
        self.M = M
        self.continuation_steps = continuation_steps

    def _domain(self):
        from .geometry import Ball, domain_from_dict

        if self.domain is None:
            return Ball(2)
        return self.domain if isinstance(self.domain, Domain) else domain_from_dict(self.domain)

    def fit(self, X=None, y=None):
        dom = self._domain()
        center = np.zeros(dom.dim) if self.center is None else np.asarray(self.center, float)
        directions = None
        if X is not None:
            directions = check_array(X, ensure_min_samples=1)
            if directions.shape[1] != dom.dim:
                raise ValueError(f"directions must have {dom.dim} columns")
        J, path = _structure_from(self.structure, dom.n)
        opts = SolverOptions(N=self.N, M=self.M)
        if path is None:
            atlas = build_center_foliation(dom, J, center, directions, tuple(self.resolution), opts)
        else:
            from .geometry import standard_structure

            base = build_center_foliation(dom, standard_structure(dom.n), center, directions,
                                          tuple(self.resolution), opts, check_good=False)
            atlas = continue_atlas(base, path, float(self.structure.get("t", 0.0)),
                                   steps=self.continuation_steps)
        self.atlas_ = atlas
        self.n_features_in_ = dom.dim
        return self

    def transform(self, X):
        check_is_fitted(self, "atlas_")
        X = check_array(X)
        norms = np.linalg.norm(X, axis=1)
        if np.any(norms > 1 + 1e-12):
            raise ValueError("points must lie in the closed unit ball")
        return np.array([riemann_map_eval(self.atlas_, w) for w in X])

    def inverse_transform(self, X):
        check_is_fitted(self, "atlas_")
        X = check_array(X)
        return np.array([inverse_riemann_map(self.atlas_, x)[0] for x in X])

    def score_samples(self, X):
        check_is_fitted(self, "atlas_")
        X = check_array(X)
        return np.array([exhaustion_eval(self.atlas_, x)["u"] for x in X])


class ConicalFoliation(BaseEstimator, TransformerMixin):
    """Conical foliation from a boundary vertex.

    ``transform`` maps rows (v, Re ζ, Im ζ) to the point F^{(v)}(ζ) of the
    tangency-zero disk with F(1) = vertex and F_x(1) = v.
    """

    def __init__(self, domain=None, structure="standard", vertex=None, a=0.5, levels=2, ring=4,
                 N=64, M=16):
        self.domain = domain
        self.structure = structure
        self.vertex = vertex
        self.a = a
        self.levels = levels
        self.ring = ring
        self.N = N
        self.M = M

    def fit(self, X=None, y=None):
        from .geometry import Ball, domain_from_dict

        dom = Ball(2) if self.domain is None else (
            self.domain if isinstance(self.domain, Domain) else domain_from_dict(self.domain))
        vertex = np.eye(dom.dim)[0] if self.vertex is None else np.asarray(self.vertex, float)
        J, _ = _structure_from(self.structure, dom.n)
        spec = ConicalSpec(vertex, float(self.a))
        self.atlas_ = build_conical_foliation(dom, J, spec, self.levels, self.ring,
                                              SolverOptions(N=self.N, M=self.M))
        self.n_features_in_ = dom.dim + 2
        return self

    def transform(self, X):
        check_is_fitted(self, "atlas_")
        X = check_array(X)
        atlas = self.atlas_
        d = atlas.domain.dim
        if X.shape[1] != d + 2:
            raise ValueError(f"rows must be (v in R^{d}, Re ζ, Im ζ)")
        out = []
        for row in X:
            v, z = row[:d], complex(row[d], row[d + 1])
            sol = solve_stationary_boundary(atlas.domain, atlas.J, atlas.x0, v, nu=0.0, a=atlas.a,
                                            opts=atlas.opts)
            out.append(to_real(sol.evaluate(np.array(z))))
        return np.array(out)

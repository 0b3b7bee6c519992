"""P1 finite elements on SurfaceModel meshes: Laplace solves, DN assembly,
harmonic 1-forms normal to the boundary, periods and capacities."""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .circle import TWO_PI, BoundaryFunction, BoundaryOperator, hilbert_from_dn, mode_numbers
from .errors import DegenerateBasis, NotMeanZero, ResolutionError, SolverError
from .mesh import SurfaceModel, build_annulus_mesh

RESIDUAL_TOL = 1e-10
MIN_POINTS_PER_WAVELENGTH = 8

# Number of sparse factorizations performed in this process; lets callers
# check that cached runs do no finite-element work.
FACTORIZATIONS = 0


def gradient_operators(points, triangles):
    """Per-triangle barycentric gradients (nt, 2, 3) and areas (nt,)."""
    p = points[triangles]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    inv = np.linalg.inv(jac)  # rows: grad(lambda_1), grad(lambda_2)
    g12 = inv.transpose(0, 2, 1)
    g0 = -g12.sum(axis=2, keepdims=True)
    grads = np.concatenate([g0, g12], axis=2)
    areas = 0.5 * np.abs(np.linalg.det(jac))
    return grads, areas


class Laplacian:
    """Stiffness matrix of a surface and a factorization of its free block.

    Fixed dofs are the boundary loop plus ``extra_fixed``; on a closed
    surface the first dof is pinned instead, which fixes the additive
    constant.  The factorization is only used for back-substitution, so a
    Laplacian may be shared by sequential callers but is not meant to be
    shared across processes.
    """

    def __init__(self, surface, extra_fixed=()):
        self.surface = surface
        self.grads, self.areas = gradient_operators(surface.points, surface.triangles)
        self.local = np.einsum("t,tki,tkj->tij", self.areas, self.grads, self.grads)
        tdof = surface.dof[surface.triangles]
        rows = np.repeat(tdof, 3, axis=1).ravel()
        cols = np.tile(tdof, (1, 3)).ravel()
        n = surface.ndof
        self.K = sp.csr_matrix((self.local.ravel(), (rows, cols)), shape=(n, n))
        fixed = np.concatenate([surface.boundary_dofs, surface.dof[np.asarray(extra_fixed, dtype=np.int64)]])
        if len(fixed) == 0:
            fixed = np.array([0])
        mask = np.ones(n, dtype=bool)
        mask[fixed] = False
        self.free = np.flatnonzero(mask)
        self.K_ff = self.K[self.free][:, self.free].tocsc()
        self.K_fb = self.K[self.free][:, surface.boundary_dofs].tocsc()
        self._norm = float(abs(self.K_ff).sum(axis=0).max())
        global FACTORIZATIONS
        FACTORIZATIONS += 1
        try:
            self._lu = splu(self.K_ff)
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc

    def solve_free(self, rhs):
        """Solve K_ff x = rhs for real right-hand sides (vector or columns)."""
        rhs = np.asarray(rhs, dtype=float)
        x = self._lu.solve(rhs)
        res = self.K_ff @ x - rhs
        scale = max(float(np.max(np.abs(rhs), initial=0.0)), 1e-300)
        if not np.all(np.isfinite(x)) or float(np.max(np.abs(res), initial=0.0)) > RESIDUAL_TOL * scale * max(1.0, self._norm):
            raise SolverError("linear solve residual above tolerance")
        return x

    def dirichlet(self, g):
        """Discrete harmonic function equal to g on the boundary loop and 0
        on the other fixed dofs."""
        u = np.zeros((self.surface.ndof,) + g.shape[1:])
        u[self.surface.boundary_dofs] = g
        u[self.free] = self.solve_free(-(self.K_fb @ g))
        return u

    def raw_load(self, raw_values):
        """Assembled sum_T K_T v_T at the dofs for a raw-vertex field v."""
        tri = self.surface.triangles
        local = np.einsum("tij,tj->ti", self.local, raw_values[tri])
        out = np.zeros(self.surface.ndof)
        np.add.at(out, self.surface.dof[tri].ravel(), local.ravel())
        return out


_LAPLACIANS: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def laplacian(surface):
    lap = _LAPLACIANS.get(surface)
    if lap is None:
        lap = Laplacian(surface)
        _LAPLACIANS[surface] = lap
    return lap


def solve_dirichlet(surface, g):
    """Harmonic extension of boundary values ``g`` (one per boundary vertex,
    in loop order).  Returns the solution at every dof."""
    g = np.asarray(g)
    if g.shape[0] != len(surface.boundary):
        raise ValueError(f"expected {len(surface.boundary)} boundary values, got {g.shape[0]}")
    if np.iscomplexobj(g):
        return solve_dirichlet(surface, g.real) + 1j * solve_dirichlet(surface, g.imag)
    return laplacian(surface).dirichlet(g.astype(float))


def dirichlet_energy(surface, u):
    return float(np.real(np.vdot(u, laplacian(surface).K @ u)))


def fourier_matrix(phi, N):
    """V[i, k] = exp(i k phi_i) for k = -N..N."""
    return np.exp(1j * np.outer(phi, mode_numbers(N)))


def flux_to_fourier(phi, flux, N):
    """Fourier coefficients of a boundary density known through its weak
    moments against the nodal hat functions."""
    return fourier_matrix(phi, N).conj().T @ flux / TWO_PI


def _dn_matrix(lap, surface, N):
    V = fourier_matrix(surface.phi, N)
    m = 2 * N + 1
    u = lap.dirichlet(np.concatenate([V.real, V.imag], axis=1))
    flux = lap.K[surface.boundary_dofs] @ u
    return V.conj().T @ (flux[:, :m] + 1j * flux[:, m:]) / TWO_PI


def annulus_dn_exact(N, log_ratio):
    """DN symbol of the round annulus with the outer circle grounded,
    seen from the inner circle rescaled to length 2*pi."""
    k = np.abs(mode_numbers(N)).astype(float)
    out = np.empty_like(k)
    nz = k > 0
    out[nz] = k[nz] / np.tanh(k[nz] * log_ratio)
    out[~nz] = 1.0 / log_ratio
    return out


def boundary_layer_factors(surface, N):
    """Per-mode correction factors exact/FEM for the boundary-layer mesh.

    The reference is the round annulus that shares the hole circle, the
    angles, the number of rings and the log-radial step with ``surface``;
    near the hole the two meshes coincide, so the ratio captures the P1
    dispersion of the high boundary modes.
    """
    c = surface.center
    n = len(surface.boundary)
    layers = len(surface.points) // n - 1
    z_out = surface.points[surface.outer] @ np.array([1.0, 1j])
    log_ratio = float(np.mean(np.log(np.abs(z_out - c)))) - math.log(surface.eps)
    theta0 = float(np.angle(surface.points[0] @ np.array([1.0, 1j]) - c))
    theta = theta0 + TWO_PI * np.arange(n) / n
    ref, _, outer_idx = build_annulus_mesh(surface.eps, c + surface.eps * math.exp(log_ratio) * np.exp(1j * theta), c, layers)
    lap = Laplacian(ref, extra_fixed=outer_idx)
    fem_diag = np.real(np.diag(_dn_matrix(lap, ref, N)))
    factors = annulus_dn_exact(N, log_ratio) / fem_diag
    factors[N] = 1.0
    return factors


def assemble_dn(surface, N, calibrate=False):
    """DN matrix of the surface in the Fourier basis on its boundary loop.

    Entry (j, k) is ``(1/2pi) * int grad u_k . conj(grad u_j)`` with u_k the
    discrete harmonic extension of exp(i k phi).  The Dirichlet energy is
    conformally invariant, so this is the DN map for the boundary metric in
    which the loop has length 2*pi.  With ``calibrate`` the result is
    rescaled by ``boundary_layer_factors`` as D^(1/2) Lambda D^(1/2).
    """
    nb = len(surface.boundary)
    if nb < MIN_POINTS_PER_WAVELENGTH * N:
        raise ResolutionError(f"{nb} boundary vertices cannot resolve mode {N} (need {MIN_POINTS_PER_WAVELENGTH * N})")
    raw = _dn_matrix(laplacian(surface), surface, N)
    herm_defect = float(np.linalg.norm(raw - raw.conj().T) / max(np.linalg.norm(raw), 1e-300))
    mat = 0.5 * (raw + raw.conj().T)
    meta = {"hermitian_defect_raw": herm_defect, "n_boundary": nb, "calibrated": bool(calibrate)}
    if calibrate:
        d = np.sqrt(boundary_layer_factors(surface, N))
        mat = d[:, None] * mat * d[None, :]
    return BoundaryOperator(mat, N, "dn", meta)


@dataclass(frozen=True, eq=False)
class DiscreteForm:
    """Piecewise-constant real 1-form, one vector per triangle.

    Closed forms built from a multivalued potential keep it in ``potential``
    (values on raw vertices), which makes line integrals along mesh edges
    exact.
    """

    surface: SurfaceModel
    vectors: np.ndarray
    potential: np.ndarray | None = None

    @classmethod
    def from_potential(cls, surface, raw_values):
        grads = laplacian(surface).grads
        vec = np.einsum("tki,ti->tk", grads, raw_values[surface.triangles])
        return cls(surface, vec, np.asarray(raw_values, dtype=float))

    def star(self):
        """Hodge star: rotate every vector by +90 degrees, so *dx = dy."""
        v = self.vectors
        return DiscreteForm(self.surface, np.stack([-v[:, 1], v[:, 0]], axis=1))

    def __add__(self, other):
        pot = None
        if self.potential is not None and other.potential is not None:
            pot = self.potential + other.potential
        return DiscreteForm(self.surface, self.vectors + other.vectors, pot)

    def __mul__(self, c):
        pot = None if self.potential is None else c * self.potential
        return DiscreteForm(self.surface, c * self.vectors, pot)

    __rmul__ = __mul__

    def inner(self, other):
        areas = laplacian(self.surface).areas
        return float(np.sum(areas * np.einsum("tk,tk->t", self.vectors, other.vectors)))

    def norm2(self):
        return self.inner(self)

    def wedge(self, other):
        """int_M self ^ other."""
        areas = laplacian(self.surface).areas
        v, w = self.vectors, other.vectors
        return float(np.sum(areas * (v[:, 0] * w[:, 1] - v[:, 1] * w[:, 0])))

    def circulation_defect(self):
        """Largest jump of tangential line integrals across interior edges.

        Zero (up to rounding) for closed forms; the edge-wise analogue of
        summing an edge cochain around a triangle.
        """
        pts = self.surface.points
        worst = 0.0
        for tris, (p, q) in edge_triangles(self.surface).values():
            if len(tris) == 2:
                d = pts[q] - pts[p]
                worst = max(worst, abs(float((self.vectors[tris[0]] - self.vectors[tris[1]]) @ d)))
        return worst

    def boundary_tangential(self):
        """Line integrals along each boundary edge, in loop order."""
        b = self.surface.boundary
        return np.array([_edge_integral(self, int(i), int(j)) for i, j in zip(b, np.roll(b, -1))])


_EDGE_TABLES: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def edge_triangles(surface):
    """Map sorted dof pairs to (incident triangles, one raw representative)."""
    table = _EDGE_TABLES.get(surface)
    if table is None:
        table = {}
        dof = surface.dof
        for t, tri in enumerate(surface.triangles):
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (int(dof[a]), int(dof[b])) if dof[a] < dof[b] else (int(dof[b]), int(dof[a]))
                table.setdefault(key, ([], (int(a), int(b))))[0].append(t)
        _EDGE_TABLES[surface] = table
    return table


def _edge_integral(form, p, q):
    s = form.surface
    a, b = int(s.dof[p]), int(s.dof[q])
    tris = edge_triangles(s)[(a, b) if a < b else (b, a)][0]
    v = form.vectors[tris].mean(axis=0)
    return float(v @ (s.points[q] - s.points[p]))


def period_integral(surface, form, path, starred=False):
    """Line integral of ``form`` (or of its Hodge star) along cycle a or b.

    Forms with a potential integrate exactly; otherwise each edge uses the
    mean of the vectors of its incident triangles.
    """
    verts = surface.paths[path]
    if not starred and form.potential is not None:
        return float(form.potential[verts[-1]] - form.potential[verts[0]])
    w = form.star() if starred else form
    return float(sum(_edge_integral(w, int(p), int(q)) for p, q in zip(verts[:-1], verts[1:])))


def cut_form_harmonic(surface, indicator):
    """Minimize ||d(indicator) + dU||^2 over U vanishing on the boundary loop.

    The minimizer is closed, discretely co-closed, and has zero tangential
    trace on the loop since both the indicator and U vanish there.
    """
    lap = laplacian(surface)
    load = lap.raw_load(indicator)
    U = np.zeros(surface.ndof)
    U[lap.free] = lap.solve_free(-load[lap.free])
    return DiscreteForm.from_potential(surface, indicator + U[surface.dof])


def harmonic_form_basis(surface, max_condition=1e8):
    """Harmonic 1-forms normal to the boundary, dual to the cycles a+, b+."""
    raw = [cut_form_harmonic(surface, surface.cut[name]) for name in ("a", "b")]
    P = np.array([[period_integral(surface, f, path) for f in raw] for path in ("a", "b")])
    cond = np.linalg.cond(P)
    if not np.isfinite(cond) or cond > max_condition:
        raise DegenerateBasis(f"period matrix of the raw forms is singular (cond {cond:.3e})")
    C = np.linalg.inv(P)
    ua = C[0, 0] * raw[0] + C[1, 0] * raw[1]
    ub = C[0, 1] * raw[0] + C[1, 1] * raw[1]
    return ua, ub


def form_boundary_trace(form, N):
    """Fourier coefficients of the normal component form(nu) on the loop.

    nu is the outward normal of the surface in the boundary metric of length
    2*pi.  Computed weakly from the assembled load of the form's potential,
    the same way assemble_dn computes fluxes.
    """
    s = form.surface
    if form.potential is None:
        raise ValueError("boundary trace needs a form with a potential")
    load = laplacian(s).raw_load(form.potential)
    return BoundaryFunction(flux_to_fourier(s.phi, load[s.boundary_dofs], N), N)


def riemann_bilinear(surface, zeta, eta):
    """Both sides of int zeta^eta = A(zeta)B(eta) - B(zeta)A(eta)."""
    per = lambda f, c: period_integral(surface, f, c)  # noqa: E731
    lhs = zeta.wedge(eta)
    rhs = per(zeta, "a") * per(eta, "b") - per(zeta, "b") * per(eta, "a")
    return lhs, rhs


@dataclass(frozen=True)
class HodgeSplit:
    h: BoundaryFunction
    trace: BoundaryFunction
    span_residual: float


def hodge_decompose(dn, f, spectral=None):
    """Boundary data of ``*du^f = du^h - *v``.

    Returns h = Hf, the normal trace v(nu) = -Lambda (H^2 + I) f, and the
    relative distance of that trace from span{Lambda eta, Lambda conj(eta)}
    (0 when the trace vanishes, 1 when no eigenfunction is available).
    """
    if not f.is_mean_zero():
        raise NotMeanZero(f"f has mean {abs(f.mean):.3e}")
    H = hilbert_from_dn(dn).matrix
    x = f.coefficients
    h = H @ x
    trace = -dn.matrix @ (H @ h + x)
    tnorm = float(np.linalg.norm(trace))
    if tnorm <= 1e-12 * max(float(np.linalg.norm(dn.matrix @ x)), 1.0):
        resid = 0.0
    elif spectral is None or spectral.eta is None:
        resid = 1.0
    else:
        eta = spectral.eta
        basis = np.stack([dn.matrix @ eta.coefficients, dn.matrix @ eta.conj().coefficients], axis=1)
        coef, *_ = np.linalg.lstsq(basis, trace, rcond=None)
        resid = float(np.linalg.norm(basis @ coef - trace) / tnorm)
    return HodgeSplit(BoundaryFunction(h, f.N), BoundaryFunction(trace, f.N), resid)


def capacity(surface, inner, outer):
    """Dirichlet energy of the discrete harmonic u with u = 0 on the raw
    vertices ``inner`` and u = 1 on ``outer``, ignoring any gluing."""
    planar = SurfaceModel(
        points=surface.points,
        triangles=surface.triangles,
        dof=np.arange(len(surface.points), dtype=np.int64),
        boundary=np.asarray(outer, dtype=np.int64),
        phi=np.zeros(len(outer)),
    )
    lap = Laplacian(planar, extra_fixed=np.asarray(inner, dtype=np.int64))
    u = lap.dirichlet(np.ones(len(outer)))
    return float(u @ (lap.K @ u))


def annulus_modulus(surface, inner, outer):
    """Conformal modulus 1/capacity of an annular region of a mesh."""
    return 1.0 / capacity(surface, inner, outer)


def round_annulus_modulus(r_in, r_out=1.0, n=256):
    surf, inner, outer = build_annulus_mesh(r_in, r_out * np.exp(1j * TWO_PI * np.arange(n) / n))
    return annulus_modulus(surf, inner, outer)


def doubled_collar_modulus(surface):
    """Modulus of the collar around the hole in the Schottky double.

    The open region between the hole circle and the sides of the
    fundamental parallelogram is an annulus embedded in M.  Gluing it to its
    mirror image along the hole gives an annulus whose capacity potential is
    1/2 on the hole, so its modulus is twice the one-sided one.
    """
    return 2.0 * annulus_modulus(surface, surface.boundary, surface.outer)


def refinement_order(errors, hs):
    """Least-squares slope of log(error) against log(h)."""
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])

"""Triangulations of the flat torus with a round hole, and planar helpers.

The torus is C / (Z + tau Z).  Meshes are stored "raw": vertices live in the
closed fundamental parallelogram with corners 0, 1, 1+tau, tau, so vertices
on opposite sides appear twice.  ``dof`` maps every raw vertex to its class
under the lattice gluing; finite element unknowns are indexed by ``dof``.
Triangles always use raw coordinates, which makes per-triangle geometry
single valued without lattice offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from .errors import GeometryError, MeshError

TWO_PI = 2.0 * math.pi

# Fraction of the parallelogram inradius the hole may occupy.
HOLE_FILL_LIMIT = 0.8


@dataclass(frozen=True, eq=False)
class SurfaceModel:
    """A triangulated surface with at most one boundary circle.

    ``tau`` is None for planar meshes (disks, annuli).  ``boundary`` lists raw
    vertex indices of the boundary loop in the order of increasing ``phi``,
    the angle parameter running along the boundary with the surface on its
    left.  ``paths`` holds the raw vertex sequences of the cycles a+ and b+,
    ``cut`` the 0/1 raw-vertex indicators whose differentials are the
    cohomology generators dual to them.
    """

    points: np.ndarray
    triangles: np.ndarray
    dof: np.ndarray
    boundary: np.ndarray
    phi: np.ndarray
    tau: complex | None = None
    eps: float = 0.0
    center: complex = 0j
    h_target: float = 0.0
    paths: dict = field(default_factory=dict)
    cut: dict = field(default_factory=dict)
    outer: np.ndarray | None = None

    @property
    def ndof(self):
        return int(self.dof.max()) + 1

    @property
    def n_boundary(self):
        return len(self.boundary)

    @property
    def boundary_dofs(self):
        return self.dof[self.boundary]

    def dof_edges(self):
        """Unique undirected edges of the glued mesh as sorted dof pairs."""
        t = self.dof[self.triangles]
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def euler_characteristic(self, closed_up=False):
        """V - E + F of the glued mesh; ``closed_up`` caps the hole with a disk."""
        chi = self.ndof - len(self.dof_edges()) + len(self.triangles)
        if closed_up and len(self.boundary):
            chi += 1
        return int(chi)

    def triangle_areas(self):
        p = self.points[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def save(self, path):
        """Write the mesh text format (v/t/p/b/c lines plus an ``m`` header)."""
        tau = self.tau if self.tau is not None else complex("nan")
        c = self.center
        head = (tau.real, tau.imag, self.eps, self.h_target, c.real, c.imag)
        lines = ["m " + " ".join(repr(float(x)) for x in head)]
        lines += [f"v {float(x)!r} {float(y)!r}" for x, y in self.points]
        lines += [f"t {i} {j} {k}" for i, j, k in self.triangles]
        for (i, j), (k, l) in identified_edge_pairs(self):
            lines.append(f"p {i}:{j} {k}:{l}")
        lines += [f"b {i} {float(phi)!r}" for i, phi in zip(self.boundary, self.phi)]
        if self.outer is not None:
            lines += [f"o {i}" for i in self.outer]
        for name, path_ in self.paths.items():
            lines += [f"c {name} {i}" for i in path_]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        pts, tris, pairs, bnd, phi, outer = [], [], [], [], [], []
        paths = {}
        header = None
        for line in Path(path).read_text().splitlines():
            tok = line.split()
            if not tok:
                continue
            tag = tok[0]
            if tag == "m":
                header = [float(x) for x in tok[1:]]
            elif tag == "v":
                pts.append((float(tok[1]), float(tok[2])))
            elif tag == "t":
                tris.append(tuple(int(x) for x in tok[1:4]))
            elif tag == "p":
                e1 = tuple(int(x) for x in tok[1].split(":"))
                e2 = tuple(int(x) for x in tok[2].split(":"))
                pairs.append((e1, e2))
            elif tag == "b":
                bnd.append(int(tok[1]))
                phi.append(float(tok[2]))
            elif tag == "o":
                outer.append(int(tok[1]))
            elif tag == "c":
                paths.setdefault(tok[1], []).append(int(tok[2]))
            else:
                raise MeshError(f"unknown mesh line tag {tag!r}")
        points = np.array(pts, dtype=float)
        dof = _glue(len(points), pairs)
        tau = complex(header[0], header[1]) if header and not math.isnan(header[0]) else None
        eps, h_target = (header[2], header[3]) if header else (0.0, 0.0)
        center = complex(header[4], header[5]) if header else 0j
        cut = _cut_indicators(points, tau) if tau is not None else {}
        return cls(
            points=points,
            triangles=np.array(tris, dtype=np.int64),
            dof=dof,
            boundary=np.array(bnd, dtype=np.int64),
            phi=np.array(phi, dtype=float),
            tau=tau,
            eps=eps,
            center=center,
            h_target=h_target,
            paths={k: np.array(v, dtype=np.int64) for k, v in paths.items()},
            cut=cut,
            outer=np.array(outer, dtype=np.int64) if outer else None,
        )


def _glue(n, pairs):
    """Union-find over raw vertices from glued edge pairs; returns dense dof ids."""
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for (i, j), (k, l) in pairs:
        for a, b in ((i, k), (j, l)):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(n)])
    _, dof = np.unique(roots, return_inverse=True)
    return dof.astype(np.int64)


def identified_edge_pairs(surface):
    """Raw edge pairs (i, j) ~ (k, l) glued by the lattice, i ~ k and j ~ l."""
    if surface.outer is None:
        return []
    ring = surface.outer
    dof = surface.dof
    edges = [(ring[i], ring[(i + 1) % len(ring)]) for i in range(len(ring))]
    by_key = {}
    for i, j in edges:
        by_key.setdefault(frozenset((dof[i], dof[j])), []).append((i, j))
    pairs = []
    for group in by_key.values():
        if len(group) == 2:
            (i, j), (k, l) = group
            if dof[i] != dof[k]:
                k, l = l, k
            pairs.append(((int(i), int(j)), (int(k), int(l))))
    return pairs


def lattice_coordinates(points, tau):
    """Coordinates (s, t) with z = s + t*tau."""
    t = points[:, 1] / tau.imag
    s = points[:, 0] - t * tau.real
    return s, t


def _cut_indicators(points, tau, tol=1e-9):
    s, t = lattice_coordinates(points, tau)
    return {
        "a": (s > 1.0 - tol).astype(float),
        "b": (t > 1.0 - tol).astype(float),
    }


def _lattice_dofs(points, tau):
    s, t = lattice_coordinates(points, tau)
    scale = 10**9
    ks = np.round(s * scale).astype(np.int64) % scale
    kt = np.round(t * scale).astype(np.int64) % scale
    _, dof = np.unique(np.stack([ks, kt], axis=1), axis=0, return_inverse=True)
    return dof.reshape(-1).astype(np.int64)


def parallelogram_inradius(tau):
    """Radius of the largest disk inside the fundamental parallelogram."""
    area = tau.imag
    return 0.5 * min(area / 1.0, area / abs(tau))


def _ogrid(center, r_in, theta, outer, layers, ramp=3):
    """Structured ring mesh between the circle |z - center| = r_in and a
    closed counter-clockwise polyline ``outer`` (one point per angle).

    Rings are spaced uniformly in log-radius.  The deviation of ``outer``
    from a circle is blended in through the weight (l/layers)**ramp, so the
    first rings are exact circles and the cells next to the inner circle
    are the same for every outer contour with the same mean radius.
    """
    n = len(theta)
    outer = np.asarray(outer, dtype=complex) - center
    log_out = np.log(np.abs(outer))
    step = (float(np.mean(log_out)) - math.log(r_in)) / layers
    dang = np.angle(np.exp(1j * (np.angle(outer) - theta)))
    l = np.arange(layers + 1)[:, None]
    w = (l / layers) ** ramp
    log_r = math.log(r_in) + l * step + w * (log_out[None, :] - math.log(r_in) - layers * step)
    ang = theta[None, :] + w * dang[None, :]
    ring = center + np.exp(log_r + 1j * ang)
    ring[-1] = center + outer
    ring[0] = center + r_in * np.exp(1j * theta)
    pts = np.stack([ring.real.ravel(), ring.imag.ravel()], axis=1)
    idx = np.arange((layers + 1) * n).reshape(layers + 1, n)
    tris = []
    for li in range(layers):
        for j in range(n):
            jn = (j + 1) % n
            p00, p10, p11, p01 = idx[li, j], idx[li, jn], idx[li + 1, jn], idx[li + 1, j]
            if (li + j) % 2 == 0:
                tris += [(p00, p11, p10), (p00, p01, p11)]
            else:
                tris += [(p00, p01, p10), (p10, p01, p11)]
    return pts, np.array(tris, dtype=np.int64), idx


def _layers_for(n, ratio):
    return max(2, int(math.ceil(n / TWO_PI * math.log(ratio))))


def _round_up(n, mult):
    return int(mult * math.ceil(n / mult))


def build_mesh(tau, eps, h_target, n_boundary=None):
    """Mesh the flat torus C/(Z + tau Z) minus the disk |z - c| <= eps.

    The hole sits at the center c = (1+tau)/2 of the fundamental
    parallelogram; an O-grid with geometric grading joins the hole circle to
    the parallelogram sides.  The number of boundary segments is at least
    ``max(64, 8*pi*eps/h_target, n_boundary)`` and a multiple of 4.  That
    count sets the whole O-grid (radial layers included), so ``h_target``
    only acts as a floor: to refine a mesh built with a large
    ``n_boundary``, raise ``n_boundary`` as well.
    """
    tau = complex(tau)
    if tau.imag <= 0:
        raise GeometryError("lattice modulus must have positive imaginary part")
    if h_target <= 0:
        raise GeometryError("h_target must be positive")
    limit = HOLE_FILL_LIMIT * parallelogram_inradius(tau)
    if not 0.0 < eps < limit:
        raise GeometryError(f"hole radius {eps} must lie in (0, {limit:.6g}) for tau={tau}")
    c = 0.5 * (1.0 + tau)
    perimeter = 2.0 * (1.0 + abs(tau))
    n = max(64, math.ceil(8.0 * math.pi * eps / h_target), math.ceil(perimeter / h_target), n_boundary or 0)
    n = _round_up(n, 4)
    q = n // 4
    corners = [0j, 1 + 0j, 1 + tau, tau]
    outer = np.array([corners[s] + (corners[(s + 1) % 4] - corners[s]) * i / q for s in range(4) for i in range(q)])
    theta0 = np.angle(corners[0] - c)
    theta = theta0 + TWO_PI * np.arange(n) / n
    ratio = math.exp(float(np.mean(np.log(np.abs(outer - c))))) / eps
    layers = _layers_for(n, ratio)
    points, triangles, idx = _ogrid(c, eps, theta, outer, layers)

    dof = np.arange(len(points), dtype=np.int64)
    ring = idx[-1]
    outer_dofs = _lattice_dofs(points[ring], tau)
    # interior raw vertices keep unique ids after the glued outer ring
    dof[:] = -1
    dof[ring] = outer_dofs
    n_outer = int(outer_dofs.max()) + 1
    rest = np.setdiff1d(np.arange(len(points)), ring)
    dof[rest] = n_outer + np.arange(len(rest))

    phi = np.mod(-theta, TWO_PI)
    order = np.argsort(phi, kind="stable")
    boundary = idx[0][order]
    phi = phi[order]

    paths = {
        "a": ring[np.arange(0, q + 1)],
        "b": ring[np.concatenate([[0], np.arange(4 * q - 1, 3 * q - 1, -1)])],
    }
    surface = SurfaceModel(
        points=points,
        triangles=triangles,
        dof=_renumber(dof),
        boundary=boundary,
        phi=phi,
        tau=tau,
        eps=float(eps),
        center=c,
        h_target=float(h_target),
        paths=paths,
        cut=_cut_indicators(points, tau),
        outer=ring,
    )
    validate(surface)
    return surface


def _renumber(dof):
    _, out = np.unique(dof, return_inverse=True)
    return out.reshape(-1).astype(np.int64)


def build_closed_torus(tau, h):
    """Structured mesh of the closed flat torus (no hole), for sanity checks."""
    tau = complex(tau)
    if tau.imag <= 0:
        raise GeometryError("lattice modulus must have positive imaginary part")
    ns = max(4, math.ceil(1.0 / h))
    nt = max(4, math.ceil(abs(tau) / h))
    s, t = np.meshgrid(np.arange(ns + 1) / ns, np.arange(nt + 1) / nt, indexing="ij")
    z = (s + t * tau).ravel()
    points = np.stack([z.real, z.imag], axis=1)
    idx = np.arange((ns + 1) * (nt + 1)).reshape(ns + 1, nt + 1)
    tris = []
    for i in range(ns):
        for j in range(nt):
            p00, p10, p11, p01 = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            tris += [(p00, p10, p11), (p00, p11, p01)]
    ring = np.concatenate([idx[:, 0], idx[-1, 1:], idx[-2::-1, -1], idx[0, -2:0:-1]])
    surface = SurfaceModel(
        points=points,
        triangles=np.array(tris, dtype=np.int64),
        dof=_lattice_dofs(points, tau),
        boundary=np.zeros(0, dtype=np.int64),
        phi=np.zeros(0),
        tau=tau,
        h_target=float(h),
        paths={"a": idx[:, 0], "b": idx[0, :]},
        cut=_cut_indicators(points, tau),
        outer=ring,
    )
    validate(surface)
    return surface


def build_disk_mesh(h, radius=1.0):
    """Delaunay mesh of the disk |z| <= radius from concentric point rings."""
    L = max(2, math.ceil(radius / h))
    pts = [np.zeros((1, 2))]
    for l in range(1, L + 1):
        r = radius * l / L
        m = max(6, int(round(TWO_PI * r / h)))
        a = TWO_PI * (np.arange(m) + 0.5 * (l % 2)) / m
        pts.append(np.stack([r * np.cos(a), r * np.sin(a)], axis=1))
    points = np.concatenate(pts)
    tri = Delaunay(points).simplices.astype(np.int64)
    tri = _orient_ccw(points, tri)
    m = len(pts[-1])
    bidx = np.arange(len(points) - m, len(points))
    a = TWO_PI * (np.arange(m) + 0.5 * (L % 2)) / m
    phi = np.mod(a, TWO_PI)
    order = np.argsort(phi)
    surface = SurfaceModel(
        points=points,
        triangles=tri,
        dof=np.arange(len(points), dtype=np.int64),
        boundary=bidx[order],
        phi=phi[order],
        h_target=float(h),
    )
    validate(surface)
    return surface


def build_annulus_mesh(r_in, outer, center=0j, layers=None):
    """O-grid mesh between the circle |z - center| = r_in and ``outer``.

    ``outer`` is either a radius or a complex array of points running
    counter-clockwise, one per inner vertex; the inner vertices sit at the
    angles of uniform spacing starting at arg(outer[0] - center).  Returns
    the planar surface plus raw indices of the inner and outer rings.
    """
    if np.isscalar(outer):
        n = 256 if layers is None else max(64, 4 * layers)
        theta = TWO_PI * np.arange(n) / n
        outer = center + float(outer) * np.exp(1j * theta)
    outer = np.asarray(outer, dtype=complex)
    n = len(outer)
    theta = np.angle(outer[0] - center) + TWO_PI * np.arange(n) / n
    ratio = math.exp(float(np.mean(np.log(np.abs(outer - center))))) / r_in
    if ratio <= 1.0:
        raise GeometryError("outer contour must enclose the inner circle")
    if layers is None:
        layers = _layers_for(n, ratio)
    points, triangles, idx = _ogrid(center, r_in, theta, outer, layers)
    phi = np.mod(-theta, TWO_PI)
    order = np.argsort(phi, kind="stable")
    surface = SurfaceModel(
        points=points,
        triangles=triangles,
        dof=np.arange(len(points), dtype=np.int64),
        boundary=idx[0][order],
        phi=phi[order],
        center=complex(center),
        eps=float(r_in),
    )
    if np.any(surface.triangle_areas() <= 0):
        raise MeshError("annulus mesh has inverted triangles")
    return surface, idx[0], idx[-1]


def _orient_ccw(points, tri):
    p = points[tri]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tri = tri.copy()
    tri[neg] = tri[neg][:, [0, 2, 1]]
    return tri


def validate(surface):
    """Check conformity of the glued triangulation; raise MeshError on failure."""
    areas = surface.triangle_areas()
    if np.any(areas <= 0):
        raise MeshError(f"{int(np.sum(areas <= 0))} triangles are degenerate or inverted")
    t = surface.dof[surface.triangles]
    if np.any(t[:, 0] == t[:, 1]) or np.any(t[:, 1] == t[:, 2]) or np.any(t[:, 0] == t[:, 2]):
        raise MeshError("gluing collapses a triangle")
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    edges, counts = np.unique(e, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("an edge has more than two incident triangles")
    free = {tuple(x) for x in edges[counts == 1]}
    bd = surface.boundary_dofs
    loop = set()
    if len(bd):
        for i in range(len(bd)):
            a, b = sorted((int(bd[i]), int(bd[(i + 1) % len(bd)])))
            loop.add((a, b))
    if free != loop:
        raise MeshError(f"free edges ({len(free)}) do not match the boundary loop ({len(loop)})")
    if len(surface.phi) and np.any(np.diff(surface.phi) <= 0):
        raise MeshError("boundary angles must increase strictly")
    for name, path in surface.paths.items():
        if surface.dof[path[0]] != surface.dof[path[-1]]:
            raise MeshError(f"cycle {name} is not closed after gluing")
        if len(bd) and np.isin(surface.dof[path], bd).any():
            raise MeshError(f"cycle {name} touches the hole")

"""Adaptive bulk triangulation of the rectangular flow domain.

The mesh is rebuilt each time step from a cached coarse base grid by
newest-vertex bisection: triangles whose closure intersects the
interface polygon, plus one layer of vertex neighbours, are bisected
until their diameter drops below the fine mesh size, and the conformity
closure grades the mesh back to the coarse size away from the front.
Triangles are stored as ``(peak, a, b)`` with refinement edge ``(a, b)``
opposite the peak; all triangles are counter-clockwise.

Meshes are immutable snapshots: adaptation and the field transfers
return new objects and never mutate their inputs.
"""

from dataclasses import dataclass

import numpy as np

from surfacttrack import fem
from surfacttrack.geometry import points_in_polygon

INTERIOR, INTERFACIAL, EXTERIOR = 0, 1, 2
SIDES = ("left", "right", "bottom", "top")

_BASE_CACHE = {}


@dataclass(frozen=True)
class AdaptConfig:
    """Fine/coarse banding parameters, ``N_f = 2^k`` and ``N_c = 2^l``."""

    nf: int
    nc: int
    domain: tuple  # (x0, x1, y0, y1)
    buffer_layers: int = 1

    def __post_init__(self):
        if self.nc < 1 or self.nf <= self.nc:
            raise ValueError("need N_f > N_c >= 1")
        for n in (self.nf, self.nc):
            if n & (n - 1):
                raise ValueError("N_f and N_c must be powers of two")
        x0, x1, y0, y1 = self.domain
        if x1 <= x0 or y1 <= y0:
            raise ValueError("empty domain")

    @classmethod
    def from_levels(cls, k, l, domain):
        return cls(nf=2 ** k, nc=2 ** l, domain=domain)

    @property
    def half_extents(self):
        x0, x1, y0, y1 = self.domain
        return 0.5 * (x1 - x0), 0.5 * (y1 - y0)

    @property
    def h_fine(self):
        h1, h2 = self.half_extents
        return 2.0 * min(h1, h2) / self.nf

    @property
    def h_coarse(self):
        h1, h2 = self.half_extents
        return 2.0 * min(h1, h2) / self.nc

    @property
    def fine_level(self):
        # bisection generations needed for diameter <= h_fine, starting
        # from coarse squares split along the diagonal
        k = round(np.log2(self.nf))
        l = round(np.log2(self.nc))
        return 2 * (k - l) + 1


@dataclass
class PhaseFields:
    """Per-triangle density and viscosity."""

    rho: np.ndarray
    mu: np.ndarray


def _base_arrays(domain, hc):
    key = tuple(round(v, 12) for v in domain) + (round(hc, 12),)
    if key in _BASE_CACHE:
        return _BASE_CACHE[key]
    x0, x1, y0, y1 = domain
    nx = int(round((x1 - x0) / hc))
    ny = int(round((y1 - y0) / hc))
    if abs(nx * hc - (x1 - x0)) > 1e-9 * (x1 - x0) or nx < 1:
        raise ValueError("coarse size does not tile the domain in x")
    if abs(ny * hc - (y1 - y0)) > 1e-9 * (y1 - y0) or ny < 1:
        raise ValueError("coarse size does not tile the domain in y")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    a = vid(i, j)
    b = vid(i + 1, j)
    c = vid(i + 1, j + 1)
    d = vid(i, j + 1)
    # two triangles per square, refinement edge on the diagonal a-c
    t1 = np.column_stack([b, c, a])
    t2 = np.column_stack([d, a, c])
    tris = np.vstack([t1, t2])
    level = np.zeros(len(tris), dtype=np.int32)
    ancestor = np.arange(len(tris), dtype=np.int64)
    _BASE_CACHE[key] = (verts, tris, level, ancestor)
    return _BASE_CACHE[key]


def refine_nvb(verts, tris, level, ancestor, marked):
    """Bisect the marked triangles; conformity closure included."""
    nt = len(tris)
    pairs = np.stack([tris[:, [1, 2]], tris[:, [2, 0]], tris[:, [0, 1]]], axis=1)
    key = np.sort(pairs.reshape(-1, 2), axis=1)
    edges, inv = np.unique(key, axis=0, return_inverse=True)
    t2e = inv.reshape(nt, 3)

    emark = np.zeros(len(edges), dtype=bool)
    emark[t2e[marked, 0]] = True
    while True:
        need = emark[t2e].any(axis=1) & ~emark[t2e[:, 0]]
        if not need.any():
            break
        emark[t2e[need, 0]] = True

    mids = np.full(len(edges), -1, dtype=np.int64)
    eidx = np.nonzero(emark)[0]
    mids[eidx] = len(verts) + np.arange(len(eidx))
    newv = 0.5 * (verts[edges[eidx, 0]] + verts[edges[eidx, 1]])
    verts2 = np.vstack([verts, newv])

    p, a, b = tris[:, 0], tris[:, 1], tris[:, 2]
    mr, m1, m2 = mids[t2e[:, 0]], mids[t2e[:, 1]], mids[t2e[:, 2]]
    hr, h1, h2 = emark[t2e[:, 0]], emark[t2e[:, 1]], emark[t2e[:, 2]]

    out_t, out_l, out_a = [], [], []

    def emit(mask, v0, v1, v2, dl):
        out_t.append(np.column_stack([v0[mask], v1[mask], v2[mask]]))
        out_l.append(level[mask] + dl)
        out_a.append(ancestor[mask])

    keep = ~hr
    emit(keep, p, a, b, 0)
    c = hr & ~h1 & ~h2
    emit(c, mr, p, a, 1)
    emit(c, mr, b, p, 1)
    c = hr & h2 & ~h1
    emit(c, m2, mr, p, 2)
    emit(c, m2, a, mr, 2)
    emit(c, mr, b, p, 1)
    c = hr & h1 & ~h2
    emit(c, mr, p, a, 1)
    emit(c, m1, mr, b, 2)
    emit(c, m1, p, mr, 2)
    c = hr & h1 & h2
    emit(c, m2, mr, p, 2)
    emit(c, m2, a, mr, 2)
    emit(c, m1, mr, b, 2)
    emit(c, m1, p, mr, 2)

    tris2 = np.vstack(out_t)
    level2 = np.concatenate(out_l).astype(np.int32)
    anc2 = np.concatenate(out_a)
    return verts2, tris2, level2, anc2


def _triangles_touching(verts, tris, iface):
    """Boolean flag per triangle: closure intersects the interface polygon."""
    tv = verts[tris]
    tmin, tmax = tv.min(axis=1), tv.max(axis=1)
    sa = iface.vertices[iface.segments[:, 0]]
    sb = iface.vertices[iface.segments[:, 1]]
    smin, smax = np.minimum(sa, sb), np.maximum(sa, sb)
    scale = max(tmax.max() - tmin.min(), 1.0)
    eps = 1e-12 * scale
    overlap = (
        (tmin[:, None, 0] <= smax[None, :, 0] + eps)
        & (tmax[:, None, 0] >= smin[None, :, 0] - eps)
        & (tmin[:, None, 1] <= smax[None, :, 1] + eps)
        & (tmax[:, None, 1] >= smin[None, :, 1] - eps)
    )
    ti, sj = np.nonzero(overlap)
    touch = np.zeros(len(tris), dtype=bool)
    if len(ti) == 0:
        return touch

    A = tv[ti]
    p0, p1 = sa[sj], sb[sj]
    eps2 = eps * scale

    def cross(u, v):
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    def inside(pt):
        s0 = cross(A[:, 1] - pt, A[:, 2] - pt)
        s1 = cross(A[:, 2] - pt, A[:, 0] - pt)
        s2 = cross(A[:, 0] - pt, A[:, 1] - pt)
        return (s0 >= -eps2) & (s1 >= -eps2) & (s2 >= -eps2)

    hit = inside(p0) | inside(p1)
    seg = p1 - p0
    for k in range(3):
        e0 = A[:, k]
        e1 = A[:, (k + 1) % 3]
        ed = e1 - e0
        d1 = cross(ed, p0 - e0)
        d2 = cross(ed, p1 - e0)
        d3 = cross(seg, e0 - p0)
        d4 = cross(seg, e1 - p0)
        hit |= (d1 * d2 <= eps2 * eps2) & (d3 * d4 <= eps2 * eps2)
    touch[ti[hit]] = True
    return touch


def _add_vertex_neighbors(tris, nverts, flags, layers):
    out = flags.copy()
    for _ in range(layers):
        vflag = np.zeros(nverts, dtype=bool)
        vflag[tris[out].ravel()] = True
        out = out | vflag[tris].any(axis=1)
    return out


class BulkMesh:
    """Conforming triangulation with P2/P1 bookkeeping and a point locator."""

    def __init__(self, vertices, triangles, domain, level=None, ancestor=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.domain = tuple(float(v) for v in domain)
        nt = len(self.triangles)
        self.level = np.zeros(nt, dtype=np.int32) if level is None else level
        self.ancestor = np.arange(nt) if ancestor is None else ancestor

        tv = self.vertices[self.triangles]
        e1 = tv[:, 1] - tv[:, 0]
        e2 = tv[:, 2] - tv[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(det <= 0.0):
            raise ValueError("triangles must be counter-clockwise with positive area")
        self.areas = 0.5 * det
        # J^{-T}, mapping reference gradients to physical ones
        self.jinv_t = np.empty((nt, 2, 2))
        self.jinv_t[:, 0, 0] = e2[:, 1] / det
        self.jinv_t[:, 0, 1] = -e2[:, 0] / det
        self.jinv_t[:, 1, 0] = -e1[:, 1] / det
        self.jinv_t[:, 1, 1] = e1[:, 0] / det

        pairs = np.stack(
            [self.triangles[:, [1, 2]], self.triangles[:, [2, 0]], self.triangles[:, [0, 1]]],
            axis=1,
        )
        key = np.sort(pairs.reshape(-1, 2), axis=1)
        self.edges, inv, counts = np.unique(
            key, axis=0, return_inverse=True, return_counts=True
        )
        self.tri2edge = inv.reshape(nt, 3)
        self.boundary_edges = np.nonzero(counts == 1)[0]
        self._classify_boundary()

        self.num_vertices = len(self.vertices)
        self.num_edges = len(self.edges)
        self.num_p2 = self.num_vertices + self.num_edges
        self.tri2dof = np.hstack([self.triangles, self.num_vertices + self.tri2edge])
        self._grid = None

    def _classify_boundary(self):
        x0, x1, y0, y1 = self.domain
        tol = 1e-9 * max(x1 - x0, y1 - y0)
        mids = 0.5 * (
            self.vertices[self.edges[self.boundary_edges, 0]]
            + self.vertices[self.edges[self.boundary_edges, 1]]
        )
        side = np.full(len(self.boundary_edges), -1, dtype=np.int8)
        side[np.abs(mids[:, 0] - x0) < tol] = 0
        side[np.abs(mids[:, 0] - x1) < tol] = 1
        side[np.abs(mids[:, 1] - y0) < tol] = 2
        side[np.abs(mids[:, 1] - y1) < tol] = 3
        if np.any(side < 0):
            raise ValueError("boundary edge not on any side of the rectangle")
        self.boundary_side = side

    @property
    def p2_coords(self):
        mids = 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])
        return np.vstack([self.vertices, mids])

    def boundary_p2_nodes(self, side_name):
        """Sorted P2 node ids (vertices and edge midpoints) on one side."""
        s = SIDES.index(side_name)
        eids = self.boundary_edges[self.boundary_side == s]
        vts = np.unique(self.edges[eids].ravel())
        return np.unique(np.concatenate([vts, self.num_vertices + eids]))

    # -- point location -------------------------------------------------

    def _build_grid(self):
        x0, x1, y0, y1 = self.domain
        tv = self.vertices[self.triangles]
        tmin, tmax = tv.min(axis=1), tv.max(axis=1)
        diam = np.maximum(tmax[:, 0] - tmin[:, 0], tmax[:, 1] - tmin[:, 1])
        cell = max(float(np.percentile(diam, 20)), (x1 - x0) / 1024, (y1 - y0) / 1024)
        ngx = max(int(np.ceil((x1 - x0) / cell)), 1)
        ngy = max(int(np.ceil((y1 - y0) / cell)), 1)
        i0 = np.clip(((tmin[:, 0] - x0) / cell).astype(int), 0, ngx - 1)
        i1 = np.clip(((tmax[:, 0] - x0) / cell).astype(int), 0, ngx - 1)
        j0 = np.clip(((tmin[:, 1] - y0) / cell).astype(int), 0, ngy - 1)
        j1 = np.clip(((tmax[:, 1] - y0) / cell).astype(int), 0, ngy - 1)
        counts = (i1 - i0 + 1) * (j1 - j0 + 1)
        total = int(counts.sum())
        tri_rep = np.repeat(np.arange(len(self.triangles)), counts)
        offs = np.repeat(np.cumsum(counts) - counts, counts)
        local = np.arange(total) - offs
        wx = np.repeat(i1 - i0 + 1, counts)
        di = local % wx
        dj = local // wx
        cells = (np.repeat(j0, counts) + dj) * ngx + (np.repeat(i0, counts) + di)
        order = np.lexsort((tri_rep, cells))
        cells, tri_rep = cells[order], tri_rep[order]
        starts = np.searchsorted(cells, np.arange(ngx * ngy))
        ends = np.searchsorted(cells, np.arange(ngx * ngy), side="right")
        self._grid = (cell, ngx, ngy, starts, ends, tri_rep)

    def _bary_pairs(self, pts, tids):
        v0 = self.vertices[self.triangles[tids, 0]]
        v1 = self.vertices[self.triangles[tids, 1]]
        v2 = self.vertices[self.triangles[tids, 2]]
        det = (v1[:, 0] - v0[:, 0]) * (v2[:, 1] - v0[:, 1]) - (v1[:, 1] - v0[:, 1]) * (
            v2[:, 0] - v0[:, 0]
        )
        dp = pts - v0
        l1 = ((v2[:, 1] - v0[:, 1]) * dp[:, 0] - (v2[:, 0] - v0[:, 0]) * dp[:, 1]) / det
        l2 = (-(v1[:, 1] - v0[:, 1]) * dp[:, 0] + (v1[:, 0] - v0[:, 0]) * dp[:, 1]) / det
        return np.column_stack([1.0 - l1 - l2, l1, l2])

    def locate(self, points, tol=1e-12):
        """Containing triangle and barycentric coordinates for each point.

        Boundary ties resolve to the lowest triangle id.  Raises if a
        point lies outside the domain.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        x0, x1, y0, y1 = self.domain
        ext = max(x1 - x0, y1 - y0)
        out = (
            (points[:, 0] < x0 - 1e-9 * ext)
            | (points[:, 0] > x1 + 1e-9 * ext)
            | (points[:, 1] < y0 - 1e-9 * ext)
            | (points[:, 1] > y1 + 1e-9 * ext)
        )
        if np.any(out):
            raise ValueError("point outside the computational domain")
        if self._grid is None:
            self._build_grid()
        cell, ngx, ngy, starts, ends, items = self._grid
        ci = np.clip(((points[:, 0] - x0) / cell).astype(int), 0, ngx - 1)
        cj = np.clip(((points[:, 1] - y0) / cell).astype(int), 0, ngy - 1)
        cells = cj * ngx + ci
        s, e = starts[cells], ends[cells]
        ln = e - s
        tot = int(ln.sum())
        rep_q = np.repeat(np.arange(len(points)), ln)
        offs = np.repeat(np.cumsum(ln) - ln, ln)
        cand = items[np.repeat(s, ln) + (np.arange(tot) - offs)]
        bary = self._bary_pairs(points[rep_q], cand)
        valid = np.all(bary >= -tol, axis=1)
        tids = np.full(len(points), -1, dtype=np.int64)
        bout = np.zeros((len(points), 3))
        vq = rep_q[valid]
        if len(vq):
            first_q, first_pos = np.unique(vq, return_index=True)
            pos = np.nonzero(valid)[0][first_pos]
            tids[first_q] = cand[pos]
            bout[first_q] = bary[pos]
        missing = np.nonzero(tids < 0)[0]
        for q in missing:  # rare fallback: exhaustive deterministic scan
            allb = self._bary_pairs(
                np.repeat(points[q][None, :], len(self.triangles), axis=0),
                np.arange(len(self.triangles)),
            )
            ok = np.nonzero(np.all(allb >= -1e-9, axis=1))[0]
            if len(ok) == 0:
                raise ValueError("point location failed inside the domain")
            tids[q] = ok[0]
            bout[q] = allb[ok[0]]
        np.clip(bout, 0.0, 1.0, out=bout)
        return tids, bout


def locate_point(mesh, p):
    """Single-point wrapper around :meth:`BulkMesh.locate`."""
    tids, bary = mesh.locate(np.asarray(p, dtype=float)[None, :])
    return int(tids[0]), bary[0]


def adapt(mesh, interface, config):
    """Build the adapted triangulation for the current interface.

    The previous mesh is only consulted for its domain; the new mesh is
    re-derived from the coarse base grid, which makes adaptation
    idempotent for an unchanged interface.
    """
    domain = mesh.domain if mesh is not None else config.domain
    x0, x1, y0, y1 = domain
    iv = interface.vertices
    if (
        iv[:, 0].min() < x0 or iv[:, 0].max() > x1
        or iv[:, 1].min() < y0 or iv[:, 1].max() > y1
    ):
        raise ValueError("interface leaves the computational domain")
    verts, tris, level, anc = _base_arrays(domain, config.h_coarse)
    target = config.fine_level
    for _ in range(target + 16):
        touch = _triangles_touching(verts, tris, interface)
        band = _add_vertex_neighbors(tris, len(verts), touch, config.buffer_layers)
        marked = band & (level < target)
        if not marked.any():
            break
        verts, tris, level, anc = refine_nvb(verts, tris, level, anc, marked)
    else:
        raise RuntimeError(
            "refinement budget exceeded: %d triangles still above target level %d"
            % (int(marked.sum()), target)
        )
    out = BulkMesh(verts, tris, domain, level, anc)
    area = out.areas.sum()
    if abs(area - (x1 - x0) * (y1 - y0)) > 1e-9 * area:
        raise RuntimeError("adapted mesh does not tile the domain")
    return out


def classify_elements(mesh, interface):
    """Label triangles as interior / interfacial / exterior."""
    touch = _triangles_touching(mesh.vertices, mesh.triangles, interface)
    labels = np.full(len(mesh.triangles), EXTERIOR, dtype=np.int8)
    labels[touch] = INTERFACIAL
    rest = np.nonzero(~touch)[0]
    if len(rest):
        cent = mesh.vertices[mesh.triangles[rest]].mean(axis=1)
        inside = points_in_polygon(cent, interface)
        labels[rest[inside]] = INTERIOR
    return labels


def phase_fields(labels, rho_minus, rho_plus, mu_minus, mu_plus):
    """Piecewise-constant density/viscosity; interfacial cells average."""
    rho = np.where(
        labels == INTERIOR,
        rho_minus,
        np.where(labels == EXTERIOR, rho_plus, 0.5 * (rho_minus + rho_plus)),
    ).astype(float)
    mu = np.where(
        labels == INTERIOR,
        mu_minus,
        np.where(labels == EXTERIOR, mu_plus, 0.5 * (mu_minus + mu_plus)),
    ).astype(float)
    return PhaseFields(rho=rho, mu=mu)


def eval_p2(mesh, coeffs, tids, bary):
    """Evaluate a P2 field (scalar or vector) at located points."""
    shapes = fem.p2_shape(bary)
    dofs = mesh.tri2dof[tids]
    vals = coeffs[dofs]
    if vals.ndim == 3:
        return np.einsum("qi,qic->qc", shapes, vals)
    return np.einsum("qi,qi->q", shapes, vals)


def _match_rows(a, b):
    """For each row of b, the index of the bitwise-equal row of a, or -1."""
    comb = np.vstack([a, b])
    _, inv = np.unique(comb, axis=0, return_inverse=True)
    first = np.full(inv.max() + 1, -1, dtype=np.int64)
    first[inv[: len(a)]] = np.arange(len(a))
    return first[inv[len(a):]]


def transfer_velocity(old_mesh, field, new_mesh):
    """Nodal P2 interpolation onto the new mesh.

    Nodes whose coordinates coincide bitwise with an old node copy the
    coefficient directly, so transfers across identical or nested meshes
    are exact; the rest evaluate the old field by point location.
    """
    field = np.asarray(field, dtype=float)
    newc = new_mesh.p2_coords
    match = _match_rows(old_mesh.p2_coords, newc)
    out = np.empty((len(newc),) + field.shape[1:], dtype=float)
    hit = match >= 0
    out[hit] = field[match[hit]]
    miss = np.nonzero(~hit)[0]
    if len(miss):
        tids, bary = old_mesh.locate(newc[miss])
        out[miss] = eval_p2(old_mesh, field, tids, bary)
    return out


def transfer_density(old_mesh, cell_field, new_mesh):
    """Approximate element averages of an old piecewise-constant field.

    Samples the old field at a degree-5 (7-point) quadrature rule on each
    new triangle; exact whenever a new triangle lies inside one old one.
    """
    cell_field = np.asarray(cell_field, dtype=float)
    tv = new_mesh.vertices[new_mesh.triangles]
    pts = np.einsum("qk,tkc->tqc", fem.TRI_D5_BARY, tv).reshape(-1, 2)
    tids, _ = old_mesh.locate(pts)
    vals = cell_field[tids].reshape(len(new_mesh.triangles), len(fem.TRI_D5_W))
    return vals @ fem.TRI_D5_W

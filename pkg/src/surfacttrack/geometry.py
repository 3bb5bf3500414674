"""Polygonal interface representation and discrete surface calculus.

The interface is a single closed oriented polygon.  Orientation is
normalized to counter-clockwise on construction so that the enclosed
region lies to the left of each segment and the piecewise-constant
normal points out of it.

Nodal fields are plain numpy arrays: shape ``(K,)`` for scalar fields
and ``(K, 2)`` for vector fields, one value per vertex.  Per-segment
constant data has one value per segment.  All functions are pure; a
refinement returns a new mesh.
"""

import numpy as np
import scipy.sparse as sp


def _lengths(vertices, segments):
    d = vertices[segments[:, 1]] - vertices[segments[:, 0]]
    return np.hypot(d[:, 0], d[:, 1])


def _signed_area(vertices, segments):
    a = vertices[segments[:, 0]]
    b = vertices[segments[:, 1]]
    return 0.5 * np.sum(a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1])


class InterfaceMesh:
    """Closed oriented polygon with vertices and directed segments.

    Parameters
    ----------
    vertices : (K, 2) array
        Vertex positions.
    segments : (K, 2) int array, optional
        Directed segments forming one closed loop.  Defaults to the
        consecutive loop ``k -> k+1 (mod K)``.
    """

    def __init__(self, vertices, segments=None):
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2 or len(vertices) < 3:
            raise ValueError("vertices must be a (K,2) array with K >= 3")
        if segments is None:
            k = len(vertices)
            segments = np.column_stack([np.arange(k), (np.arange(k) + 1) % k])
        segments = np.asarray(segments, dtype=int)
        self._validate_loop(len(vertices), segments)
        if _signed_area(vertices, segments) < 0.0:
            segments = segments[::-1, ::-1].copy()
        self.vertices = vertices
        self.segments = segments
        lens = _lengths(vertices, segments)
        if np.any(lens <= 1e-12 * lens.max()):
            raise ValueError("degenerate interface segment (zero length)")
        self.lengths = lens
        # vertex -> (incoming segment, outgoing segment)
        k = len(vertices)
        self.seg_in = np.empty(k, dtype=int)
        self.seg_out = np.empty(k, dtype=int)
        self.seg_in[segments[:, 1]] = np.arange(len(segments))
        self.seg_out[segments[:, 0]] = np.arange(len(segments))

    @staticmethod
    def _validate_loop(nv, segments):
        if segments.shape != (nv, 2):
            raise ValueError("closed polygon needs exactly one segment per vertex")
        cnt_src = np.bincount(segments[:, 0], minlength=nv)
        cnt_dst = np.bincount(segments[:, 1], minlength=nv)
        if np.any(cnt_src != 1) or np.any(cnt_dst != 1):
            raise ValueError("every vertex must have exactly two incident segments")
        nxt = np.empty(nv, dtype=int)
        nxt[segments[:, 0]] = segments[:, 1]
        seen, v = 1, nxt[segments[0, 0]]
        while v != segments[0, 0]:
            v = nxt[v]
            seen += 1
            if seen > nv:
                raise ValueError("segments do not form a single closed loop")
        if seen != nv:
            raise ValueError("segments do not form a single closed loop")

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_segments(self):
        return len(self.segments)

    def loop_order(self):
        """Vertex indices in traversal order, starting at segments[0,0]."""
        nxt = np.empty(self.num_vertices, dtype=int)
        nxt[self.segments[:, 0]] = self.segments[:, 1]
        order = np.empty(self.num_vertices, dtype=int)
        v = self.segments[0, 0]
        for i in range(self.num_vertices):
            order[i] = v
            v = nxt[v]
        return order

    def tangents(self):
        d = self.vertices[self.segments[:, 1]] - self.vertices[self.segments[:, 0]]
        return d / self.lengths[:, None]

    def with_vertices(self, new_vertices):
        """Same connectivity, new positions."""
        return InterfaceMesh(new_vertices, self.segments.copy())


def segment_normals(mesh):
    """Unit outward normals, one per segment (rotate tangent by -90 deg)."""
    t = mesh.tangents()
    return np.column_stack([t[:, 1], -t[:, 0]])


def vertex_normals_omega(mesh):
    """Length-weighted vertex normals and the spanning check.

    Returns ``(omega, spans_plane)`` where ``omega[k]`` is the average of
    the two adjacent segment normals weighted by segment length, divided
    by the total adjacent length, and ``spans_plane`` reports whether the
    vertex normals span the plane (required by the coupled interface
    update for solvability).
    """
    nu = segment_normals(mesh)
    h = mesh.lengths
    num = h[mesh.seg_in][:, None] * nu[mesh.seg_in] + h[mesh.seg_out][:, None] * nu[mesh.seg_out]
    den = h[mesh.seg_in] + h[mesh.seg_out]
    omega = num / den[:, None]
    cross = np.abs(
        omega[:, 0, None] * omega[None, :, 1] - omega[:, 1, None] * omega[None, :, 0]
    )
    scale = max(np.abs(omega).max(), 1e-300)
    spans = bool(cross.max() > 1e-12 * scale * scale)
    return omega, spans


def lumped_vertex_mass(mesh):
    """Diagonal of the mass-lumped inner product: half the adjacent length."""
    h = mesh.lengths
    return 0.5 * (h[mesh.seg_in] + h[mesh.seg_out])


def _as_segment_values(mesh, field, segmentwise):
    """Return per-(segment, endpoint) values with shape (J, 2) or (J, 2, 2)."""
    field = np.asarray(field, dtype=float)
    if segmentwise:
        if len(field) != mesh.num_segments:
            raise ValueError("per-segment field has wrong length")
        return np.stack([field, field], axis=1)
    if len(field) != mesh.num_vertices:
        raise ValueError("nodal field has wrong length")
    return field[mesh.segments]


def inner_product(mesh, eta, zeta, mode="lumped",
                  eta_segmentwise=False, zeta_segmentwise=False):
    """L2 inner product over the polygon, mass-lumped or exact.

    ``eta`` and ``zeta`` are nodal (one value per vertex) or per-segment
    constant fields, scalar or 2-vector valued.  The lumped rule samples
    the product at the two segment endpoints with weight h/2, so both
    modes agree whenever the product is constant per segment.
    """
    ev = _as_segment_values(mesh, eta, eta_segmentwise)
    zv = _as_segment_values(mesh, zeta, zeta_segmentwise)
    if ev.shape != zv.shape:
        raise ValueError("field shapes do not match")
    h = mesh.lengths

    def dot(u, v):
        return np.sum(u * v, axis=-1) if u.ndim == 2 else u * v

    if mode == "lumped":
        return float(np.sum(0.5 * h * (dot(ev[:, 0], zv[:, 0]) + dot(ev[:, 1], zv[:, 1]))))
    if mode == "full":
        # exact integral of the product of two linear interpolants
        return float(np.sum(h / 6.0 * (
            2.0 * dot(ev[:, 0], zv[:, 0]) + 2.0 * dot(ev[:, 1], zv[:, 1])
            + dot(ev[:, 0], zv[:, 1]) + dot(ev[:, 1], zv[:, 0])
        )))
    raise ValueError("mode must be 'lumped' or 'full'")


def laplace_beltrami_stiffness(mesh):
    """Sparse stiffness matrix of the surface Laplacian on P1 elements.

    Each segment of length h contributes the local matrix
    ``[[1, -1], [-1, 1]] / h``; row sums vanish, so constants are in the
    kernel.
    """
    h = mesh.lengths
    a, b = mesh.segments[:, 0], mesh.segments[:, 1]
    w = 1.0 / h
    rows = np.concatenate([a, b, a, b])
    cols = np.concatenate([a, b, b, a])
    vals = np.concatenate([w, w, -w, -w])
    k = mesh.num_vertices
    return sp.csr_matrix((vals, (rows, cols)), shape=(k, k))


def enclosed_area(mesh):
    """Shoelace area of the polygon (positive; orientation is normalized)."""
    return float(_signed_area(mesh.vertices, mesh.segments))


def enclosed_moment_y(mesh):
    """Integral of x_2 over the enclosed region (shoelace second moment)."""
    a = mesh.vertices[mesh.segments[:, 0]]
    b = mesh.vertices[mesh.segments[:, 1]]
    cross = a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]
    return float(np.sum(cross * (a[:, 1] + b[:, 1])) / 6.0)


def total_length(mesh):
    return float(mesh.lengths.sum())


def edge_ratio(mesh):
    """Equidistribution diagnostic: max over min segment length."""
    return float(mesh.lengths.max() / mesh.lengths.min())


def is_simple(mesh):
    """Standalone validity check: no self intersections (O(J^2) sweep)."""
    a = mesh.vertices[mesh.segments[:, 0]]
    b = mesh.vertices[mesh.segments[:, 1]]
    j = mesh.num_segments
    for i in range(j):
        for k in range(i + 1, j):
            shared = len(set(mesh.segments[i]) & set(mesh.segments[k])) > 0
            if shared:
                continue
            if _segments_cross(a[i], b[i], a[k], b[k]):
                return False
    return True


def _segments_cross(p0, p1, q0, q1):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q0, q1, p0)
    d2 = orient(q0, q1, p1)
    d3 = orient(p0, p1, q0)
    d4 = orient(p0, p1, q1)
    return (d1 * d2 < 0.0) and (d3 * d4 < 0.0)


def quality_and_refine(mesh, fields, threshold_factor, reference_max_length):
    """Split over-long segments at their midpoints.

    A segment is split whenever its length exceeds
    ``threshold_factor * reference_max_length``.  Nodal fields are
    transferred by linear interpolation (new midpoint values are endpoint
    averages); new vertices are appended after the existing ones so that
    surviving indices are stable.

    Returns ``(new_mesh, new_fields, edge_ratio_of_output)``.
    """
    if threshold_factor <= 1.0:
        raise ValueError("threshold_factor must exceed 1")
    thresh = threshold_factor * reference_max_length
    split = mesh.lengths > thresh
    if not np.any(split):
        return mesh, [np.asarray(f, dtype=float).copy() for f in fields], edge_ratio(mesh)
    nv = mesh.num_vertices
    split_ids = np.nonzero(split)[0]
    mids = 0.5 * (
        mesh.vertices[mesh.segments[split_ids, 0]]
        + mesh.vertices[mesh.segments[split_ids, 1]]
    )
    new_vertices = np.vstack([mesh.vertices, mids])
    new_index = {int(s): nv + i for i, s in enumerate(split_ids)}
    seg_list = []
    for j, (sa, sb) in enumerate(mesh.segments):
        if split[j]:
            m = new_index[j]
            seg_list.append((sa, m))
            seg_list.append((m, sb))
        else:
            seg_list.append((sa, sb))
    new_mesh = InterfaceMesh(new_vertices, np.array(seg_list, dtype=int))
    out_fields = []
    for f in fields:
        f = np.asarray(f, dtype=float)
        mid_vals = 0.5 * (f[mesh.segments[split_ids, 0]] + f[mesh.segments[split_ids, 1]])
        out_fields.append(np.concatenate([f, mid_vals], axis=0))
    return new_mesh, out_fields, edge_ratio(new_mesh)


def discrete_curvature(mesh, tol=1e-10):
    """Nodal curvature from the lumped Laplace-Beltrami identity.

    Solves ``<kappa nu, eta>_h = -<grad_s id, grad_s eta>`` vertex by
    vertex: the lumped left-hand side pins ``kappa_k`` against the
    weighted vertex normal, and the two component equations are combined
    in the least-squares sense (they agree up to rounding on simple
    polygons).  Negative on convex regions; a circle of radius R gives
    values close to -1/R.
    """
    omega, _ = vertex_normals_omega(mesh)
    wnorm2 = np.sum(omega * omega, axis=1)
    bad = wnorm2 <= tol * tol
    if np.any(bad):
        raise ValueError(
            f"vertex normal below tolerance at vertices {np.nonzero(bad)[0].tolist()}"
        )
    m = lumped_vertex_mass(mesh)
    stiff = laplace_beltrami_stiffness(mesh)
    lap = np.column_stack([stiff @ mesh.vertices[:, 0], stiff @ mesh.vertices[:, 1]])
    return -np.sum(omega * lap, axis=1) / (m * wnorm2)


def points_in_polygon(points, mesh):
    """Even-odd ray casting test for an array of points; boundary fuzzy."""
    order = mesh.loop_order()
    vx = mesh.vertices[order, 0]
    vy = mesh.vertices[order, 1]
    x = np.asarray(points, dtype=float)[:, 0][:, None]
    y = np.asarray(points, dtype=float)[:, 1][:, None]
    x0, y0 = vx[None, :], vy[None, :]
    x1, y1 = np.roll(vx, -1)[None, :], np.roll(vy, -1)[None, :]
    cond = (y0 <= y) != (y1 <= y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
    hit = cond & (x < xs)
    return hit.sum(axis=1) % 2 == 1

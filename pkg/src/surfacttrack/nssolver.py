"""Taylor-Hood saddle-point solver for the two-phase momentum equation.

One time step solves for a P2 velocity and a P1 pressure augmented by a
single extra basis function, the characteristic function of the inner
phase.  The velocity block combines the semi-implicit two-density time
term, the symmetric viscous form and an exactly skew-symmetric advection
operator; surface tension enters as an explicit load assembled on the
interface polygon.  Velocity dofs are laid out as ``[ux(0..n), uy(0..n)]``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from surfacttrack import fem
from surfacttrack import eos as eos_mod
from surfacttrack.geometry import lumped_vertex_mass

SLIP_KINDS = ("no_slip", "free_slip", "dirichlet")


@dataclass
class BoundarySpec:
    """Boundary condition per rectangle side.

    ``kinds`` maps side names (left/right/bottom/top) to one of
    ``no_slip``, ``free_slip`` or ``dirichlet``; Dirichlet sides read the
    prescribed velocity from ``value(x) -> (n, 2)``.  Free-slip sides
    must be axis aligned (always true on the rectangle), so the normal
    constraint is a single-component constraint.
    """

    kinds: dict
    value: object = None

    def __post_init__(self):
        for side, kind in self.kinds.items():
            if kind not in SLIP_KINDS:
                raise ValueError(f"unknown boundary kind {kind!r} on {side}")
        if "dirichlet" in self.kinds.values() and self.value is None:
            raise ValueError("dirichlet boundary needs a value function")


@dataclass
class FlowState:
    """P2 velocity, P1 pressure and the inner-phase pressure coefficient."""

    u: np.ndarray          # (n_p2, 2)
    p: np.ndarray          # (n_vert,)
    lam: float             # coefficient of the inner-phase characteristic fn
    residual: float = 0.0
    mean_zero: bool = True

    def flat(self):
        return np.concatenate([self.u[:, 0], self.u[:, 1]])


def flat_to_field(flat):
    n = len(flat) // 2
    return np.column_stack([flat[:n], flat[n:]])


# -- element assembly --------------------------------------------------

_MASS_BASE = np.einsum("q,qi,qj->ij", fem.TRI_D4_W, fem.P2_AT_D4, fem.P2_AT_D4)


def _grad_tables(mesh):
    return np.einsum("qid,tds->tqis", fem.P2_DREF_AT_D4, mesh.jinv_t)


def _assemble_from_elements(mesh, elem, ncols=None):
    nt = len(mesh.triangles)
    dofs = mesh.tri2dof
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = mesh.num_p2
    return sp.coo_matrix((elem.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def scalar_mass(mesh, coef_cells):
    """P2 scalar mass matrix with a per-triangle constant coefficient."""
    w = np.asarray(coef_cells, dtype=float) * mesh.areas
    elem = w[:, None, None] * _MASS_BASE[None, :, :]
    return _assemble_from_elements(mesh, elem)


def _stiffness_blocks(mesh, coef_cells):
    """K[a][b] with entries int coef * d_a phi_j * d_b phi_i."""
    g = _grad_tables(mesh)
    w = np.asarray(coef_cells, dtype=float) * mesh.areas
    out = {}
    for a in range(2):
        for b in range(2):
            elem = np.einsum("q,tqja,tqib->tij", fem.TRI_D4_W, g[..., a], g[..., b])
            out[(a, b)] = _assemble_from_elements(mesh, w[:, None, None] * elem)
    return out


def viscous_block(mesh, mu_cells):
    """2 (mu D(u), D(xi)) as a 2x2 block matrix over velocity dofs."""
    k = _stiffness_blocks(mesh, mu_cells)
    axx = 2.0 * k[(0, 0)] + k[(1, 1)]
    ayy = k[(0, 0)] + 2.0 * k[(1, 1)]
    axy = k[(0, 1)].T  # trial uy against test x-component: mu d_x phi_j d_y phi_i
    return axx, axy, axy.T, ayy


def assemble_advection(mesh, rho_cells, a_nodal):
    """Skew-symmetric advection operator N with transporting field ``a``.

    N = (C - C^T)/2 where C_ij = (rho, [(a . grad) phi_j] . phi_i); the
    same quadrature is used for both halves, so x^T N x = 0 holds exactly
    for every coefficient vector.
    """
    g = _grad_tables(mesh)
    aq = np.einsum("qi,tic->tqc", fem.P2_AT_D4, np.asarray(a_nodal)[mesh.tri2dof])
    adv = np.einsum("tqc,tqjc->tqj", aq, g)
    w = np.asarray(rho_cells, dtype=float) * mesh.areas
    elem = np.einsum("q,qi,tqj->tij", fem.TRI_D4_W, fem.P2_AT_D4, adv)
    c = _assemble_from_elements(mesh, w[:, None, None] * elem)
    n_s = 0.5 * (c - c.T)
    n = mesh.num_p2
    return sp.bmat([[n_s, None], [None, n_s]], format="csr")


def divergence_blocks(mesh):
    """P1 pressure rows of the divergence pairing, (nv x n_p2) per component."""
    g = _grad_tables(mesh)
    w = mesh.areas
    nv = mesh.num_vertices
    n = mesh.num_p2
    rows = np.repeat(mesh.triangles, 6, axis=1).ravel()
    cols = np.tile(mesh.tri2dof, (1, 3)).ravel()
    out = []
    for a in range(2):
        elem = np.einsum("q,ql,tqja->tlj", fem.TRI_D4_W, fem.P1_AT_D4, g[..., a])
        vals = (w[:, None, None] * elem).ravel()
        out.append(sp.coo_matrix((vals, (rows, cols)), shape=(nv, n)).tocsr())
    return out[0], out[1]


def p1_integrals(mesh):
    """Integral of each P1 basis function over the domain."""
    out = np.zeros(mesh.num_vertices)
    np.add.at(out, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return out


# -- interface terms ----------------------------------------------------

def xfem_pressure_column(interface, bulk, coupling):
    """Discrete pairing of div(xi) with the inner-phase indicator.

    Computed as the line integral of xi . nu over the polygon with the
    shared sub-segment Gauss rule, which equals the clipped area integral
    of div(xi) exactly for P2 test functions.
    """
    n = bulk.num_p2
    shapes = fem.p2_shape(coupling.q_bary)
    nu = coupling.normals[coupling.q_seg]
    dofs = bulk.tri2dof[coupling.q_tri]
    col = np.zeros(2 * n)
    np.add.at(col[:n], dofs.ravel(), (shapes * (coupling.q_w * nu[:, 0])[:, None]).ravel())
    np.add.at(col[n:], dofs.ravel(), (shapes * (coupling.q_w * nu[:, 1])[:, None]).ravel())
    return col


def _scatter_vertex_forces(bulk, coupling, forces):
    """Accumulate sum_k F_k . xi(q_k) into the velocity load vector."""
    n = bulk.num_p2
    shapes = fem.p2_shape(coupling.v_bary)
    dofs = bulk.tri2dof[coupling.v_tri]
    load = np.zeros(2 * n)
    np.add.at(load[:n], dofs.ravel(), (shapes * forces[:, 0][:, None]).ravel())
    np.add.at(load[n:], dofs.ravel(), (shapes * forces[:, 1][:, None]).ravel())
    return load


def surface_tension_load(interface, kappa, psi, eos, scheme, bulk, coupling):
    """Capillary and Marangoni load on the velocity unknowns.

    hg: full quadrature of the P1 interpolant of gamma_eps(psi)*kappa
    times the piecewise-constant normal, plus the mass-lumped Marangoni
    term.  gd: both terms mass lumped, with the vector curvature.
    """
    n = bulk.num_p2
    psi = np.asarray(psi, dtype=float)
    segs = interface.segments
    h = interface.lengths
    tangents = interface.tangents()
    if scheme == "hg":
        gam = np.asarray(eos_mod.gamma_eps(eos, psi), dtype=float)
        gk = gam * np.asarray(kappa, dtype=float)
        vals = gk[segs[coupling.q_seg, 0]] * (1.0 - coupling.q_t) \
            + gk[segs[coupling.q_seg, 1]] * coupling.q_t
        nu = coupling.normals[coupling.q_seg]
        shapes = fem.p2_shape(coupling.q_bary)
        dofs = bulk.tri2dof[coupling.q_tri]
        load = np.zeros(2 * n)
        wv = coupling.q_w * vals
        np.add.at(load[:n], dofs.ravel(), (shapes * (wv * nu[:, 0])[:, None]).ravel())
        np.add.at(load[n:], dofs.ravel(), (shapes * (wv * nu[:, 1])[:, None]).ravel())
        grad_gamma = (gam[segs[:, 1]] - gam[segs[:, 0]])[:, None] / h[:, None] * tangents
        forces = np.zeros((interface.num_vertices, 2))
        np.add.at(forces, segs[:, 0], 0.5 * h[:, None] * grad_gamma)
        np.add.at(forces, segs[:, 1], 0.5 * h[:, None] * grad_gamma)
        return load + _scatter_vertex_forces(bulk, coupling, forces)
    if scheme == "gd":
        gam = np.asarray(eos_mod.gamma(eos, psi), dtype=float)
        kv = np.asarray(kappa, dtype=float)
        if kv.ndim != 2:
            raise ValueError("gd scheme needs the vector curvature")
        m = lumped_vertex_mass(interface)
        forces = m[:, None] * gam[:, None] * kv
        grad_gamma = (gam[segs[:, 1]] - gam[segs[:, 0]])[:, None] / h[:, None] * tangents
        np.add.at(forces, segs[:, 0], 0.5 * h[:, None] * grad_gamma)
        np.add.at(forces, segs[:, 1], 0.5 * h[:, None] * grad_gamma)
        return _scatter_vertex_forces(bulk, coupling, forces)
    raise ValueError("scheme must be 'hg' or 'gd'")


# -- boundary conditions -------------------------------------------------

def velocity_constraints(mesh, bc):
    """Constrained velocity dofs and their values from a BoundarySpec."""
    n = mesh.num_p2
    mask = np.zeros(2 * n, dtype=bool)
    vals = np.zeros(2 * n)
    coords = mesh.p2_coords
    # free-slip first so that no-slip/dirichlet win at shared corners
    for side, kind in bc.kinds.items():
        if kind != "free_slip":
            continue
        nodes = mesh.boundary_p2_nodes(side)
        comp = 0 if side in ("left", "right") else 1
        mask[nodes + comp * n] = True
    for side, kind in bc.kinds.items():
        if kind == "free_slip":
            continue
        nodes = mesh.boundary_p2_nodes(side)
        mask[nodes] = True
        mask[nodes + n] = True
        if kind == "dirichlet":
            g = np.asarray(bc.value(coords[nodes]), dtype=float)
            vals[nodes] = g[:, 0]
            vals[nodes + n] = g[:, 1]
    return mask, vals


# -- system assembly and solve -------------------------------------------

@dataclass
class SaddleSystem:
    a: sp.spmatrix           # velocity block (2n x 2n)
    b: sp.spmatrix           # pressure rows (nv [+1 xfem] x 2n)
    rhs_u: np.ndarray
    mask: np.ndarray         # constrained velocity dofs
    vals: np.ndarray
    mesh: object
    xfem: bool
    area_minus: float = 0.0
    pin_pressure: int = 0


def assemble_ns(mesh, rho_cells, rho_prev_cells, mu_cells, tau, u_old,
                bc, f1=None, f2=None, surface_load=None, coupling=None,
                interface=None, xfem=True):
    """Assemble the saddle system of one momentum/continuity step.

    ``u_old`` is the transported previous velocity already interpolated
    onto this mesh; ``rho_prev_cells`` its projected density.  The time
    term uses the averaged density (rho + rho_prev)/2 on the diagonal and
    rho_prev against the old velocity on the right-hand side.
    """
    n = mesh.num_p2
    rho_bar = 0.5 * (np.asarray(rho_cells) + np.asarray(rho_prev_cells))
    m_time = scalar_mass(mesh, rho_bar / tau)
    m_prev = scalar_mass(mesh, np.asarray(rho_prev_cells) / tau)
    axx, axy, ayx, ayy = viscous_block(mesh, mu_cells)
    a = sp.bmat(
        [[axx + m_time, axy], [ayx, ayy + m_time]], format="csr"
    )
    a = a + assemble_advection(mesh, rho_cells, u_old)

    rhs = np.concatenate([m_prev @ u_old[:, 0], m_prev @ u_old[:, 1]])
    coords = mesh.p2_coords
    if f1 is not None:
        f1n = np.asarray(f1(coords) if callable(f1) else np.broadcast_to(f1, (n, 2)))
        m_rho = scalar_mass(mesh, rho_cells)
        rhs += np.concatenate([m_rho @ f1n[:, 0], m_rho @ f1n[:, 1]])
    if f2 is not None:
        f2n = np.asarray(f2(coords) if callable(f2) else np.broadcast_to(f2, (n, 2)))
        m_one = scalar_mass(mesh, np.ones(len(mesh.triangles)))
        rhs += np.concatenate([m_one @ f2n[:, 0], m_one @ f2n[:, 1]])
    if surface_load is not None:
        rhs += surface_load

    bx, by = divergence_blocks(mesh)
    b = sp.hstack([bx, by], format="csr")
    area_minus = 0.0
    if xfem:
        if coupling is None or interface is None:
            raise ValueError("xfem row needs the interface coupling")
        col = xfem_pressure_column(interface, mesh, coupling)
        b = sp.vstack([b, sp.csr_matrix(col[None, :])], format="csr")
        from surfacttrack.geometry import enclosed_area
        area_minus = enclosed_area(interface)

    mask, vals = velocity_constraints(mesh, bc)
    return SaddleSystem(a=a, b=b, rhs_u=rhs, mask=mask, vals=vals,
                        mesh=mesh, xfem=xfem, area_minus=area_minus)


def solve_saddle(system):
    """Direct factorization solve of the reduced saddle system.

    Constrained velocity dofs are eliminated, one P1 pressure dof is
    pinned against the constant nullspace, and the pressure is shifted to
    zero mean afterwards with the enriched coefficient included in the
    mean.
    """
    a, b = system.a, system.b
    mask, vals = system.mask, system.vals
    free = ~mask
    a_csc = a.tocsc()
    b_csc = b.tocsc()
    rhs_u = system.rhs_u - a_csc[:, mask] @ vals[mask]
    rhs_p = -(b_csc[:, mask] @ vals[mask])
    a_ff = a.tocsr()[free].tocsc()[:, free]
    b_f = b_csc[:, free]

    keep_p = np.ones(b.shape[0], dtype=bool)
    keep_p[system.pin_pressure] = False
    b_red = b_f[keep_p]
    rhs = np.concatenate([rhs_u[free], rhs_p[keep_p]])
    m = sp.bmat([[a_ff, -b_red.T], [b_red, None]], format="csc")
    try:
        lu = spla.splu(m)
    except RuntimeError as exc:
        _diagnose_singular(a_ff, exc)
    x = lu.solve(rhs)
    res = np.linalg.norm(m @ x - rhs) / max(np.linalg.norm(rhs), 1e-30)

    nu_free = int(free.sum())
    u_flat = vals.copy()
    u_flat[free] = x[:nu_free]
    p_full = np.zeros(b.shape[0])
    p_full[keep_p] = x[nu_free:]

    mesh = system.mesh
    nv = mesh.num_vertices
    p1 = p_full[:nv]
    lam = float(p_full[nv]) if system.xfem else 0.0
    x0, x1, y0, y1 = mesh.domain
    omega_area = (x1 - x0) * (y1 - y0)
    mean = (p1_integrals(mesh) @ p1 + lam * system.area_minus) / omega_area
    p1 = p1 - mean
    return FlowState(u=flat_to_field(u_flat), p=p1, lam=lam, residual=float(res))


def _diagnose_singular(a_ff, exc):
    try:
        spla.splu(a_ff.tocsc())
    except RuntimeError:
        raise RuntimeError("singular velocity block in the saddle solve") from exc
    raise RuntimeError(
        "singular pressure/constraint block in the saddle solve"
    ) from exc

"""Implicit surfactant transport on the moving polygon.

Both steps solve the symmetric positive definite system

    (M_new / tau + D A_new) psi_new = M_old psi / tau + extras

with mass-lumped P1 masses on the old and new polygon (same
connectivity) and the stiffness on the new polygon.  Summing the
equations kills the stiffness and any flux extras, so the total lumped
surfactant mass is conserved to solver precision.  The ALE variant adds
the tangential-flux correction on the old polygon, with the edge value
chosen so the discrete chain rule of the energy argument is exact.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from surfacttrack import eos as eos_mod
from surfacttrack.geometry import laplace_beltrami_stiffness, lumped_vertex_mass


def total_mass(iface, psi):
    """Mass-lumped integral of the nodal field over the polygon."""
    psi = np.asarray(psi, dtype=float)
    if len(psi) != iface.num_vertices:
        raise ValueError("field size does not match vertex count")
    return float(lumped_vertex_mass(iface) @ psi)


def _solve_step(iface_new, tau, d_gamma, rhs):
    m_new = lumped_vertex_mass(iface_new)
    lhs = sp.diags(m_new / tau)
    if d_gamma > 0.0:
        lhs = lhs + d_gamma * laplace_beltrami_stiffness(iface_new)
    elif d_gamma < 0.0:
        raise ValueError("diffusivity must be nonnegative")
    psi_new = spla.spsolve(lhs.tocsc(), rhs)
    if not np.all(np.isfinite(psi_new)):
        raise RuntimeError("singular surfactant step")
    return psi_new


def step_gd(iface_old, iface_new, psi, tau, d_gamma, source=None):
    """Pure evolving-surface step (vertices follow the material motion)."""
    psi = np.asarray(psi, dtype=float)
    if iface_old.num_vertices != iface_new.num_vertices:
        raise ValueError("old and new polygon must share connectivity")
    rhs = lumped_vertex_mass(iface_old) * psi / tau
    if source is not None:
        rhs = rhs + lumped_vertex_mass(iface_new) * np.asarray(source, dtype=float)
    return _solve_step(iface_new, tau, d_gamma, rhs)


def step_hg(iface_old, iface_new, psi, tau, d_gamma, eos, u_vertex, source=None):
    """ALE step with the tangential-flux correction.

    ``u_vertex`` holds the fluid velocity at the old vertices; the
    relative velocity of the mesh with respect to the fluid is
    ``(x_new - x_old)/tau - u_vertex``.  The per-edge value ``psi_star``
    multiplies it inside the flux term, whose contributions cancel in
    the sum over vertices (conservation holds for arbitrary slip).
    """
    psi = np.asarray(psi, dtype=float)
    if iface_old.num_vertices != iface_new.num_vertices:
        raise ValueError("old and new polygon must share connectivity")
    rhs = lumped_vertex_mass(iface_old) * psi / tau
    w = (iface_new.vertices - iface_old.vertices) / tau - np.asarray(u_vertex, dtype=float)
    segs = iface_old.segments
    tangents = iface_old.tangents()
    psi_star = eos_mod.psi_star_edge(eos, psi[segs[:, 0]], psi[segs[:, 1]])
    wsum = w[segs[:, 0]] + w[segs[:, 1]]
    flux = 0.5 * np.atleast_1d(psi_star) * np.sum(wsum * tangents, axis=1)
    np.add.at(rhs, segs[:, 0], flux)
    np.add.at(rhs, segs[:, 1], -flux)
    if source is not None:
        rhs = rhs + lumped_vertex_mass(iface_new) * np.asarray(source, dtype=float)
    return _solve_step(iface_new, tau, d_gamma, rhs)

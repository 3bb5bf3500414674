"""One time step of the interface motion.

Two discretizations are provided.  The coupled update solves positions
and a scalar nodal curvature together: the normal motion is pinned at
the vertices through the weighted vertex normals while the tangential
motion stays implicit and unconstrained, which equidistributes the
polygon over time.  The simpler update transports vertices with the
fluid velocity and recovers a vector curvature afterwards; it keeps
vertices Lagrangian but lets them drift together.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from surfacttrack.coupling import integral_u_chi, integral_u_chi_nu
from surfacttrack.geometry import (
    laplace_beltrami_stiffness,
    lumped_vertex_mass,
    vertex_normals_omega,
)


@dataclass
class InterfaceUpdate:
    x_new: np.ndarray               # (K,2) new vertex positions
    kappa: np.ndarray = None        # (K,) scalar curvature (coupled scheme)
    kappa_vec: np.ndarray = None    # (K,2) vector curvature (transport scheme)


def step_hg(iface, ivd, tau):
    """Coupled position/curvature step with implicit tangential motion.

    Solves the 3K sparse system

        A X + M_w kappa = 0          (curvature identity, both components)
        M_w^T X = M_w^T q + tau <U, chi nu>   (lumped normal motion)

    where A is the polygon stiffness and M_w the lumped mass times the
    vertex normals.  The right-hand side integrates the bulk velocity
    with full quadrature, matching the enriched-pressure column so the
    enclosed area follows the discrete divergence identity.
    """
    omega, spans = vertex_normals_omega(iface)
    if not spans:
        raise ValueError("vertex normals do not span the plane; update not solvable")
    m = lumped_vertex_mass(iface)
    k = iface.num_vertices
    a = laplace_beltrami_stiffness(iface)
    mwx = sp.diags(m * omega[:, 0])
    mwy = sp.diags(m * omega[:, 1])
    rhs_c = m * np.sum(omega * iface.vertices, axis=1) + tau * integral_u_chi_nu(iface, ivd)
    sys = sp.bmat([[a, None, mwx], [None, a, mwy], [mwx, mwy, None]], format="csc")
    rhs = np.concatenate([np.zeros(2 * k), rhs_c])
    try:
        sol = spla.splu(sys).solve(rhs)
    except RuntimeError as exc:
        raise RuntimeError("singular coupled interface system") from exc
    x_new = np.column_stack([sol[:k], sol[k:2 * k]])
    return InterfaceUpdate(x_new=x_new, kappa=sol[2 * k:])


def step_gd(iface, ivd, tau, rhs_mode="lumped"):
    """Vertex transport step followed by the vector curvature solve.

    In lumped mode the diagonal mass cancels and vertices move exactly
    with the sampled velocity; in full mode the right-hand side of the
    motion equation is integrated exactly instead.  The vector curvature
    solves the lumped Laplace-Beltrami identity on the old polygon
    against the new positions.
    """
    q = iface.vertices
    m = lumped_vertex_mass(iface)
    if rhs_mode == "lumped":
        x_new = q + tau * ivd.vertex_values
    elif rhs_mode == "full":
        x_new = q + tau * integral_u_chi(iface, ivd) / m[:, None]
    else:
        raise ValueError("rhs_mode must be 'lumped' or 'full'")
    a = laplace_beltrami_stiffness(iface)
    kv = -np.column_stack([a @ x_new[:, 0], a @ x_new[:, 1]]) / m[:, None]
    return InterfaceUpdate(x_new=x_new, kappa_vec=kv)


def initial_kappa_vec(iface):
    """Vector curvature of the initial polygon (transport scheme start)."""
    m = lumped_vertex_mass(iface)
    a = laplace_beltrami_stiffness(iface)
    q = iface.vertices
    return -np.column_stack([a @ q[:, 0], a @ q[:, 1]]) / m[:, None]

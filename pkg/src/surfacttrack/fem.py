"""Reference-element tables shared by the bulk assembly routines.

Triangle quadrature rules are given in barycentric coordinates with
weights summing to one (fractions of the element area).  The reference
triangle is (0,0)-(1,0)-(0,1) with barycentrics
``lam = (1 - x - y, x, y)``.

P2 local dof order: the three vertices followed by the three edge
midpoints, where edge ``i`` is opposite vertex ``i``.
"""

import numpy as np


def _sym3(a, b):
    return [(a, b, b), (b, a, b), (b, b, a)]


# Dunavant degree-4 rule (6 points); exact for quartics, i.e. P2*P2
# products with element-wise constant coefficients.
_D4 = (
    _sym3(0.816847572980459, 0.091576213509771)
    + _sym3(0.108103018168070, 0.445948490915965)
)
TRI_D4_BARY = np.array(_D4)
TRI_D4_W = np.array([0.109951743655322] * 3 + [0.223381589678011] * 3)

# Dunavant degree-5 rule (7 points); used for the piecewise-constant
# density transfer sampling.
_D5 = (
    [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)]
    + _sym3(0.059715871789770, 0.470142064105115)
    + _sym3(0.797426985353087, 0.101286507323456)
)
TRI_D5_BARY = np.array(_D5)
TRI_D5_W = np.array(
    [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3
)

# 4-point Gauss-Legendre rule on [0,1] (exact through degree 7), used for
# line integrals along interface segments.
_gx, _gw = np.polynomial.legendre.leggauss(4)
GAUSS4_T = 0.5 * (_gx + 1.0)
GAUSS4_W = 0.5 * _gw

# Gradients of the barycentric coordinates w.r.t. reference (x, y).
GRAD_LAM = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def p1_shape(bary):
    """P1 shape functions at barycentric points; shape (n, 3)."""
    return np.asarray(bary, dtype=float)


def p2_shape(bary):
    """P2 shape functions at barycentric points; shape (n, 6)."""
    lam = np.asarray(bary, dtype=float)
    vert = lam * (2.0 * lam - 1.0)
    mid = 4.0 * np.stack(
        [lam[:, 1] * lam[:, 2], lam[:, 2] * lam[:, 0], lam[:, 0] * lam[:, 1]],
        axis=1,
    )
    return np.hstack([vert, mid])


def p2_dshape(bary):
    """P2 shape gradients w.r.t. reference coordinates; shape (n, 6, 2)."""
    lam = np.asarray(bary, dtype=float)
    n = lam.shape[0]
    out = np.zeros((n, 6, 2))
    for i in range(3):
        out[:, i, :] = (4.0 * lam[:, i] - 1.0)[:, None] * GRAD_LAM[i]
    pairs = [(1, 2), (2, 0), (0, 1)]
    for k, (i, j) in enumerate(pairs):
        out[:, 3 + k, :] = 4.0 * (
            lam[:, j][:, None] * GRAD_LAM[i] + lam[:, i][:, None] * GRAD_LAM[j]
        )
    return out


# Tables evaluated once at the quadrature points.
P2_AT_D4 = p2_shape(TRI_D4_BARY)
P2_DREF_AT_D4 = p2_dshape(TRI_D4_BARY)
P1_AT_D4 = p1_shape(TRI_D4_BARY)

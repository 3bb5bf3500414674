"""Front-tracking finite element solver for 2D two-phase flow with
insoluble surfactant on the moving interface.

The bulk Navier-Stokes equations are discretized with Taylor-Hood P2-P1
elements on an adaptively refined triangulation, with the pressure space
enriched by the characteristic function of the inner phase.  The interface
is a polygon advected either with the fluid velocity at its vertices
("gd" scheme) or with an implicit tangential redistribution driven by the
discrete curvature identity ("hg" scheme).  Surfactant transport on the
polygon uses mass-lumped P1 elements and conserves the total surfactant
exactly.
"""

from surfacttrack.eos import EosModel, psi_star_edge
from surfacttrack.geometry import InterfaceMesh
from surfacttrack.bulkmesh import AdaptConfig, BulkMesh, PhaseFields

__all__ = [
    "EosModel",
    "psi_star_edge",
    "InterfaceMesh",
    "AdaptConfig",
    "BulkMesh",
    "PhaseFields",
]

__version__ = "0.1.0"

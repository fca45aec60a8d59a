"""Hybrid DG solver for first-order poro/thermo-viscoelastic wave systems.

Unknowns are the solid velocity u, the filtration velocity / heat flux p,
the elastic and viscous stresses sigma_E, sigma_V and the pressure /
temperature field psi, discretized with degree-(k+1) vector fields for
(u, p), degree-k tensors/scalars for the stresses and psi, and hybrid
face traces (u_hat, p_hat) of degree k+1 that carry the globally coupled
unknowns after static condensation.
"""

__version__ = "0.1.0"

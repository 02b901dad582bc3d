"""Numerical suite for (-1)-homogeneous axisymmetric Navier-Stokes flows on the sphere.

Modules: mesh (graded nodes and stencil calculus), noswirl (the Riccati
family and its region labels), operators (linearised operator, right
inverses, kernel and norms), swirl (contraction solver), fields (physical
fields and residuals), atlas and cli.
"""

__version__ = "0.1.0"

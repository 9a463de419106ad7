"""Boundary integral solvers for Laplace and Helmholtz problems on bodies of revolution.

Modules
-------
geometry       generating curves and panel meshes
specfun        elliptic integrals, Legendre functions Q_{n-1/2}
modal_kernels  azimuthal Fourier coefficients of layer kernels
quadrature     near-singular corrections of the panel rule
solver         modal assembly, factorization and solve
harness        oracles, error reports, timing
cli            the ``axibie`` command
"""

__version__ = "0.1.0"

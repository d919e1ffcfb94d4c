"""Reduced-order-model inversion of synthetic aperture radar data.

Subpackages and modules: ``scene`` (grids, lattices, shapes), ``beam``
(Gaussian-beam initial fields), ``solver`` (leapfrog FDTD with optional
PML), ``acquisition`` (even data, raw-data relations, noise), ``gramian``
(data Gramians and Cholesky factors), ``inversion`` (objectives,
sensitivities, Gauss-Newton), ``config``/``pipeline``/``io``/``cli``.
"""

__version__ = "0.1.0"

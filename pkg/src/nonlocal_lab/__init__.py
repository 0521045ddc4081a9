"""Numerical laboratory for nonlocal elliptic operators with stable kernels.

Quadrature of singular line and sphere integrals, stable and rough kernel
operators with their extremal (Pucci) envelopes, radial barriers, a monotone
Dirichlet solver with policy iteration, boundary-quotient analysis, the
angular extension eigenfunctions and kernel flattening checks.
"""

__version__ = "0.1.0"

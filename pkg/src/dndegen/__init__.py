"""Numerical laboratory for DN maps of a torus with a small hole.

The chain: DN map of the bordered surface -> Hilbert transform spectrum
(mu, eta) -> harmonic forms and the auxiliary period matrix -> Siegel
b-period matrix -> theta constants and Rosenhain invariants -> collar bounds.
"""

from .circle import BoundaryFunction, BoundaryOperator, dn_disk, hilbert_from_dn, lambda_inner, operator_distance
from .errors import DNDegenError

__version__ = "0.1.0"

__all__ = [
    "BoundaryFunction",
    "BoundaryOperator",
    "DNDegenError",
    "dn_disk",
    "hilbert_from_dn",
    "lambda_inner",
    "operator_distance",
]

"""Analysis of transverse type-changing metrics: curvature, degeneracy classes
and extendibility of the Riemann, Ricci and Weyl tensors across Σ."""

__version__ = "0.1.0"

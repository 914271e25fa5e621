"""Simulation and reconstruction of spatially entangled photon pairs.

Sub-modules
-----------
biphoton   double-Gaussian state, propagated widths, Fedorov ratio
optics     Fresnel propagation, lens folding, double-slit interference
camera     photon-counting frames, blooming, BPF1 stacks
recon      pair-correlation estimator and its reductions
fitting    Gaussian and double-Gaussian least squares
denoise    band-pass, wavelet, total-variation and bloom cleaning
analysis   marginals, excess correlation, visibility, Fedorov sweeps
"""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .biphoton import (DGSource, fedorov_analytic, jpd_analytic, schmidt_number, widths_at,
                       z_phase)
from .fields import JPD2, ComplexField2D, Density1D, Grid
from .kernels import BACKEND

__all__ = ["DGSource", "Grid", "JPD2", "ComplexField2D", "Density1D", "fedorov_analytic",
           "jpd_analytic", "schmidt_number", "widths_at", "z_phase", "BACKEND", "__version__"]

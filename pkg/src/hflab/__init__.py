"""
hflab: numerical laboratory for heat-flow monotonicity of gaussian
products, multilinear Kakeya overlap ratios and joints of lines in R^3.
"""
__version__ = "0.1.0"

from . import errors, matcore, grid, reduce, gaussflow, perturbflow, tubes, joints, io, corpus

__all__ = ["errors", "matcore", "grid", "reduce", "gaussflow", "perturbflow", "tubes",
           "joints", "io", "corpus", "__version__"]

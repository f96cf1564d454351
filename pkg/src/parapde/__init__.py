"""Discovery of PDEs with parametric (time- or space-varying) coefficients."""
from .differentiate import CENTRAL_FD, SPECTRAL, DiffMethod, derivative, poly_smooth
from .features import (BlockSystem, LibrarySpec, build_blocks, build_blocks_2d, denormalize,
                       split_validation)
from .fields import (Field1D, Field2D, Grid1D, Grid2D, NoiseSpec, add_noise, load_dataset,
                     save_dataset, subsample_points)
from .selection import SweepResult, aic_loss, sweep
from .simulate import SimConfig, default_config, solve
from .solvers import GlassoParams, ParametricModel, SgtrParams, glasso, sgtr

__version__ = "0.1.0"

__all__ = [
    "CENTRAL_FD", "SPECTRAL", "DiffMethod", "derivative", "poly_smooth",
    "BlockSystem", "LibrarySpec", "build_blocks", "build_blocks_2d", "denormalize",
    "split_validation",
    "Field1D", "Field2D", "Grid1D", "Grid2D", "NoiseSpec", "add_noise", "load_dataset",
    "save_dataset", "subsample_points",
    "SweepResult", "aic_loss", "sweep",
    "SimConfig", "default_config", "solve",
    "GlassoParams", "ParametricModel", "SgtrParams", "glasso", "sgtr",
]

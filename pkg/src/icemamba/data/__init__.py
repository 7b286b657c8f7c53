"""Grid IO, geometry, preprocessing, splits, and synthetic data generation."""

from .geo import EARTH_RADIUS_M, grid_latlon, laea_inverse, laea_project, regrid_bilinear
from .gridio import GridSeries, read_imgr, write_imgr
from .pipeline import (
    AssembledSample,
    NormStats,
    Splits,
    VariableSpec,
    assemble_sample,
    climatology_and_anomaly,
    default_specs,
    detrend_linear,
    fill_pole_hole,
    fit_norm_stats,
    make_splits,
    normalize,
    preprocess,
)
from .synthetic import generate_synthetic

__all__ = [
    "AssembledSample",
    "EARTH_RADIUS_M",
    "GridSeries",
    "NormStats",
    "Splits",
    "VariableSpec",
    "assemble_sample",
    "climatology_and_anomaly",
    "default_specs",
    "detrend_linear",
    "fill_pole_hole",
    "fit_norm_stats",
    "generate_synthetic",
    "grid_latlon",
    "laea_inverse",
    "laea_project",
    "make_splits",
    "normalize",
    "preprocess",
    "read_imgr",
    "regrid_bilinear",
    "write_imgr",
]

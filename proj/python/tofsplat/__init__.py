"""Time-of-flight Gaussian splatting: simulate, fit, evaluate, render."""

from ._core import (
    builtin_scene_names,
    dataset_info,
    evaluate,
    fit_dataset,
    gradcheck,
    quad_basis,
    quad_to_depth,
    render_timestep,
    simulate_dataset,
    unambiguous_range,
)

__all__ = [
    "builtin_scene_names",
    "dataset_info",
    "evaluate",
    "fit_dataset",
    "gradcheck",
    "quad_basis",
    "quad_to_depth",
    "render_timestep",
    "simulate_dataset",
    "unambiguous_range",
]

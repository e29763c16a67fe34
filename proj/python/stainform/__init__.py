"""Reference-based stain normalization.

Images are (H, W, 3) uint8 arrays, feature maps (C, H, W) float32, and
coefficient fields a pair of (3, H, W) float32 arrays.
"""

from ._stainform import (
    ConvergenceError,
    StainformError,
    apply_ab,
    bds_vote,
    builtin_features,
    chi_square,
    downsample,
    gray_world,
    guided_filter_upscale,
    load_fmap,
    luminance,
    luminance_histogram,
    patchmatch,
    read_image,
    save_fmap,
    solve_ab,
    standardize,
    transfer,
    write_image,
)

__all__ = [
    "ConvergenceError",
    "StainformError",
    "apply_ab",
    "bds_vote",
    "builtin_features",
    "chi_square",
    "downsample",
    "gray_world",
    "guided_filter_upscale",
    "load_fmap",
    "luminance",
    "luminance_histogram",
    "patchmatch",
    "read_image",
    "save_fmap",
    "solve_ab",
    "standardize",
    "transfer",
    "write_image",
]

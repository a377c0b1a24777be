"""Python bindings for the SVAN super-resolution core.

Arrays are float64 in (n, c, h, w) layout with RGB values in [0, 1].
"""

from ._svan import (
    ConfigError,
    CorruptFileError,
    DimensionError,
    IoError,
    NumericError,
    Params,
    SvanError,
    UnsupportedError,
    UsageError,
    bicubic_resize,
    conv2d,
    count_flops,
    count_params,
    forward,
    gelu,
    init_params,
    load_checkpoint,
    load_png,
    num_threads,
    pixel_norm,
    pixel_shuffle,
    pixel_unshuffle,
    psnr_y,
    rgb_to_y,
    save_checkpoint,
    save_png,
    set_num_threads,
    ssim,
    ssim_y,
    table3,
)

__all__ = [name for name in dir() if not name.startswith("_")]

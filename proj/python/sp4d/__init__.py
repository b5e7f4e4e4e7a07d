"""4D Gaussian splatting: time-conditioned rendering and optimization."""

from ._sp4d import (
    Cloud,
    Dataset,
    build_cov4,
    eval_sh,
    evaluate,
    load_checkpoint,
    load_dataset,
    make_synthetic,
    psnr,
    render_frame,
    rotor_to_matrix,
    save_checkpoint,
    ssim,
    train,
    write_dataset,
)

__all__ = [
    "Cloud",
    "Dataset",
    "build_cov4",
    "eval_sh",
    "evaluate",
    "load_checkpoint",
    "load_dataset",
    "make_synthetic",
    "psnr",
    "render_frame",
    "rotor_to_matrix",
    "save_checkpoint",
    "ssim",
    "train",
    "write_dataset",
]

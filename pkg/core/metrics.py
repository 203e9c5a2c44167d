"""
Image Quality Metrics

Pure Python implementation - NO Django imports.
PSNR and SSIM on [0, 1] images via scikit-image.
"""
import numpy as np
from skimage.metrics import mean_squared_error, structural_similarity

from core.errors import InvalidArgumentError
from core.imaging import ImageBuffer


PSNR_CAP_DB = 100.0
MSE_FLOOR = 1e-10


def _check_sizes(a: ImageBuffer, b: ImageBuffer) -> None:
    if a.values.shape != b.values.shape:
        raise InvalidArgumentError(f"Image sizes differ: {a.values.shape} vs {b.values.shape}")


def psnr(a: ImageBuffer, b: ImageBuffer, mask: np.ndarray | None = None) -> float:
    """
    Peak signal-to-noise ratio for unit-range images, capped at 100 dB.

    Args:
        a: First image
        b: Second image
        mask: Optional H x W mask restricting the pixels compared

    Returns:
        PSNR in dB
    """
    _check_sizes(a, b)
    if mask is None:
        mse = mean_squared_error(a.values, b.values)
    else:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise InvalidArgumentError("PSNR mask selects no pixels")
        mse = mean_squared_error(a.values[mask], b.values[mask])
    if mse < MSE_FLOOR:
        return PSNR_CAP_DB
    return float(min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse)))


def ssim(a: ImageBuffer, b: ImageBuffer) -> float:
    """Structural similarity with an 11x11 Gaussian window (sigma 1.5) and the standard constants."""
    _check_sizes(a, b)
    if min(a.height, a.width) < 11:
        raise InvalidArgumentError("SSIM needs images of at least 11 x 11 pixels")
    return float(structural_similarity(
        a.values,
        b.values,
        channel_axis=-1,
        data_range=1.0,
        gaussian_weights=True,
        sigma=1.5,
        use_sample_covariance=False,
    ))

"""Built-in full-reference frame quality kernels: PSNR, SSIM, GMSD.

All three operate on 8-bit single-plane (luma) frames. Anything fancier
(MS-SSIM, VMAF, ...) enters the pipeline as a precomputed trace CSV instead.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import correlate1d
from scipy.signal import convolve2d

from .errors import IoError, LengthMismatch
from .traces import TimeSeries

# PSNR of identical frames is capped here instead of +inf so downstream
# networks always see finite inputs.
PSNR_CAP_DB = 100.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255.0) ** 2
SSIM_C2 = (0.03 * 255.0) ** 2

GMSD_C = 170.0

METRICS = ("psnr", "ssim", "gmsd")


def _check_frame_pair(reference: np.ndarray, distorted: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ref = np.asarray(reference)
    dist = np.asarray(distorted)
    for name, img in (("reference", ref), ("distorted", dist)):
        if img.ndim != 2:
            raise ValueError(f"{name} frame must be 2-D, got shape {img.shape}")
        if img.dtype != np.uint8:
            raise ValueError(f"{name} frame must be 8-bit (uint8), got {img.dtype}")
    if ref.shape != dist.shape:
        raise ValueError(f"frame shapes differ: {ref.shape} vs {dist.shape}")
    h, w = ref.shape
    if h < 32 or w < 32:
        raise ValueError(f"frames must be at least 32x32, got {h}x{w}")
    return ref, dist


def psnr_frame(reference: np.ndarray, distorted: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over the luma plane (peak = 255)."""
    ref, dist = _check_frame_pair(reference, distorted)
    diff = ref.astype(np.float64) - dist.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(255.0**2 / mse))


def _gaussian_kernel_1d(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2
    x = np.arange(size) - half
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _gaussian_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    # separable filter, then crop the border so only full-support (valid)
    # windows remain
    r = (k.size - 1) // 2
    out = correlate1d(img, k, axis=0, mode="constant")
    out = correlate1d(out, k, axis=1, mode="constant")
    return out[r:-r, r:-r]


def ssim_frame(reference: np.ndarray, distorted: np.ndarray) -> float:
    """Mean structural similarity with the canonical parameterization:
    11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, L=255, valid-region
    filtering only (no padded windows enter the mean)."""
    ref, dist = _check_frame_pair(reference, distorted)
    x = ref.astype(np.float64)
    y = dist.astype(np.float64)
    k = _gaussian_kernel_1d(SSIM_WINDOW, SSIM_SIGMA)
    mu_x = _gaussian_valid(x, k)
    mu_y = _gaussian_valid(y, k)
    var_x = _gaussian_valid(x * x, k) - mu_x * mu_x
    var_y = _gaussian_valid(y * y, k) - mu_y * mu_y
    cov = _gaussian_valid(x * y, k) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(np.mean(num / den))


_PREWITT_X = np.array([[1.0, 0.0, -1.0]] * 3) / 3.0
_PREWITT_Y = _PREWITT_X.T


def _block_mean_2x2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    h -= h % 2
    w -= w % 2
    v = img[:h, :w]
    return (v[0::2, 0::2] + v[1::2, 0::2] + v[0::2, 1::2] + v[1::2, 1::2]) / 4.0


def gmsd_frame(reference: np.ndarray, distorted: np.ndarray) -> float:
    """Gradient-magnitude similarity deviation; 0 means identical, lower is
    better. Frames are 2x2 block-mean downsampled, gradients use 3x3 Prewitt
    operators (zero-padded same-size convolution), and the score is the
    population standard deviation of the similarity map with c = 170."""
    ref, dist = _check_frame_pair(reference, distorted)
    x = _block_mean_2x2(ref.astype(np.float64))
    y = _block_mean_2x2(dist.astype(np.float64))
    gx = np.hypot(
        convolve2d(x, _PREWITT_X, mode="same", boundary="fill"),
        convolve2d(x, _PREWITT_Y, mode="same", boundary="fill"),
    )
    gy = np.hypot(
        convolve2d(y, _PREWITT_X, mode="same", boundary="fill"),
        convolve2d(y, _PREWITT_Y, mode="same", boundary="fill"),
    )
    gms = (2.0 * gx * gy + GMSD_C) / (gx * gx + gy * gy + GMSD_C)
    return float(np.std(gms))


_FRAME_METRICS = {"psnr": psnr_frame, "ssim": ssim_frame, "gmsd": gmsd_frame}


def extract_trace(ref_frames: Sequence[np.ndarray],
                  dist_frames: Sequence[np.ndarray],
                  metric: str, fps: float) -> TimeSeries:
    """Per-frame quality trace for a sequence of frame pairs (dt = 1/fps)."""
    if metric not in _FRAME_METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    if len(ref_frames) != len(dist_frames):
        raise LengthMismatch(
            f"{len(ref_frames)} reference frames vs {len(dist_frames)} distorted"
        )
    if len(ref_frames) == 0:
        raise LengthMismatch("need at least one frame pair")
    if not fps > 0:
        raise ValueError(f"fps must be > 0, got {fps}")
    fn = _FRAME_METRICS[metric]
    values = np.array([fn(r, d) for r, d in zip(ref_frames, dist_frames)])
    return TimeSeries(values, dt=1.0 / fps, t0=0.0)


def read_y_frames(path: str | Path, width: int, height: int) -> np.ndarray:
    """Load a headerless planar 8-bit Y-only file as an (n, height, width)
    array. Frame k occupies bytes [k*W*H, (k+1)*W*H)."""
    data = np.fromfile(str(path), dtype=np.uint8)
    frame_size = width * height
    if frame_size <= 0:
        raise ValueError("width and height must be positive")
    if data.size == 0:
        raise IoError(f"raw video {path} is empty")
    if data.size % frame_size != 0:
        raise IoError(
            f"raw video {path}: size {data.size} is not a multiple of "
            f"frame size {frame_size} ({width}x{height})"
        )
    return data.reshape(-1, height, width)

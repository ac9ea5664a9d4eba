"""PSNR and single-scale SSIM, with masked (dynamic-only) variants."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 1.0


def psnr(a, b, mask=None) -> float:
    """10*log10(1/MSE) for images in [0,1]; identical images cap at 99 dB.

    The optional mask (H x W bool) restricts the MSE to masked pixels.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: {a.shape} vs {b.shape}")
    err = (a - b) ** 2
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ShapeError("psnr: empty mask")
        err = err[..., mask] if err.ndim == 3 else err[mask]
    mse = float(err.mean())
    if mse <= 0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, mask=None) -> float:
    """Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1=0.01,
    K2=0.03, L=1, over valid (fully interior) windows; channel scores are
    averaged. The masked variant keeps windows whose center pixel is masked.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    c, h, w = a.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ShapeError(f"ssim: image {h}x{w} smaller than the {SSIM_WINDOW} window")
    win = _gaussian_window()
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2

    half = SSIM_WINDOW // 2
    if mask is not None:
        m = np.asarray(mask, dtype=bool)[half:h - half, half:w - half]
        if not m.any():
            raise ShapeError("ssim: empty mask")
    else:
        m = None

    scores = []
    for ch in range(c):
        wa = sliding_window_view(a[ch], (SSIM_WINDOW, SSIM_WINDOW))
        wb = sliding_window_view(b[ch], (SSIM_WINDOW, SSIM_WINDOW))
        mu_a = np.einsum("ijkl,kl->ij", wa, win)
        mu_b = np.einsum("ijkl,kl->ij", wb, win)
        ex_aa = np.einsum("ijkl,kl->ij", wa * wa, win)
        ex_bb = np.einsum("ijkl,kl->ij", wb * wb, win)
        ex_ab = np.einsum("ijkl,kl->ij", wa * wb, win)
        # written so that a == b gives numerator == denominator bit-exactly
        var_a = ex_aa - mu_a * mu_a
        var_b = ex_bb - mu_b * mu_b
        cov = ex_ab - mu_a * mu_b
        s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / \
            ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
        scores.append(float(s[m].mean()) if m is not None else float(s.mean()))
    return float(np.mean(scores))

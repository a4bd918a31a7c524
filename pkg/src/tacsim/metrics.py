"""Image comparison metrics: MSE, PSNR, SSIM, and global alignment.

All metrics treat images as 8-bit RGB arrays of shape (h, w, 3). Pairs are
typically preprocessed with :func:`align_crop`, which searches integer
offsets for the best normalized cross-correlation on luma and crops both
images to the overlapping region, compensating the global shift between
nominally identical viewpoints.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import AlignmentError, ConfigurationError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 255.0
MIN_OVERLAP = 16


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    psnr_db: float
    ssim: float
    offset: tuple[int, int]  # (x, y) displacement of b relative to a


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 3 or a.shape[2] != 3 or b.ndim != 3 or b.shape[2] != 3:
        raise ConfigurationError("images must have shape (h, w, 3)")
    if a.shape != b.shape:
        raise ConfigurationError(
            f"image dimensions differ: {a.shape[:2]} vs {b.shape[:2]}")
    return a.astype(np.float64), b.astype(np.float64)


def luma(image: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of an RGB image as float64."""
    img = np.asarray(image, dtype=np.float64)
    return img @ np.asarray(LUMA_WEIGHTS)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean over all pixels and channels of squared 8-bit differences."""
    fa, fb = _check_pair(a, b)
    return float(np.mean((fa - fb) ** 2))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; identical images give +inf."""
    err = mse(a, b)
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(DYNAMIC_RANGE ** 2 / err))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def _ssim_channel(a: np.ndarray, b: np.ndarray, window: np.ndarray) -> float:
    mu_a = fftconvolve(a, window, mode="valid")
    mu_b = fftconvolve(b, window, mode="valid")
    var_a = fftconvolve(a * a, window, mode="valid") - mu_a * mu_a
    var_b = fftconvolve(b * b, window, mode="valid") - mu_b * mu_b
    cov = fftconvolve(a * b, window, mode="valid") - mu_a * mu_b
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity, 11x11 Gaussian window, averaged over channels."""
    fa, fb = _check_pair(a, b)
    h, w = fa.shape[:2]
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ConfigurationError(
            f"image {w}x{h} smaller than SSIM window {SSIM_WINDOW}")
    window = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    return float(np.mean([_ssim_channel(fa[:, :, c], fb[:, :, c], window)
                          for c in range(3)]))


def _overlap_slices(shape: tuple[int, int], ox: int, oy: int):
    """Index slices of a and b overlapping under b = a displaced by (ox, oy)."""
    h, w = shape
    ay0, ay1 = max(0, -oy), h - max(0, oy)
    ax0, ax1 = max(0, -ox), w - max(0, ox)
    by0, bx0 = ay0 + oy, ax0 + ox
    a_sl = (slice(ay0, ay1), slice(ax0, ax1))
    b_sl = (slice(by0, by0 + (ay1 - ay0)), slice(bx0, bx0 + (ax1 - ax0)))
    return a_sl, b_sl, (ay1 - ay0, ax1 - ax0)


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0.0:
        return 1.0  # both patches constant: trivially aligned
    return float((a * b).sum() / denom)


def align_crop(a: np.ndarray, b: np.ndarray, max_shift: int = 20):
    """Find the integer offset of b relative to a and crop both to overlap.

    Exhaustive search over [-max_shift, max_shift]^2 maximizing normalized
    cross-correlation of the luma channels. Ties prefer the smallest shift
    magnitude so identical images always report (0, 0). Returns
    ``(a_crop, b_crop, (offset_x, offset_y))``.
    """
    fa, fb = _check_pair(a, b)
    if max_shift < 0:
        raise ConfigurationError("max_shift must be >= 0")
    la, lb = luma(fa), luma(fb)
    h, w = la.shape

    best = None
    for oy in range(-max_shift, max_shift + 1):
        for ox in range(-max_shift, max_shift + 1):
            a_sl, b_sl, (oh, ow) = _overlap_slices((h, w), ox, oy)
            if oh < MIN_OVERLAP or ow < MIN_OVERLAP:
                continue
            score = _ncc(la[a_sl], lb[b_sl])
            key = (score, -(ox * ox + oy * oy), -oy, -ox)
            if best is None or key > best[0]:
                best = (key, (ox, oy))
    if best is None:
        raise AlignmentError(
            f"no offset within {max_shift} px leaves a "
            f"{MIN_OVERLAP}x{MIN_OVERLAP} overlap for {w}x{h} images")

    ox, oy = best[1]
    a_sl, b_sl, _ = _overlap_slices((h, w), ox, oy)
    ai = np.asarray(a)[a_sl[0], a_sl[1]]
    bi = np.asarray(b)[b_sl[0], b_sl[1]]
    return ai, bi, (ox, oy)


def compare_images(a: np.ndarray, b: np.ndarray,
                   max_shift: int = 20) -> MetricsReport:
    """Align, crop, and evaluate all three metrics on an image pair."""
    ac, bc, offset = align_crop(a, b, max_shift=max_shift)
    return MetricsReport(mse=mse(ac, bc), psnr_db=psnr(ac, bc),
                         ssim=ssim(ac, bc), offset=offset)


CSV_HEADER = "case,offset_x,offset_y,mse,psnr_db,ssim"


def _fmt(value: float) -> str:
    if not np.isfinite(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))


def _fmt_pm(values: list[float]) -> str:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        return "inf"
    return f"{arr.mean():.4f}±{arr.std():.4f}"


def format_report(rows: list[tuple[str, MetricsReport]],
                  summary: bool = True) -> str:
    """Render comparison rows as CSV text, optionally with a summary row.

    The summary row reports mean ± standard deviation per metric in the
    style of the evaluation tables; it is omitted when ``rows`` is empty.
    """
    lines = [CSV_HEADER]
    for case, rep in rows:
        lines.append(",".join([
            case, str(rep.offset[0]), str(rep.offset[1]),
            _fmt(rep.mse), _fmt(rep.psnr_db), _fmt(rep.ssim)]))
    if summary and rows:
        reps = [r for _, r in rows]
        lines.append(",".join([
            "summary",
            _fmt_pm([r.offset[0] for r in reps]),
            _fmt_pm([r.offset[1] for r in reps]),
            _fmt_pm([r.mse for r in reps]),
            _fmt_pm([r.psnr_db for r in reps]),
            _fmt_pm([r.ssim for r in reps])]))
    return "\n".join(lines) + "\n"

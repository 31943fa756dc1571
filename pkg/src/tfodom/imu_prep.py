"""Inertial preprocessing: polynomial smoothing of the raw channels and
construction of the fixed-size normalized signal image fed to the
network's inertial branch."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["ImuSample", "ImuImage", "ImuImageConfig", "savgol_coefficients",
           "savgol_filter", "build_imu_image", "save_imu_preview"]


@dataclass(frozen=True)
class ImuSample:
    """One inertial measurement: timestamp [s], linear acceleration
    [m/s^2] and angular velocity [rad/s]."""
    timestamp: float
    accel: np.ndarray
    gyro: np.ndarray

    def row(self) -> np.ndarray:
        return np.concatenate([self.accel, self.gyro])


@dataclass(frozen=True)
class ImuImageConfig:
    """Signal-image geometry and the frozen normalization statistics.

    ``channel_min``/``channel_max`` are dataset-level per-channel bounds
    (ax, ay, az, wx, wy, wz) computed once over the training split.
    """
    gamma: int = 10
    height: int = 64
    width: int = 64
    channel_min: np.ndarray = field(default_factory=lambda: np.full(6, -1.0))
    channel_max: np.ndarray = field(default_factory=lambda: np.full(6, 1.0))

    def normalize(self, rows: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.channel_min, dtype=float)
        hi = np.asarray(self.channel_max, dtype=float)
        span = np.where(hi > lo, hi - lo, 1.0)
        out = 2.0 * (rows - lo) / span - 1.0
        return np.clip(out, -1.0, 1.0)

    def denormalize(self, rows: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.channel_min, dtype=float)
        hi = np.asarray(self.channel_max, dtype=float)
        span = np.where(hi > lo, hi - lo, 1.0)
        return (rows + 1.0) * 0.5 * span + lo


@dataclass
class ImuImage:
    """Raw gamma x 6 measurement block and its normalized resized image."""
    raw: np.ndarray      # gamma x 6
    image: np.ndarray    # 3 x H x W, values in [-1, 1]

    @property
    def gamma(self) -> int:
        return self.raw.shape[0]


def savgol_coefficients(window: int, order: int) -> np.ndarray:
    """Least-squares smoothing weights for the window centre.

    Fitting a degree-``order`` polynomial to ``window`` equally spaced
    samples and evaluating it at the centre is a fixed linear map; the
    weights are the first row of the pseudo-inverse of the Vandermonde
    design matrix.
    """
    if window % 2 == 0 or window < 1:
        raise ValueError(f"savgol: window must be odd and positive, got {window}")
    if order >= window:
        raise ValueError(f"savgol: order {order} must be smaller than window {window}")
    half = window // 2
    positions = np.arange(-half, half + 1, dtype=float)
    design = np.vander(positions, order + 1, increasing=True)
    return np.linalg.pinv(design)[0]


def savgol_filter(signal: np.ndarray, window: int = 5, order: int = 2) -> np.ndarray:
    """Savitzky-Golay smoothing per channel with mirror-padded edges.

    ``signal`` is [N] or [N, C]; returns the same shape. Mirror padding
    reflects about the end samples without repeating them.
    """
    x = np.asarray(signal, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    n = x.shape[0]
    if n < window:
        raise ValueError(f"savgol: series length {n} is shorter than window {window}")
    coeffs = savgol_coefficients(window, order)
    half = window // 2
    padded = np.concatenate([x[half:0:-1], x, x[n - 2:n - 2 - half:-1]], axis=0)
    out = np.zeros_like(x)
    for k in range(window):
        out += coeffs[k] * padded[k:k + n]
    return out[:, 0] if squeeze else out


def _resize_bilinear(rows: np.ndarray, height: int, width: int) -> np.ndarray:
    """Fixed (non-learnable) linear interpolation to the target size."""
    from .diffcore import ops as dops
    mh = dops._interp_matrix(rows.shape[0], height, rows.dtype)
    mw = dops._interp_matrix(rows.shape[1], width, rows.dtype)
    return mh @ rows @ mw.T


def build_imu_image(samples, cfg: ImuImageConfig) -> ImuImage:
    """Assemble the signal image for the measurements between two scans.

    Rows are resampled to exactly ``gamma`` by linear interpolation in
    time (identity when exactly gamma samples arrive), normalized to
    [-1, 1] with the frozen per-channel statistics, enlarged to the
    target size with fixed linear interpolation, and replicated to three
    channels.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError(f"build_imu_image: need at least 2 samples, got {len(samples)}")
    times = np.array([s.timestamp for s in samples])
    if np.any(np.diff(times) <= 0):
        raise ValueError("build_imu_image: timestamps must be strictly increasing")
    rows = np.stack([s.row() for s in samples])

    if len(samples) == cfg.gamma:
        raw = rows.copy()
    else:
        target = np.linspace(times[0], times[-1], cfg.gamma)
        raw = np.stack([np.interp(target, times, rows[:, c]) for c in range(6)], axis=1)

    norm = cfg.normalize(raw)
    image = _resize_bilinear(norm, cfg.height, cfg.width)
    return ImuImage(raw=raw, image=np.repeat(image[None], 3, axis=0))


def save_imu_preview(imu: ImuImage, path) -> None:
    """PNG with raw rows (left, nearest-upsampled) beside the resized image."""
    from PIL import Image
    h, w = imu.image.shape[1:]
    lo, hi = imu.raw.min(), imu.raw.max()
    raw01 = (imu.raw - lo) / (hi - lo) if hi > lo else np.full_like(imu.raw, 0.5)
    ridx = np.minimum((np.arange(h) * imu.raw.shape[0]) // h, imu.raw.shape[0] - 1)
    cidx = np.minimum((np.arange(w) * 6) // w, 5)
    raw_up = raw01[np.ix_(ridx, cidx)]
    panel = np.concatenate([raw_up, (imu.image[0] + 1.0) * 0.5], axis=1)
    Image.fromarray((panel * 255).astype(np.uint8), mode="L").save(path)

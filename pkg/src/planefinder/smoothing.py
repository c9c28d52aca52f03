"""Edge-preserving L0 gradient-minimization smoothing of grayscale frames."""

import math
from dataclasses import dataclass

import numpy as np
from numpy.fft import fft2, ifft2

from .volume import PlaneSequence


class SmoothingError(Exception):
    pass


@dataclass(frozen=True)
class SmoothingConfig:
    lam: float = 0.02
    kappa: float = 2.0
    beta0: float = None
    beta_max: float = 1e5

    def __post_init__(self):
        if self.beta0 is None:
            object.__setattr__(self, "beta0", 2.0 * self.lam)
        if self.lam <= 0 or self.kappa <= 1 or self.beta0 <= 0 or self.beta_max <= self.beta0:
            raise SmoothingError("invalid smoothing parameters")

    @property
    def n_iterations(self):
        return int(math.ceil(math.log(self.beta_max / self.beta0) / math.log(self.kappa)))


def forward_diff(img):
    """Periodic forward differences (dx, dy) matching the Fourier solve."""
    dx = np.roll(img, -1, axis=1) - img
    dy = np.roll(img, -1, axis=0) - img
    return dx, dy


def divergence(h, v):
    """Adjoint of forward_diff: dx^T h + dy^T v under periodic wrap."""
    return (np.roll(h, 1, axis=1) - h) + (np.roll(v, 1, axis=0) - v)


def gradient_count(img, tol=1e-6):
    """Number of pixels with a nonzero (above tol) forward gradient."""
    dx, dy = forward_diff(img)
    return int(np.count_nonzero(np.abs(dx) + np.abs(dy) > tol))


def l0_smooth(image, config=None):
    """Half-quadratic L0 gradient minimization with exact periodic FFT solves.

    Minimizes sum_p (S_p - I_p)^2 + lam * #{p : |dxS_p| + |dyS_p| != 0}.
    """
    if config is None:
        config = SmoothingConfig()
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise SmoothingError("expected a 2D grayscale image")
    if not np.all(np.isfinite(img)):
        raise SmoothingError("non-finite input pixels")

    s = img.copy()
    beta = config.beta0
    while beta <= config.beta_max:
        h, v = threshold_gradients(s, config.lam, beta)
        s = solve_screened_poisson(img, h, v, beta)
        beta *= config.kappa
    return s


def threshold_gradients(s, lam, beta):
    """(h, v) subproblem: keep the gradient where its energy exceeds lam/beta,
    zero it otherwise."""
    h, v = forward_diff(s)
    keep = h * h + v * v > lam / beta
    h *= keep
    v *= keep
    return h, v


def solve_screened_poisson(img, h, v, beta):
    """Exact periodic solve of min_S ||S-I||^2 + beta(||dxS-h||^2+||dyS-v||^2)."""
    ny, nx = img.shape
    otf_dx = fft2(_diff_kernel(ny, nx, axis=1))
    otf_dy = fft2(_diff_kernel(ny, nx, axis=0))
    denom = 1.0 + beta * (np.abs(otf_dx) ** 2 + np.abs(otf_dy) ** 2)
    numer = fft2(img) + beta * (np.conj(otf_dx) * fft2(h) + np.conj(otf_dy) * fft2(v))
    return np.real(ifft2(numer / denom))


def _diff_kernel(ny, nx, axis):
    # circular-convolution kernel whose application equals forward_diff
    k = np.zeros((ny, nx))
    k[0, 0] = -1.0
    if axis == 1:
        k[0, nx - 1] = 1.0
    else:
        k[ny - 1, 0] = 1.0
    return k


def smooth_sequence(seq, config=None):
    """Filter every frame of a plane sequence independently."""
    frames = np.stack([l0_smooth(f, config) for f in seq.frames])
    return PlaneSequence(params=seq.params, frames=frames)

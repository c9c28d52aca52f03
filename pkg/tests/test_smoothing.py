import math

import numpy as np
import pytest

from planefinder.smoothing import (SmoothingConfig, SmoothingError, forward_diff,
                                   divergence, gradient_count, l0_smooth,
                                   smooth_sequence, solve_screened_poisson,
                                   threshold_gradients)
from planefinder.volume import PlaneParams, PlaneSequence


def step_image(rng, sigma=0.05):
    img = np.full((64, 64), 0.2)
    img[:, 32:] = 0.8
    return np.clip(img + rng.normal(0.0, sigma, img.shape), 0.0, 1.0)


def test_config_iteration_count():
    cfg = SmoothingConfig(lam=0.02, kappa=2.0, beta_max=1e5)
    assert cfg.beta0 == pytest.approx(0.04)
    assert cfg.n_iterations == math.ceil(math.log(1e5 / 0.04) / math.log(2.0))
    assert cfg.n_iterations >= 1


def test_invalid_config():
    with pytest.raises(SmoothingError):
        SmoothingConfig(lam=-1.0)
    with pytest.raises(SmoothingError):
        SmoothingConfig(lam=0.02, kappa=0.5)


def test_lambda_zero_limit_is_identity():
    rng = np.random.default_rng(0)
    img = rng.random((32, 32))
    out = l0_smooth(img, SmoothingConfig(lam=1e-12))
    assert np.abs(out - img).max() <= 1e-6


def test_constant_image_unchanged():
    img = np.full((40, 40), 0.37)
    for lam in (0.005, 0.02, 0.1):
        out = l0_smooth(img, SmoothingConfig(lam=lam))
        assert np.abs(out - img).max() <= 1e-12


def test_non_finite_input_rejected():
    img = np.zeros((32, 32))
    img[3, 3] = np.nan
    with pytest.raises(SmoothingError):
        l0_smooth(img)


def test_step_image_gradient_count_collapses():
    # count with the half-quadratic's own final zero-gradient threshold:
    # sub-threshold Fourier dust cannot drop below ~1/sqrt(beta_max)
    rng = np.random.default_rng(42)
    noisy = step_image(rng)
    cfg = SmoothingConfig(lam=0.02)
    out = l0_smooth(noisy, cfg)
    # count above the residual dust floor of the final finite-beta solve
    tol = 1e-3
    c_in = gradient_count(noisy, tol=tol)
    c_out = gradient_count(out, tol=tol)
    assert c_out < 0.15 * c_in
    # step edge stays put
    col_in = np.argmax(np.abs(np.diff(noisy, axis=1)).sum(axis=0))
    col_out = np.argmax(np.abs(np.diff(out, axis=1)).sum(axis=0))
    assert col_out == col_in == 31


def test_gradient_count_monotone_in_lambda():
    rng = np.random.default_rng(42)
    noisy = step_image(rng)
    counts = []
    for lam in (0.005, 0.01, 0.02, 0.04, 0.08):
        out = l0_smooth(noisy, SmoothingConfig(lam=lam))
        counts.append(gradient_count(out, tol=1e-3))
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_output_range_bounded():
    rng = np.random.default_rng(1)
    noisy = step_image(rng)
    out = l0_smooth(noisy, SmoothingConfig(lam=0.02))
    assert out.min() >= noisy.min() - 0.1
    assert out.max() <= noisy.max() + 0.1


def test_hv_subproblem_pointwise_optimal():
    # the thresholded (h,v) beats the only alternative (zero vs copy) per pixel
    rng = np.random.default_rng(2)
    s = rng.random((24, 24))
    lam, beta = 0.02, 0.08
    h, v = threshold_gradients(s, lam, beta)
    dx, dy = forward_diff(s)
    cost_chosen = beta * ((dx - h) ** 2 + (dy - v) ** 2) \
        + lam * ((np.abs(h) + np.abs(v)) > 0)
    cost_zero = beta * (dx ** 2 + dy ** 2)
    cost_copy = np.full_like(cost_zero, lam)
    assert np.all(cost_chosen <= cost_zero + 1e-12)
    assert np.all(cost_chosen <= cost_copy + 1e-12)


def test_screened_poisson_normal_equations():
    rng = np.random.default_rng(3)
    img = rng.random((32, 32))
    beta = 4.0
    h, v = threshold_gradients(img, 0.02, beta)
    s = solve_screened_poisson(img, h, v, beta)
    dx, dy = forward_diff(s)
    lhs = s + beta * divergence(dx, dy)
    rhs = img + beta * divergence(h, v)
    assert np.abs(lhs - rhs).max() <= 1e-8


def _sequence(frames):
    p = PlaneParams(origin=(0, 0, 0), axis_u=(1, 0, 0), axis_v=(0, 1, 0),
                    width=frames.shape[2], height=frames.shape[1])
    return PlaneSequence(params=p, frames=frames)


def test_smooth_sequence_identical_frames():
    frame = np.random.default_rng(4).random((32, 32))
    seq = _sequence(np.stack([frame, frame]))
    out = smooth_sequence(seq, SmoothingConfig(lam=0.02))
    assert np.array_equal(out.frames[0], out.frames[1])
    assert out.params == seq.params


def test_smooth_single_frame_matches_l0():
    frame = np.random.default_rng(5).random((32, 32))
    cfg = SmoothingConfig(lam=0.02)
    out = smooth_sequence(_sequence(frame[None]), cfg)
    assert np.array_equal(out.frames[0], l0_smooth(frame, cfg))


def test_smooth_commutes_with_frame_permutation():
    frames = np.random.default_rng(6).random((3, 32, 32))
    cfg = SmoothingConfig(lam=0.02)
    perm = [2, 0, 1]
    a = smooth_sequence(_sequence(frames[perm]), cfg).frames
    b = smooth_sequence(_sequence(frames), cfg).frames[perm]
    assert np.array_equal(a, b)

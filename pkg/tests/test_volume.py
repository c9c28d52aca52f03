import os
import stat

import numpy as np
import pytest

from planefinder.phantom import PhantomSpec, synth_phantom
from planefinder.volume import (CANDIDATE_CAPACITY, PlaneParams, Volume4D,
                                VolumeError, extract_plane_sequence,
                                generate_candidates, load_volume, plane_angle,
                                plane_from_center, sample_plane, save_volume)


def write_raw_volume(tmp_path, dims=(4, 4, 4), frames=2, dtype="u8", payload=None):
    nx, ny, nz = dims
    raw = tmp_path / "vol.raw"
    if payload is None:
        payload = bytes(frames * nz * ny * nx)
    raw.write_bytes(payload)
    header = tmp_path / "vol.vol4"
    header.write_text(
        "dims=%d %d %d\nspacing=1 1 1\nframes=%d\ndtype=%s\ndata=vol.raw\n"
        % (nx, ny, nz, frames, dtype))
    return header


def test_load_u8_size_arithmetic(tmp_path):
    header = write_raw_volume(tmp_path)
    vol = load_volume(str(header))
    assert vol.voxels.size == 128
    assert vol.dims == (4, 4, 4)
    assert vol.n_frames == 2


def test_load_short_raw_errors(tmp_path):
    header = write_raw_volume(tmp_path, payload=bytes(127))
    with pytest.raises(VolumeError, match="mismatch"):
        load_volume(str(header))


def test_load_all_zero_u8_rescales_to_zero(tmp_path):
    header = write_raw_volume(tmp_path)
    vol = load_volume(str(header))
    assert np.all(vol.voxels == 0.0)


def test_load_missing_header():
    with pytest.raises(VolumeError):
        load_volume("/nonexistent/vol.vol4")


def test_roundtrip_u8_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    vox = rng.integers(0, 256, size=(3, 4, 5, 6)).astype(np.float64) / 255.0
    vol = Volume4D(voxels=vox)
    path = str(tmp_path / "rt.vol4")
    save_volume(vol, path, dtype="u8")
    back = load_volume(path)
    assert np.array_equal(back.voxels, vol.voxels)
    assert back.spacing == vol.spacing


def test_roundtrip_f32(tmp_path):
    rng = np.random.default_rng(1)
    vox = rng.random((2, 4, 4, 4)).astype(np.float32).astype(np.float64)
    vol = Volume4D(voxels=vox)
    path = str(tmp_path / "rt32.vol4")
    save_volume(vol, path, dtype="f32")
    back = load_volume(path)
    assert np.array_equal(back.voxels, vol.voxels)


def test_save_one_frame_header(tmp_path):
    vol = Volume4D(voxels=np.zeros((1, 4, 4, 4)))
    path = str(tmp_path / "one.vol4")
    save_volume(vol, path)
    assert "frames=1" in (tmp_path / "one.vol4").read_text()


def test_save_unwritable_destination(tmp_path):
    vol = Volume4D(voxels=np.zeros((1, 4, 4, 4)))
    with pytest.raises(VolumeError):
        save_volume(vol, str(tmp_path / "missing_dir" / "x.vol4"))


def test_sample_constant_volume():
    vol = Volume4D(voxels=np.full((1, 8, 8, 8), 0.7))
    p = plane_from_center((3.5, 3.5, 3.5), (0.3, 0.5, 0.8), width=6, height=6)
    img = sample_plane(vol, p, 0)
    assert np.allclose(img, 0.7, atol=1e-12)


def test_sample_linear_field_exact():
    nx = 8
    vox = np.zeros((1, 8, 8, nx))
    vox[:] = (np.arange(nx) / (nx - 1))[None, None, None, :]
    vol = Volume4D(voxels=vox)
    p = PlaneParams(origin=(0, 2, 2), axis_u=(1, 0, 0), axis_v=(0, 1, 0),
                    width=6, height=4, pixel_step=1.0)
    img = sample_plane(vol, p, 0)
    expected = (np.arange(6) / (nx - 1))[None, :]
    assert np.abs(img - expected).max() <= 1e-12


def test_sample_affine_field_exact():
    # trilinear interpolation reproduces any affine field inside the grid
    rng = np.random.default_rng(3)
    a, b, c, d = 0.1, 0.02, 0.03, 0.01
    xs, ys, zs = np.arange(8), np.arange(8), np.arange(8)
    zz, yy, xx = np.meshgrid(zs, ys, xs, indexing="ij")
    vox = (a + b * xx + c * yy + d * zz)[None]
    vol = Volume4D(voxels=vox)
    n = rng.normal(size=3)
    p = plane_from_center((3.5, 3.5, 3.5), n, width=5, height=5, pixel_step=0.7)
    img = sample_plane(vol, p, 0)
    o = np.asarray(p.origin)
    u = np.asarray(p.axis_u)
    v = np.asarray(p.axis_v)
    for r in range(5):
        for col in range(5):
            pt = o + 0.7 * (col * u + r * v)
            assert abs(img[r, col] - (a + b * pt[0] + c * pt[1] + d * pt[2])) <= 1e-12


def test_sample_at_voxel_center():
    rng = np.random.default_rng(4)
    vox = rng.random((1, 6, 6, 6))
    vol = Volume4D(voxels=vox)
    p = PlaneParams(origin=(2, 3, 4), axis_u=(1, 0, 0), axis_v=(0, 1, 0),
                    width=2, height=2)
    img = sample_plane(vol, p, 0)
    assert img[0, 0] == pytest.approx(vox[0, 4, 3, 2], abs=1e-15)


def test_sample_outside_is_zero():
    vol = Volume4D(voxels=np.full((1, 4, 4, 4), 1.0))
    p = PlaneParams(origin=(100, 100, 100), axis_u=(1, 0, 0), axis_v=(0, 1, 0),
                    width=4, height=4)
    assert np.all(sample_plane(vol, p, 0) == 0.0)


def test_sample_frame_out_of_range():
    vol = Volume4D(voxels=np.zeros((2, 4, 4, 4)))
    p = plane_from_center((1.5, 1.5, 1.5), (0, 0, 1), width=3, height=3)
    with pytest.raises(VolumeError):
        sample_plane(vol, p, 2)


def test_sampling_linear_in_volume():
    rng = np.random.default_rng(5)
    v1 = rng.random((1, 6, 6, 6)) * 0.5
    v2 = rng.random((1, 6, 6, 6)) * 0.5
    p = plane_from_center((2.5, 2.5, 2.5), (0.2, 0.3, 0.9), width=5, height=5)
    s1 = sample_plane(Volume4D(voxels=v1), p, 0)
    s2 = sample_plane(Volume4D(voxels=v2), p, 0)
    s12 = sample_plane(Volume4D(voxels=v1 + v2), p, 0)
    assert np.abs(s12 - (s1 + s2)).max() <= 1e-12


def test_extract_sequence_single_frame():
    vol = Volume4D(voxels=np.random.default_rng(6).random((1, 6, 6, 6)))
    p = plane_from_center((2.5, 2.5, 2.5), (0, 0, 1), width=4, height=4)
    seq = extract_plane_sequence(vol, p)
    assert seq.n_frames == 1


def test_extract_sequence_identical_frames():
    frame = np.random.default_rng(7).random((6, 6, 6))
    vol = Volume4D(voxels=np.stack([frame, frame, frame]))
    p = plane_from_center((2.5, 2.5, 2.5), (0.1, 0.9, 0.2), width=4, height=4)
    seq = extract_plane_sequence(vol, p)
    assert np.array_equal(seq.frames[0], seq.frames[1])
    assert np.array_equal(seq.frames[0], seq.frames[2])


def test_phantom_sequence_pulsates():
    vol, gt = synth_phantom(PhantomSpec(class_count=1, noise_sigma=0.0, seed=2,
                                        dims=(48, 48, 48), n_frames=6))
    seq = extract_plane_sequence(vol, gt[0])
    mad = np.abs(np.diff(seq.frames, axis=0)).mean()
    assert mad > 0


def test_candidates_deterministic():
    vol = Volume4D(voxels=np.zeros((1, 32, 32, 32)))
    a = generate_candidates(vol, 50, seed=9, width=32, height=32)
    b = generate_candidates(vol, 50, seed=9, width=32, height=32)
    assert a == b


def test_candidates_content_invariant():
    dims = np.zeros((1, 32, 32, 32))
    a = generate_candidates(Volume4D(voxels=dims), 40, seed=1, width=32, height=32)
    b = generate_candidates(Volume4D(voxels=np.random.default_rng(0).random(dims.shape)),
                            40, seed=1, width=32, height=32)
    assert a == b


def test_candidate_centers_inside_volume():
    vol = Volume4D(voxels=np.zeros((1, 40, 48, 56)))
    for p in generate_candidates(vol, 400, seed=0, width=48, height=48):
        c = p.center
        assert 0 <= c[0] <= 55 and 0 <= c[1] <= 47 and 0 <= c[2] <= 39


def test_candidate_orientations_distinct():
    vol = Volume4D(voxels=np.zeros((1, 32, 32, 32)))
    cands = generate_candidates(vol, 400, seed=0, width=32, height=32)
    normals = {tuple(np.round(p.normal, 12)) for p in cands}
    # 400 planes over 80 orientations x 5 offsets
    assert len(normals) == 80
    reps = [c for i, c in enumerate(cands) if i % 5 == 0]
    angles = [plane_angle(reps[i], reps[j])
              for i in range(len(reps)) for j in range(i + 1, len(reps))]
    assert min(angles) > 0


def test_candidate_capacity_error():
    vol = Volume4D(voxels=np.zeros((1, 32, 32, 32)))
    with pytest.raises(VolumeError, match=str(CANDIDATE_CAPACITY)):
        generate_candidates(vol, CANDIDATE_CAPACITY + 1, seed=0)


def test_plane_params_validation():
    with pytest.raises(VolumeError):
        PlaneParams(origin=(0, 0, 0), axis_u=(1, 0, 0), axis_v=(1, 0, 0))
    with pytest.raises(VolumeError):
        PlaneParams(origin=(0, 0, 0), axis_u=(2, 0, 0), axis_v=(0, 1, 0))


def test_phantom_deterministic():
    spec = PhantomSpec(class_count=2, noise_sigma=0.05, seed=12,
                       dims=(40, 40, 40), n_frames=4)
    v1, g1 = synth_phantom(spec)
    v2, g2 = synth_phantom(spec)
    assert np.array_equal(v1.voxels, v2.voxels)
    assert g1 == g2


def test_phantom_gt_plane_shows_pattern():
    vol, gt = synth_phantom(PhantomSpec(class_count=1, noise_sigma=0.0, seed=3,
                                        dims=(64, 64, 64), n_frames=4))
    seq = extract_plane_sequence(vol, gt[0])
    # the ground-truth plane carries substantial bright structure
    assert seq.frames[0].max() > 0.4
    from planefinder.phantom import BACKGROUND
    off_plane = plane_from_center(np.asarray(gt[0].center) + 15.0 * gt[0].normal,
                                  gt[0].normal, width=gt[0].width,
                                  height=gt[0].height)
    far = extract_plane_sequence(vol, off_plane)
    assert far.frames[0].max() < seq.frames[0].max()


def test_phantom_abnormal_differs_locally():
    base = dict(class_count=1, noise_sigma=0.0, seed=8, dims=(64, 64, 64), n_frames=3)
    v_norm, gt = synth_phantom(PhantomSpec(abnormal=False, **base))
    v_abn, _ = synth_phantom(PhantomSpec(abnormal=True, **base))
    diff = np.abs(v_abn.voxels - v_norm.voxels)
    assert diff.max() > 0.05
    # differences confined to the pattern neighborhood of the ground truth plane
    changed = np.argwhere(diff[0] > 1e-12)
    center = np.asarray(gt[0].center)  # (x, y, z)
    dist = np.abs(changed[:, ::-1] - center[None, :]).max(axis=1)
    from planefinder.phantom import NORMAL_SIGMA, PATTERN_EXTENT, PATTERN_SHIFT
    assert dist.max() <= PATTERN_SHIFT + PATTERN_EXTENT + 4 * NORMAL_SIGMA + 1


def test_phantom_class_count_limit():
    with pytest.raises(VolumeError):
        PhantomSpec(class_count=99)

import numpy as np
import pytest

from gesture_radar.radar_model import ArrayGeometry, BeatCube, RadarConfig, TargetCloud
from gesture_radar.sar_imaging import (ApertureScan, ImageGrid, SarImage, backproject, backproject_complex,
                                       box_mask, image_snr, raster_positions, read_pgm, simulate_aperture,
                                       write_pgm)

CFG = RadarConfig(n_k=32)
GEOM = ArrayGeometry.default(CFG)
Z = 0.4


def point_scan(targets, n=32, sigma=None, width=0.25):
    xyz = np.array([[x, y, Z] for x, y in targets])
    sig = np.ones(len(xyz)) if sigma is None else np.asarray(sigma, dtype=float)
    return simulate_aperture(TargetCloud(xyz, sig), raster_positions(width, width, n, n), GEOM, CFG)


@pytest.fixture(scope="module")
def grid():
    return ImageGrid.square(0.1, 41)


@pytest.fixture(scope="module")
def single(grid):
    scan = point_scan([(0.03, -0.02)])
    return scan, backproject(scan, grid, Z)


def test_point_target_peak_within_one_pixel(single, grid):
    _, img = single
    px, py = img.peak_position()
    dx, dy = grid.pixel_size
    assert abs(px - 0.03) <= dx and abs(py + 0.02) <= dy
    assert img.pixels.max() == pytest.approx(1.0)


def test_point_target_snr_tight_mask(single, grid):
    _, img = single
    mask = box_mask(grid, (0.02, 0.04), (-0.03, -0.01))
    assert image_snr(img, mask) > 10


def test_direct_and_fft_paths_agree(grid):
    scan = point_scan([(0.0, 0.01)], n=8)
    small = ImageGrid.square(0.05, 11)
    a = backproject_complex(scan, small, Z, method="direct")
    b = backproject_complex(scan, small, Z, method="fft")
    assert np.max(np.abs(a - b)) / np.max(np.abs(a)) < 0.02
    with pytest.raises(ValueError):
        backproject_complex(scan, small, Z, method="fourier")


def test_zero_cubes_give_zero_image(grid):
    k = np.linspace(1600, 1700, 16)
    vy = np.arange(8) * 1e-3
    cube = BeatCube(np.zeros((8, 16)), vy, vy, vy, k, mono_corrected=True)
    scan = ApertureScan(raster_positions(0.1, 0.1, 2, 2), [cube] * 4)
    img = backproject(scan, grid, Z)
    assert not img.pixels.any()
    assert img.scale == 0


def test_empty_and_uncorrected_scans_rejected():
    with pytest.raises(ValueError):
        ApertureScan(np.zeros((0, 2)), ())
    k = np.linspace(1600, 1700, 16)
    raw = BeatCube(np.zeros((1, 16)), [0.0], [0.0], [0.0], k)
    with pytest.raises(ValueError):
        ApertureScan(np.zeros((1, 2)), (raw,))


def test_two_targets_equal_peaks(grid):
    scan = point_scan([(-0.05, 0.0), (0.05, 0.0)])
    img = backproject(scan, grid, Z)
    a = img.pixels[grid.index_of(-0.05, 0.0)]
    b = img.pixels[grid.index_of(0.05, 0.0)]
    assert a == pytest.approx(b, rel=0.1)
    assert min(a, b) > 0.8


@pytest.mark.parametrize("shift", [(0.02, 0.0), (0.0, -0.03), (-0.025, 0.015)])
def test_translation_equivariance(single, grid, shift):
    _, base = single
    moved = backproject(point_scan([(0.03 + shift[0], -0.02 + shift[1])]), grid, Z)
    (x0, y0), (x1, y1) = base.peak_position(), moved.peak_position()
    dx, dy = grid.pixel_size
    assert abs((x1 - x0) - shift[0]) <= dx + 1e-12
    assert abs((y1 - y0) - shift[1]) <= dy + 1e-12


def test_complex_sum_linearity():
    g = ImageGrid.square(0.08, 17)
    pos = raster_positions(0.2, 0.2, 8, 8)
    a = simulate_aperture(TargetCloud(np.array([[0.02, 0.0, Z]]), np.ones(1)), pos, GEOM, CFG)
    b = simulate_aperture(TargetCloud(np.array([[-0.03, 0.04, Z]]), np.array([0.7])), pos, GEOM, CFG)
    summed = ApertureScan(pos, [BeatCube(ca.data + cb.data, ca.tx_y, ca.rx_y, ca.virtual_y, ca.k_grid,
                                         mono_corrected=True) for ca, cb in zip(a.cubes, b.cubes)])
    for method in ("fft", "direct"):
        ia = backproject_complex(a, g, Z, method)
        ib = backproject_complex(b, g, Z, method)
        isum = backproject_complex(summed, g, Z, method)
        np.testing.assert_allclose(np.abs(isum), np.abs(ia + ib), rtol=1e-9, atol=1e-9 * np.abs(isum).max())


def test_reflectivity_scales_peak(grid):
    a = backproject(point_scan([(0.0, 0.0)], n=12), grid, Z)
    b = backproject(point_scan([(0.0, 0.0)], n=12, sigma=[3.0]), grid, Z)
    assert b.scale / a.scale == pytest.approx(3.0, rel=0.01)
    np.testing.assert_allclose(a.pixels, b.pixels, atol=1e-12)


def test_image_snr_rules(grid):
    img = SarImage(np.ones((41, 41)), grid, Z)
    mask = box_mask(grid, (-0.01, 0.01), (-0.01, 0.01))
    assert image_snr(img, mask) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        image_snr(img, np.zeros((41, 41), dtype=bool))
    with pytest.raises(ValueError):
        image_snr(img, np.ones((41, 41), dtype=bool))
    with pytest.raises(ValueError):
        image_snr(img, np.zeros((5, 5), dtype=bool))


def test_sar_image_invariants(grid):
    with pytest.raises(ValueError):
        SarImage(-np.ones((41, 41)), grid, Z)
    with pytest.raises(ValueError):
        SarImage(np.ones((40, 41)), grid, Z)
    img = SarImage(np.zeros((41, 41)), grid, Z)
    assert img.extent == (-0.1, 0.1, -0.1, 0.1)
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 1.0


def test_raster_positions():
    p = raster_positions(0.25, 0.25, 3, 2)
    assert p.shape == (6, 2)
    assert p[:, 0].min() == -0.125 and p[:, 1].max() == 0.125
    with pytest.raises(ValueError):
        raster_positions(0.25, 0.25, 0, 2)


def test_pgm_round_trip(tmp_path, single):
    _, img = single
    pgm, side = write_pgm(img, tmp_path / "pt.pgm")
    back = read_pgm(pgm)
    assert back.shape == img.pixels.shape
    assert np.max(np.abs(back - img.pixels)) <= 0.5 / 65535 + 1e-12
    text = side.read_text()
    assert "x_min = -0.1" in text and "z_slice = 0.4" in text
    # top row of the file is the largest y
    raw = pgm.read_bytes()
    assert raw.startswith(b"P5\n41 41\n65535\n")


def test_pixel_partition_independence():
    # evaluating pixel subsets separately matches the full image exactly
    scan = point_scan([(0.01, 0.02)], n=6)
    full = ImageGrid(-0.05, 0.05, 11, -0.05, 0.05, 11)
    left = ImageGrid(-0.05, 0.0, 6, -0.05, 0.05, 11)
    a = backproject_complex(scan, full, Z)
    b = backproject_complex(scan, left, Z)
    np.testing.assert_allclose(a[:6], b, rtol=1e-12, atol=1e-12 * np.abs(a).max())

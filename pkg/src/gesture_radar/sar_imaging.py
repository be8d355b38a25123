"""Matched-filter back-projection over a 2-D scan aperture.

A scan is a set of radar positions (x', y') on the array plane with one
mono-corrected beat cube each.  Virtual element ``c`` of the scan at position
``p`` sits at (x'_p, y'_p + v_c, Z0); the image at depth ``z_slice`` is

    I(x, y) = | sum_{p, c, k} s_pc(k) exp(-j 2 k R_pc(x, y)) |

normalized to a peak of one.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .radar_model import (ArrayGeometry, NoiseSpec, RadarConfig,
                          multistatic_to_monostatic, simulate_scene)

# Range oversampling of the zero-padded range compression used by the fast path.
DEFAULT_OVERSAMPLE = 16


@dataclass(frozen=True)
class ApertureScan:
    positions: np.ndarray      # [N, 2] radar (x', y') per capture, m
    cubes: tuple               # mono-corrected BeatCube per position

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 2)
        cubes = tuple(self.cubes)
        if len(cubes) == 0:
            raise ValueError("aperture scan is empty")
        if len(cubes) != len(pos):
            raise ValueError(f"{len(pos)} positions but {len(cubes)} cubes")
        first = cubes[0]
        for cube in cubes:
            if not cube.mono_corrected:
                raise ValueError("back-projection needs mono-corrected cubes")
            if cube.data.shape != first.data.shape or not np.array_equal(cube.k_grid, first.k_grid):
                raise ValueError("all cubes of a scan must share the radar configuration")
            if not np.array_equal(cube.virtual_y, first.virtual_y) or cube.z_plane != first.z_plane:
                raise ValueError("all cubes of a scan must share the array geometry")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "cubes", cubes)

    @property
    def z_plane(self) -> float:
        return self.cubes[0].z_plane

    @property
    def k_grid(self) -> np.ndarray:
        return self.cubes[0].k_grid

    @property
    def virtual_y(self) -> np.ndarray:
        return self.cubes[0].virtual_y

    def data(self) -> np.ndarray:
        return np.stack([c.data for c in self.cubes])

    def is_2d(self) -> bool:
        return all(len(np.unique(self.positions[:, i])) >= 2 for i in range(2))


@dataclass(frozen=True)
class ImageGrid:
    """Pixel centres on a regular x-y grid (inclusive bounds)."""
    x_min: float
    x_max: float
    nx: int
    y_min: float
    y_max: float
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("image grid needs at least 2 pixels per axis")
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("image grid bounds must be increasing")

    @classmethod
    def square(cls, half_width: float, n: int) -> "ImageGrid":
        return cls(-half_width, half_width, n, -half_width, half_width, n)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    @property
    def pixel_size(self) -> tuple:
        return ((self.x_max - self.x_min) / (self.nx - 1), (self.y_max - self.y_min) / (self.ny - 1))

    def index_of(self, x: float, y: float) -> tuple:
        dx, dy = self.pixel_size
        return int(round((x - self.x_min) / dx)), int(round((y - self.y_min) / dy))


@dataclass(frozen=True)
class SarImage:
    pixels: np.ndarray         # [nx, ny], non-negative, peak 1 unless all zero
    grid: ImageGrid
    z_slice: float
    scale: float = 1.0         # peak magnitude before normalization

    def __post_init__(self):
        px = np.array(self.pixels, dtype=float)
        if px.shape != (self.grid.nx, self.grid.ny):
            raise ValueError(f"pixels {px.shape} do not match grid {(self.grid.nx, self.grid.ny)}")
        if np.any(px < 0) or not np.all(np.isfinite(px)):
            raise ValueError("image pixels must be finite and non-negative")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def extent(self) -> tuple:
        g = self.grid
        return (g.x_min, g.x_max, g.y_min, g.y_max)

    def peak_position(self) -> tuple:
        i, j = np.unravel_index(int(np.argmax(self.pixels)), self.pixels.shape)
        return float(self.grid.x[i]), float(self.grid.y[j])


def _element_ranges(scan: ApertureScan, p: int, gx: np.ndarray, gy: np.ndarray, z_slice: float):
    """Distances [C, npix] from the virtual elements at scan position ``p``."""
    px, py = scan.positions[p]
    ey = py + scan.virtual_y
    dz2 = (z_slice - scan.z_plane) ** 2
    return np.sqrt((gx[None, :] - px) ** 2 + (gy[None, :] - ey[:, None]) ** 2 + dz2)


def backproject_complex(scan: ApertureScan, grid: ImageGrid, z_slice: float,
                        method: str = "fft", oversample: int = DEFAULT_OVERSAMPLE) -> np.ndarray:
    """Complex back-projected image [nx, ny] before magnitude and normalization.

    ``method="direct"`` evaluates the matched filter sum literally;
    ``method="fft"`` range-compresses each trace with a zero-padded FFT and
    interpolates it at the pixel ranges (linear interpolation on an
    ``oversample``-times finer range grid).  Positions are accumulated in scan
    order, so the result does not depend on how pixels are partitioned.
    """
    if method not in ("fft", "direct"):
        raise ValueError(f"unknown back-projection method {method!r}")
    gx, gy = (a.ravel() for a in np.meshgrid(grid.x, grid.y, indexing="ij"))
    k = scan.k_grid
    n_k = len(k)
    k0 = k[0]
    dk = (k[-1] - k[0]) / (n_k - 1)
    n_fft = int(oversample) * n_k
    # FFT bin m of the trace corresponds to the round-trip range R = m * pi / (n_fft * dk)
    bin_per_metre = n_fft * dk / np.pi
    acc = np.zeros(gx.shape, dtype=complex)
    for p, cube in enumerate(scan.cubes):
        r = _element_ranges(scan, p, gx, gy, z_slice)                      # [C, npix]
        if method == "direct":
            phase = np.exp(-2j * r[:, :, None] * k[None, None, :])          # [C, npix, K]
            acc += np.einsum("ck,cpk->p", cube.data, phase)
            continue
        spectra = np.fft.fft(cube.data, n=n_fft, axis=1)                   # [C, n_fft]
        pos = r * bin_per_metre
        lo = np.floor(pos).astype(np.int64)
        frac = pos - lo
        rows = np.arange(r.shape[0])[:, None]
        compressed = (spectra[rows, lo % n_fft] * (1.0 - frac)
                      + spectra[rows, (lo + 1) % n_fft] * frac)
        acc += np.sum(compressed * np.exp(-2j * k0 * r), axis=0)
    return acc.reshape(grid.nx, grid.ny)


def backproject(scan: ApertureScan, grid: ImageGrid, z_slice: float, method: str = "fft",
                oversample: int = DEFAULT_OVERSAMPLE) -> SarImage:
    """Magnitude image at depth ``z_slice`` normalized to a peak of one."""
    mag = np.abs(backproject_complex(scan, grid, z_slice, method, oversample))
    peak = float(mag.max())
    pixels = mag / peak if peak > 0 else mag
    return SarImage(pixels=pixels, grid=grid, z_slice=float(z_slice), scale=peak)


def image_snr(image: SarImage, target_mask) -> float:
    """Peak pixel inside the mask over the RMS of the pixels outside it."""
    mask = np.asarray(target_mask, dtype=bool)
    if mask.shape != image.pixels.shape:
        raise ValueError(f"mask shape {mask.shape} does not match image {image.pixels.shape}")
    if not mask.any():
        raise ValueError("target mask is empty")
    if mask.all():
        raise ValueError("target mask covers the whole image")
    outside = image.pixels[~mask]
    rms = float(np.sqrt(np.mean(outside ** 2)))
    peak = float(image.pixels[mask].max())
    if rms == 0:
        return float("inf") if peak > 0 else 1.0
    return peak / rms


def box_mask(grid: ImageGrid, x_range, y_range) -> np.ndarray:
    """Boolean [nx, ny] mask of pixels whose centres fall in the box."""
    gx, gy = np.meshgrid(grid.x, grid.y, indexing="ij")
    return ((gx >= x_range[0]) & (gx <= x_range[1]) & (gy >= y_range[0]) & (gy <= y_range[1]))


def raster_positions(width: float, height: float, nx: int, ny: int) -> np.ndarray:
    """Regular nx x ny raster of scan positions centred on the origin, [nx*ny, 2]."""
    if nx < 1 or ny < 1:
        raise ValueError("raster needs at least one position per axis")
    xs = np.linspace(-width / 2, width / 2, nx) if nx > 1 else np.zeros(1)
    ys = np.linspace(-height / 2, height / 2, ny) if ny > 1 else np.zeros(1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def simulate_aperture(cloud_at, positions, geom: ArrayGeometry, config: RadarConfig,
                      noise: NoiseSpec | None = None, rng: np.random.Generator | None = None,
                      z0_ref: float = 0.4) -> ApertureScan:
    """Capture one mono-corrected cube per scan position.

    ``cloud_at`` is either a fixed :class:`TargetCloud` or a callable mapping a
    position (x', y') to the cloud seen from there (for aspect-dependent
    scattering).  The scene is translated by -(x', y') for each capture.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    if noise is not None and noise.power > 0 and rng is None:
        rng = np.random.default_rng(noise.seed)
    cubes = []
    for xy in positions:
        cloud = cloud_at(xy) if callable(cloud_at) else cloud_at
        moved = cloud.translated(-xy[0], -xy[1])
        cube = simulate_scene(moved, geom, config, noise, rng=rng)
        cubes.append(multistatic_to_monostatic(cube, z0_ref))
    return ApertureScan(positions=positions, cubes=tuple(cubes))


def write_pgm(image: SarImage, path) -> tuple:
    """Write a 16-bit binary PGM plus a ``.txt`` sidecar with the physical extent.

    PGM rows run along y (top row = largest y), columns along x.  Returns the
    two written paths.
    """
    path = Path(path)
    data = np.round(np.clip(image.pixels, 0.0, 1.0) * 65535.0).astype(">u2")
    rows = data.T[::-1]                       # [ny, nx], y decreasing downwards
    header = f"P5\n{image.grid.nx} {image.grid.ny}\n65535\n".encode("ascii")
    path.write_bytes(header + rows.tobytes())
    g = image.grid
    side = path.with_suffix(".txt")
    side.write_text(
        f"x_min = {g.x_min!r}\nx_max = {g.x_max!r}\nnx = {g.nx}\n"
        f"y_min = {g.y_min!r}\ny_max = {g.y_max!r}\nny = {g.ny}\n"
        f"z_slice = {image.z_slice!r}\nscale = {image.scale!r}\n", encoding="ascii")
    return path, side


def read_pgm(path) -> np.ndarray:
    """Read a 16-bit binary PGM written by :func:`write_pgm` back to [nx, ny] in [0, 1]."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    nx, ny = (int(v) for v in parts[1].split())
    if int(parts[2]) != 65535:
        raise ValueError("expected a 16-bit PGM")
    rows = np.frombuffer(parts[3], dtype=">u2", count=nx * ny).reshape(ny, nx)
    return rows[::-1].T.astype(float) / 65535.0

"""Preprocessing from a mono-corrected beat cube to a network-ready image.

Chain: range FFT over k -> crop a 64-bin range window -> (optional) angle FFT
across the virtual channels, zero-padded to ``n_angle`` bins and shifted so
broadside lands on bin ``n_angle // 2`` -> complex zero-mean/unit-variance
normalization -> real/imaginary layering.

Images are laid out [range bin, channel or angle bin, layer].
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .radar_model import BeatCube, C0


class Mode(enum.IntEnum):
    RANGE = 0
    RANGE_ANGLE = 1

    @classmethod
    def parse(cls, text: str) -> "Mode":
        key = text.strip().lower().replace("_", "-")
        if key == "range":
            return cls.RANGE
        if key in ("range-angle", "rangeangle", "ra"):
            return cls.RANGE_ANGLE
        raise ValueError(f"unknown mode {text!r} (expected 'range' or 'range-angle')")

    @property
    def label(self) -> str:
        return "range" if self is Mode.RANGE else "range-angle"


DEFAULT_START_BIN = 6
DEFAULT_RANGE_BINS = 64
DEFAULT_ANGLE_BINS = 16


@dataclass(frozen=True)
class RangeProfile:
    data: np.ndarray      # complex [n_channels, n_range]
    bin_spacing: float    # metres per bin
    virtual_y: np.ndarray
    start_bin: int = 0

    def __post_init__(self):
        if not self.bin_spacing > 0:
            raise ValueError("bin spacing must be positive")
        if self.data.ndim != 2 or self.data.shape[0] != len(self.virtual_y):
            raise ValueError("range profile dimensions are inconsistent")

    @property
    def n_bins(self) -> int:
        return self.data.shape[1]

    def bin_range(self, idx) -> np.ndarray:
        """Range in metres of (profile-local) bin ``idx``."""
        return (np.asarray(idx) + self.start_bin) * self.bin_spacing


@dataclass(frozen=True)
class RangeAngleProfile:
    data: np.ndarray      # complex [n_angle, n_range]
    bin_spacing: float
    start_bin: int = 0

    @property
    def n_angle(self) -> int:
        return self.data.shape[0]


def dft_oracle(x) -> np.ndarray:
    """Direct O(N^2) DFT, X[m] = sum_n x[n] exp(-2j*pi*m*n/N)."""
    x = np.asarray(x, dtype=complex).reshape(-1)
    n = x.shape[0]
    if n < 1:
        raise ValueError("DFT of an empty vector")
    idx = np.arange(n)
    # m*n mod N keeps the twiddle argument small and exact for large N
    twiddle = np.exp(-2j * np.pi * ((idx[:, None] * idx[None, :]) % n) / n)
    return twiddle @ x


def range_fft(cube: BeatCube) -> RangeProfile:
    if not cube.mono_corrected:
        raise ValueError("range FFT expects a multistatic-to-monostatic corrected cube")
    dk = (cube.k_grid[-1] - cube.k_grid[0]) / (cube.n_k - 1)
    # Phase 2*k*R steps by 2*dk*R per sample -> bin m sits at R = m*pi/(n_k*dk).
    spacing = np.pi / (cube.n_k * dk)
    return RangeProfile(data=np.fft.fft(cube.data, axis=1), bin_spacing=float(spacing),
                        virtual_y=np.asarray(cube.virtual_y))


def nominal_bin_spacing(bandwidth: float, c: float = C0) -> float:
    return c / (2.0 * bandwidth)


def crop_range(profile, start_bin: int = DEFAULT_START_BIN, n_bins: int = DEFAULT_RANGE_BINS):
    """Contiguous window of ``n_bins`` range bins starting at ``start_bin``."""
    total = profile.data.shape[1]
    if start_bin < 0 or n_bins < 1 or start_bin + n_bins > total:
        raise ValueError(f"range window [{start_bin}, {start_bin + n_bins}) outside 0..{total}")
    data = profile.data[:, start_bin:start_bin + n_bins]
    if isinstance(profile, RangeProfile):
        return RangeProfile(data=data, bin_spacing=profile.bin_spacing, virtual_y=profile.virtual_y,
                            start_bin=profile.start_bin + start_bin)
    return RangeAngleProfile(data=data, bin_spacing=profile.bin_spacing,
                             start_bin=profile.start_bin + start_bin)


def _uniform_order(virtual_y: np.ndarray) -> np.ndarray:
    order = np.argsort(virtual_y, kind="stable")
    vy = virtual_y[order]
    if vy.shape[0] > 1:
        steps = np.diff(vy)
        if steps.min() <= 0 or not np.allclose(steps, steps[0], rtol=1e-6, atol=1e-12):
            raise ValueError("angle FFT needs uniformly spaced virtual elements")
    return order


def angle_fft(profile: RangeProfile, n_angle: int = DEFAULT_ANGLE_BINS) -> RangeAngleProfile:
    """Zero-padded FFT across channels (ascending virtual y), broadside at bin n_angle//2."""
    n_ch = profile.data.shape[0]
    if n_angle < n_ch:
        raise ValueError(f"angle FFT size {n_angle} smaller than channel count {n_ch}")
    order = _uniform_order(np.asarray(profile.virtual_y, dtype=float))
    spec = np.fft.fft(profile.data[order], n=n_angle, axis=0)
    return RangeAngleProfile(data=np.fft.fftshift(spec, axes=0), bin_spacing=profile.bin_spacing,
                             start_bin=profile.start_bin)


def normalize(image) -> np.ndarray:
    """Complex zero-mean, unit-variance scaling (variance = mean |x - mu|^2)."""
    x = np.asarray(image, dtype=complex)
    if x.size < 2:
        raise ValueError("normalization needs at least two samples")
    centred = x - x.mean()
    var = np.mean(np.abs(centred) ** 2)
    if not var > 0:
        raise ValueError("cannot normalize a constant image (zero variance)")
    return centred / np.sqrt(var)


def layer_real_imag(image) -> np.ndarray:
    x = np.asarray(image)
    return np.stack([x.real, x.imag], axis=-1).astype(float)


def recompose(layers) -> np.ndarray:
    layers = np.asarray(layers)
    return layers[..., 0] + 1j * layers[..., 1]


def complex_image(cube: BeatCube, mode: Mode, start_bin: int = DEFAULT_START_BIN,
                  n_bins: int = DEFAULT_RANGE_BINS, n_angle: int = DEFAULT_ANGLE_BINS) -> np.ndarray:
    """Un-normalized complex image [range, channel|angle] for one cube."""
    prof = crop_range(range_fft(cube), start_bin, n_bins)
    if mode == Mode.RANGE:
        order = np.argsort(prof.virtual_y, kind="stable")
        return prof.data[order].T
    return angle_fft(prof, n_angle).data.T


def preprocess(cube: BeatCube, mode: Mode, start_bin: int = DEFAULT_START_BIN,
               n_bins: int = DEFAULT_RANGE_BINS, n_angle: int = DEFAULT_ANGLE_BINS) -> np.ndarray:
    """Full chain to a real [n_bins, W, 2] image."""
    return layer_real_imag(normalize(complex_image(cube, mode, start_bin, n_bins, n_angle)))

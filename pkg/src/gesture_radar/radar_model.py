"""FMCW beat-signal synthesis for point and distributed targets.

The beat signal is synthesized directly on a uniform wavenumber grid
``k_i = 2*pi*(f0 + i*B/(n_k - 1))/c``.  For a transmitter at ``(0, y_T, Z0)``
and receiver at ``(0, y_R, Z0)`` a point reflector contributes

    s(y_T, y_R, k) = sigma / (R_T * R_R) * exp(1j * k * (R_T + R_R))

with the residual video phase dropped.  A distributed scene is the coherent
sum over its scatterers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

C0 = 299_792_458.0


class GeometryError(ValueError):
    """Raised for degenerate radar geometry (e.g. a target on an antenna)."""


@dataclass(frozen=True)
class RadarConfig:
    f0: float = 77e9
    slope: float = 4e9 / 40e-6
    duration: float = 40e-6
    n_k: int = 256
    c: float = C0

    def __post_init__(self):
        if not self.f0 > 0:
            raise ValueError(f"f0 must be positive, got {self.f0}")
        if not (self.slope > 0 and self.duration > 0):
            raise ValueError("chirp slope and duration must be positive (B = K*T > 0)")
        if int(self.n_k) != self.n_k or self.n_k < 2:
            raise ValueError(f"n_k must be an integer >= 2, got {self.n_k}")

    @classmethod
    def from_bandwidth(cls, f0: float = 77e9, bandwidth: float = 4e9, duration: float = 40e-6,
                       n_k: int = 256) -> "RadarConfig":
        if not bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {bandwidth}")
        return cls(f0=f0, slope=bandwidth / duration, duration=duration, n_k=n_k)

    @property
    def bandwidth(self) -> float:
        return self.slope * self.duration

    @property
    def wavelength(self) -> float:
        return self.c / self.f0

    @property
    def range_resolution(self) -> float:
        """Minimum resolvable range separation c/(2B)."""
        return self.c / (2.0 * self.bandwidth)

    @property
    def range_bin_spacing(self) -> float:
        """Spacing of the unpadded range-FFT bins.

        The grid spans exactly B over ``n_k - 1`` steps, so the bin spacing is
        ``c/(2B) * (n_k - 1)/n_k``; it tends to c/(2B) for large ``n_k``.
        """
        return self.range_resolution * (self.n_k - 1) / self.n_k


def wavenumber_grid(config: RadarConfig) -> np.ndarray:
    if config.n_k < 2:
        raise ValueError("n_k must be >= 2")
    if not config.bandwidth > 0:
        raise ValueError("zero bandwidth gives a degenerate wavenumber grid")
    freqs = config.f0 + np.arange(config.n_k) * (config.bandwidth / (config.n_k - 1))
    return 2.0 * np.pi * freqs / config.c


@dataclass(frozen=True)
class ArrayGeometry:
    """Linear MIMO array along y; every (tx, rx) pair is one channel.

    Channels are ordered tx-major: ``channel = itx * n_rx + irx``.
    """
    tx_y: tuple
    rx_y: tuple
    z_plane: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "tx_y", tuple(float(v) for v in self.tx_y))
        object.__setattr__(self, "rx_y", tuple(float(v) for v in self.rx_y))
        if not self.tx_y or not self.rx_y:
            raise ValueError("array needs at least one transmitter and one receiver")

    @classmethod
    def default(cls, config: RadarConfig | None = None, z_plane: float = 0.0) -> "ArrayGeometry":
        """2 Tx + 4 Rx whose pair midpoints form 8 virtual elements at lambda/4.

        Rx elements sit at lambda/2 spacing and the two Tx elements 2*lambda
        apart, giving virtual positions 0, lambda/4, ..., 7*lambda/4 before
        centering on y = 0.
        """
        lam = (config or RadarConfig()).wavelength
        shift = 7.0 * lam / 8.0
        rx = [i * lam / 2.0 - shift for i in range(4)]
        tx = [0.0 - shift, 2.0 * lam - shift]
        return cls(tx_y=tuple(tx), rx_y=tuple(rx), z_plane=z_plane)

    @property
    def n_channels(self) -> int:
        return len(self.tx_y) * len(self.rx_y)

    def pairs(self) -> np.ndarray:
        """Array [n_channels, 2] of (y_T, y_R)."""
        return np.array([(t, r) for t in self.tx_y for r in self.rx_y], dtype=float)

    @property
    def virtual_y(self) -> np.ndarray:
        p = self.pairs()
        return (p[:, 0] + p[:, 1]) / 2.0

    def d_y(self) -> np.ndarray:
        p = self.pairs()
        return np.abs(p[:, 0] - p[:, 1])


@dataclass(frozen=True)
class PointTarget:
    x0: float
    y0: float
    z0: float
    sigma: float = 1.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.x0, self.y0, self.z0, self.sigma])):
            raise ValueError("point target must have finite position and reflectivity")
        if self.sigma < 0:
            raise ValueError(f"reflectivity must be non-negative, got {self.sigma}")


@dataclass(frozen=True)
class TargetCloud:
    """Scatterer cloud stored as arrays: ``xyz`` [P, 3] in metres, ``sigma`` [P]."""
    xyz: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        xyz = np.ascontiguousarray(self.xyz, dtype=float).reshape(-1, 3)
        sigma = np.ascontiguousarray(self.sigma, dtype=float).reshape(-1)
        if xyz.shape[0] != sigma.shape[0]:
            raise ValueError("xyz and sigma lengths differ")
        if not (np.all(np.isfinite(xyz)) and np.all(np.isfinite(sigma))):
            raise ValueError("target cloud contains non-finite values")
        if np.any(sigma < 0):
            raise ValueError("reflectivity must be non-negative")
        xyz.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def from_points(cls, points: Sequence[PointTarget]) -> "TargetCloud":
        return cls(xyz=np.array([(p.x0, p.y0, p.z0) for p in points], dtype=float),
                   sigma=np.array([p.sigma for p in points], dtype=float))

    def __len__(self) -> int:
        return self.sigma.shape[0]

    def points(self) -> list[PointTarget]:
        return [PointTarget(*xyz, s) for xyz, s in zip(self.xyz.tolist(), self.sigma.tolist())]

    def translated(self, dx: float = 0.0, dy: float = 0.0, dz: float = 0.0) -> "TargetCloud":
        return TargetCloud(self.xyz + np.array([dx, dy, dz]), self.sigma)

    def scaled(self, gain: float) -> "TargetCloud":
        return TargetCloud(self.xyz, self.sigma * gain)

    def __add__(self, other: "TargetCloud") -> "TargetCloud":
        return TargetCloud(np.vstack([self.xyz, other.xyz]), np.concatenate([self.sigma, other.sigma]))


@dataclass(frozen=True)
class NoiseSpec:
    """Circularly-symmetric complex white noise with ``power`` = E|n|^2 per sample."""
    power: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        if self.power < 0:
            raise ValueError("noise power must be non-negative")


@dataclass(frozen=True)
class BeatCube:
    data: np.ndarray          # complex [n_channels, n_k]
    tx_y: np.ndarray          # per-channel transmitter y (NaN once mono-corrected)
    rx_y: np.ndarray
    virtual_y: np.ndarray
    k_grid: np.ndarray
    mono_corrected: bool = False
    z_plane: float = 0.0

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        if data.ndim != 2:
            raise ValueError("beat cube data must be 2-D [channels, k]")
        arrays = {}
        for name in ("tx_y", "rx_y", "virtual_y", "k_grid"):
            arrays[name] = np.array(getattr(self, name), dtype=float).reshape(-1)
        n_ch, n_k = data.shape
        for name in ("tx_y", "rx_y", "virtual_y"):
            if arrays[name].shape[0] != n_ch:
                raise ValueError(f"{name} has {arrays[name].shape[0]} entries, expected {n_ch}")
        if arrays["k_grid"].shape[0] != n_k:
            raise ValueError("k_grid length does not match data")
        if not np.all(np.isfinite(data)):
            raise FloatingPointError("beat cube contains non-finite samples")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_k(self) -> int:
        return self.data.shape[1]


def _pair_ranges(xyz: np.ndarray, y_t, y_r, z_plane: float):
    """Transmit and receive ranges, arrays broadcast as [P, C]."""
    x = xyz[:, 0:1]
    y = xyz[:, 1:2]
    dz2 = (xyz[:, 2:3] - z_plane) ** 2
    r_t = np.sqrt(x ** 2 + (y - np.atleast_1d(y_t)[None, :]) ** 2 + dz2)
    r_r = np.sqrt(x ** 2 + (y - np.atleast_1d(y_r)[None, :]) ** 2 + dz2)
    if np.any(r_t <= 0) or np.any(r_r <= 0):
        raise GeometryError("target coincides with an antenna element")
    return r_t, r_r


def simulate_point_echo(pair, target: PointTarget, k_grid) -> np.ndarray:
    """Beat signal of one point target for one (y_T, y_R, Z0) transceiver pair."""
    y_t, y_r, z_plane = pair
    k = np.asarray(k_grid, dtype=float)
    xyz = np.array([[target.x0, target.y0, target.z0]], dtype=float)
    r_t, r_r = _pair_ranges(xyz, [y_t], [y_r], z_plane)
    r_t, r_r = float(r_t[0, 0]), float(r_r[0, 0])
    return target.sigma / (r_t * r_r) * np.exp(1j * k * (r_t + r_r))


# Bounds the [P, C, ...] temporaries built per block.
_POINT_BLOCK = 512


def _coherent_sum(xyz, sigma, y_t, y_r, z_plane, k0, dk, n_k):
    """Sum_p amp_p * exp(1j * (k0 + i*dk) * r_p) for i < n_k, per channel.

    The uniform grid index is split as ``i = a*m + b`` so each exponential is a
    product of a coarse and a fine factor; the point sum then becomes one
    batched complex matmul per channel instead of ``P*K`` exponentials.
    """
    m = int(np.ceil(np.sqrt(n_k)))
    n_a = -(-n_k // m)
    k_coarse = k0 + dk * m * np.arange(n_a)
    k_fine = dk * np.arange(m)
    out = np.zeros((len(y_t), n_a, m), dtype=complex)
    for start in range(0, xyz.shape[0], _POINT_BLOCK):
        blk = slice(start, start + _POINT_BLOCK)
        r_t, r_r = _pair_ranges(xyz[blk], y_t, y_r, z_plane)
        amp = sigma[blk, None] / (r_t * r_r)                                # [P, C]
        path = (r_t + r_r).T                                                 # [C, P]
        coarse = amp.T[:, :, None] * np.exp(1j * path[:, :, None] * k_coarse)  # [C, P, A]
        fine = np.exp(1j * path[:, :, None] * k_fine)                        # [C, P, M]
        out += np.matmul(coarse.transpose(0, 2, 1), fine)
    return out.reshape(len(y_t), n_a * m)[:, :n_k]


def simulate_scene(cloud: TargetCloud, geom: ArrayGeometry, config: RadarConfig,
                   noise: NoiseSpec | None = None, rng: np.random.Generator | None = None) -> BeatCube:
    """Coherent superposition of every scatterer's echo, per channel, plus noise.

    Noise is drawn from ``rng`` when given, otherwise from ``noise.seed``.
    """
    if len(cloud) == 0:
        raise ValueError("cannot simulate an empty target cloud")
    k = wavenumber_grid(config)
    pairs = geom.pairs()
    dk = 2.0 * np.pi * config.bandwidth / ((config.n_k - 1) * config.c)
    data = _coherent_sum(cloud.xyz, cloud.sigma, pairs[:, 0], pairs[:, 1], geom.z_plane,
                         k[0], dk, config.n_k)
    if noise is not None and noise.power > 0:
        gen = rng if rng is not None else np.random.default_rng(noise.seed)
        scale = np.sqrt(noise.power / 2.0)
        data = data + scale * (gen.standard_normal(data.shape) + 1j * gen.standard_normal(data.shape))
    return BeatCube(data=data, tx_y=pairs[:, 0], rx_y=pairs[:, 1], virtual_y=geom.virtual_y,
                    k_grid=k, mono_corrected=False, z_plane=geom.z_plane)


def multistatic_to_monostatic(cube: BeatCube, z0_ref: float = 0.4) -> BeatCube:
    """Apply exp(-j k d_y^2 / (4 Z0)) per channel; channels move to pair midpoints."""
    if not z0_ref > 0:
        raise ValueError(f"reference distance must be positive, got {z0_ref}")
    if cube.mono_corrected:
        raise ValueError("multistatic-to-monostatic correction already applied")
    d_y = np.abs(cube.tx_y - cube.rx_y)
    factor = np.exp(-1j * cube.k_grid[None, :] * (d_y[:, None] ** 2) / (4.0 * z0_ref))
    nan = np.full(cube.n_channels, np.nan)
    return BeatCube(data=cube.data * factor, tx_y=nan, rx_y=nan, virtual_y=cube.virtual_y,
                    k_grid=cube.k_grid, mono_corrected=True, z_plane=cube.z_plane)


def monostatic_reference(cloud: TargetCloud, virtual_y, z_plane: float, k_grid) -> np.ndarray:
    """Ideal monostatic signal sigma/R0^2 * exp(j 2 k R0) at the virtual elements."""
    vy = np.asarray(virtual_y, dtype=float)
    k = np.asarray(k_grid, dtype=float)
    r0, _ = _pair_ranges(cloud.xyz, vy, vy, z_plane)
    amp = cloud.sigma[:, None] / r0 ** 2
    return np.einsum("pc,pck->ck", amp, np.exp(2j * r0[:, :, None] * k[None, None, :]))

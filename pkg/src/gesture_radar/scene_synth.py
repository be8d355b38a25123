"""Parametric gesture scenes and dataset assembly.

Hands are point clouds in a hand-local frame (x horizontal, y vertical along
the array axis, z toward the subject) that is then placed at ``hand_center``:

* palm - a planar hand outline (palm block, four fingers, side thumb) facing
  the radar;
* perpendicular - the same outline rotated 90 degrees about the vertical axis
  so it is seen edge-on, thumb pointing away from the radar;
* thumbs-up - the radar-facing half of an ellipsoidal fist plus a vertical
  thumb segment.

Human captures add geometric jitter, per-point reflectivity jitter, a torso
disk at 1 m and a tripod column; sterile (aluminum cutout) captures keep the
rigid outline with uniform, higher reflectivity and no clutter.

Per-sample randomness comes from ``SeedSequence([master_seed, stream, class,
variant, index])`` so every sample is independent of generation order.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .radar_model import (ArrayGeometry, BeatCube, NoiseSpec, RadarConfig, TargetCloud,
                          multistatic_to_monostatic, simulate_scene)


class GestureClass(enum.IntEnum):
    PALM = 0
    PERPENDICULAR = 1
    THUMBS_UP = 2


class VariantKind(enum.IntEnum):
    HUMAN = 0
    STERILE = 1


# seed-stream tags
_STREAM_SUBJECTS = 1
_STREAM_SAMPLES = 2
_STREAM_VALSPLIT = 3


@dataclass(frozen=True)
class SubjectParams:
    hand_scale: float = 0.18          # wrist to fingertip, m
    aspect: float = 0.5               # hand width / hand_scale
    thumb_length: float = 0.06
    point_density: float = 8000.0     # points per m^2 of outline
    base_reflectivity: float = 1.0
    jitter_std: float = 0.002
    seed: int = 0

    def __post_init__(self):
        if not 0.13 <= self.hand_scale <= 0.25:
            raise ValueError(f"hand_scale {self.hand_scale} outside [0.13, 0.25] m")
        if not self.point_density > 0:
            raise ValueError("point_density must be positive")
        if self.jitter_std < 0:
            raise ValueError("jitter_std must be non-negative")
        if not (self.aspect > 0 and self.thumb_length > 0 and self.base_reflectivity > 0):
            raise ValueError("aspect, thumb_length and base_reflectivity must be positive")


@dataclass(frozen=True)
class VariantSpec:
    kind: VariantKind
    reflectivity_gain: float
    clutter: bool
    noise_power: float
    reflectivity_jitter: float = 0.0   # relative std of per-point amplitude

    @classmethod
    def human(cls, reflectivity_gain: float = 1.0, noise_power: float = 4.0,
              clutter: bool = True, reflectivity_jitter: float = 0.5) -> "VariantSpec":
        return cls(VariantKind.HUMAN, reflectivity_gain, clutter, noise_power, reflectivity_jitter)

    @classmethod
    def sterile(cls, reflectivity_gain: float = 10.0, noise_power: float = 4.0) -> "VariantSpec":
        return cls(VariantKind.STERILE, reflectivity_gain, False, noise_power, 0.0)


def check_variant_pair(human: VariantSpec, sterile: VariantSpec) -> None:
    if human.kind != VariantKind.HUMAN or sterile.kind != VariantKind.STERILE:
        raise ValueError("variant kinds are mislabelled")
    if not sterile.reflectivity_gain > human.reflectivity_gain:
        raise ValueError("sterile reflectivity gain must exceed the human gain")
    if sterile.noise_power > human.noise_power:
        raise ValueError("sterile noise power must not exceed the human noise power")


@dataclass(frozen=True)
class ScanAperture:
    width: float = 0.25
    height: float = 0.25
    hand_range: tuple = (0.25, 0.55)
    torso_range: float = 1.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("aperture width and height must be positive")
        lo, hi = self.hand_range
        if not 0 < lo <= hi < self.torso_range:
            raise ValueError("hand range must lie inside (0, torso_range)")


@dataclass(frozen=True)
class ClutterSpec:
    torso_radius: float = 0.2
    torso_offset_y: float = -0.15      # torso centre below the hand
    torso_gain: float = 3.0            # per-point, relative to hand base
    torso_spacing: float = 0.02
    tripod_gain: float = 1.0
    tripod_spacing: float = 0.01
    tripod_length: float = 0.3


@dataclass(frozen=True)
class Reflectance:
    """Aspect-dependent scattering: sigma * (floor + (1 - floor) * |n . u|^exponent).

    ``n`` is the local surface normal and ``u`` the unit vector towards the
    radar, so facets seen face-on return strongly and edge-on ones weakly.
    """
    floor: float = 0.15
    exponent: float = 2.0

    def __post_init__(self):
        if not (0.0 <= self.floor <= 1.0 and self.exponent >= 0):
            raise ValueError("reflectance floor must be in [0, 1] and exponent >= 0")

    def weights(self, xyz: np.ndarray, normals: np.ndarray, radar_xyz=(0.0, 0.0, 0.0)) -> np.ndarray:
        u = np.asarray(radar_xyz, dtype=float) - xyz
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        cos = np.abs(np.sum(normals * u, axis=1))
        return self.floor + (1.0 - self.floor) * cos ** self.exponent


def _grid(x0, x1, y0, y1, step):
    nx = max(int(round((x1 - x0) / step)), 1)
    ny = max(int(round((y1 - y0) / step)), 1)
    xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
    ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _outline_points(subject: SubjectParams) -> np.ndarray:
    """Planar hand outline in the x-y plane, centred on the origin, z = 0."""
    step = 1.0 / np.sqrt(subject.point_density)
    length = subject.hand_scale
    width = subject.aspect * length
    palm_h = 0.55 * length
    finger_h = length - palm_h
    y_base = -length / 2.0
    parts = [_grid(-width / 2, width / 2, y_base, y_base + palm_h, step)]
    finger_w = width / 4.0
    # finger lengths relative to the middle finger
    rel = (0.8, 0.95, 1.0, 0.9)
    for i, r in enumerate(rel):
        x0 = -width / 2 + i * finger_w
        parts.append(_grid(x0 + 0.1 * finger_w, x0 + 0.9 * finger_w,
                           y_base + palm_h, y_base + palm_h + r * finger_h, step))
    # thumb sticks out sideways from the lower palm
    t_w = 0.35 * finger_w + step
    parts.append(_grid(width / 2, width / 2 + subject.thumb_length,
                       y_base + 0.15 * palm_h, y_base + 0.15 * palm_h + t_w, step))
    xy = np.vstack(parts)
    return np.column_stack([xy, np.zeros(len(xy))])


def _fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + 5.0 ** 0.5) * i
    return np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])


def _thumbs_up(subject: SubjectParams):
    """Fist (radar-facing half ellipsoid with curled-finger ridges) plus a raised thumb."""
    length = subject.hand_scale
    a = 0.5 * subject.aspect * length        # half width (x)
    b = 0.27 * length                        # half height (y)
    c = 0.3 * length                         # half depth (z)
    area = 2.0 * np.pi * (a * b + b * c + a * c) / 3.0     # ~ half the surface
    n = max(int(round(2.0 * area * subject.point_density)), 16)
    u = _fibonacci_sphere(n)
    u = u[u[:, 2] < 0]                       # radar-facing half
    fist = u * np.array([a, b, c])
    fist_n = u / np.array([a, b, c])
    # curled fingers: four horizontal ridges stepping back in depth
    step = 1.0 / np.sqrt(subject.point_density)
    ridges, ridge_n = [], []
    n_x = max(int(round(2 * a / step)), 2)
    xs = -a + (np.arange(n_x) + 0.5) * 2 * a / n_x
    for i in range(4):
        y = b * (0.6 - 0.4 * i)
        z = -c * (1.05 - 0.12 * i)
        ridges.append(np.column_stack([xs, np.full(n_x, y), np.full(n_x, z)]))
        ridge_n.append(np.tile([0.0, 0.0, -1.0], (n_x, 1)))
    # thumb rises from the top of the fist, set back from the knuckles
    n_t = max(int(round(subject.thumb_length / step)), 2)
    ty = b + (np.arange(n_t) + 0.5) * subject.thumb_length / n_t
    thumb = np.vstack([np.column_stack([np.full(n_t, 0.3 * a + dx), ty, np.full(n_t, -0.2 * c)])
                       for dx in (-0.5 * step, 0.5 * step)])
    thumb_n = np.tile([0.0, 0.0, -1.0], (len(thumb), 1))
    pts = np.vstack([fist, *ridges, thumb])
    normals = np.vstack([fist_n, *ridge_n, thumb_n])
    pts[:, 1] -= 0.5 * subject.thumb_length  # centre the overall extent
    return pts, normals


def _with_normals(gesture: GestureClass, subject: SubjectParams):
    gesture = GestureClass(gesture)
    if gesture == GestureClass.PALM:
        pts = _outline_points(subject)
        return pts, np.tile([0.0, 0.0, -1.0], (len(pts), 1))
    if gesture == GestureClass.PERPENDICULAR:
        flat = _outline_points(subject)
        # rotate +90 deg about y: x -> z (thumb side points away from the radar)
        pts = np.column_stack([np.zeros(len(flat)), flat[:, 1], flat[:, 0]])
        normals = np.tile([1.0, 0.0, 0.0], (len(pts), 1))
        # the radar-facing side of the hand is a narrow strip seen face-on
        edge = pts[:, 2] <= pts[:, 2].min() + 0.5 / np.sqrt(subject.point_density)
        normals[edge] = [0.0, 0.0, -1.0]
        return pts, normals
    pts, normals = _thumbs_up(subject)
    return pts, normals / np.linalg.norm(normals, axis=1, keepdims=True)


def base_geometry(gesture: GestureClass, subject: SubjectParams) -> np.ndarray:
    """Rigid, unjittered gesture geometry in the hand frame, [P, 3]."""
    return _with_normals(gesture, subject)[0]


def _clutter_cloud(hand_center, hand_extent_y: float, aperture: ScanAperture, clutter: ClutterSpec,
                   base_sigma: float) -> TargetCloud:
    cx, cy, cz = hand_center
    r = clutter.torso_radius
    s = clutter.torso_spacing
    g = np.arange(-r + s / 2, r, s)
    gx, gy = np.meshgrid(g, g, indexing="xy")
    inside = gx ** 2 + gy ** 2 <= r * r
    torso = np.column_stack([gx[inside], gy[inside] + clutter.torso_offset_y,
                             np.full(inside.sum(), aperture.torso_range)])
    n_t = max(int(round(clutter.tripod_length / clutter.tripod_spacing)), 1)
    ty = cy - hand_extent_y / 2.0 - (np.arange(n_t) + 0.5) * clutter.tripod_spacing
    tripod = np.column_stack([np.full(n_t, cx), ty, np.full(n_t, cz + 0.02)])
    return TargetCloud(np.vstack([torso, tripod]),
                       np.concatenate([np.full(len(torso), clutter.torso_gain * base_sigma),
                                       np.full(n_t, clutter.tripod_gain * base_sigma)]))


def _rotation(angles) -> np.ndarray:
    """Rotation by small angles about x, then y."""
    ax, ay = angles
    rx = np.array([[1, 0, 0], [0, np.cos(ax), -np.sin(ax)], [0, np.sin(ax), np.cos(ax)]])
    ry = np.array([[np.cos(ay), 0, np.sin(ay)], [0, 1, 0], [-np.sin(ay), 0, np.cos(ay)]])
    return ry @ rx


def make_gesture_cloud(gesture: GestureClass, subject: SubjectParams, variant: VariantSpec,
                       hand_center, seed: int | None = None,
                       aperture: ScanAperture = ScanAperture(),
                       clutter: ClutterSpec = ClutterSpec(),
                       reflectance: Reflectance = Reflectance(),
                       radar_xy=(0.0, 0.0), tilt=(0.0, 0.0)) -> TargetCloud:
    """Scatterer cloud of one gesture placed at ``hand_center`` (x, y, z) metres.

    ``seed`` drives the human-variant jitter (defaults to ``subject.seed``).
    Point amplitudes are weighted by ``reflectance`` as seen from a radar at
    ``(radar_xy, 0)``; ``tilt`` rotates the hand about its centre.
    """
    cx, cy, cz = (float(v) for v in hand_center)
    lo, hi = aperture.hand_range
    if not lo <= cz <= hi:
        raise ValueError(f"hand depth {cz} m outside hand range [{lo}, {hi}] m")
    pts, normals = _with_normals(gesture, subject)
    if np.any(np.asarray(tilt) != 0):
        rot = _rotation(tilt)
        pts, normals = pts @ rot.T, normals @ rot.T
    sigma = np.full(len(pts), subject.base_reflectivity * variant.reflectivity_gain)
    if variant.kind == VariantKind.HUMAN:
        rng = np.random.default_rng(subject.seed if seed is None else seed)
        if subject.jitter_std > 0:
            pts = pts + rng.normal(0.0, subject.jitter_std, pts.shape)
        if variant.reflectivity_jitter > 0:
            sigma = sigma * np.abs(1.0 + variant.reflectivity_jitter * rng.standard_normal(len(sigma)))
    pts = pts + np.array([cx, cy, cz])
    sigma = sigma * reflectance.weights(pts, normals, (radar_xy[0], radar_xy[1], 0.0))
    cloud = TargetCloud(pts, sigma)
    if variant.kind == VariantKind.HUMAN and variant.clutter:
        extent_y = float(np.ptp(pts[:, 1]))
        cloud = cloud + _clutter_cloud((cx, cy, cz), extent_y, aperture, clutter,
                                       subject.base_reflectivity * variant.reflectivity_gain)
    return cloud


def scan_positions(aperture: ScanAperture, n: int, seed) -> np.ndarray:
    """``n`` radar positions (x', y') drawn uniformly over the aperture square."""
    if n <= 0:
        raise ValueError("need at least one scan position")
    rng = np.random.default_rng(seed)
    half = np.array([aperture.width, aperture.height]) / 2.0
    return rng.uniform(-half, half, size=(n, 2))


def random_subjects(n: int, seed, kind: VariantKind) -> list[SubjectParams]:
    """Draw ``n`` subject (or cutout) parameter sets."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_SUBJECTS, int(kind)]))
    out = []
    for i in range(n):
        out.append(SubjectParams(
            hand_scale=float(rng.uniform(0.15, 0.21)),
            aspect=float(rng.uniform(0.42, 0.55)),
            thumb_length=float(rng.uniform(0.05, 0.07)),
            base_reflectivity=float(rng.uniform(0.7, 1.3)),
            jitter_std=float(rng.uniform(0.002, 0.004)) if kind == VariantKind.HUMAN else 0.0,
            seed=int(rng.integers(0, 2 ** 63)),
        ))
    return out


@dataclass(frozen=True)
class DatasetSpec:
    samples_per_class_human: int = 1000
    samples_per_class_sterile: int = 1000
    human_subjects: tuple = ()
    sterile_subjects: tuple = ()
    radar: RadarConfig = field(default_factory=RadarConfig)
    geometry: ArrayGeometry | None = None
    master_seed: int = 0
    human: VariantSpec = field(default_factory=VariantSpec.human)
    sterile: VariantSpec = field(default_factory=VariantSpec.sterile)
    aperture: ScanAperture = field(default_factory=ScanAperture)
    clutter: ClutterSpec = field(default_factory=ClutterSpec)
    reflectance: Reflectance = field(default_factory=Reflectance)
    z0_ref: float = 0.4
    hand_offset_std: float = 0.02     # hand placement spread in the scanner frame, m
    hand_tilt_std: float = 0.0        # human pose rotation spread, radians
    hand_depth_std: float | None = None   # None: uniform over the hand range

    def __post_init__(self):
        if self.samples_per_class_human <= 0 or self.samples_per_class_sterile <= 0:
            raise ValueError("sample counts must be positive")
        if not self.human_subjects:
            object.__setattr__(self, "human_subjects",
                               tuple(random_subjects(8, self.master_seed, VariantKind.HUMAN)))
        if not self.sterile_subjects:
            object.__setattr__(self, "sterile_subjects",
                               tuple(random_subjects(8, self.master_seed, VariantKind.STERILE)))
        if self.geometry is None:
            object.__setattr__(self, "geometry", ArrayGeometry.default(self.radar))
        check_variant_pair(self.human, self.sterile)

    def count(self, kind: VariantKind) -> int:
        return self.samples_per_class_human if kind == VariantKind.HUMAN else self.samples_per_class_sterile


@dataclass(frozen=True)
class Sample:
    cube: BeatCube
    gesture: GestureClass
    variant: VariantKind
    subject: int
    scan_xy: tuple
    hand_center: tuple


def synth_sample(spec: DatasetSpec, gesture: GestureClass, kind: VariantKind, index: int) -> Sample:
    """Generate one labelled capture; a pure function of (spec, gesture, kind, index)."""
    ss = np.random.SeedSequence([int(spec.master_seed), _STREAM_SAMPLES, int(gesture), int(kind), int(index)])
    rng = np.random.default_rng(ss)
    variant = spec.human if kind == VariantKind.HUMAN else spec.sterile
    subjects = spec.human_subjects if kind == VariantKind.HUMAN else spec.sterile_subjects
    subj_idx = int(rng.integers(len(subjects)))
    subject = subjects[subj_idx]
    scan_xy = scan_positions(spec.aperture, 1, rng)[0]
    lo, hi = spec.aperture.hand_range
    if spec.hand_depth_std is None:
        depth = rng.uniform(lo, hi)
    else:
        depth = float(np.clip(rng.normal(spec.z0_ref, spec.hand_depth_std), lo, hi))
    hand = np.array([rng.normal(0.0, spec.hand_offset_std), rng.normal(0.0, spec.hand_offset_std), depth])
    jitter_seed = int(rng.integers(0, 2 ** 63))
    tilt = (0.0, 0.0)
    if kind == VariantKind.HUMAN and spec.hand_tilt_std > 0:
        tilt = tuple(rng.normal(0.0, spec.hand_tilt_std, 2))
    cloud = make_gesture_cloud(gesture, subject, variant, hand, seed=jitter_seed,
                               aperture=spec.aperture, clutter=spec.clutter,
                               reflectance=spec.reflectance, radar_xy=scan_xy, tilt=tilt)
    # moving the radar by (x', y') == moving the scene by -(x', y')
    cloud = cloud.translated(-scan_xy[0], -scan_xy[1])
    noise = NoiseSpec(power=variant.noise_power)
    cube = simulate_scene(cloud, spec.geometry, spec.radar, noise, rng=rng)
    cube = multistatic_to_monostatic(cube, spec.z0_ref)
    return Sample(cube=cube, gesture=GestureClass(gesture), variant=kind, subject=subj_idx,
                  scan_xy=(float(scan_xy[0]), float(scan_xy[1])), hand_center=tuple(hand.tolist()))


def sample_keys(spec: DatasetSpec):
    """Canonical (gesture, kind, index) ordering of a dataset."""
    keys = []
    for kind in (VariantKind.HUMAN, VariantKind.STERILE):
        for gesture in GestureClass:
            keys.extend((gesture, kind, i) for i in range(spec.count(kind)))
    return keys


def synth_dataset(spec: DatasetSpec, transform=None):
    """All samples of ``spec`` in canonical order.

    ``transform`` maps each :class:`Sample` to what is stored (e.g. the
    preprocessed images) so the full beat cubes need not be kept in memory.
    """
    out = []
    for gesture, kind, i in sample_keys(spec):
        s = synth_sample(spec, gesture, kind, i)
        out.append(transform(s) if transform is not None else s)
    return out


def validation_indices(spec: DatasetSpec, per_class: int) -> dict:
    """Randomly chosen human sample indices set aside for validation, per class."""
    if per_class >= spec.samples_per_class_human:
        raise ValueError("validation split would leave no human training samples")
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.master_seed), _STREAM_VALSPLIT]))
    return {g: np.sort(rng.choice(spec.samples_per_class_human, per_class, replace=False))
            for g in GestureClass}

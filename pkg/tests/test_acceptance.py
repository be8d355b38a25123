"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria 8, 9 and 11 run the full default experiment through the CLI (twice
for the determinism check) and take hours on a single core.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from gesture_radar.dsp import Mode, angle_fft, dft_oracle, preprocess, range_fft
from gesture_radar.experiment import cli
from gesture_radar.experiment.config import ExperimentConfig, Mix, load_config
from gesture_radar.experiment.pipeline import sar_figures
from gesture_radar.experiment.report import collect
from gesture_radar.nn import Network, NetworkSpec, Split, TrainConfig, train
from gesture_radar.nn import ops
from gesture_radar.nn.gradcheck import numerical_grad, relative_error
from gesture_radar.radar_model import (ArrayGeometry, RadarConfig, TargetCloud, monostatic_reference,
                                       multistatic_to_monostatic, simulate_scene)
from gesture_radar.scene_synth import (DatasetSpec, GestureClass, ScanAperture, VariantKind, VariantSpec,
                                       random_subjects, synth_sample)

CFG = RadarConfig()
GEOM = ArrayGeometry.default(CFG)


def profile_of(xyz, sigma=None):
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    sig = np.ones(len(xyz)) if sigma is None else np.asarray(sigma, dtype=float)
    cube = simulate_scene(TargetCloud(xyz, sig), GEOM, CFG)
    return range_fft(multistatic_to_monostatic(cube))


def padded_magnitude(xyz, pad=8):
    """Channel-summed magnitude of the zero-padded (interpolated) range spectrum."""
    xyz = np.asarray(xyz, dtype=float)
    cube = multistatic_to_monostatic(simulate_scene(TargetCloud(xyz, np.ones(len(xyz))), GEOM, CFG))
    return np.abs(np.fft.fft(cube.data, n=pad * cube.n_k, axis=1)).sum(axis=0)


def count_peaks(mag, rel_threshold=0.5):
    """Local maxima of a 1-D magnitude profile above rel_threshold * max."""
    m = np.asarray(mag)
    inner = (m[1:-1] > m[:-2]) & (m[1:-1] >= m[2:]) & (m[1:-1] >= rel_threshold * m.max())
    return int(np.sum(inner))


def test_c01_dft_oracle(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for n in (8, 16, 64, 256):
        for _ in range(100):
            x = rng.normal(size=n) + 1j * rng.normal(size=n)
            ref = dft_oracle(x)
            worst = max(worst, np.max(np.abs(np.fft.fft(x) - ref)) / np.max(np.abs(ref)))
    dt = time.perf_counter() - t0
    ok = record_criterion(1, "DFT oracle", worst < 1e-6 and dt < 10,
                          f"max rel err {worst:.2e} < 1e-6, {dt:.1f} s < 10 s")
    assert ok


def test_c02_range_localization(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        r = rng.uniform(0.25, 2.0)
        x, y = rng.uniform(-0.05, 0.05, 2)
        z = np.sqrt(r ** 2 - x ** 2 - y ** 2)
        prof = profile_of([x, y, z])
        true_r = np.sqrt(x ** 2 + (y - prof.virtual_y) ** 2 + z ** 2)
        peaks = np.argmax(np.abs(prof.data), axis=1)
        worst = max(worst, np.max(np.abs(peaks - true_r / prof.bin_spacing)))
    dt = time.perf_counter() - t0
    ok = record_criterion(2, "range localization", worst <= 1.0 and dt < 10,
                          f"worst offset {worst:.2f} bins <= 1, {dt:.1f} s < 10 s")
    assert ok


def test_c03_range_resolution(record_criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    bases = rng.uniform(0.3, 1.5, 20)
    resolved = unresolved = 0
    for z in bases:
        for sep, counter in ((0.075, "far"), (0.01875, "near")):
            n = count_peaks(padded_magnitude([[0, 0, z], [0, 0, z + sep]]))
            if counter == "far":
                resolved += n == 2
            else:
                unresolved += n == 1
    dt = time.perf_counter() - t0
    ok = record_criterion(3, "range resolution", resolved == 20 and unresolved == 20 and dt < 5,
                          f"7.5 cm resolved {resolved}/20, 1.875 cm merged {unresolved}/20, {dt:.1f} s < 5 s")
    assert ok


def predicted_angle_bin(xyz, n_angle=16):
    """Brute-force steering-vector DFT at the centre wavenumber."""
    k_c = 2 * np.pi * (CFG.f0 + CFG.bandwidth / 2) / CFG.c
    vy = np.sort(GEOM.virtual_y)
    r = np.sqrt(xyz[0] ** 2 + (xyz[1] - vy) ** 2 + xyz[2] ** 2)
    steering = np.zeros(n_angle, dtype=complex)
    steering[:len(vy)] = np.exp(2j * k_c * r)
    return int(np.argmax(np.abs(np.fft.fftshift(dft_oracle(steering)))))


def measured_angle_bin(xyz):
    ra = angle_fft(profile_of(xyz))
    rbin = int(np.argmax(np.abs(ra.data).sum(axis=0)))
    return int(np.argmax(np.abs(ra.data[:, rbin])))


def test_c04_angle_localization(record_criterion):
    t0 = time.perf_counter()
    broadside = measured_angle_bin(np.array([0.0, 0.0, 0.6]))
    rng = np.random.default_rng(4)
    worst = 0
    for _ in range(50):
        theta = np.radians(rng.uniform(-60, 60))
        r = rng.uniform(0.3, 1.5)
        xyz = np.array([rng.uniform(-0.02, 0.02), r * np.sin(theta), r * np.cos(theta)])
        d = abs(measured_angle_bin(xyz) - predicted_angle_bin(xyz))
        worst = max(worst, min(d, 16 - d))
    dt = time.perf_counter() - t0
    ok = record_criterion(4, "angle localization", broadside == 8 and worst <= 1 and dt < 10,
                          f"broadside bin {broadside} (want 8), worst steering mismatch {worst} bins, "
                          f"{dt:.1f} s < 10 s")
    assert ok


def test_c05_multistatic_correction(record_criterion):
    t0 = time.perf_counter()
    assert GEOM.d_y().max() <= 2 * CFG.wavelength + 1e-12
    ratios = []
    zs = np.linspace(0.25, 0.55, 13)
    for z in zs:
        for x in (0.0, 0.05):
            for y in (-0.1, 0.0, 0.1):
                cloud = TargetCloud(np.array([[x, y, z]]), np.array([1.0]))
                cube = simulate_scene(cloud, GEOM, CFG)
                ideal = monostatic_reference(cloud, GEOM.virtual_y, 0.0, cube.k_grid)
                err = lambda s: np.max(np.abs(np.angle(s / ideal)))
                ratios.append((z, err(cube.data) / err(multistatic_to_monostatic(cube, 0.4).data)))
    dt = time.perf_counter() - t0
    ratio = np.array([r for _, r in ratios])
    ok_z = sorted({round(float(z), 3) for z, r in ratios if r >= 10})
    passed = ratio.min() >= 10 and dt < 5
    ok = record_criterion(5, "multistatic-to-monostatic", passed,
                          f"min reduction {ratio.min():.2f}x (want >= 10x over z in [0.25, 0.55]); "
                          f">= 10x only for z in {ok_z}; {dt:.1f} s < 5 s")
    assert ok


def _gradchecks():
    """(layer, relative error) for 10 random configurations of every layer."""
    out = []
    for s in range(10):
        rng = np.random.default_rng(600 + s)
        n, h, w = rng.integers(1, 3), rng.integers(4, 10), rng.integers(2, 6)
        c_in, c_out = rng.integers(1, 3), rng.integers(1, 4)
        kh, kw = rng.integers(1, h + 1), rng.integers(1, w + 1)
        x = rng.normal(size=(n, h, w, c_in))
        k = rng.normal(size=(kh, kw, c_in, c_out))
        b = rng.normal(size=c_out)
        g = rng.normal(size=(n, h, w, c_out))
        f = lambda: float(np.sum(g * ops.conv2d_forward(x, k, b)))
        for a, p in zip(ops.conv2d_backward(g, x, k), (x, k, b)):
            out.append(("conv", relative_error(a, numerical_grad(f, p))))

        z = rng.normal(size=(3, 5))
        z[np.abs(z) < 1e-3] = 0.5
        gz = rng.normal(size=z.shape)
        out.append(("relu", relative_error(ops.relu_backward(gz, z),
                                           numerical_grad(lambda: float(np.sum(gz * ops.relu(z))), z))))

        xp = rng.permutation(16 * n).reshape(n, 4, 2, 2).astype(float)
        _, mask = ops.maxpool2d_forward(xp, (2, 1))
        gp = rng.normal(size=(n, 2, 2, 2))
        fp = lambda: float(np.sum(gp * ops.maxpool2d_forward(xp, (2, 1))[0]))
        out.append(("maxpool", relative_error(ops.maxpool2d_backward(gp, mask), numerical_grad(fp, xp))))

        d = rng.integers(2, 12)
        xf, wf, bf = rng.normal(size=(n, d)), rng.normal(size=(d, 3)), rng.normal(size=3)
        gf = rng.normal(size=(n, 3))
        ff = lambda: float(np.sum(gf * ops.fully_connected(xf, wf, bf)))
        for a, p in zip(ops.fully_connected_backward(gf, xf, wf), (xf, wf, bf)):
            out.append(("fc", relative_error(a, numerical_grad(ff, p))))

        logits, labels = rng.normal(size=(4, 3)) * 3, rng.integers(0, 3, 4)
        _, gl = ops.softmax_cross_entropy(logits, labels)
        out.append(("softmax-ce", relative_error(
            gl, numerical_grad(lambda: ops.softmax_cross_entropy(logits, labels)[0], logits))))

        net = Network(NetworkSpec((8, 4, 2), conv_blocks=2, filters=3, kernel=(3, 2)), seed=s)
        for name in net.params:
            if name.endswith(".b"):
                net.params[name] = rng.normal(size=net.params[name].shape) * 0.3
        xn, yn = rng.normal(size=(2, 8, 4, 2)), rng.integers(0, 3, 2)
        _, _, grads = net.loss_and_grads(xn, yn)
        for name, p in net.params.items():
            out.append(("network", relative_error(grads[name],
                                                  numerical_grad(lambda: net.loss_and_grads(xn, yn)[0], p))))
    return out


def test_c06_gradient_checks(record_criterion):
    t0 = time.perf_counter()
    results = _gradchecks()
    dt = time.perf_counter() - t0
    worst = {}
    for layer, err in results:
        worst[layer] = max(worst.get(layer, 0.0), err)
    passed = max(worst.values()) < 1e-6 and dt < 30
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    ok = record_criterion(6, "gradient checks", passed, f"worst rel err {detail}; 10 configs each; {dt:.1f} s < 30 s")
    assert ok


def separated_sterile_split(per_class=300, val_fraction=0.1):
    """Noise-free sterile captures of one cutout at a fixed depth, small scan aperture."""
    spec = DatasetSpec(samples_per_class_human=1, samples_per_class_sterile=per_class,
                       human=VariantSpec.human(noise_power=0.0), sterile=VariantSpec.sterile(noise_power=0.0),
                       sterile_subjects=tuple(random_subjects(1, 11, VariantKind.STERILE)),
                       hand_offset_std=0.0, hand_depth_std=0.0,
                       aperture=ScanAperture(width=0.05, height=0.05), master_seed=11)
    x, y = [], []
    for g in GestureClass:
        for i in range(per_class):
            x.append(preprocess(synth_sample(spec, g, VariantKind.STERILE, i).cube, Mode.RANGE))
            y.append(int(g))
    x, y = np.array(x), np.array(y)
    variants = np.ones(len(y), dtype=int)
    rng = np.random.default_rng(0)
    val = np.zeros(len(y), dtype=bool)
    for g in range(3):
        val[rng.choice(np.flatnonzero(y == g), int(per_class * val_fraction), replace=False)] = True
    return Split(x[~val], y[~val], variants[~val]), Split(x[val], y[val], variants[val])


def test_c07_training_sanity(record_criterion):
    t0 = time.perf_counter()
    tr, va = separated_sterile_split()
    res = train(NetworkSpec((64, 8, 2)), tr, va, TrainConfig(learning_rate=0.03, epochs=30, seed=0),
                allow_sterile_val=True)
    dt = time.perf_counter() - t0
    acc = res.best_val.accuracy
    ok = record_criterion(7, "training sanity", acc >= 0.99 and dt < 180,
                          f"best val acc {100 * acc:.1f}% at epoch {res.best_epoch} (want >= 99%), "
                          f"{dt:.0f} s < 180 s")
    assert ok


# --------------------------------------------------------------------------- full pipeline

def _run_pipeline(out: Path) -> float:
    t0 = time.perf_counter()
    assert cli.main(["run", "--out", str(out)]) == 0
    return time.perf_counter() - t0


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance") / "run_a"
    return out, _run_pipeline(out)


def _means(out):
    stats = collect(load_config(out / "config.txt", out_dir=str(out)), out)
    return {key: s.mean for key, s in stats.items()}


def test_c08_sterile_trend(full_run, record_criterion):
    out, seconds = full_run
    means = _means(out)
    parts, passed = [], seconds < 900
    for mode in (Mode.RANGE, Mode.RANGE_ANGLE):
        h, c = means[(mode, Mix.HUMAN_ONLY)], means[(mode, Mix.COMBINED)]
        delta = 100 * (c - h)
        passed &= c > h and delta >= 2.0
        parts.append(f"{mode.label}: human {100 * h:.1f}% combined {100 * c:.1f}% ({delta:+.1f} pts)")
    ok = record_criterion(8, "sterile-data trend", passed,
                          "; ".join(parts) + f"; want >= +2.0 pts; pipeline {seconds / 60:.0f} min < 15 min")
    assert ok


def test_c09_mode_ordering(full_run, record_criterion):
    out, _ = full_run
    means = _means(out)
    parts, passed = [], True
    for mix in (Mix.HUMAN_ONLY, Mix.COMBINED):
        r, ra = means[(Mode.RANGE, mix)], means[(Mode.RANGE_ANGLE, mix)]
        passed &= ra >= r
        parts.append(f"{mix.label}: range {100 * r:.1f}% range-angle {100 * ra:.1f}%")
    ok = record_criterion(9, "mode ordering", passed, "; ".join(parts))
    assert ok


def test_c10_sar_contrast(tmp_path, record_criterion):
    t0 = time.perf_counter()
    res = sar_figures(ExperimentConfig(out_dir=str(tmp_path)), tmp_path)
    dt = time.perf_counter() - t0
    ratio = res.snr_sterile / res.snr_human
    ok = record_criterion(10, "SAR contrast", ratio >= 2 and res.point_error_px <= 1 and dt < 120,
                          f"SNR sterile {res.snr_sterile:.2f} / human {res.snr_human:.2f} = {ratio:.2f}x (want >= 2x), "
                          f"point peak error {res.point_error_px:.2f} px <= 1, {dt:.0f} s < 120 s")
    assert ok


def _artifacts(out: Path) -> dict:
    files = sorted(p for p in out.rglob("*") if p.is_file())
    return {str(p.relative_to(out)): p.read_bytes() for p in files}


def test_c11_determinism(full_run, tmp_path, record_criterion):
    out_a, _ = full_run
    out_b = tmp_path / "run_b"
    _run_pipeline(out_b)
    a, b = _artifacts(out_a), _artifacts(out_b)
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    kinds = {"datasets": any(k.endswith(".fgl") for k in a), "checkpoints": any(k.endswith(".fgc") for k in a),
             "report": "report.txt" in a}
    passed = not differing and all(kinds.values())
    ok = record_criterion(11, "determinism", passed,
                          f"{len(a)} artifacts compared, {len(differing)} differ"
                          + (f" ({', '.join(differing[:5])})" if differing else ""))
    assert ok

#!/usr/bin/env python3
"""Smoke test for the _sonarscape extension module.

Builds the cdylib with cargo, copies it next to this script as
_sonarscape.so, and runs a miniature end-to-end pass: chirp generation,
PDM round trip, point-reflector localization through the beamformer, and
the training-protocol helpers.
"""

import math
import pathlib
import shutil
import subprocess
import sys

ROOT = pathlib.Path(__file__).resolve().parents[1]


def build_and_import():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "sonarscape-py"],
        cwd=ROOT,
        check=True,
    )
    built = ROOT / "target" / "release" / "lib_sonarscape.so"
    if not built.exists():  # e.g. macOS
        built = ROOT / "target" / "release" / "lib_sonarscape.dylib"
    dest = pathlib.Path(__file__).parent / "_sonarscape.so"
    shutil.copy2(built, dest)
    sys.path.insert(0, str(dest.parent))
    import _sonarscape

    return _sonarscape


def main():
    ss = build_and_import()
    print(f"_sonarscape {ss.version()}")

    # chirp: paper parameters give 1125 samples bounded by 1
    template = ss.chirp()
    assert len(template) == 1125, len(template)
    assert max(abs(x) for x in template) <= 1.0

    # PDM round trip of an in-band tone
    fs = 450_000.0
    tone = [0.8 * math.sin(2 * math.pi * 30_000.0 * i / fs) for i in range(8192)]
    packed, bits = ss.pdm_encode(tone, fs, 10)
    assert bits == len(tone) * 10
    decoded = ss.pdm_decode([(packed, bits)], fs * 10)[0]
    corr = ss.peak_correlation(tone, decoded)
    assert corr >= 0.99, corr
    print(f"PDM round-trip correlation: {corr:.4f}")

    # full chain localization of one reflector on the standard grid
    positions, c = ss.default_geometry(0)
    assert len(positions) == 32
    dirs = ss.standard_directions()
    assert len(dirs) == 91
    target = 24  # azimuth -45, elevation -60
    az, el = dirs[target]
    rng_m = 0.9
    channels = ss.render_reflectors(
        [(az, el, rng_m, 1.0)], positions, c, template, 4096, 20.0, 1, fs
    )
    filtered = [ss.matched_filter(ch, template, fs) for ch in channels]
    rows, range_resolution = ss.energyscape(filtered, fs, positions, c)
    flat_max, best = max(
        ((max(row), (r, row.index(max(row)))) for r, row in enumerate(rows))
    )
    row, col = best
    assert row == target, (row, target)
    expected_col = round(2 * rng_m / c * fs)
    assert abs(col - expected_col) <= 3, (col, expected_col)
    print(
        f"localization: row {row}, range bin {col} "
        f"({col * range_resolution:.3f} m vs true {rng_m} m)"
    )

    # CFAR + pooling keep shapes coherent
    clean = ss.cfar(rows, 4, 16, 1e-12)
    pooled = ss.maxpool_range(clean, 5)
    assert len(pooled) == 91 and len(pooled[0]) == 4096 // 5

    # protocol helpers: balanced weights, RBF gamma, scaling arithmetic
    weights = ss.balanced_class_weights([[1, 0], [0, 1], [0, 1], [0, 1]])
    assert abs(weights[0] - 2.0) < 1e-12
    assert abs(weights[1] - 2.0 / 3.0) < 1e-12

    gamma = ss.rbf_gamma([[0.0], [2.0]])
    assert abs(gamma - 1.0) < 1e-12

    scaling = ss.resolve_cnn_scaling(1.2, 1.1, 1.15, 2.0, 3, 16, 1)
    assert abs(scaling["raw_depth"] - 4.32) < 1e-12
    assert (scaling["depth"], scaling["width"], scaling["interval"]) == (4, 19, 1)
    assert scaling["residual_blocks"] == 3

    # metrics + calibration
    truth = [[1], [1], [0], [0]]
    _, f1 = ss.f1_weighted(truth, truth)
    assert f1 == 1.0
    _, kappa = ss.cohens_kappa_weighted(truth, truth)
    assert kappa == 1.0
    thresholds = ss.youden_thresholds([[0.1], [0.4], [0.35], [0.8]], [[0], [1], [0], [1]])
    assert abs(thresholds[0] - 0.375) < 1e-12
    assert ss.stratification_key([1, 0, 1]) == 5

    print("smoke test passed")


if __name__ == "__main__":
    main()

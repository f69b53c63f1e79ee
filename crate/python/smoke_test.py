#!/usr/bin/env python3
"""Smoke test for the cadx_py extension module.

Builds nothing itself: run `cargo build -p cadx-py` (or --release) first.
The script locates the compiled cdylib, exposes it as an importable module,
and drives a miniature end-to-end run: phantom generation, training,
volume prediction, attribution, and the statistical helpers.
"""

import json
import math
import os
import shutil
import sys
import tempfile


def locate_extension():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    candidates = [
        os.path.join(root, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libcadx_py.so", "cadx_py.so", "libcadx_py.dylib")
    ]
    for path in candidates:
        if os.path.exists(path):
            return path
    sys.exit("cadx_py cdylib not found; run `cargo build -p cadx-py` first")


def import_module():
    src = locate_extension()
    stage = tempfile.mkdtemp(prefix="cadx_py_")
    shutil.copy(src, os.path.join(stage, "cadx_py.so"))
    sys.path.insert(0, stage)
    import cadx_py

    return cadx_py


def approx(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    cadx = import_module()
    failures = []

    def check(name, condition):
        status = "ok" if condition else "FAIL"
        print(f"  [{status}] {name}")
        if not condition:
            failures.append(name)

    print("statistical helpers")
    lo, hi = cadx.clopper_pearson_interval(0, 10, 0.05)
    check("clopper-pearson k=0 lower bound", lo == 0.0)
    check("clopper-pearson k=0 upper bound", approx(hi, 1.0 - 0.025 ** 0.1, 1e-9))
    check("roc_auc separable", approx(cadx.roc_auc([0.9, 0.8, 0.1, 0.2], [True, True, False, False]), 1.0))
    acc, sens, spec = cadx.binary_metrics(8, 9, 1, 2)
    check("binary metrics", approx(acc, 0.85) and approx(sens, 0.8) and approx(spec, 0.9))
    dist = cadx.volume_distribution([3, 3, 4, 0])
    check("volume distribution", dist == [0.25, 0.0, 0.0, 0.5, 0.25])
    check("p_high", approx(cadx.p_high([3, 3, 4, 0]), 0.75))
    fused = cadx.fuse_features([1, 2, 3, 4, 5], 0.5, 1.0)
    check("fusion layout", fused == [1, 2, 3, 4, 5, 0.5, 1.0])
    check("age normalization midpoint", approx(cadx.normalize_age(20, 70, 45), 0.5))
    projections, variances = cadx.pca([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]], 1)
    check("pca collinear variance", approx(variances[0], 2.0, 1e-9))
    check("pca projections count", len(projections) == 3)

    print("frame ops")
    frame = cadx.Frame(4, 4, [i / 15.0 for i in range(16)])
    check("frame mean", approx(frame.mean(), sum(i / 15.0 for i in range(16)) / 16))
    cropped = frame.center_crop(2)
    check("center crop size", cropped.width == 2 and cropped.height == 2)
    check("constant gate is blurry", cadx.Frame(16, 16, [0.5] * 256).quality_gate() == "blurry")

    print("end-to-end miniature run")
    workdir = tempfile.mkdtemp(prefix="cadx_smoke_")
    manifest = cadx.generate_phantom(os.path.join(workdir, "data"), 7, 2, 1, 1, 6, 32)
    rows = cadx.manifest_summary(manifest)
    check("phantom volume count", len(rows) == 10)
    config = json.dumps(
        {
            "seed": 7,
            "folds": 2,
            "preproc": {"crop_size": 32, "target_size": 32},
            "net": {"input_size": 32, "conv_channels": [4, 8], "fc1_dim": 32, "fc2_dim": 32},
            "train": {"epochs": 2, "batch_size": 8, "cnn_frames_per_volume": 3},
        }
    )
    model_dir = os.path.join(workdir, "model")
    cadx.train(manifest, model_dir, config)
    model = cadx.Model.load(model_dir)

    data_root = os.path.dirname(manifest)
    volume_id, _, _, label, age, hpv, n_frames = rows[0]
    frames = [
        cadx.Frame.read(os.path.join(data_root, "frames", volume_id, f"f{i:03d}.pgm"))
        for i in range(n_frames)
    ]
    record = json.loads(model.predict_volume(frames, age, hpv))
    check("prediction distribution sums to 1", approx(sum(record["distribution"]), 1.0, 1e-12))
    check("prediction names a class", record["fine_class_name"] in {"normal", "ectropion", "lsil", "hsil", "cancer"})

    fc2, logits, probs = model.forward(frames[0].median_filter().center_crop(32))
    check("forward shapes", len(logits) == 5 and len(probs) == 5 and len(fc2) == 32)
    check("softmax sums to 1", approx(sum(probs), 1.0, 1e-12))

    attribution = model.explain(frames[0], "gb")
    check("attribution size", attribution.width == 32 and attribution.height == 32)
    check("attribution range", all(0.0 <= v <= 1.0 for v in attribution.data()))

    report = json.loads(cadx.evaluate(manifest, config))
    check("report version", report["version"] == 1)
    check(
        "report probability sums bounded",
        max(
            report["numeric"]["max_softmax_sum_err"],
            report["numeric"]["max_svm_prob_sum_err"],
            report["numeric"]["max_volume_dist_sum_err"],
        )
        < 1e-12,
    )

    if failures:
        sys.exit(f"{len(failures)} smoke checks failed: {failures}")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()

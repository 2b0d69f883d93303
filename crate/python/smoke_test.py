#!/usr/bin/env python3
"""Smoke test for the projsynth_py extension module.

Expects the library to be built already:

    cargo build -p projsynth-python            # or --release

Locates the resulting libprojsynth_py.so under the cargo target directory,
imports it, and walks the bound API end to end: phantom generation, forward
and back projection, the adjoint identity, metrics, losses, view synthesis,
and file round-trips. Prints one PASS line per check; exits non-zero on the
first failure.
"""

import importlib.util
import math
import os
import random
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parents[1]


def find_module():
    target = Path(os.environ.get("CARGO_TARGET_DIR", REPO_ROOT / "target"))
    candidates = [
        target / profile / "libprojsynth_py.so"
        for profile in ("release", "debug")
    ]
    found = [p for p in candidates if p.exists()]
    if not found:
        sys.exit(
            "libprojsynth_py.so not found; run `cargo build -p projsynth-python` first"
        )
    # Prefer the most recently built profile.
    so = max(found, key=lambda p: p.stat().st_mtime)
    spec = importlib.util.spec_from_file_location("projsynth_py", so)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    print(f"PASS import ({so.relative_to(REPO_ROOT) if so.is_relative_to(REPO_ROOT) else so})")
    return module


def check(name, condition, detail=""):
    if not condition:
        sys.exit(f"FAIL {name}: {detail}")
    print(f"PASS {name}" + (f" ({detail})" if detail else ""))


def main():
    ps = find_module()

    geometry = ps.Geometry(
        sad=600.0, sdd=1000.0, det_rows=24, det_cols=40, pixel_pitch=[4.0, 4.0]
    )
    sx, sy, sz = geometry.source_position(0.0)
    check(
        "geometry",
        geometry.det_rows == 24 and (sx, sy, sz) == (0.0, -600.0, 0.0),
        f"source at angle 0 = ({sx}, {sy}, {sz})",
    )

    dims, spacing = [32, 32, 32], [2.0, 2.0, 2.0]
    volume = ps.random_phantom(seed=7, dims=dims, spacing=spacing)
    values = volume.values()
    check(
        "phantom",
        len(values) == 32 * 32 * 32 and max(values) > 0.0 and min(values) >= 0.0,
        f"{len(values)} voxels, max {max(values):.4f}/mm",
    )

    image = ps.forward_project(volume, geometry, 30.0)
    check(
        "forward projection",
        image.rows == 24 and image.cols == 40 and image.angle_deg == 30.0
        and min(image.values()) >= 0.0 and max(image.values()) > 0.0,
        f"{image.rows}x{image.cols} at {image.angle_deg} deg, max {max(image.values()):.4f}",
    )

    # Adjoint identity: <Ax, y> == <x, At y> with x the phantom and y random.
    rng = random.Random(13)
    y = ps.Projection(24, 40, 30.0, values=[rng.random() for _ in range(24 * 40)])
    smeared = ps.back_project(y, geometry, dims, spacing)
    lhs = sum(a * b for a, b in zip(image.values(), y.values()))
    rhs = sum(a * b for a, b in zip(values, smeared.values()))
    ax_norm = math.sqrt(sum(v * v for v in image.values()))
    y_norm = math.sqrt(sum(v * v for v in y.values()))
    residual = abs(lhs - rhs) / (ax_norm * y_norm)
    check("adjoint identity", residual <= 1e-5, f"residual {residual:.3e} (tol 1e-5)")

    report = ps.metric_report(image, image)
    check(
        "metrics",
        report["mae"] == 0.0 and report["ssim"] == 1.0 and math.isinf(report["psnr"]),
        f"self-comparison: mae {report['mae']}, ssim {report['ssim']}, psnr {report['psnr']}",
    )

    check(
        "losses",
        ps.reconstruction_loss(image, image) == 0.0
        and ps.total_loss(0.2, 0.05, 0.3) == 1.0,
        "reconstruction optimum 0, weighted total exactly 1",
    )

    sources = [ps.forward_project(volume, geometry, a).normalized_unit() for a in (0.0, 90.0)]
    targets, cycles, texture = ps.synthesize_views(
        sources, [30.0, 60.0], geometry, dims, spacing
    )
    truth = ps.forward_project(volume, geometry, 30.0).normalized_unit()
    mae_30 = ps.metric_report(targets[0], truth)["mae"]
    check(
        "synthesis",
        [t.angle_deg for t in targets] == [30.0, 60.0]
        and len(cycles) == 2 and len(texture) > 0 and mae_30 < 0.2,
        f"2 targets + 2 cycle views, code length {len(texture)}, MAE vs render {mae_30:.4f}",
    )

    with tempfile.TemporaryDirectory() as tmp:
        vol_path = Path(tmp) / "phantom.json"
        volume.save(vol_path)
        reloaded = ps.Volume.load(vol_path)
        img_path = Path(tmp) / "view.json"
        image.save(img_path)
        img_back = ps.Projection.load(img_path)
        check(
            "file round-trip",
            reloaded.values() == values and img_back.values() == image.values()
            and img_back.angle_deg == 30.0,
            "volume and projection bytes survive save/load",
        )

    print("smoke test: PASS")


if __name__ == "__main__":
    main()

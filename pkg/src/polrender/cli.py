"""Command-line entry point: render / solve / decompose / eval.

Every command is deterministic for a fixed seed: outputs are
byte-identical across reruns and worker counts. Emitted text files are
line-oriented ``key: value``. Failures print one machine-parsable line
``error: <category>: <message>`` to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dataset as dataset_mod
from . import metrics as metrics_mod
from . import svim as svim_mod
from .config import SchemaError, load_scene_config
from .dataset import ManifestError, SceneDataset
from .inverse import NoSignalError, angle_error_mod_pi, solve_scene
from .render import render_polarized_image, render_stokes_image, ring_cameras
from .stokes import extract_polarization_info
from .svim import SvimFormatError


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_kv(path, pairs) -> None:
    Path(path).write_text("\n".join(f"{k}: {v}" for k, v in pairs) + "\n")


def cmd_render(args) -> int:
    cfg = load_scene_config(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cameras = cfg.cameras
    if args.views is not None:
        if cameras:
            proto = cameras[0]
            radius = float(np.linalg.norm(proto.position))
            fov, width, height = proto.fov, proto.width, proto.height
        else:
            radius = 3.0 * cfg.scene.bounding_radius
            fov, width, height = np.radians(40.0), 32, 32
        cameras = ring_cameras(args.views, radius, width, height, fov)
    if not cameras:
        raise SchemaError("no cameras: provide cameras in the config or pass --views")

    pol_angle = cfg.render.pol_angle if args.pol_angle_deg is None else np.radians(args.pol_angle_deg)
    mode = cfg.render.mode if args.mode is None else args.mode

    images = []
    svim_names = []
    for k, camera in enumerate(cameras):
        img = render_stokes_image(
            cfg.scene, camera, mode=mode, seed=args.seed, workers=args.workers
        )
        images.append(img)
        name = f"view{k:03d}.svim"
        svim_mod.write_stokes_image(img, out / name)
        svim_names.append(name)
        filtered = render_polarized_image(img, pol_angle)
        np.save(out / f"view{k:03d}_filtered.npy", filtered)
        svim_mod.write_png(filtered, out / f"view{k:03d}.png")

    points = dataset_mod.build_point_observations(
        cfg.scene, cameras, images, pol_angle, n_points=args.point_samples
    )
    dataset_mod.write_points(points, out / "points.txt")

    ds = SceneDataset(
        cameras=cameras,
        points=points,
        width=cameras[0].width,
        height=cameras[0].height,
        mode=mode,
        seed=args.seed,
        true_pol_angle=pol_angle,
        svim_paths=svim_names,
    )
    extra = {
        "scene_config": Path(args.scene).name,
        "point_samples": len(points),
        "workers": args.workers,
    }
    for k in range(len(cameras)):
        extra[f"view{k}_filtered"] = f"view{k:03d}_filtered.npy"
        extra[f"view{k}_png"] = f"view{k:03d}.png"
    dataset_mod.write_manifest(out / "manifest.txt", ds, extra=extra)
    print(f"rendered {len(cameras)} views to {out}")
    return 0


def cmd_solve(args) -> int:
    ds = dataset_mod.read_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    warnings = []
    if len(ds.cameras) < 4:
        warnings.append("under_determined: fewer than 4 views")

    result = solve_scene(ds, known_geometry=args.known_geometry, seed=args.seed)

    pairs = [
        ("recovered_pol_angle_deg", _fmt(np.degrees(result.pol_angle))),
        ("pol_angle_identifiable", str(result.identifiable).lower()),
        ("total_loss", _fmt(result.total_loss)),
        ("total_l1", _fmt(result.total_l1)),
        ("points_used", result.flags["points_used"]),
        ("points_skipped", result.flags["points_skipped"]),
        ("rounds", result.state.iterations),
        ("known_geometry", str(bool(args.known_geometry)).lower()),
        ("seed", args.seed),
    ]
    if ds.true_pol_angle is not None and result.identifiable:
        err = angle_error_mod_pi(result.pol_angle, ds.true_pol_angle)
        pairs.append(("true_pol_angle_deg", _fmt(np.degrees(ds.true_pol_angle % np.pi))))
        pairs.append(("pol_angle_error_deg", _fmt(np.degrees(err))))
    for w in warnings:
        pairs.append(("warning", w))

    normal_errs = []
    for idx, (unknowns, obs) in enumerate(zip(result.state.points, ds.points)):
        res = result.point_results[idx]
        pairs.append((f"point{idx}_loss", _fmt(res.loss)))
        if obs.true_normal is not None:
            dot = float(np.clip(unknowns.normal @ obs.true_normal, -1.0, 1.0))
            n_err = float(np.degrees(np.arccos(dot)))
            normal_errs.append(n_err)
            pairs.append((f"point{idx}_normal_err_deg", _fmt(n_err)))
            pairs.append((f"point{idx}_kd_err", _fmt(np.max(np.abs(unknowns.kd - obs.true_kd)))))
            pairs.append((f"point{idx}_ks_err", _fmt(np.max(np.abs(unknowns.ks - obs.true_ks)))))
            pairs.append(
                (f"point{idx}_roughness_err", _fmt(abs(unknowns.roughness - obs.true_roughness)))
            )
    if normal_errs:
        pairs.insert(4, ("mean_normal_err_deg", _fmt(np.mean(normal_errs))))
    for i, angle in enumerate(result.pol_trace):
        pairs.append((f"pol_trace_{i}_deg", _fmt(np.degrees(angle))))

    _write_kv(out / "report.txt", pairs)
    print(f"recovered polarizer angle: {np.degrees(result.pol_angle):.4f} deg")
    if ds.true_pol_angle is not None and result.identifiable:
        err = angle_error_mod_pi(result.pol_angle, ds.true_pol_angle)
        print(f"error vs withheld truth: {np.degrees(err):.4f} deg (mod 180)")
    if not result.identifiable:
        print("polarizer angle unidentifiable: observations carry no polarization signal")
    return 0


def cmd_decompose(args) -> int:
    img = svim_mod.read_stokes_image(args.svim)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    info = extract_polarization_info(img.stokes)
    dop = np.mean(info.dop, axis=-1)
    aop = info.aop[..., 0]
    unpol = info.unpolarized_intensity
    polarized = np.hypot(img.stokes[..., 1], img.stokes[..., 2])
    diffuse_est = np.clip(img.stokes[..., 0] - polarized, 0.0, None)

    for name, values, srgb in (
        ("dop", dop, False),
        ("aop", aop, False),
        ("unpolarized", unpol, True),
        ("specular", polarized, True),
        ("diffuse", diffuse_est, True),
    ):
        np.save(out / f"{name}.npy", values)
        preview = values
        if name == "aop":
            preview = (values + 0.5 * np.pi) / np.pi
        svim_mod.write_png(preview, out / f"{name}.png", srgb=srgb)
    print(f"decomposition written to {out}")
    return 0


def cmd_eval(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values = {}

    if args.svim_a and args.svim_b:
        img_a = svim_mod.read_stokes_image(args.svim_a)
        img_b = svim_mod.read_stokes_image(args.svim_b)
        mask = img_a.mask & img_b.mask
        s0_a = img_a.stokes[..., 0]
        s0_b = img_b.stokes[..., 0]
        values["psnr_db"] = _fmt(metrics_mod.psnr(s0_a, s0_b, mask))
        values["ssim"] = _fmt(metrics_mod.ssim(s0_a, s0_b, mask))
        values["normal_mae_deg"] = _fmt(
            metrics_mod.normal_mae(img_a.normals, img_b.normals, mask)
        )
    if args.points_a and args.points_b:
        pts_a = metrics_mod.read_point_list(args.points_a)
        pts_b = metrics_mod.read_point_list(args.points_b)
        if args.normalize_points:
            pts_a = metrics_mod.normalize_points_to_unit_sphere(pts_a)
            pts_b = metrics_mod.normalize_points_to_unit_sphere(pts_b)
        values["chamfer"] = _fmt(metrics_mod.chamfer(pts_a, pts_b))
    if not values:
        raise ValueError("nothing to evaluate: pass --svim-a/--svim-b or --points-a/--points-b")

    metrics_mod.write_metric_report(out / "metrics.txt", values)
    for key, value in values.items():
        print(f"{key}: {value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polrender",
        description="Polarimetric SDF renderer and inverse estimator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_render = sub.add_parser("render", help="render polarized views of a scene")
    p_render.add_argument("--scene", required=True, help="scene config path")
    p_render.add_argument("--out", required=True, help="output directory")
    p_render.add_argument("--seed", type=int, default=0)
    p_render.add_argument("--workers", type=int, default=1)
    p_render.add_argument("--pol-angle-deg", type=float, default=None)
    p_render.add_argument("--mode", choices=("sphere_trace", "volume"), default=None)
    p_render.add_argument("--views", type=int, default=None, help="generate N ring cameras")
    p_render.add_argument("--point-samples", type=int, default=64)
    p_render.set_defaults(func=cmd_render)

    p_solve = sub.add_parser("solve", help="recover unknowns from a rendered dataset")
    p_solve.add_argument("--manifest", required=True)
    p_solve.add_argument("--out", required=True)
    p_solve.add_argument("--seed", type=int, default=0)
    p_solve.add_argument("--workers", type=int, default=1)
    p_solve.add_argument("--known-geometry", action="store_true")
    p_solve.set_defaults(func=cmd_solve)

    p_dec = sub.add_parser("decompose", help="emit DoP/AoP/unpolarized maps from a SVIM")
    p_dec.add_argument("--svim", required=True)
    p_dec.add_argument("--out", required=True)
    p_dec.set_defaults(func=cmd_decompose)

    p_eval = sub.add_parser("eval", help="image and geometry metrics")
    p_eval.add_argument("--svim-a")
    p_eval.add_argument("--svim-b")
    p_eval.add_argument("--points-a")
    p_eval.add_argument("--points-b")
    p_eval.add_argument("--normalize-points", action="store_true")
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_eval)

    return parser


_ERROR_CATEGORIES = (
    (SchemaError, "schema", 2),
    (ManifestError, "manifest", 2),
    (SvimFormatError, "format", 1),
    (NoSignalError, "no-signal", 1),
    (FileNotFoundError, "io", 1),
    (OSError, "io", 1),
    (ValueError, "invalid", 1),
)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except tuple(cls for cls, _, _ in _ERROR_CATEGORIES) as exc:
        for cls, category, code in _ERROR_CATEGORIES:
            if isinstance(exc, cls):
                print(f"error: {category}: {exc}", file=sys.stderr)
                return code
        raise AssertionError("unreachable")


if __name__ == "__main__":
    raise SystemExit(main())

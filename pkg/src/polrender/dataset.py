"""Multi-view dataset assembly and serialization for the inverse solver.

A dataset is a manifest (line-oriented ``key: value`` text) referencing
per-view Stokes images plus a point-observation table. Sample points are
taken from rendered hit pixels; their per-view polarized intensities are
evaluated at the exact shared surface point (visibility checked by ray
tracing), so correspondences carry no pixel-grid resampling noise. The
true polarizer angle and per-point truths are stored for evaluation only;
the solver never reads them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pbrdf, scene as scene_mod
from .fresnel import DEFAULT_IOR
from .inverse import PointObservations
from .pbrdf import ShadingGeometry
from .render import Camera, _pixel_directions, trace_toward


class ManifestError(ValueError):
    """Missing or malformed manifest/points fields."""


@dataclass
class SceneDataset:
    cameras: list
    points: list
    width: int = 0
    height: int = 0
    mode: str = "sphere_trace"
    seed: int = 0
    true_pol_angle: float | None = None  # withheld truth, evaluation only
    svim_paths: list = field(default_factory=list)
    ior: float = DEFAULT_IOR


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _fmt_vec(v) -> str:
    return " ".join(_fmt(x) for x in np.asarray(v, dtype=float).reshape(-1))


def _floats(text) -> np.ndarray:
    return np.array([float(tok) for tok in text.split()], dtype=float)


def _parse_kv(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ManifestError(f"{path}:{lineno}: expected 'key: value'")
        key, value = line.split(":", 1)
        out[key.strip()] = value.strip()
    return out


def _require(kv: dict, key: str, path) -> str:
    if key not in kv:
        raise ManifestError(f"{path}: missing field {key!r}")
    return kv[key]


def build_point_observations(
    scene,
    cameras,
    images,
    pol_angle: float,
    n_points: int = 64,
    min_views: int = 4,
    min_cos: float = 0.15,
    oversample: int = 6,
) -> list:
    """Sample shared surface points and their exact per-view observations.

    Candidates come from each view's hit pixels in a deterministic stride
    order, oversampled because many surface points are seen by fewer than
    ``min_views`` cameras. A point is visible from a camera when a ray
    aimed at it hits within tolerance of the point and faces it with
    ``n.v`` above ``min_cos``. Observed intensities are the mirror-lit
    polarimetric radiance behind the polarizer, evaluated at the shared
    point itself.
    """
    tol = 1e-4 * scene.bounding_radius
    points: list[PointObservations] = []

    per_view_quota = int(np.ceil(oversample * n_points / max(len(cameras), 1)))
    stride_positions: list[np.ndarray] = []
    for camera, img in zip(cameras, images):
        ys, xs = np.nonzero(img.mask)
        count = ys.size
        if count == 0:
            stride_positions.append(np.zeros((0, 3)))
            continue
        stride = max(1, count // max(per_view_quota, 1))
        sel = np.arange(0, count, stride)[:per_view_quota]
        origin = camera.position
        pts = []
        for j in sel:
            y, x = int(ys[j]), int(xs[j])
            d = _pixel_directions(camera, y, y + 1)[0, x]
            pts.append(origin + img.depth[y, x] * d)
        stride_positions.append(np.asarray(pts))

    # Interleave candidates across views so early exhaustion of the point
    # budget still spreads samples over the whole surface.
    max_len = max((len(v) for v in stride_positions), default=0)
    all_pts = []
    for j in range(max_len):
        for view_pts in stride_positions:
            if j < len(view_pts):
                all_pts.append(view_pts[j])
    for pos in all_pts:
        if len(points) >= n_points:
            break
        normal = scene_mod.sdf_normal(scene, pos[None, :])[0]
        _, prim_idx = scene_mod.sdf_eval_with_index(scene, pos[None, :])
        prim = scene.primitives[int(prim_idx[0])]
        mat = prim.material

        k = len(cameras)
        view_dirs = np.zeros((k, 3))
        camera_x = np.zeros((k, 3))
        weights = np.zeros(k)
        intensities = np.zeros((k, 3))
        for ki, camera in enumerate(cameras):
            to_cam = camera.position - pos
            dist = np.linalg.norm(to_cam)
            v = to_cam / dist
            view_dirs[ki] = v
            camera_x[ki] = camera.x_axis
            if normal @ v <= min_cos:
                continue
            hit, hit_point = trace_toward(scene, camera.position, pos)
            if not hit or np.linalg.norm(hit_point - pos) > tol:
                continue
            weights[ki] = 1.0
            geom = ShadingGeometry.from_mirror(normal, v, camera.x_axis)
            intensities[ki] = pbrdf.radiance_at_filter(geom, mat, 1.0, pol_angle)
        if int(np.count_nonzero(weights)) < min_views:
            continue
        points.append(
            PointObservations(
                position=pos,
                view_dirs=view_dirs,
                camera_x=camera_x,
                intensities=intensities,
                weights=weights,
                ior=float(mat.ior),
                true_normal=normal,
                true_kd=np.broadcast_to(mat.kd, (3,)).copy(),
                true_ks=np.broadcast_to(mat.ks, (3,)).copy(),
                true_roughness=float(mat.roughness),
            )
        )
    return points


def write_points(points: list, path) -> None:
    lines = ["format: polrender-points", "version: 1", f"points: {len(points)}"]
    if points:
        lines.append(f"views: {points[0].view_dirs.shape[0]}")
    for i, p in enumerate(points):
        lines.append(f"point{i}_position: {_fmt_vec(p.position)}")
        lines.append(f"point{i}_ior: {_fmt(p.ior)}")
        lines.append(f"point{i}_weights: {_fmt_vec(p.weights)}")
        for k in range(p.view_dirs.shape[0]):
            lines.append(f"point{i}_view{k}_intensity: {_fmt_vec(p.intensities[k])}")
        if p.true_normal is not None:
            lines.append(f"point{i}_true_normal: {_fmt_vec(p.true_normal)}")
            lines.append(f"point{i}_true_kd: {_fmt_vec(p.true_kd)}")
            lines.append(f"point{i}_true_ks: {_fmt_vec(p.true_ks)}")
            lines.append(f"point{i}_true_roughness: {_fmt(p.true_roughness)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_points(path, cameras) -> list:
    kv = _parse_kv(path)
    n = int(_require(kv, "points", path))
    points = []
    cam_x = np.stack([c.x_axis for c in cameras])
    positions = np.stack([c.position for c in cameras])
    for i in range(n):
        pos = _floats(_require(kv, f"point{i}_position", path))
        weights = _floats(_require(kv, f"point{i}_weights", path))
        k = weights.size
        if k != len(cameras):
            raise ManifestError(f"{path}: point{i} has {k} weights for {len(cameras)} views")
        intensities = np.stack(
            [_floats(_require(kv, f"point{i}_view{j}_intensity", path)) for j in range(k)]
        )
        to_cam = positions - pos[None, :]
        view_dirs = to_cam / np.linalg.norm(to_cam, axis=1, keepdims=True)
        true_normal = None
        true_kd = true_ks = None
        true_rough = None
        if f"point{i}_true_normal" in kv:
            true_normal = _floats(kv[f"point{i}_true_normal"])
            true_kd = _floats(kv[f"point{i}_true_kd"])
            true_ks = _floats(kv[f"point{i}_true_ks"])
            true_rough = float(kv[f"point{i}_true_roughness"])
        points.append(
            PointObservations(
                position=pos,
                view_dirs=view_dirs,
                camera_x=cam_x.copy(),
                intensities=intensities,
                weights=weights,
                ior=float(kv.get(f"point{i}_ior", DEFAULT_IOR)),
                true_normal=true_normal,
                true_kd=true_kd,
                true_ks=true_ks,
                true_roughness=true_rough,
            )
        )
    return points


def write_manifest(path, dataset: SceneDataset, extra: dict | None = None) -> None:
    lines = [
        "format: polrender-dataset",
        "version: 1",
        f"views: {len(dataset.cameras)}",
        f"width: {dataset.width}",
        f"height: {dataset.height}",
        f"mode: {dataset.mode}",
        f"seed: {dataset.seed}",
    ]
    if dataset.true_pol_angle is not None:
        # Withheld ground truth: read only when scoring a recovered angle.
        lines.append(f"pol_angle_deg: {_fmt(np.degrees(dataset.true_pol_angle))}")
    for k, camera in enumerate(dataset.cameras):
        lines.append(f"view{k}_position: {_fmt_vec(camera.position)}")
        lines.append(f"view{k}_rotation: {_fmt_vec(camera.rotation)}")
        lines.append(f"view{k}_fov: {_fmt(camera.fov)}")
        if k < len(dataset.svim_paths):
            lines.append(f"view{k}_svim: {dataset.svim_paths[k]}")
    lines.append("points_file: points.txt")
    for key, value in (extra or {}).items():
        lines.append(f"{key}: {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> SceneDataset:
    path = Path(path)
    kv = _parse_kv(path)
    n_views = int(_require(kv, "views", path))
    width = int(_require(kv, "width", path))
    height = int(_require(kv, "height", path))
    cameras = []
    svim_paths = []
    for k in range(n_views):
        pos = _floats(_require(kv, f"view{k}_position", path))
        rot = _floats(_require(kv, f"view{k}_rotation", path)).reshape(3, 3)
        fov = float(_require(kv, f"view{k}_fov", path))
        cameras.append(Camera(rotation=rot, position=pos, fov=fov, width=width, height=height))
        if f"view{k}_svim" in kv:
            svim_paths.append(str(path.parent / kv[f"view{k}_svim"]))
    points_file = path.parent / _require(kv, "points_file", path)
    if not points_file.exists():
        raise ManifestError(f"{path}: points file {points_file} does not exist")
    points = read_points(points_file, cameras)
    true_pol = None
    if "pol_angle_deg" in kv:
        true_pol = float(np.radians(float(kv["pol_angle_deg"])))
    return SceneDataset(
        cameras=cameras,
        points=points,
        width=width,
        height=height,
        mode=kv.get("mode", "sphere_trace"),
        seed=int(kv.get("seed", 0)),
        true_pol_angle=true_pol,
        svim_paths=svim_paths,
    )

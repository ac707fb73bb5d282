"""YAML scene configuration loading.

Schema::

    scene:
      bounding_radius: <float>
    primitives:
      - shape: sphere | box | torus | plane
        radius: <float>                    # sphere
        half_extents: [x, y, z]            # box
        major_radius: <float>              # torus
        minor_radius: <float>              # torus
        position: [x, y, z]
        rotation: [ax, ay, az, angle]      # axis-angle, angle in radians
        scale: <float>                     # optional uniform scale
        material: {kd: [r,g,b], ks: [r,g,b], roughness: <f>, ior: <f>}
    density:
      beta: <float>
    cameras:
      - position: [x, y, z]
        look_at: [x, y, z]
        up: [x, y, z]
        fov_deg: <float>
        width: <int>
        height: <int>
    render:
      pol_angle_deg: <float>
      mode: sphere_trace | volume

Schema violations raise :class:`SchemaError` naming the offending field.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from .pbrdf import Material
from .render import Camera
from .scene import (
    Box,
    DensityParams,
    Placement,
    Plane,
    ScenePrimitive,
    SdfScene,
    Sphere,
    Torus,
    axis_angle_matrix,
)


class SchemaError(ValueError):
    """Invalid scene configuration; the message names the field."""


@dataclass
class RenderSettings:
    pol_angle: float = 0.0
    mode: str = "sphere_trace"


@dataclass
class SceneConfig:
    scene: SdfScene
    cameras: list
    render: RenderSettings


def _get(mapping, key, where, default=None, required=True):
    if key not in mapping:
        if required:
            raise SchemaError(f"missing field {where}.{key}")
        return default
    return mapping[key]


def _vec3(value, where):
    try:
        v = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(f"{where} must be 3 floats") from None
    if v.shape != (3,):
        raise SchemaError(f"{where} must be 3 floats")
    return v


def _float(value, where, positive=False):
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise SchemaError(f"{where} must be a float") from None
    if positive and v <= 0:
        raise SchemaError(f"{where} must be positive")
    return v


def _material(raw, where) -> Material:
    if not isinstance(raw, dict):
        raise SchemaError(f"{where} must be a mapping")
    kd = _vec3(_get(raw, "kd", where), f"{where}.kd")
    ks = _vec3(_get(raw, "ks", where), f"{where}.ks")
    roughness = _float(_get(raw, "roughness", where), f"{where}.roughness")
    ior = _float(_get(raw, "ior", where, default=1.5, required=False), f"{where}.ior")
    try:
        return Material(kd=kd, ks=ks, roughness=roughness, ior=ior)
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def _shape(raw, where):
    kind = _get(raw, "shape", where)
    if kind == "sphere":
        return Sphere(radius=_float(_get(raw, "radius", where), f"{where}.radius", positive=True))
    if kind == "box":
        return Box(half_extents=_vec3(_get(raw, "half_extents", where), f"{where}.half_extents"))
    if kind == "torus":
        return Torus(
            major_radius=_float(_get(raw, "major_radius", where), f"{where}.major_radius", positive=True),
            minor_radius=_float(_get(raw, "minor_radius", where), f"{where}.minor_radius", positive=True),
        )
    if kind == "plane":
        return Plane()
    raise SchemaError(f"{where}.shape must be one of sphere, box, torus, plane")


def _camera(raw, index) -> Camera:
    where = f"cameras[{index}]"
    if not isinstance(raw, dict):
        raise SchemaError(f"{where} must be a mapping")
    fov_deg = _float(_get(raw, "fov_deg", where), f"{where}.fov_deg", positive=True)
    if fov_deg >= 180.0:
        raise SchemaError(f"{where}.fov_deg must be below 180")
    width = int(_get(raw, "width", where))
    height = int(_get(raw, "height", where))
    if width <= 0 or height <= 0:
        raise SchemaError(f"{where}.width/height must be positive")
    try:
        return Camera.look_at(
            position=_vec3(_get(raw, "position", where), f"{where}.position"),
            target=_vec3(_get(raw, "look_at", where), f"{where}.look_at"),
            up=_vec3(_get(raw, "up", where), f"{where}.up"),
            fov=np.radians(fov_deg),
            width=width,
            height=height,
        )
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def load_scene_config(path) -> SceneConfig:
    """Parse and validate a scene configuration file."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise SchemaError("top level must be a mapping")

    scene_block = _get(raw, "scene", "top")
    bounding_radius = _float(
        _get(scene_block, "bounding_radius", "scene"), "scene.bounding_radius", positive=True
    )

    prim_block = _get(raw, "primitives", "top")
    if not isinstance(prim_block, list) or not prim_block:
        raise SchemaError("primitives must be a non-empty list")
    primitives = []
    for i, raw_prim in enumerate(prim_block):
        where = f"primitives[{i}]"
        if not isinstance(raw_prim, dict):
            raise SchemaError(f"{where} must be a mapping")
        shape = _shape(raw_prim, where)
        position = _vec3(
            _get(raw_prim, "position", where, default=[0, 0, 0], required=False), f"{where}.position"
        )
        rot_raw = _get(raw_prim, "rotation", where, default=[0, 0, 1, 0], required=False)
        rot = np.asarray(rot_raw, dtype=float)
        if rot.shape != (4,):
            raise SchemaError(f"{where}.rotation must be 4 floats (axis-angle)")
        scale = _float(_get(raw_prim, "scale", where, default=1.0, required=False), f"{where}.scale", positive=True)
        material = _material(_get(raw_prim, "material", where), f"{where}.material")
        placement = Placement(
            rotation=axis_angle_matrix(rot[:3], rot[3]), translation=position, scale=scale
        )
        primitives.append(ScenePrimitive(shape=shape, placement=placement, material=material))

    density = None
    if "density" in raw and raw["density"] is not None:
        beta = _float(_get(raw["density"], "beta", "density"), "density.beta", positive=True)
        density = DensityParams(beta=beta)

    scene = SdfScene(primitives=tuple(primitives), bounding_radius=bounding_radius, density=density)

    cameras = []
    for i, raw_cam in enumerate(raw.get("cameras") or []):
        cameras.append(_camera(raw_cam, i))

    render = RenderSettings()
    if "render" in raw and raw["render"] is not None:
        block = raw["render"]
        render.pol_angle = np.radians(
            _float(_get(block, "pol_angle_deg", "render", default=0.0, required=False), "render.pol_angle_deg")
        )
        mode = _get(block, "mode", "render", default="sphere_trace", required=False)
        if mode not in ("sphere_trace", "volume"):
            raise SchemaError("render.mode must be sphere_trace or volume")
        render.mode = mode

    return SceneConfig(scene=scene, cameras=cameras, render=render)

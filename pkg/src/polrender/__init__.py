"""Polarimetric rendering and inverse estimation on analytic SDF scenes.

Forward path: Stokes/Mueller polarization calculus, Fresnel terms for
dielectrics, a diffuse+specular polarimetric BRDF, and a deterministic
renderer (sphere tracing or SDF-density volume integration) producing
per-pixel Stokes images. Inverse path: damped Gauss-Newton recovery of
per-point normals and materials together with the shared, uncalibrated
polarizer angle from a handful of polarized views.
"""

from .fresnel import FresnelPack, brewster_angle, frame_rotation, fresnel_pack
from .inverse import (
    PointObservations,
    PointUnknowns,
    SolveState,
    solve_point,
    solve_scene,
)
from .metrics import chamfer, normal_mae, psnr, ssim
from .pbrdf import (
    Material,
    ShadingGeometry,
    decompose_radiance,
    microfacet_terms,
    mirror_incident,
    pbrdf_stokes,
    radiance_at_filter,
)
from .render import (
    Camera,
    StokesImage,
    generate_ray,
    render_polarized_image,
    render_stokes_image,
    sphere_trace,
    volume_weights,
)
from .scene import DensityParams, SdfScene, density_from_sdf, sdf_eval, sdf_normal
from .stokes import (
    PolarizationInfo,
    apply_mueller,
    extract_polarization_info,
    filter_intensity,
    linear_polarizer_mueller,
    malus_intensity,
    rotation_mueller,
    solve_polarizer_angle_closed_form,
    stokes_from_quad,
)
from .svim import read_stokes_image, write_stokes_image

__version__ = "0.1.0"

"""Geometry kernels: points, exp/log maps, distances, Fréchet means,
embeddings, and chart atlases for the sphere, the planar preshape sphere,
and SPD matrices."""

from .atlas import (
    Atlas,
    Chart,
    bump_value,
    chart_at,
    normal_coords,
    normal_coords_batch,
    partition_weights,
    partition_weights_batch,
    single_chart_atlas,
    two_pole_atlas,
)
from .frechet import frechet_mean
from .points import (
    ManifoldPoint,
    TangentVector,
    ambient_shape,
    coords_of,
    intrinsic_dim,
    make_point,
    manifold_kind,
    validate_coords,
    validate_tangent,
)
from .shapes import (
    load_landmark_csv,
    preshape,
    preshape_batch,
    preshape_tangent_basis,
    vw_embed,
    vw_embed_batch,
    vw_unembed,
)
from .spd import (
    check_spd,
    check_symmetric,
    load_spd_csv,
    load_spd_json,
    logm_batch,
    random_spd,
    spd_dist,
    spd_embed,
    spd_embed_batch,
    spd_exp_point,
    spd_expm,
    spd_invsqrt,
    spd_log_point,
    spd_logm,
    spd_sqrt,
    sym_dim,
    sym_unvec,
    sym_vec,
)
from .sphere import (
    project_tangent,
    project_to_sphere,
    random_tangent,
    sphere_dist,
    sphere_dist_matrix,
    sphere_exp,
    sphere_log,
    sphere_log_batch,
    tangent_basis,
    uniform_sphere,
)

__all__ = [name for name in dir() if not name.startswith("_")]

"""Benchmark problem models: two-view geometry and small bundle adjustment."""

from .essential import (EssentialState, SampsonModel, essential_from_pose,
                        generate_essential_instance, random_essential_state)
from .homography import (PhotometricModel, generate_homography_instance,
                         homography_matrix, warp_points)
from .bundle import (BundleCameras, WeakPerspectiveModel,
                     generate_bundle_instance, varpro_point_solve,
                     weak_perspective_project)

__all__ = [
    "EssentialState", "SampsonModel", "essential_from_pose",
    "generate_essential_instance", "random_essential_state",
    "PhotometricModel", "generate_homography_instance", "homography_matrix",
    "warp_points",
    "BundleCameras", "WeakPerspectiveModel", "generate_bundle_instance",
    "varpro_point_solve", "weak_perspective_project",
]

"""farstereo: long-range depth from a three-camera small-FOV rig.

The pipeline pseudo-rectifies a left/right telephoto pair with a constrained
affine pair estimated purely from image matches, runs dense stereo matching,
resolves the resulting global disparity offset using a third (back) camera,
and converts disparity to metric depth.  Only the shared focal length and the
two rig distances need to be known; no full calibration is required.
"""

from .config import PipelineConfig, load_config, save_config, stage_seed
from .disambig import (DisambigParams, OffsetEstimateSet, depth_from_same_depth_pair,
                       disparity_to_depth, offset_estimate, remove_ambiguity)
from .features import MatcherParams, MatchSet, detect_and_match
from .geometry import (AffineTransform, Camera, Rotation, ThreeViewRig,
                       camera_from_fov, exact_rotation_homography_residual,
                       project, rotation_from_euler, small_rotation_affine)
from .metrics import (ErrorReport, evaluate_depth, relative_error_map,
                      threshold_fractions, warp_depth_to_rectified)
from .pfm import pfm_read, pfm_write
from .pipeline import PipelineResult, StageError, run_pipeline
from .rasters import DepthMap
from .rectify import (AffineRectification, RansacParams, complete_first_rows,
                      count_inliers, pseudo_rectify, set_disparity_margin,
                      solve_row_params)
from .stereo import BlockMatchParams, DisparityMap, compute_disparity, oracle_disparity
from .synthscene import (SceneSpec, SurfaceParams, build_rig, gaussian_height,
                         make_scene, render_view, sample_correspondences)
from .basrelief import (SfmSimConfig, SfmSimReport, decompose_and_triangulate,
                        estimate_essential, simulate_two_view_sfm)

__version__ = "0.1.0"

"""Intermediate video frame synthesis with bilateral motion estimation and dynamic blending filters."""
from .approx import ApproxMotions, approximate, approximate_backward, approximate_forward
from .bcv import CostVolume, SearchWindow, compute_bcv, conventional_cost_volume
from .bme import BilateralMotion, EstimatorConfig, estimate_bidirectional, estimate_bilateral_motion, refine_variational
from .errors import ConfigError, DimensionError, DomainError, FormatError, MidframeError, NumericError
from .filtergen import ConvStack, TrainConfig, generate_filters, load_checkpoint, save_checkpoint, train_filtergen
from .grid import FeaturePyramid, build_feature_pyramid
from .io import read_flo, read_image, write_flo, write_image
from .losses import (LossWeights, bilateral_loss, charbonnier, dynamic_loss, interp_error, photometric_loss, psnr,
                     smoothness_loss, ssim)
from .pipeline import PipelineConfig, interpolate
from .synth import (CandidateSet, FilterStack, apply_dynamic_filters, apply_dynamic_filters_grad, build_candidates,
                    extract_context)
from .synthetic import SyntheticScene, Triplet, generate_triplet
from .warp import backward_warp, backward_warp_grad

__version__ = "0.1.0"

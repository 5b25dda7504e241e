"""Degree-of-focus scoring for grayscale microscopy.

The score is the number of blob-like features found in a linearly sampled
Difference-of-Gaussians scale space: sharp sections resolve many features
across scales, defocused ones few.
"""

__version__ = "0.1.0"

from .calibrate import (
    BlurSeriesPoint,
    Focus,
    FocusThreshold,
    LogLinearFit,
    classify,
    fit_log_linear,
    threshold_from_fit,
)
from .detect import Feature, FeatureSet, detect_features, local_maxima, scale_argmax
from .image_io import GrayImage, downsample, load_image, save_image
from .parallel import Partition, PhaseTimings, make_partition, run_pipeline
from .preprocess import StretchParams, histogram_stretch
from .report import AnalysisConfig, DofReport, analyze
from .scale_space import (
    DoGStack,
    GaussianPyramid,
    ScaleGrid,
    build_dog,
    build_pyramid,
    fft_convolve,
    gaussian_kernel,
)
from .synthetic import gen_synthetic

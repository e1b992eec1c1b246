"""Spike camera simulation, calibration, and image restoration toolkit."""

from .bench import (
    BenchmarkReport,
    BenchRow,
    MethodSpec,
    Scene,
    make_scenes,
    make_translating_sequence,
    run_benchmark,
    synthetic_calibration,
    theta_for_density,
)
from .calibration import (
    CalibrationData,
    CalibrationError,
    CalibrationQualityError,
    build_calibration,
    estimate_dark_equivalent,
    estimate_nonuniformity,
    identity_calibration,
    make_calibration,
    mean_interval_map,
    select_reference_pixel,
)
from .formats import (
    FormatError,
    center_crop,
    read_calibration,
    read_image,
    read_raw_stream,
    read_stream,
    write_calibration,
    write_image,
    write_stream,
)
from .metrics import psnr, ssim
from .noise import (
    NoiseConfig,
    TruncationDistribution,
    apply_imaging_model,
    make_rng,
    sample_dark,
    sample_quantization,
    sample_shot,
    split_rng,
    truncation_distribution,
)
from .reconstruct import (
    RecurrentRestorer,
    RestorerParams,
    RestorerState,
    StepResult,
    adaptive_transform,
    ast_window,
    correct_fixed_pattern,
    fusion_mask,
    refine,
    restore_recurrent,
    temporal_fuse,
    tfi,
    tfp,
    wavelet_denoise,
)
from .simulate import SimulationRequest, simulate, simulate_ideal
from .streams import ClockParams, SpikeStream, frame_bytes, validate_image
from .wavelet import (
    PYRAMID_LEVELS,
    DetailBands,
    Subbands,
    WaveletPyramid,
    build_pyramid,
    collapse_pyramid,
    dwt_forward,
    dwt_inverse,
)

__version__ = "0.1.0"

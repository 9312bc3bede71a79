"""volcolor: hint-based colorization of 3D scalar volumes in YUV space."""

from .colorize import (
    ColorizeConfig,
    Hint,
    HintSet,
    WeightParams,
    build_colorization_system,
    colorize,
    compute_weights,
    hints_from_slices,
    select_hint_slices,
)
from .fusion import FusionConfig, build_fusion_system, fuse
from .metrics import MetricsConfig, MetricsReport, evaluate, mse, psnr, ssim
from .phantoms import PhantomSpec, generate
from .solver import (
    SolveReport,
    SolverConfig,
    SolverError,
    SparseSystem,
    amg_build,
    assemble,
    cg_solve,
    matvec,
    solve,
)
from .volume import (
    ColorVolume,
    ScalarVolume,
    VolumeError,
    VolumeMask,
    apply_mask,
    neighborhood,
    normalize,
    rgb_to_yuv,
    yuv_to_rgb,
)

__version__ = "0.1.0"

"""Adaptive stack filters for speckled imagery.

Design stack filters from regions of interest, apply them to SAR-like
intensity images, and compare them against classical Lee/Frost despeckling
using quality indexes, classification accuracy, and contrast preservation.
"""

from .images import (
    QuantizedImage,
    QuantizerSpec,
    as_float_image,
    dequantize,
    quantize,
    quantize_with_bounds,
    read_f64,
    read_pgm,
    write_f64,
    write_pgm,
)
from .speckle import (
    G0Params,
    NoFiniteMeanError,
    PhantomSpec,
    g0_density,
    g0_moment,
    g0_variance,
    gamma_star,
    make_phantom,
    sample_g0,
)
from .stackfilter import (
    PositiveBooleanFunction,
    StackingViolationError,
    WindowShape,
    apply_iterated,
    apply_stack_fast,
    apply_stack_reference,
    decompose,
    eval_pbf,
    pbf_from_text,
    pbf_to_text,
    reconstruct,
    threshold,
)
from .training import (
    PatternStats,
    Region,
    RegionStats,
    RoiSet,
    accumulate_stats,
    fit_monotone,
    region_stats,
    train_from_rois,
    train_full_images,
    training_cost,
)
from .classic import SpeckleFilterParams, frost_filter, lee_filter
from .metrics import (
    MetricsReport,
    UndefinedMetricError,
    beta_index,
    confusion_stats,
    contrast,
    metrics_report,
    q_index,
    relative_contrast_error,
)
from .gmlc import GaussianClass, classify, fit_classes

__version__ = "0.1.0"

"""cellmorph: batch morphometry of segmented, stained cell images.

Consumes cytoplasm/nuclei label masks, extracts per-subject shape
descriptors, cell-to-nucleus area ratios, coverage and Voronoi-based spatial
order metrics, aggregates them per experimental group with one-way ANOVA and
writes CSV tables plus SVG figures.
"""

__version__ = "0.1.0"

from .errors import (CellmorphError, ConfigError, ConvergenceError, DataRootError,
                     DimensionMismatchError, GeometryError, LabelNotFoundError,
                     MaskFormatError, ReportError, ScaleError, StatsError)
from .mask_io import (BatchPlan, Channel, DEFAULT_PITCH_UM, ImageEntry, LabelMask,
                      PixelScale, derive_scale, discover_dataset, label_components,
                      load_label_mask, split_connected_parts)
from .morphometry import (ChainCode, ImageSummary, MaskFeatures, SubjectFeatures,
                          compute_features, extract_features, roundness,
                          summarize_image, trace_contour, trace_contours)
from .pairing import CellNucleusPair, PairingResult, pair_subjects
from .stats import (AnovaResult, GroupStats, f_cdf, one_way_anova,
                    regularized_incomplete_beta, summarize_groups)
from .tessellation import (ClassHistogram, PolygonSymmetry, Rect, Tessellation,
                           build_voronoi, image_csm, point_in_polygon, polygon_area,
                           polygon_csm, shannon_entropy, voronoi_entropy)
from .report import (FeatureRecord, ImageRecord, render_overlay_svg,
                     render_voronoi_svg, write_anova_csv, write_group_csv,
                     write_image_csv, write_subject_csv)
from .cli import RunConfig, RunResult, run_batch, validate_config

import types as _types

__all__ = sorted(name for name, value in list(globals().items())
                 if not name.startswith("_") and not isinstance(value, _types.ModuleType))

"""Annotation-efficiency toolkit for omni-supervised video action detection.

Submodules:
    datamodel     domain types, CIELAB conversion, file formats
    superpixel3d  3D spatio-temporal superpixel segmentation
    pseudolabel   sparse-annotation -> dense pseudo-label generation
    objective     omni-supervised loss family
    selection     uncertainty ranking, bucket selection, cost accounting
    campaign      synthetic annotation-campaign simulator and mAP metrics
    cli           the `omvid` command-line entry point
"""

from .datamodel import (
    AnnotationEntry,
    AnnotationKind,
    AnnotationRecord,
    CostTable,
    DatasetSplit,
    Provenance,
    PseudoFrame,
    PseudoLabelSet,
    SuperpixelLabels,
    VideoVolume,
    load_video,
    parse_annotations,
    read_labels,
    write_labels,
)
from .pseudolabel import PseudoMode, WeightConfig, build_pseudolabels
from .selection import Bucket, BudgetConfig, SelectionPlan, fit_cost_table, plan_cost, select
from .superpixel3d import SlicConfig, energy, extract_features, segment

__version__ = "0.1.0"

__all__ = [
    "AnnotationEntry",
    "AnnotationKind",
    "AnnotationRecord",
    "Bucket",
    "BudgetConfig",
    "CostTable",
    "DatasetSplit",
    "Provenance",
    "PseudoFrame",
    "PseudoLabelSet",
    "PseudoMode",
    "SelectionPlan",
    "SlicConfig",
    "SuperpixelLabels",
    "VideoVolume",
    "WeightConfig",
    "build_pseudolabels",
    "energy",
    "extract_features",
    "fit_cost_table",
    "load_video",
    "parse_annotations",
    "plan_cost",
    "read_labels",
    "segment",
    "select",
    "write_labels",
]

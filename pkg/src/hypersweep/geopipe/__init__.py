"""Satellite imagery preprocessing: normalize, rasterize, chip, filter, split."""
from .chips import (ChipRecord, ChipWindow, EmptyDataset, NonSquareChip, SplitAssignment,
                    chip_manifest_csv, filter_binary_chips, filter_change_chips, gen_windows,
                    leakage, read_chip_manifest, rotate_augment, split_by_raster)
from .io import read_mask, read_scene, write_mask, write_scene
from .metrics import SegMetrics, f1_iou_from_pr, seg_metrics
from .pipeline import (STAGES, InProcessBackend, LocalDirBackend, PipelineConfig, PipelineReport,
                       StageFailed, StageStats, pipeline_job_name, run_pipeline, stage_table)
from .raster import (DateRange, DegenerateBandWarning, DimensionMismatch, GeoTransform,
                     InvertedDates, MissingBand, RasterScene, band_combine, date_range, dedupe,
                     nearest_rank, percentile_stretch, scl_valid_mask)
from .rasterize import InvalidPolygon, Polygon, load_polygons, rasterize
from .synthetic import SceneBatch, SyntheticArchive, synthetic_campaign, synthetic_scene

__all__ = [
    "band_combine",
    "chip_manifest_csv",
    "ChipRecord",
    "ChipWindow",
    "date_range",
    "DateRange",
    "dedupe",
    "DegenerateBandWarning",
    "DimensionMismatch",
    "EmptyDataset",
    "f1_iou_from_pr",
    "filter_binary_chips",
    "filter_change_chips",
    "gen_windows",
    "GeoTransform",
    "InProcessBackend",
    "InvalidPolygon",
    "InvertedDates",
    "leakage",
    "load_polygons",
    "LocalDirBackend",
    "MissingBand",
    "nearest_rank",
    "NonSquareChip",
    "percentile_stretch",
    "pipeline_job_name",
    "PipelineConfig",
    "PipelineReport",
    "Polygon",
    "rasterize",
    "RasterScene",
    "read_chip_manifest",
    "read_mask",
    "read_scene",
    "rotate_augment",
    "run_pipeline",
    "SceneBatch",
    "scl_valid_mask",
    "seg_metrics",
    "SegMetrics",
    "split_by_raster",
    "SplitAssignment",
    "stage_table",
    "StageFailed",
    "STAGES",
    "StageStats",
    "synthetic_campaign",
    "synthetic_scene",
    "SyntheticArchive",
    "write_mask",
    "write_scene",
]

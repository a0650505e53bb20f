"""Raster transformation demo: materialized and pipelined modes."""
from .pipeline import build_pipeline, run_materialized, run_pipelined
from .raster import Raster, TransformDomainError, TransformFn, read_cells, write_raster
from .report import IoReport, io_report, savings_ratio

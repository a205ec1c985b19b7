"""Schema matching toolkit.

Maps source table columns onto a destination attribute schema using
entity-aware candidate filtering, retrieval-compressed few-shot prompts and a
pluggable matcher backend. Ships with a three-stage ingestion pipeline
(object-type detection, attribute mapping, key detection), an HTTP review
service and an evaluation harness with classical baselines.
"""

from schemamap.core import (
    DataType,
    EntityLabel,
    MappingResult,
    ObjectType,
    SourceColumn,
    TargetAttribute,
    ingest_csv,
    load_target_schema,
)
from schemamap.pipeline import MappingSession, Pipeline, PipelineConfig, run_pipeline
from schemamap.similarity import SimilarityMeasure, bigram_jaccard, sorensen_dice

__version__ = "0.1.0"

__all__ = [
    "DataType",
    "EntityLabel",
    "MappingResult",
    "MappingSession",
    "ObjectType",
    "Pipeline",
    "PipelineConfig",
    "SimilarityMeasure",
    "SourceColumn",
    "TargetAttribute",
    "bigram_jaccard",
    "ingest_csv",
    "load_target_schema",
    "run_pipeline",
    "sorensen_dice",
]

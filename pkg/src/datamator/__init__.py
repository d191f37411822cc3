"""Answer data questions with analysis pipelines and compile them into
animated unit-visualization documents (datamations)."""

from .config import Config, load_config
from .datamation.doc import DatamationDoc, doc_to_dict, doc_to_json, generate, validate_doc
from .executor import Trace, execute
from .ingest import build_dataset, load_dataset_dir
from .linker import LexicalScorer, RankedSchema, link, serialize_schema
from .model import (
    AggMethod,
    AttributeRef,
    ColumnType,
    Comparator,
    Dataset,
    QdmrPipeline,
    QdmrStep,
    Schema,
    resolve_attribute,
    schema_of,
)
from .decomposer import CandidateSet, Resolution, decompose_rules, resolve
from .sql import EvalRecord, EvalSummary, hardness_of, run_eval, transpile_to_sql
from .text import ValidationReport, first_valid, parse, serialize, validate

__version__ = "0.1.0"

__all__ = [
    "AggMethod",
    "AttributeRef",
    "CandidateSet",
    "ColumnType",
    "Comparator",
    "Config",
    "Dataset",
    "DatamationDoc",
    "EvalRecord",
    "EvalSummary",
    "LexicalScorer",
    "QdmrPipeline",
    "QdmrStep",
    "RankedSchema",
    "Resolution",
    "Schema",
    "Trace",
    "ValidationReport",
    "build_dataset",
    "decompose_rules",
    "doc_to_dict",
    "doc_to_json",
    "execute",
    "first_valid",
    "generate",
    "hardness_of",
    "link",
    "load_config",
    "load_dataset_dir",
    "parse",
    "resolve",
    "resolve_attribute",
    "run_eval",
    "schema_of",
    "serialize",
    "serialize_schema",
    "transpile_to_sql",
    "validate",
    "validate_doc",
]

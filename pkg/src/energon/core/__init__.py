from .dataset import DatasetError, TraceDataset, read_dataset, split_holdout, write_dataset
from .registry import REGISTRY, UnknownModelError, custom_config, registry_lookup
from .taxonomy import LabelTaxonomy, Stage, get_taxonomy
from .traceio import TraceFormatError, format_trace, parse_trace, read_trace, write_trace
from .types import (
    Background,
    Family,
    Label,
    Modality,
    ModelConfig,
    NoiseScenario,
    Source,
    Trace,
    TraceMeta,
    Violation,
    expected_length,
    validate_trace,
)

__all__ = [
    "Background", "DatasetError", "Family", "Label", "LabelTaxonomy", "Modality", "ModelConfig",
    "NoiseScenario", "REGISTRY", "Source", "Stage", "Trace", "TraceDataset", "TraceFormatError",
    "TraceMeta", "UnknownModelError", "Violation", "custom_config", "expected_length",
    "format_trace", "get_taxonomy", "parse_trace", "read_dataset", "read_trace",
    "registry_lookup", "split_holdout", "validate_trace", "write_dataset", "write_trace",
]

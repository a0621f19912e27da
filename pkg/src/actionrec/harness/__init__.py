"""Dataset ingestion, the one-vs-rest protocol and synthetic corpora."""

from .dataset import DatasetManifest, ManifestEntry, ingest, subsample_negatives
from .protocol import (
    ClassResult,
    EvalReport,
    MeasurementSource,
    ProtocolConfig,
    class_accuracies,
    read_scores_csv,
    report_emit,
    run_protocol,
    write_scores_csv,
)
from .synth import presence_rule, synth_generate

__all__ = [
    "ClassResult", "DatasetManifest", "EvalReport", "ManifestEntry", "MeasurementSource",
    "ProtocolConfig", "class_accuracies", "ingest", "presence_rule", "read_scores_csv",
    "report_emit", "run_protocol", "subsample_negatives", "synth_generate", "write_scores_csv",
]

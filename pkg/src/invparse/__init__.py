"""Inventory-based frame parsing for low-resource domain transfer."""

from .benchmark import Scenario, SpisConfig, make_scenarios, spis_subsample
from .dataset import Dataset, Sample, extract_ontology, load_dataset, write_dataset
from .estimator import IndexFrameTransformer, InventoryParser
from .evaluate import EditScript, EvalReport, aggregate, domain_profile, exact_match, frame_diff
from .frame import Frame, FrameNode, parse_frame, serialize_frame, validate_frame
from .inventory import Inventory, InventoryVariant, build_inventory, from_index_frame, linearize, to_index_frame
from .model.core import DecodeFailure, ModelConfig, ParserMode, TrainConfig, TrainedModel, predict, train
from .synth import DomainSpec, default_benchmark_suite, generate_domain

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DecodeFailure", "DomainSpec", "EditScript", "EvalReport", "Frame", "FrameNode",
    "IndexFrameTransformer", "Inventory", "InventoryParser", "InventoryVariant", "ModelConfig", "ParserMode",
    "Sample", "Scenario", "SpisConfig", "TrainConfig", "TrainedModel", "aggregate", "build_inventory",
    "default_benchmark_suite", "domain_profile", "exact_match", "extract_ontology", "frame_diff",
    "from_index_frame", "generate_domain", "linearize", "load_dataset", "make_scenarios", "parse_frame",
    "predict", "serialize_frame", "spis_subsample", "to_index_frame", "train", "validate_frame",
    "write_dataset",
]

"""Road roughness (IRI) estimation from vehicle accelerometer and GPS streams."""

__version__ = "0.1.0"

from .errors import RoadIriError
from .evaluate import MetricReport, RideClass, RideThresholds, classify, metrics, repeatability
from .geo import GeoConfig, Segmenter, SegmentWindow, haversine, segment_stream
from .ingest import SensorSample, StreamMeta, parse_device_log, write_canonical_csv
from .pipeline import PipelineConfig, SegmentPrediction, emit_record, run_pipeline
from .quarter_car import GOLDEN_CAR, GoldenCarParams, RoadProfile, compute_iri, simulate_quarter_car
from .road_synth import SynthConfig, generate_profile, labeled_dataset, synthesize_stream
from .spectral import FEATURE_NAMES, SegmentFeatures, dft, extract_features, power_spectrum
from .trees import EnsembleModel, FitConfig, fit_bagged, fit_boosted, fit_single, load_model, save_model

__all__ = [
    "FEATURE_NAMES",
    "GOLDEN_CAR",
    "EnsembleModel",
    "FitConfig",
    "GeoConfig",
    "GoldenCarParams",
    "MetricReport",
    "PipelineConfig",
    "RideClass",
    "RideThresholds",
    "RoadIriError",
    "RoadProfile",
    "SegmentFeatures",
    "SegmentPrediction",
    "SegmentWindow",
    "Segmenter",
    "SensorSample",
    "StreamMeta",
    "SynthConfig",
    "classify",
    "compute_iri",
    "dft",
    "emit_record",
    "extract_features",
    "fit_bagged",
    "fit_boosted",
    "fit_single",
    "generate_profile",
    "haversine",
    "labeled_dataset",
    "load_model",
    "metrics",
    "parse_device_log",
    "power_spectrum",
    "repeatability",
    "run_pipeline",
    "save_model",
    "segment_stream",
    "simulate_quarter_car",
    "synthesize_stream",
    "write_canonical_csv",
]

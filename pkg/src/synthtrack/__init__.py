"""Synthetic labeled microscopy videos, annotation refinement, pixel-embedding
decoding and AOGM-based tracking metrics."""
from .embedcluster import (ClusterParams, EmbeddingDecoder, EmbeddingField, MeanShift, decode,
                           load_embeddings, mean_shift_modes, oracle_embeddings, save_embeddings)
from .hela import HelaConfig, simulate_hela
from .metrics import AogmWeights, ScoreReport, aogm, det, evaluate, seg, tra
from .microvilli import MicrovilliConfig, simulate_microvilli
from .model import LabeledVideo, Lineage, LineageRecord, Rng, crop_center, rasterize_disk, rasterize_stick
from .refine import (DemonsRegistration, RefineOptions, RegistrationOptions, clean,
                     connected_components, refine_video, register, signed_distance, warp_labels)
from .render import AppearanceParams, Binarizer, LabelRenderer, binarize, ingest_frames, render_frame

__version__ = "0.1.0"

__all__ = [
    "AogmWeights", "AppearanceParams", "Binarizer", "ClusterParams", "DemonsRegistration",
    "EmbeddingDecoder", "EmbeddingField", "HelaConfig", "LabelRenderer", "LabeledVideo",
    "Lineage", "LineageRecord", "MeanShift", "MicrovilliConfig", "RefineOptions",
    "RegistrationOptions", "Rng", "ScoreReport", "aogm", "binarize", "clean",
    "connected_components", "crop_center", "decode", "det", "evaluate", "ingest_frames",
    "load_embeddings", "mean_shift_modes", "oracle_embeddings", "rasterize_disk",
    "rasterize_stick", "refine_video", "register", "render_frame", "save_embeddings", "seg",
    "signed_distance", "simulate_hela", "simulate_microvilli", "tra", "warp_labels",
]

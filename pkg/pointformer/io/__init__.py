"""Dataset and weight I/O: OFF meshes, APFP clouds, APFW checkpoints, synthetic data."""

from pointformer.io.checkpoint import (
    apply_checkpoint,
    load_backbone,
    model_to_checkpoint,
    read_checkpoint,
    write_checkpoint,
)
from pointformer.io.dataset import (
    LabeledCloud,
    ManifestRecord,
    load_dataset,
    load_manifest,
    write_manifest,
)
from pointformer.io.off import parse_off, read_off
from pointformer.io.point_binary import read_point_binary, write_point_binary
from pointformer.io.synth import synth_pretrained

__all__ = [
    "LabeledCloud",
    "ManifestRecord",
    "apply_checkpoint",
    "load_backbone",
    "load_dataset",
    "load_manifest",
    "model_to_checkpoint",
    "parse_off",
    "read_checkpoint",
    "read_off",
    "read_point_binary",
    "synth_pretrained",
    "write_checkpoint",
    "write_manifest",
    "write_point_binary",
]

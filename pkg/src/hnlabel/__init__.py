"""Geometric self-labeling for aligned RGB-D frames.

Turns depth + camera intrinsics into view-independent height/normal (HN)
label rasters, with dataset statistics, segmentation metrics, a synthetic
ground-truth renderer, and a batch CLI.
"""

from hnlabel.ingest import CameraIntrinsics, DepthFrame, DatasetManifest, FrameRecord
from hnlabel.labels import HNLabelConfig, generate_labels

__all__ = [
    "CameraIntrinsics",
    "DepthFrame",
    "DatasetManifest",
    "FrameRecord",
    "HNLabelConfig",
    "generate_labels",
]

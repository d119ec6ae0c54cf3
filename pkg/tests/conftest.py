"""Shared fixtures: small camera models and synthetic frame builders."""

import numpy as np
import pytest

from hnlabel.ingest import CameraIntrinsics, DepthFrame


@pytest.fixture
def small_intrinsics() -> CameraIntrinsics:
    """A low-resolution camera for fast unit tests."""
    return CameraIntrinsics(fx=80.0, fy=80.0, cx=39.5, cy=29.5, width=80, height=60)


@pytest.fixture
def flat_depth(small_intrinsics) -> DepthFrame:
    """Fronto-parallel plane at z = 2 m, every pixel valid."""
    shape = (small_intrinsics.height, small_intrinsics.width)
    return DepthFrame(
        values=np.full(shape, 2.0),
        valid_mask=np.ones(shape, dtype=bool),
        intrinsics=small_intrinsics,
    )

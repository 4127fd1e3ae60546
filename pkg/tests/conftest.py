"""Shared fixtures: one desk-scale rendered scene reused across test modules
(rendering is the slow part of the suite)."""

import numpy as np
import pytest

from farstereo.features import detect_and_match
from farstereo.synthscene import (SceneSpec, SurfaceParams, build_rig,
                                  make_scene, render_view)

DESK_FOV = np.deg2rad(6.0)
DESK_W, DESK_H = 1152, 864


@pytest.fixture(scope="session")
def desk_scene() -> SceneSpec:
    return make_scene(SurfaceParams(a=4.0, b=3.0, sigma=1.2), texture_seed=42)


@pytest.fixture(scope="session")
def desk_rig(desk_scene):
    return build_rig(desk_scene, DESK_FOV, DESK_W, DESK_H, rot_seed=7)


@pytest.fixture(scope="session")
def rendered_triple(desk_scene, desk_rig):
    """(left, right, back) RenderedView objects for the shared scene."""
    return (render_view(desk_rig.left, desk_scene),
            render_view(desk_rig.right, desk_scene),
            render_view(desk_rig.back, desk_scene))


@pytest.fixture(scope="session")
def lr_matches(rendered_triple):
    left, right, _ = rendered_triple
    return detect_and_match(left.image, right.image)


@pytest.fixture(scope="session")
def lb_matches(rendered_triple):
    left, _, back = rendered_triple
    return detect_and_match(left.image, back.image)

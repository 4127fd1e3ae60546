"""Pipeline configuration: paper-default hyperparameters, a flat key=value
config file format, and deterministic per-stage seed derivation."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

# sub-seed derivation: SeedSequence(master, spawn_key=(STAGE_IDS[stage],))
STAGE_IDS = {
    "rig": 0,
    "texture": 1,
    "correspondences": 2,
    "ransac": 3,
    "disambig": 4,
    "basrelief": 5,
    "oracle": 6,
}


def stage_seed(master_seed: int, stage: str) -> int:
    """Deterministic 64-bit sub-seed for a named pipeline stage."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(STAGE_IDS[stage],))
    return int(seq.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the depth pipeline, defaulted to the reference values.

    ``scale`` multiplies the desk-scale image dimensions (1152x864); scale 4
    is the full 4608x3456 resolution.  ``focal_px``, ``c_lr``, ``c_lb`` may be
    given explicitly for file input; in synthetic mode they derive from the
    scene geometry.  ``z_min``/``z_max`` bound the expected depth range for
    the disparity search window.
    """

    # image geometry
    fov_deg: float = 6.0
    width: int = 1152
    height: int = 864
    scale: float = 1.0
    focal_px: float | None = None
    c_lr: float | None = None
    c_lb: float | None = None

    # synthetic scene
    surface_a: float = 4.0
    surface_b: float = 3.0
    surface_sigma: float = 1.2
    footprint_half: float | None = None     # default 3 * sigma
    back_height_offset: float = 0.0

    # feature matching
    harris_k: float = 0.04
    max_keypoints: int = 4000
    match_ratio: float = 0.9
    min_matches: int = 30

    # pseudo-rectification
    ransac_m: int = 10
    ransac_trials: int = 2000
    epsilon: float = 2.0
    phi: float = 50.0
    min_inlier_ratio: float = 0.3

    # dense stereo
    window_radius: int = 4
    lr_threshold: float = 1.0
    search_pad: float = 20.0
    z_min: float | None = None
    z_max: float | None = None

    # disambiguation
    delta: float = 300.0
    eta: float = 3.0
    target_estimates: int = 5000
    max_trials_factor: int = 50
    min_estimates: int = 50

    # oracle-stereo test mode
    oracle_offset: float = -250.0

    seed: int = 0

    def scaled_dims(self) -> tuple[int, int]:
        return int(round(self.width * self.scale)), int(round(self.height * self.scale))

    def with_overrides(self, **kw) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def save_config(cfg: PipelineConfig, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for f in fields(PipelineConfig):
            value = getattr(cfg, f.name)
            text = "none" if value is None else repr(value)
            fh.write(f"{f.name} = {text}\n")


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    ftype = _FIELD_TYPES[name]
    if "int" in str(ftype) and "float" not in str(ftype):
        return int(raw)
    return float(raw)


def load_config(path) -> PipelineConfig:
    """Parse a ``key = value`` config file; unknown keys are an error."""
    values = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _parse_value(key, raw)
    return PipelineConfig(**values)

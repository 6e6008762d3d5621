"""Pipeline configuration: defaults, `key = value` files, CLI overrides.

Every tunable in the pipeline lives behind a dotted key (for example
``tophat.height_threshold``). Values come from built-in defaults, then an
optional config file, then explicit command-line settings, in that order.
Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .lines import DetectorParams
from .planefit import FitConfig
from .tophat import TophatParams


@dataclass(frozen=True)
class GraphcutConfig:
    """Energy constants and densification settings for the offset solver."""

    data_cost_hit: int = 0
    data_cost_miss: int = 10
    smooth_cost_near: int = 2
    smooth_cost_far: int = 100
    smooth_radius: float = 5.0
    neighbor_reach: int = 8
    line_buffer_radius: int = 2
    far_distance: int = 20

    def problem_constants(self) -> dict:
        return {
            "data_cost_hit": self.data_cost_hit,
            "data_cost_miss": self.data_cost_miss,
            "smooth_cost_near": self.smooth_cost_near,
            "smooth_cost_far": self.smooth_cost_far,
            "smooth_radius": self.smooth_radius,
            "neighbor_reach": self.neighbor_reach,
        }


@dataclass
class PipelineConfig:
    dsm: Path | None = None
    ortho: Path | None = None
    truth: Path | None = None
    out: Path = Path("out")
    region: str = "synthetic"
    tophat: TophatParams = field(default_factory=TophatParams)
    detector: DetectorParams = field(default_factory=DetectorParams)
    fit: FitConfig = field(default_factory=FitConfig)
    graphcut: GraphcutConfig = field(default_factory=GraphcutConfig)
    boundary_buffer_radius: int = 5  # segment filtering against DSM contours
    overlap_radius: int = 2  # width estimation against contour images
    eval_widths: tuple[int, ...] = (5, 10, 20)
    sweep_max_width: int = 20
    section: tuple[float, float, float, float] | None = None


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(t.strip()) for t in text.split(",") if t.strip())


def _parse_float_tuple(text: str) -> tuple[float, ...]:
    return tuple(float(t.strip()) for t in text.split(",") if t.strip())


# key -> (config attribute path, converter)
_KEYS: dict[str, tuple[tuple[str, ...], object]] = {
    "dsm": (("dsm",), Path),
    "ortho": (("ortho",), Path),
    "truth": (("truth",), Path),
    "out": (("out",), Path),
    "region": (("region",), str),
    "tophat.scale_min": (("tophat", "scale_min"), int),
    "tophat.scale_max": (("tophat", "scale_max"), int),
    "tophat.scale_step": (("tophat", "scale_step"), int),
    "tophat.height_threshold": (("tophat", "height_threshold"), float),
    "detector.gradient_threshold": (("detector", "gradient_threshold"), float),
    "detector.angle_tolerance": (("detector", "angle_tolerance"), float),
    "detector.min_length": (("detector", "min_length"), float),
    "detector.min_region_pixels": (("detector", "min_region_pixels"), int),
    "detector.smoothing_sigma": (("detector", "smoothing_sigma"), float),
    "fit.width_multiplier": (("fit", "width_multiplier"), int),
    "fit.buffer_cap": (("fit", "buffer_cap"), int),
    "fit.min_points": (("fit", "min_points"), int),
    "fit.feather_band": (("fit", "feather_band"), int),
    "graphcut.data_cost_hit": (("graphcut", "data_cost_hit"), int),
    "graphcut.data_cost_miss": (("graphcut", "data_cost_miss"), int),
    "graphcut.smooth_cost_near": (("graphcut", "smooth_cost_near"), int),
    "graphcut.smooth_cost_far": (("graphcut", "smooth_cost_far"), int),
    "graphcut.smooth_radius": (("graphcut", "smooth_radius"), float),
    "graphcut.neighbor_reach": (("graphcut", "neighbor_reach"), int),
    "graphcut.line_buffer_radius": (("graphcut", "line_buffer_radius"), int),
    "graphcut.far_distance": (("graphcut", "far_distance"), int),
    "lines.boundary_buffer_radius": (("boundary_buffer_radius",), int),
    "lines.overlap_radius": (("overlap_radius",), int),
    "eval.buffer_widths": (("eval_widths",), _parse_int_tuple),
    "eval.sweep_max_width": (("sweep_max_width",), int),
    "eval.section": (("section",), _parse_float_tuple),
}


def read_config_file(path: str | Path) -> dict[str, str]:
    """Raw `key = value` pairs from a config file; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {lineno}: expected 'key = value'")
        key, _, val = (t.strip() for t in line.partition("="))
        if key not in _KEYS:
            raise ValueError(f"{path}: line {lineno}: unknown key {key!r}")
        out[key] = val
    return out


def apply_settings(cfg: PipelineConfig, settings: dict[str, str]) -> PipelineConfig:
    """Return a config with the given dotted-key overrides applied."""
    for key, raw in settings.items():
        if key not in _KEYS:
            raise ValueError(f"unknown configuration key {key!r}")
        attr_path, conv = _KEYS[key]
        try:
            value = conv(raw)
        except (TypeError, ValueError):
            raise ValueError(f"bad value {raw!r} for {key}") from None
        if key == "eval.section" and len(value) != 4:
            raise ValueError("eval.section needs four numbers: x1,y1,x2,y2")
        if len(attr_path) == 1:
            setattr(cfg, attr_path[0], value)
        else:
            holder = getattr(cfg, attr_path[0])
            setattr(cfg, attr_path[0], dataclasses.replace(holder, **{attr_path[1]: value}))
    return cfg


def build_config(
    config_path: str | Path | None = None, overrides: dict[str, str] | None = None
) -> PipelineConfig:
    """Defaults, then the config file, then explicit overrides."""
    cfg = PipelineConfig()
    if config_path is not None:
        apply_settings(cfg, read_config_file(config_path))
    if overrides:
        apply_settings(cfg, overrides)
    return cfg

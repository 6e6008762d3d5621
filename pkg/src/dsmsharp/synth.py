"""Deterministic synthetic scenes: crisp truth, smeared DSM, crisp ortho.

Stands in for a real stereo-matched DSM at desk scale. The "smeared" field
is the truth convolved with a truncated Gaussian (the boundary smoothing a
semi-global matcher would introduce) plus seeded Gaussian noise, while the
orthophoto keeps hard edges exactly at the truth discontinuities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .raster import Heightfield, RasterImage

GROUND_INTENSITY = 70
ROOF_INTENSITY = 200


@dataclass(frozen=True)
class Building:
    """Axis sizes in pixels, rotated about the center by rotation_deg."""

    center: tuple[float, float]
    size: tuple[float, float]
    height: float
    rotation_deg: float = 0.0


@dataclass(eq=False)
class SceneSpec:
    dims: tuple[int, int]  # (width, height)
    ground_height: float = 0.0
    buildings: list[Building] = field(default_factory=list)
    boundary_blur_sigma: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        w, h = self.dims
        if w <= 0 or h <= 0:
            raise ValueError("scene dimensions must be positive")
        if self.boundary_blur_sigma < 0 or self.noise_sigma < 0:
            raise ValueError("sigmas must be >= 0")
        for b in self.buildings:
            if b.height <= 0:
                raise ValueError("building heights must be positive")
            for cx, cy in _corners(b):
                if not (0 <= cx < w and 0 <= cy < h):
                    raise ValueError(f"building at {b.center} extends outside the scene")


def _corners(b: Building):
    hw, hh = b.size[0] / 2.0, b.size[1] / 2.0
    rot = math.radians(b.rotation_deg)
    c, s = math.cos(rot), math.sin(rot)
    for ux, uy in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)):
        yield b.center[0] + c * ux - s * uy, b.center[1] + s * ux + c * uy


def _footprint(b: Building, dims: tuple[int, int]) -> np.ndarray:
    w, h = dims
    yy, xx = np.mgrid[0:h, 0:w]
    rx = xx - b.center[0]
    ry = yy - b.center[1]
    rot = math.radians(b.rotation_deg)
    c, s = math.cos(rot), math.sin(rot)
    u = c * rx + s * ry
    v = -s * rx + c * ry
    # half-open interval so an even size covers exactly that many pixel centers
    hw, hh = b.size[0] / 2.0, b.size[1] / 2.0
    return (u >= -hw) & (u < hw) & (v >= -hh) & (v < hh)


def generate(spec: SceneSpec) -> tuple[Heightfield, Heightfield, RasterImage]:
    """Build (truth, smeared, ortho) for the scene; deterministic per seed."""
    w, h = spec.dims
    truth = np.full((h, w), spec.ground_height, dtype=np.float64)
    occupied = np.zeros((h, w), dtype=bool)
    roof = np.zeros((h, w), dtype=bool)
    for b in spec.buildings:
        fp = _footprint(b, spec.dims)
        clash = occupied & fp & (truth != spec.ground_height + b.height)
        if clash.any():
            raise ValueError("ambiguous truth: overlapping buildings of different heights")
        truth[fp] = spec.ground_height + b.height
        occupied |= fp
        roof |= fp

    smeared = truth
    if spec.boundary_blur_sigma > 0:
        smeared = ndimage.gaussian_filter(
            truth, sigma=spec.boundary_blur_sigma, truncate=3.0, mode="reflect"
        )
    rng = np.random.default_rng(spec.seed)
    if spec.noise_sigma > 0:
        smeared = smeared + rng.normal(0.0, spec.noise_sigma, size=(h, w))
    elif smeared is truth:
        smeared = truth.copy()

    ortho = np.where(roof, ROOF_INTENSITY, GROUND_INTENSITY).astype(np.uint8)
    return (
        Heightfield(truth),
        Heightfield(smeared),
        RasterImage(ortho),
    )


# ---------------------------------------------------------------------------
# Plain key-value scene files
# ---------------------------------------------------------------------------


def parse_scene_config(path: str | Path) -> SceneSpec:
    """Read a scene from `key = value` lines.

    Recognised keys: width, height, ground_height, blur_sigma, noise_sigma,
    seed, and one `building = cx cy width height roof_height [rotation]`
    line per building. '#' starts a comment.
    """
    values: dict[str, float] = {"width": 0, "height": 0, "ground_height": 0.0,
                                "blur_sigma": 0.0, "noise_sigma": 0.0, "seed": 0}
    buildings: list[Building] = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {lineno}: expected 'key = value'")
        key, _, val = (t.strip() for t in line.partition("="))
        if key == "building":
            parts = val.split()
            if len(parts) not in (5, 6):
                raise ValueError(
                    f"{path}: line {lineno}: building needs 'cx cy w h height [rotation]'"
                )
            nums = [float(p) for p in parts]
            rot = nums[5] if len(nums) == 6 else 0.0
            buildings.append(Building((nums[0], nums[1]), (nums[2], nums[3]), nums[4], rot))
        elif key in values:
            values[key] = float(val)
        else:
            raise ValueError(f"{path}: line {lineno}: unknown key {key!r}")
    return SceneSpec(
        dims=(int(values["width"]), int(values["height"])),
        ground_height=values["ground_height"],
        buildings=buildings,
        boundary_blur_sigma=values["blur_sigma"],
        noise_sigma=values["noise_sigma"],
        seed=int(values["seed"]),
    )

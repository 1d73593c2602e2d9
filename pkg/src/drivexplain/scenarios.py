"""Deterministic synthetic driving scenarios.

Each scenario kind renders a 16-frame flat-color clip whose distinguishing
object sits in a fixed spatial region, so the action class is learnable from
pixels alone. Sensor speed correlates loosely with the action; GPS coordinates
and the textual scene description are sampled independently of the action, so
the video branch carries the decisive signal (this is what makes the
modality-ablation ordering reproducible on synthetic data).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import actions
from .config import RenderConfig

SCENARIO_KINDS = (
    "pedestrian_crossing",
    "traffic_light_red",
    "sharp_curve",
    "merging_traffic",
    "left_turn",
    "free_road",
)

# Ground-truth action for every scenario kind. merging_traffic maps to
# turn_right (the closest directional action: the label set has no
# lane-change class); left_turn exists to populate the turn_left class.
SCENARIO_ACTION = {
    "pedestrian_crossing": actions.DECELERATE,
    "traffic_light_red": actions.STOP,
    "sharp_curve": actions.DECELERATE,
    "merging_traffic": actions.TURN_RIGHT,
    "left_turn": actions.TURN_LEFT,
    "free_road": actions.ACCELERATE,
}

ACTION_KINDS = {
    actions.STOP: ("traffic_light_red",),
    actions.DECELERATE: ("pedestrian_crossing", "sharp_curve"),
    actions.ACCELERATE: ("free_road",),
    actions.TURN_LEFT: ("left_turn",),
    actions.TURN_RIGHT: ("merging_traffic",),
}

EXPLANATION_TEMPLATES = {
    "pedestrian_crossing": (
        "reduce speed due to pedestrian ahead",
        "slow down because of pedestrian crossing",
        "slow down for the pedestrian on the crosswalk",
    ),
    "traffic_light_red": (
        "stop because of red light",
        "stop at red light ahead",
        "stopping for the red light at the intersection",
    ),
    "sharp_curve": (
        "reduce speed because of sharp curve",
        "slow down due to sharp curve ahead",
    ),
    "merging_traffic": (
        "change lane right due to merging",
        "switch to right lane for merging traffic",
    ),
    "left_turn": (
        "turn left at the intersection",
        "turning left onto the side street",
    ),
    "free_road": (
        "accelerate on the clear road ahead",
        "speed up because the road is free",
    ),
}

# Scene descriptions are composed from slots drawn independently of the
# scenario kind: they flavor the text channel without leaking the action.
_DESCRIPTION_SETTINGS = (
    "a city street",
    "an urban road",
    "a two lane road",
    "a quiet avenue",
)
_DESCRIPTION_TRAFFIC = ("light", "moderate", "heavy")
_DESCRIPTION_TIME = ("morning", "afternoon", "evening")

# Per-kind speed distribution (mean, std) in m/s; clipped at 0.
_SPEED_PROFILE = {
    "traffic_light_red": (2.0, 1.2),
    "left_turn": (5.0, 1.5),
    "pedestrian_crossing": (7.0, 1.8),
    "sharp_curve": (9.5, 1.8),
    "merging_traffic": (12.0, 2.0),
    "free_road": (16.0, 2.5),
}

# Two small GPS boxes: (lat_lo, lat_hi, lon_lo, lon_hi).
GPS_BOXES = (
    (42.30, 42.40, -71.10, -71.00),  # Boston
    (1.30, 1.40, 103.80, 103.90),  # Singapore
)

_PALETTE = {
    "sky": (135, 206, 235),
    "grass": (34, 139, 34),
    "road": (90, 90, 90),
    "lane": (230, 230, 230),
    "ego": (30, 30, 200),
    "pedestrian": (255, 140, 0),
    "light_red": (220, 20, 20),
    "light_pole": (40, 40, 40),
    "curve_sign": (250, 210, 30),
    "merge_vehicle": (150, 40, 170),
    "side_street": (60, 60, 60),
}


@dataclass(frozen=True)
class SensorReading:
    speed: float
    latitude: float
    longitude: float

    def as_array(self) -> np.ndarray:
        return np.array([self.speed, self.latitude, self.longitude], dtype=np.float64)

    def validate(self):
        arr = self.as_array()
        if not np.all(np.isfinite(arr)):
            raise ValueError("sensor reading contains non-finite values")
        if self.speed < 0:
            raise ValueError(f"speed must be >= 0, got {self.speed}")
        if not -90 <= self.latitude <= 90 or not -180 <= self.longitude <= 180:
            raise ValueError("GPS coordinates out of range")
        return self


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    seed: int
    geometry: dict = field(default_factory=dict)

    def validate(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}; expected one of {SCENARIO_KINDS}")
        for key, value in self.geometry.items():
            if key != "light_phase" and not 0.0 <= value <= 1.0:
                raise ValueError(f"geometry fraction {key}={value} outside [0, 1]")
        return self


@dataclass
class Sample:
    """One multimodal record: clip + sensor triple + texts + action label."""

    id: str
    clip: np.ndarray  # (16, H, W, 3) uint8
    sensor: SensorReading
    description: str
    action: int
    explanation: str

    def validate(self):
        if self.clip.ndim != 4 or self.clip.shape[0] != 16 or self.clip.shape[3] != 3:
            raise ValueError(f"clip must have shape (16, H, W, 3), got {self.clip.shape}")
        if self.clip.shape[1] != self.clip.shape[2]:
            raise ValueError("clip frames must be square")
        actions.action_name(self.action)
        if not self.description or not self.explanation:
            raise ValueError(f"sample {self.id}: description and explanation must be non-empty")
        self.sensor.validate()
        return self


def _rng_for(spec: ScenarioSpec) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([0x5CE4A110, spec.seed & 0xFFFFFFFFFFFFFFFF]))


def sample_geometry(kind: str, rng: np.random.Generator) -> dict:
    geo = {"object_pos": float(rng.uniform(0.25, 0.75))}
    if kind == "sharp_curve":
        geo["curve_sharpness"] = float(rng.uniform(0.4, 1.0))
    if kind == "traffic_light_red":
        geo["light_phase"] = 1.0  # red
    return geo


def _fill(img, r0, r1, c0, c1, color):
    h, w = img.shape[:2]
    r0, r1 = max(0, r0), min(h, r1)
    c0, c1 = max(0, c0), min(w, c1)
    if r0 < r1 and c0 < c1:
        img[r0:r1, c0:c1] = color


def _frac(h, f):
    return int(round(f * h))


def render_clip(spec: ScenarioSpec, sensor: SensorReading, render_cfg: RenderConfig) -> np.ndarray:
    """Rasterize the 16-frame clip for a scenario.

    Pure integer placement from the spec geometry and the frame index, so the
    output is bit-identical across platforms.
    """
    render_cfg.validate()
    spec.validate()
    h = w = render_cfg.resolution
    horizon = _frac(h, 0.33)
    road_l, road_r = _frac(w, 0.34), _frac(w, 0.66)
    geo = spec.geometry
    obj = geo.get("object_pos", 0.5)

    frames = np.empty((render_cfg.frames, h, w, 3), dtype=np.uint8)
    base = np.empty((h, w, 3), dtype=np.uint8)
    base[:horizon] = _PALETTE["sky"]
    base[horizon:] = _PALETTE["grass"]
    base[horizon:, road_l:road_r] = _PALETTE["road"]
    # center lane marking
    lane_c = (road_l + road_r) // 2
    base[horizon:, lane_c : lane_c + max(1, w // 64)] = _PALETTE["lane"]

    unit = max(2, h // 16)  # smallest block edge that survives 16px clips

    for t in range(render_cfg.frames):
        img = base.copy()

        if spec.kind == "traffic_light_red":
            c0 = w // 2 - unit
            _fill(img, unit // 2, unit // 2 + 2 * unit, c0, c0 + 2 * unit, _PALETTE["light_red"])
            _fill(img, unit // 2 + 2 * unit, horizon, c0 + unit - 1, c0 + unit + 1, _PALETTE["light_pole"])
        elif spec.kind == "pedestrian_crossing":
            band0 = _frac(h, 0.52)
            for stripe in range(road_l, road_r, 2 * unit):
                _fill(img, band0, band0 + unit, stripe, stripe + unit, _PALETTE["lane"])
            ped_c = road_l + _frac(road_r - road_l - unit, obj)
            ped_c = min(road_r - unit, ped_c + (t * unit) // 8)
            _fill(img, band0 - 2 * unit, band0, ped_c, ped_c + unit, _PALETTE["pedestrian"])
        elif spec.kind == "sharp_curve":
            sharp = geo.get("curve_sharpness", 0.7)
            bend = _frac(w, 0.3 * sharp)
            for r in range(horizon, _frac(h, 0.6)):
                shift = (bend * (_frac(h, 0.6) - r)) // max(1, _frac(h, 0.6) - horizon)
                row = img[r]
                row[road_l:road_r] = _PALETTE["grass"]
                row[min(w - 1, road_l + shift) : min(w, road_r + shift)] = _PALETTE["road"]
            _fill(img, horizon - 4 * unit, horizon - unit, w - 4 * unit, w - unit, _PALETTE["curve_sign"])
        elif spec.kind == "merging_traffic":
            start = w - unit
            x = start - ((start - (road_r - 2 * unit)) * t) // max(1, render_cfg.frames - 1)
            r0 = _frac(h, 0.58)
            _fill(img, r0, r0 + 3 * unit, x - 2 * unit, x + unit, _PALETTE["merge_vehicle"])
        elif spec.kind == "left_turn":
            r0 = _frac(h, 0.45)
            _fill(img, r0, r0 + 3 * unit, 0, road_l, _PALETTE["side_street"])
            _fill(img, r0 + unit, r0 + 2 * unit, road_l - 3 * unit, road_l, _PALETTE["lane"])
        # free_road: no extra object; its signature is the absence of all others

        # ego marker advances up the road proportionally to speed
        ego_r = h - unit - _frac(h, 0.3) * t * min(sensor.speed, 20.0) / (20.0 * render_cfg.frames)
        ego_r = int(ego_r)
        _fill(img, ego_r - unit, ego_r + unit, lane_c - unit, lane_c + unit, _PALETTE["ego"])

        frames[t] = img
    return frames


def generate_scenario(spec: ScenarioSpec, render_cfg: RenderConfig) -> Sample:
    """Build the full Sample for a scenario spec.

    The action is forced by the kind; speed, GPS region, description slots,
    and the explanation template are drawn from the spec's own seeded stream.
    """
    spec.validate()
    render_cfg.validate()
    rng = _rng_for(spec)

    geo = dict(spec.geometry) if spec.geometry else sample_geometry(spec.kind, rng)
    spec = ScenarioSpec(spec.kind, spec.seed, geo).validate()

    mean, std = _SPEED_PROFILE[spec.kind]
    speed = max(0.0, float(rng.normal(mean, std)))
    lat_lo, lat_hi, lon_lo, lon_hi = GPS_BOXES[int(rng.integers(2))]
    sensor = SensorReading(
        speed=speed,
        latitude=float(rng.uniform(lat_lo, lat_hi)),
        longitude=float(rng.uniform(lon_lo, lon_hi)),
    ).validate()

    description = "the car is driving on {} in {} traffic during the {}".format(
        _DESCRIPTION_SETTINGS[int(rng.integers(len(_DESCRIPTION_SETTINGS)))],
        _DESCRIPTION_TRAFFIC[int(rng.integers(len(_DESCRIPTION_TRAFFIC)))],
        _DESCRIPTION_TIME[int(rng.integers(len(_DESCRIPTION_TIME)))],
    )
    templates = EXPLANATION_TEMPLATES[spec.kind]
    explanation = templates[int(rng.integers(len(templates)))]

    clip = render_clip(spec, sensor, render_cfg)
    return Sample(
        id=f"{spec.kind}-{spec.seed & 0xFFFFFFFFFFFFFFFF:016x}",
        clip=clip,
        sensor=sensor,
        description=description,
        action=SCENARIO_ACTION[spec.kind],
        explanation=explanation,
    ).validate()


# Fixed regions (fractional row/col bounds) used by the learnability check:
# every pair of kinds must differ in mean pixel value in at least one region.
SIGNATURE_REGIONS = {
    "top_center": (0.0, 0.2, 0.35, 0.65),
    "crosswalk_band": (0.45, 0.6, 0.34, 0.66),
    "right_low": (0.55, 0.75, 0.7, 1.0),
    "left_mid": (0.4, 0.65, 0.0, 0.34),
    "upper_right_sign": (0.1, 0.33, 0.75, 1.0),
    "road_bend": (0.33, 0.55, 0.55, 0.9),
}


def region_stats(clip: np.ndarray) -> dict:
    """Mean pixel value of each signature region, averaged over frames."""
    h = clip.shape[1]
    out = {}
    for name, (r0, r1, c0, c1) in SIGNATURE_REGIONS.items():
        block = clip[:, _frac(h, r0) : max(_frac(h, r0) + 1, _frac(h, r1)), _frac(h, c0) : max(_frac(h, c0) + 1, _frac(h, c1))]
        out[name] = float(block.astype(np.float64).mean())
    return out

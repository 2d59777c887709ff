"""Scenario documents: scripted demonstrations, surfaces, and perturbations.

A scenario is a declarative YAML document (strictly validated, duplicate keys
rejected with line positions) describing the work surface, a scripted teacher
hand as a list of timed segments, perturbation events, and config overrides.
Scenario files are the language of the test corpus and the CLI alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .config import SimConfig, apply_overrides
from .controller import World, create_world, run_world, TraceRecord
from .geometry import Pose, Twist, UnitQuaternion, quat_exp
from .plant import HandCoupling, SurfaceModel

TWO_PI = 2.0 * math.pi


class ScenarioError(ValueError):
    """Validation or parse failure, with location information where known."""


class _StrictLoader(yaml.SafeLoader):
    pass


def _no_duplicates(loader, node, deep=False):
    seen = {}
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            raise ScenarioError(
                f"duplicate key {key!r} at line {key_node.start_mark.line + 1} "
                f"(first seen at line {seen[key]})"
            )
        seen[key] = key_node.start_mark.line + 1
    return loader.construct_mapping(node, deep=deep)


_StrictLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _no_duplicates
)


def _require(mapping: dict, path: str, required: dict, optional: dict) -> dict:
    if not isinstance(mapping, dict):
        raise ScenarioError(f"{path}: expected a mapping, got {type(mapping).__name__}")
    unknown = set(mapping) - set(required) - set(optional)
    if unknown:
        raise ScenarioError(f"{path}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(mapping)
    if missing:
        raise ScenarioError(f"{path}: missing required keys {sorted(missing)}")
    out = dict(optional)
    out.update(mapping)
    return out


def _number(value, path: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ScenarioError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _point2(value, path: str) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(f"{path}: expected [x, y]")
    return np.array([_number(v, path) for v in value])


@dataclass(frozen=True, slots=True)
class Segment:
    """One scripted hand move: target pose/twist over a time window."""

    t0: float
    t1: float
    pose_fn: object  # (t) -> (Pose, Twist)
    ramp: float = 0.5  # smooth grip engage/release time [s]

    def active(self, t: float) -> bool:
        return self.t0 <= t < self.t1

    def grip_gain(self, t: float) -> float:
        """Smoothstep envelope: 0 at the window edges, 1 in the middle."""
        if not self.active(t):
            return 0.0
        if self.ramp <= 0.0:
            return 1.0
        u = min((t - self.t0) / self.ramp, (self.t1 - t) / self.ramp, 1.0)
        u = max(u, 0.0)
        return u * u * (3.0 - 2.0 * u)


@dataclass(frozen=True, slots=True)
class SurfaceEvent:
    time: float
    raise_by: float

    def apply(self, surface: SurfaceModel) -> SurfaceModel:
        return surface.raised(self.raise_by)


@dataclass(frozen=True, slots=True)
class Scenario:
    name: str
    duration: float
    seed: int
    start: Pose
    surface: SurfaceModel
    segments: tuple[Segment, ...]
    hand_stiffness: np.ndarray
    events: tuple[SurfaceEvent, ...]
    overrides: dict


def _circle_segment(spec: dict, path: str, z_surface: float) -> Segment:
    spec = _require(
        spec,
        path,
        required={"kind": None, "start": None, "period": None, "periods": None,
                  "center": None, "radius": None},
        optional={"depth": 0.06, "start_angle": 0.0, "ramp": 0.5},
    )
    t0 = _number(spec["start"], path)
    period = _number(spec["period"], path)
    n = _number(spec["periods"], path)
    center = _point2(spec["center"], path)
    radius = _number(spec["radius"], path)
    depth = _number(spec["depth"], path)
    theta0 = _number(spec["start_angle"], path)
    omega = TWO_PI / period
    z = z_surface - depth

    def pose_fn(t):
        theta = theta0 + omega * (t - t0)
        p = np.array([center[0] + radius * math.cos(theta),
                      center[1] + radius * math.sin(theta), z])
        v = np.array([-radius * omega * math.sin(theta),
                      radius * omega * math.cos(theta), 0.0])
        return Pose(p), Twist(v=v)

    return Segment(t0, t0 + n * period, pose_fn, _number(spec["ramp"], path))


def _line_segment(spec: dict, path: str, z_surface: float) -> Segment:
    spec = _require(
        spec,
        path,
        required={"kind": None, "start": None, "period": None, "periods": None,
                  "p0": None, "p1": None},
        optional={"depth": 0.06, "ramp": 0.5},
    )
    t0 = _number(spec["start"], path)
    period = _number(spec["period"], path)
    n = _number(spec["periods"], path)
    p0 = _point2(spec["p0"], path)
    p1 = _point2(spec["p1"], path)
    depth = _number(spec["depth"], path)
    omega = TWO_PI / period
    z = z_surface - depth
    span = p1 - p0

    def pose_fn(t):
        s = 0.5 - 0.5 * math.cos(omega * (t - t0))
        ds = 0.5 * omega * math.sin(omega * (t - t0))
        p = np.array([p0[0] + s * span[0], p0[1] + s * span[1], z])
        v = np.array([ds * span[0], ds * span[1], 0.0])
        return Pose(p), Twist(v=v)

    return Segment(t0, t0 + n * period, pose_fn, _number(spec["ramp"], path))


def _yaw_segment(spec: dict, path: str, z_surface: float) -> Segment:
    spec = _require(
        spec,
        path,
        required={"kind": None, "start": None, "period": None, "periods": None,
                  "anchor": None, "amplitude": None},
        optional={"depth": 0.06, "ramp": 0.5},
    )
    t0 = _number(spec["start"], path)
    period = _number(spec["period"], path)
    n = _number(spec["periods"], path)
    anchor = _point2(spec["anchor"], path)
    amp = _number(spec["amplitude"], path)
    depth = _number(spec["depth"], path)
    omega = TWO_PI / period
    z = z_surface - depth

    def pose_fn(t):
        yaw = amp * math.sin(omega * (t - t0))
        yaw_rate = amp * omega * math.cos(omega * (t - t0))
        q = quat_exp(np.array([0.0, 0.0, yaw / 2.0]))
        return (
            Pose(np.array([anchor[0], anchor[1], z]), q),
            Twist(w=np.array([0.0, 0.0, yaw_rate])),
        )

    return Segment(t0, t0 + n * period, pose_fn, _number(spec["ramp"], path))


def _hold_segment(spec: dict, path: str, z_surface: float) -> Segment:
    spec = _require(
        spec,
        path,
        required={"kind": None, "start": None, "duration": None, "point": None},
        optional={"depth": 0.01, "ramp": 0.5},
    )
    t0 = _number(spec["start"], path)
    dur = _number(spec["duration"], path)
    point = _point2(spec["point"], path)
    depth = _number(spec["depth"], path)
    pose = Pose(np.array([point[0], point[1], z_surface - depth]))

    def pose_fn(t):
        return pose, Twist()

    return Segment(t0, t0 + dur, pose_fn, _number(spec["ramp"], path))


def _shake_segment(spec: dict, path: str, z_surface: float) -> Segment:
    spec = _require(
        spec,
        path,
        required={"kind": None, "start": None, "duration": None, "center": None,
                  "amplitude": None, "frequency": None},
        optional={"depth": 0.01, "axis": [1.0, 0.0], "ramp": 0.2},
    )
    t0 = _number(spec["start"], path)
    dur = _number(spec["duration"], path)
    center = _point2(spec["center"], path)
    amp = _number(spec["amplitude"], path)
    freq = _number(spec["frequency"], path)
    depth = _number(spec["depth"], path)
    axis = _point2(spec["axis"], path)
    norm = float(np.hypot(axis[0], axis[1]))
    if norm == 0:
        raise ScenarioError(f"{path}: shake axis must be nonzero")
    axis = axis / norm
    w = TWO_PI * freq
    z = z_surface - depth

    def pose_fn(t):
        s = amp * math.sin(w * (t - t0))
        ds = amp * w * math.cos(w * (t - t0))
        p = np.array([center[0] + s * axis[0], center[1] + s * axis[1], z])
        v = np.array([ds * axis[0], ds * axis[1], 0.0])
        return Pose(p), Twist(v=v)

    return Segment(t0, t0 + dur, pose_fn, _number(spec["ramp"], path))


_SEGMENT_BUILDERS = {
    "circle": _circle_segment,
    "line": _line_segment,
    "yaw": _yaw_segment,
    "hold": _hold_segment,
    "shake": _shake_segment,
}


def scenario_from_dict(doc: dict, name: str = "inline") -> Scenario:
    doc = _require(
        doc,
        name,
        required={"duration": None},
        optional={
            "schema": 1,
            "name": name,
            "seed": 0,
            "start": {},
            "surface": {},
            "hand": {},
            "events": [],
            "overrides": {},
        },
    )
    if doc["schema"] != 1:
        raise ScenarioError(f"{name}: unsupported schema {doc['schema']!r}")
    duration = _number(doc["duration"], f"{name}.duration")
    if duration <= 0:
        raise ScenarioError(f"{name}.duration: must be positive")

    surface_spec = _require(
        doc["surface"],
        f"{name}.surface",
        required={},
        optional={
            "height": 0.0,
            "contact_stiffness": 1.0e4,
            "contact_damping": 50.0,
            "viscous_friction": 5.0,
        },
    )
    z0 = _number(surface_spec["height"], f"{name}.surface.height")
    surface = SurfaceModel(
        height_fn=lambda x, y: z0,
        contact_stiffness=_number(surface_spec["contact_stiffness"], name),
        contact_damping=_number(surface_spec["contact_damping"], name),
        viscous_friction=_number(surface_spec["viscous_friction"], name),
    )

    start_spec = _require(
        doc["start"],
        f"{name}.start",
        required={},
        optional={"position": [0.4, 0.0, 0.01], "yaw": 0.0},
    )
    pos = start_spec["position"]
    if not isinstance(pos, (list, tuple)) or len(pos) != 3:
        raise ScenarioError(f"{name}.start.position: expected [x, y, z]")
    yaw = _number(start_spec["yaw"], f"{name}.start.yaw")
    start = Pose(
        np.array([_number(v, name) for v in pos]),
        quat_exp(np.array([0.0, 0.0, yaw / 2.0])),
    )

    hand_spec = _require(
        doc["hand"],
        f"{name}.hand",
        required={},
        optional={"stiffness": [400.0, 400, 400, 4, 4, 4], "segments": []},
    )
    k_h = hand_spec["stiffness"]
    if not isinstance(k_h, (list, tuple)) or len(k_h) != 6:
        raise ScenarioError(f"{name}.hand.stiffness: expected six entries")
    k_h = np.array([_number(v, name) for v in k_h])

    segments = []
    for i, seg_spec in enumerate(hand_spec["segments"]):
        path = f"{name}.hand.segments[{i}]"
        if not isinstance(seg_spec, dict) or "kind" not in seg_spec:
            raise ScenarioError(f"{path}: each segment needs a 'kind'")
        kind = seg_spec["kind"]
        if kind not in _SEGMENT_BUILDERS:
            raise ScenarioError(f"{path}: unknown segment kind {kind!r}")
        segments.append(_SEGMENT_BUILDERS[kind](seg_spec, path, z0))
    segments.sort(key=lambda s: s.t0)
    for a, b in zip(segments, segments[1:]):
        if b.t0 < a.t1 - 1e-9:
            raise ScenarioError(f"{name}: hand segments overlap at t={b.t0}")

    events = []
    for i, ev in enumerate(doc["events"]):
        ev = _require(
            ev,
            f"{name}.events[{i}]",
            required={"time": None, "raise_surface": None},
            optional={},
        )
        events.append(
            SurfaceEvent(_number(ev["time"], name), _number(ev["raise_surface"], name))
        )

    overrides = doc["overrides"]
    if not isinstance(overrides, dict):
        raise ScenarioError(f"{name}.overrides: expected a mapping")

    return Scenario(
        name=str(doc["name"]),
        duration=duration,
        seed=int(doc["seed"]),
        start=start,
        surface=surface,
        segments=tuple(segments),
        hand_stiffness=k_h,
        events=tuple(events),
        overrides=dict(overrides),
    )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = yaml.load(path.read_text(), Loader=_StrictLoader)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: scenario file must contain a mapping")
    return scenario_from_dict(doc, name=path.stem)


def shipped_scenario_path(name: str) -> Path:
    base = resources.files("wipesim") / "scenarios" / f"{name}.yaml"
    return Path(str(base))


def load_shipped(name: str) -> Scenario:
    return load_scenario(shipped_scenario_path(name))


def build_hand(scenario: Scenario, inertia: np.ndarray) -> HandCoupling:
    """Spring-damper teacher hand dispatching over the scenario segments."""
    segments = scenario.segments
    k_h = scenario.hand_stiffness
    d_h = 2.0 * np.sqrt(k_h * inertia)
    idle = (Pose(), Twist())

    def target_fn(t):
        for seg in segments:
            if seg.active(t):
                return seg.pose_fn(t)
        return idle

    def grasped_fn(t):
        return any(seg.active(t) for seg in segments)

    def gain_fn(t):
        for seg in segments:
            if seg.active(t):
                return seg.grip_gain(t)
        return 0.0

    return HandCoupling(
        target_fn=target_fn,
        grasped_fn=grasped_fn,
        stiffness=k_h,
        damping=d_h,
        gain_fn=gain_fn,
    )


def build_world(scenario: Scenario, cfg: SimConfig | None = None) -> World:
    cfg = apply_overrides(cfg or SimConfig(), scenario.overrides)
    hand = build_hand(scenario, cfg.controller.inertia)
    return create_world(cfg, scenario.start, scenario.surface, hand, scenario.seed)


def simulate(scenario: Scenario, cfg: SimConfig | None = None) -> list[TraceRecord]:
    """Deterministic full run of a scenario."""
    world = build_world(scenario, cfg)
    return run_world(world, scenario.duration, scenario.events)

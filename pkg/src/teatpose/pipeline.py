"""Message-driven estimation pipeline with latency injection and gating.

Three stages mirror the deployed node layout: synchronized intake (camera
frames), a segmentation stage whose latency models a remote NN service, and
the geometry stage feeding per-track consistency gates. Time is simulated in
integer microseconds so runs are fast and replays are bit-identical; wall
time never enters the event record.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .camera import CameraModel
from .cloud import PointCloud
from .errors import InvalidInputError, TeatPoseError
from .mask import extract_masked_points
from .pose import PoseConfig, TeatPose, estimate_teat_pose
from .scene import SceneSpec, render
from .voxel import voxel_downsample

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LatencyModel:
    """Stage latencies in ms: NN inference, network round trip, geometry budget."""

    inference_ms: float = 150.0
    network_ms: float = 50.0
    geometry_budget_ms: float = 50.0

    def __post_init__(self):
        if min(self.inference_ms, self.network_ms, self.geometry_budget_ms) < 0:
            raise InvalidInputError("latencies must be >= 0")

    @property
    def round_trip_us(self) -> int:
        """Segmentation service time: inference plus network, microseconds."""
        return int(round((self.inference_ms + self.network_ms) * 1000.0))

    @property
    def geometry_us(self) -> int:
        return int(round(self.geometry_budget_ms * 1000.0))


@dataclass(frozen=True)
class MaskPromise:
    """Deferred segmentation result: masks become available at ready_at_us."""

    ready_at_us: int
    masks: tuple


@dataclass(frozen=True)
class FrameMessage:
    """Synchronized camera frame: cloud now, masks later.

    The cloud and every mask in the promise carry the same stamp; that is
    the synchronization contract and it is asserted, not assumed.
    """

    stamp_us: int
    cloud: PointCloud
    camera: CameraModel
    masks_promise: MaskPromise

    def __post_init__(self):
        for m in self.masks_promise.masks:
            if m.stamp_us != self.stamp_us:
                raise InvalidInputError(
                    f"mask stamp {m.stamp_us} != frame stamp {self.stamp_us}")


@dataclass(frozen=True)
class ConsistencyGate:
    """Actuation gate: the last `window` poses must agree pairwise."""

    window: int = 5
    pos_tol_mm: float = 3.0
    axis_tol_deg: float = 5.0

    def __post_init__(self):
        if self.window < 2:
            raise InvalidInputError("gate window must be >= 2")
        if self.pos_tol_mm <= 0 or self.axis_tol_deg <= 0:
            raise InvalidInputError("gate tolerances must be > 0")


@dataclass
class GateState:
    """Per-track window of recent poses (pairwise-consistent by construction)."""

    poses: list = field(default_factory=list)


def poses_agree(a: TeatPose, b: TeatPose, gate: ConsistencyGate) -> bool:
    """Tip within pos_tol and directed axis angle within axis_tol."""
    if np.linalg.norm(a.tip_mm - b.tip_mm) > gate.pos_tol_mm:
        return False
    cosang = float(np.clip(a.axis @ b.axis, -1.0, 1.0))
    return np.degrees(np.arccos(cosang)) <= gate.axis_tol_deg


def gate_update(state: GateState, pose: TeatPose, gate: ConsistencyGate) -> str:
    """Feed one pose into a track's gate.

    The candidate window is the last window-1 retained poses plus the new
    one. Any pairwise violation clears the window down to the new pose
    ("reset"); otherwise the pose joins the window and the decision is
    "consistent" once the window is full, "pending" before that. Because the
    retained window is always pairwise-consistent, checking the new pose
    against the retained ones is equivalent to the full O(M^2) check.
    """
    retained = state.poses[-(gate.window - 1):]
    if all(poses_agree(p, pose, gate) for p in retained):
        state.poses = retained + [pose]
        return "consistent" if len(state.poses) == gate.window else "pending"
    state.poses = [pose]
    return "reset"


def approach_plan(pose: TeatPose, standoff_mm: float = 50.0) -> np.ndarray:
    """Straight-line cup approach: standoff point below the tip, then the tip.

    The axis points tip to base, so the approach point sits at
    tip - standoff * axis and the segment runs parallel to the axis.
    """
    if standoff_mm <= 0:
        raise InvalidInputError("standoff must be > 0")
    return np.stack([pose.tip_mm - standoff_mm * pose.axis, pose.tip_mm])


@dataclass(frozen=True)
class PipelineConfig:
    """Everything run_pipeline needs besides the scenes themselves."""

    latency: LatencyModel = field(default_factory=LatencyModel)
    gate: ConsistencyGate = field(default_factory=ConsistencyGate)
    pose: PoseConfig = field(default_factory=PoseConfig)
    camera_period_us: int = 33333
    association_mm: float = 15.0

    def __post_init__(self):
        if self.camera_period_us <= 0:
            raise InvalidInputError("camera period must be > 0")
        if self.association_mm <= 0:
            raise InvalidInputError("association radius must be > 0")

    def to_dict(self) -> dict:
        return {"latency": asdict(self.latency), "gate": asdict(self.gate),
                "pose": asdict(self.pose),
                "camera_period_us": self.camera_period_us,
                "association_mm": self.association_mm}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return cls(latency=LatencyModel(**d.get("latency", {})),
                   gate=ConsistencyGate(**d.get("gate", {})),
                   pose=PoseConfig(**d.get("pose", {})),
                   camera_period_us=d.get("camera_period_us", 33333),
                   association_mm=d.get("association_mm", 15.0))

    def save_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    @classmethod
    def load_json(cls, path) -> "PipelineConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def estimate_frame(cloud: PointCloud, masks, camera, config: PoseConfig,
                   ) -> tuple[list[TeatPose], list[tuple[str, str]]]:
    """Geometry path for one synchronized frame.

    Per mask: carve the cloud through the contour, voxel-downsample, estimate
    the pose. A failed teat is recorded and skipped; the frame never aborts.

    Returns:
        (poses, failures) where failures are (teat_id, error class name).
    """
    poses = []
    failures = []
    for mask in masks:
        try:
            pts = extract_masked_points(cloud, mask, camera,
                                        stride=config.stride)
            pts = voxel_downsample(pts, config.voxel_leaf_mm)
            poses.append(estimate_teat_pose(
                pts, camera, method=config.method, config=config,
                teat_id=mask.teat_id, stamp_us=mask.stamp_us))
        except TeatPoseError as exc:
            failures.append((mask.teat_id, type(exc).__name__))
    return poses, failures


@dataclass
class PipelineResult:
    """Event log (sim-time dicts), emitted poses per track, and run summary."""

    events: list
    poses: list
    summary: dict


class _TrackBook:
    """Nearest-tip association: stable track ids across frames."""

    def __init__(self, radius_mm: float):
        self.radius_mm = radius_mm
        self.tips: dict[str, np.ndarray] = {}

    def assign(self, tip_mm: np.ndarray) -> str:
        best, best_d = None, self.radius_mm
        for tid, t in self.tips.items():
            d = float(np.linalg.norm(t - tip_mm))
            if d <= best_d:
                best, best_d = tid, d
        if best is None:
            best = f"T{len(self.tips) + 1}"
        self.tips[best] = np.asarray(tip_mm, dtype=float)
        return best


def run_pipeline(scenes, config: PipelineConfig | None = None,
                 ) -> PipelineResult:
    """Drive the three-stage pipeline over a scene stream.

    Each scene is one camera frame, emitted every camera_period_us of
    simulated time. The segmentation stage serializes frames for the
    simulated NN round trip; the single-slot intake drops the oldest waiting
    frame when a fresh one arrives (freshest data wins). Geometry runs in
    its simulated budget. Only accepted frames are rendered, which keeps a
    high camera rate cheap.

    Returns:
        PipelineResult; summary includes simulated throughput (sim_fps) and
        the simulated time at which every observed track first gated.
    """
    config = config or PipelineConfig()
    rt_us = config.latency.round_trip_us
    geo_us = config.latency.geometry_us
    events: list[dict] = []
    emitted: list[TeatPose] = []
    tracks = _TrackBook(config.association_mm)
    gates: dict[str, GateState] = {}
    first_gate: dict[str, int] = {}
    accept_times: list[int] = []
    n_frames = n_drops = n_poses = n_fail = 0
    seg_free = 0
    geo_free = 0
    held: tuple[int, int, SceneSpec] | None = None
    geo_held: tuple[int, FrameMessage] | None = None
    sim_end = 0

    def geometry(frame_idx: int, msg: FrameMessage, start_us: int) -> int:
        nonlocal n_poses, n_fail, sim_end
        done = start_us + geo_us
        cloud = msg.cloud
        masks = msg.masks_promise.masks
        for m in masks:
            if m.stamp_us != msg.stamp_us:
                raise InvalidInputError("desynchronized frame reached geometry")
        poses, failures = estimate_frame(cloud, masks, msg.camera, config.pose)
        for teat_id, err in failures:
            n_fail += 1
            events.append({"event": "pose_failed", "t_us": done,
                           "frame": frame_idx, "mask_id": teat_id,
                           "error": err})
        for pose in poses:
            n_poses += 1
            track_id = tracks.assign(pose.tip_mm)
            tracked = replace(pose, teat_id=track_id)
            emitted.append(tracked)
            events.append({
                "event": "pose", "t_us": done, "frame": frame_idx,
                "mask_id": pose.teat_id, "track_id": track_id,
                "tip_mm": [round(float(x), 3) for x in tracked.tip_mm],
                "axis": [round(float(x), 6) for x in tracked.axis],
                "n_points": tracked.n_points})
            state = gates.setdefault(track_id, GateState())
            decision = gate_update(state, tracked, config.gate)
            if decision == "consistent" and track_id not in first_gate:
                first_gate[track_id] = done
            events.append({"event": "gate", "t_us": done, "frame": frame_idx,
                           "track_id": track_id, "decision": decision})
        events.append({"event": "frame_done", "t_us": done,
                       "frame": frame_idx,
                       "latency_us": done - msg.stamp_us})
        sim_end = max(sim_end, done)
        return done

    def submit_to_geometry(frame_idx: int, msg: FrameMessage) -> None:
        nonlocal geo_free, geo_held, n_drops
        ready = msg.masks_promise.ready_at_us
        # Settle any frame waiting for the geometry stage first.
        if geo_held is not None and geo_free <= ready:
            h_idx, h_msg = geo_held
            geo_held = None
            geo_free = geometry(h_idx, h_msg, geo_free)
        if geo_free <= ready:
            geo_free = geometry(frame_idx, msg, ready)
        elif geo_held is None:
            geo_held = (frame_idx, msg)
        else:
            n_drops += 1
            events.append({"event": "frame_dropped", "t_us": ready,
                           "frame": geo_held[0],
                           "stamp_us": geo_held[1].stamp_us,
                           "reason": "pose_backlog"})
            geo_held = (frame_idx, msg)

    def accept(frame_idx: int, stamp_us: int, scene: SceneSpec,
               start_us: int) -> None:
        nonlocal seg_free
        accept_times.append(start_us)
        events.append({"event": "frame_accepted", "t_us": start_us,
                       "frame": frame_idx, "stamp_us": stamp_us})
        cloud, masks, _ = render(scene, stamp_us=stamp_us)
        ready = start_us + rt_us
        seg_free = ready
        events.append({"event": "masks_ready", "t_us": ready,
                       "frame": frame_idx, "n_masks": len(masks)})
        msg = FrameMessage(stamp_us=stamp_us, cloud=cloud, camera=scene.camera,
                           masks_promise=MaskPromise(ready_at_us=ready,
                                                     masks=tuple(masks)))
        submit_to_geometry(frame_idx, msg)

    for k, scene in enumerate(scenes):
        n_frames += 1
        t_k = k * config.camera_period_us
        if held is not None and seg_free <= t_k:
            h_idx, h_stamp, h_scene = held
            held = None
            accept(h_idx, h_stamp, h_scene, max(seg_free, h_stamp))
        if held is None and seg_free <= t_k:
            accept(k, t_k, scene, t_k)
        elif held is None:
            held = (k, t_k, scene)
        else:
            n_drops += 1
            logger.debug("frame %d superseded at t=%dus", held[0], t_k)
            events.append({"event": "frame_dropped", "t_us": t_k,
                           "frame": held[0], "stamp_us": held[1],
                           "reason": "superseded"})
            held = (k, t_k, scene)
    if held is not None:
        h_idx, h_stamp, h_scene = held
        accept(h_idx, h_stamp, h_scene, max(seg_free, h_stamp))
    if geo_held is not None:
        h_idx, h_msg = geo_held
        geometry(h_idx, h_msg, max(geo_free, h_msg.masks_promise.ready_at_us))

    events.sort(key=lambda e: e["t_us"])
    if len(accept_times) >= 2:
        span = accept_times[-1] - accept_times[0]
        sim_fps = (len(accept_times) - 1) * 1e6 / span
    else:
        sim_fps = None
    summary = {
        "frames_emitted": n_frames,
        "frames_accepted": len(accept_times),
        "frames_dropped": n_drops,
        "poses": n_poses,
        "pose_failures": n_fail,
        "sim_fps": sim_fps,
        "first_gate_us": min(first_gate.values()) if first_gate else None,
        "all_gated_us": max(first_gate.values()) if first_gate else None,
        "tracks": sorted(gates.keys()),
        "sim_end_us": sim_end,
    }
    return PipelineResult(events=events, poses=emitted, summary=summary)


def static_scene_stream(scene: SceneSpec, frames: int):
    """Per-frame copies of one scene with decorrelated noise seeds."""
    if frames < 1:
        raise InvalidInputError("need at least one frame")
    for k in range(frames):
        child = int(np.random.SeedSequence((scene.seed, k)).generate_state(1)[0])
        yield replace(scene, seed=child)


def write_events_jsonl(events, path) -> None:
    with open(path, "w") as f:
        for e in events:
            f.write(json.dumps(e) + "\n")


def read_events_jsonl(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]

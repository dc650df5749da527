"""Closed-loop grasp refinement driven by tactile contact states.

The controller loop senses a contact, asks a reasoner for a one-line
assessment, stops when the text contains a success descriptor, otherwise
extracts the first action keyword and applies it to the simulated
gripper-object state.  The bundled rule-based reasoner recentres the
contact (row first, then column) and then regulates the indentation; an
external reasoner can be plugged in over a line-delimited stdio protocol
(one JSON request line in, one plain-text line out).

Motion convention: moving the gripper toward the side where the contact
appears recentres it, so ``move_down`` on a low contact increases the
contact's y offset toward zero.
"""

from __future__ import annotations

import json
import re
import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .contact import pose_for_depth
from .labeling import ContactState, compute_contact_state
from .sensor import SensorSpec, compute_displacement_field, sample_point_cloud
from .shapes import Primitive

ACTIONS = (
    "move_up",
    "move_down",
    "move_left",
    "move_right",
    "increase_force",
    "decrease_force",
    "reset",
)

SUCCESS_DESCRIPTORS = ("Stable", "Appropriate", "Secure", "Reliable")

MOVE_STEP_MM = 1.5
FORCE_STEP_MM = 0.4
ACTUATION_NOISE_MM = 0.2

_ACTION_RE = re.compile(r"\b(" + "|".join(ACTIONS) + r")\b")
_SUCCESS_RE = re.compile(r"\b(" + "|".join(SUCCESS_DESCRIPTORS) + r")\b")

DEFAULT_INSTRUCTION = "Hold the object with a centered, well-regulated grasp."


def extract_action(text: str) -> str | None:
    """First whole-word action keyword in *text*, or None."""
    m = _ACTION_RE.search(text)
    return m.group(1) if m else None


def detect_success(text: str) -> bool:
    """True iff any success descriptor appears as a case-sensitive whole word."""
    return _SUCCESS_RE.search(text) is not None


def reason_rule_based(state: ContactState, instruction: str = DEFAULT_INSTRUCTION) -> str:
    """Map a contact state to a one-sentence assessment with one keyword.

    Priority: recentre the contact row, then the column, then regulate the
    indentation; a centred, moderately-to-deeply pressed contact is stable.
    """
    row, col = _position_row_col(state.position_cat)
    if row == "bottom":
        return "Contact sits low on the pad; move_down to recentre the grip."
    if row == "top":
        return "Contact sits high on the pad; move_up to recentre the grip."
    if col == "left":
        return "Contact sits toward the left edge; move_left to recentre the grip."
    if col == "right":
        return "Contact sits toward the right edge; move_right to recentre the grip."
    if state.depth_cat == "very-deep":
        return "Pressure is excessive; decrease_force to protect the object."
    if state.depth_cat == "slight":
        return "Grip pressure is too light; increase_force for a firmer hold."
    return "Contact is centred and pressure is well regulated; the grasp is Stable."


def _position_row_col(position_cat: str) -> tuple[str, str]:
    if position_cat == "center":
        return "middle", "center"
    row, col = position_cat.split("-")
    return row, col


class Reasoner(Protocol):
    def __call__(
        self, cloud: np.ndarray, state: ContactState, instruction: str
    ) -> str: ...


def rule_based_reasoner(
    cloud: np.ndarray, state: ContactState, instruction: str
) -> str:
    return reason_rule_based(state, instruction)


class ExternalReasoner:
    """Adapter for a reasoner subprocess speaking the line protocol.

    Each step writes one JSON line ``{"cloud_path": ..., "state": {...},
    "instruction": ...}`` to the child's stdin and reads one plain-text
    response line.  The child is started lazily and kept alive across steps.
    """

    def __init__(self, command: str, cloud_dir=None) -> None:
        self.command = command
        self.cloud_dir = cloud_dir
        self._proc: subprocess.Popen | None = None
        self._step = 0

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                shlex.split(self.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def __call__(
        self, cloud: np.ndarray, state: ContactState, instruction: str
    ) -> str:
        cloud_path = None
        if self.cloud_dir is not None:
            from . import io as tio

            cloud_path = str(self.cloud_dir / f"step{self._step:03d}.tclp")
            tio.save_point_cloud(cloud_path, cloud)
        self._step += 1
        request = json.dumps(
            {
                "cloud_path": cloud_path,
                "state": {
                    "shape": state.shape,
                    "texture": state.texture,
                    "depth": state.depth_cat,
                    "position": state.position_cat,
                    "area": state.area_cat,
                },
                "instruction": instruction,
            }
        )
        proc = self._ensure()
        assert proc.stdin is not None and proc.stdout is not None
        proc.stdin.write(request + "\n")
        proc.stdin.flush()
        line = proc.stdout.readline()
        if not line:
            raise RuntimeError("external reasoner closed its output stream")
        return line.rstrip("\n")

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()  # type: ignore[union-attr]
            self._proc.wait(timeout=5)


# ---------------------------------------------------------------------------
# Simulated environment
# ---------------------------------------------------------------------------

DEFAULT_GRASP_OBJECT = Primitive("sphere", (6.0,))


@dataclass
class GraspEnvState:
    """Gripper-object configuration: where and how hard the object presses."""

    contact_offset_mm: np.ndarray  # (2,) object contact centre vs gel centre
    indentation_mm: float
    object: Primitive = field(default_factory=lambda: DEFAULT_GRASP_OBJECT)

    def copy(self) -> "GraspEnvState":
        return GraspEnvState(
            contact_offset_mm=self.contact_offset_mm.copy(),
            indentation_mm=self.indentation_mm,
            object=self.object,
        )


class GraspEnv:
    """Kinematic stand-in for the gripper: actions shift a pressed primitive."""

    def __init__(
        self,
        state: GraspEnvState,
        sensor: SensorSpec | None = None,
        rng: np.random.Generator | None = None,
        noise_mm: float = ACTUATION_NOISE_MM,
        n_points: int = 256,
    ) -> None:
        self.state = state
        self.sensor = sensor if sensor is not None else SensorSpec()
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.noise_mm = noise_mm
        self.n_points = n_points
        self.clamped_last_step = False

    # offset bounds keep the contact patch on the pad
    def _offset_bounds(self) -> tuple[float, float]:
        return (
            0.5 * self.sensor.width_mm - 3.0,
            0.5 * self.sensor.height_mm - 3.0,
        )

    def sense(self) -> tuple[np.ndarray, ContactState]:
        """Press the object at the current state; return (cloud, labels)."""
        identity = np.array([0.0, 0.0, 0.0, 1.0])
        pose = pose_for_depth(
            self.state.object,
            identity,
            (float(self.state.contact_offset_mm[0]), float(self.state.contact_offset_mm[1])),
            self.state.indentation_mm,
        )
        fld = compute_displacement_field(self.state.object, pose, self.sensor)
        state = compute_contact_state(fld, self.state.object, self.sensor)
        cloud = sample_point_cloud(fld, self.n_points, self.rng, self.sensor)
        return cloud, state

    def random_state(self) -> GraspEnvState:
        bx, by = self._offset_bounds()
        return GraspEnvState(
            contact_offset_mm=np.array(
                [self.rng.uniform(-bx, bx), self.rng.uniform(-by, by)]
            ),
            indentation_mm=float(self.rng.uniform(0.3, 3.4)),
            object=self.state.object,
        )

    def step(self, action: str) -> None:
        """Apply one action primitive with actuation noise; clamp at bounds."""
        if action not in ACTIONS:
            raise ValueError(f"unknown action {action!r}")
        noise = (lambda: self.rng.uniform(-self.noise_mm, self.noise_mm)
                 if self.noise_mm > 0 else 0.0)
        off = self.state.contact_offset_mm
        if action == "move_down":
            off[1] += MOVE_STEP_MM + noise()
        elif action == "move_up":
            off[1] -= MOVE_STEP_MM + noise()
        elif action == "move_left":
            off[0] += MOVE_STEP_MM + noise()
        elif action == "move_right":
            off[0] -= MOVE_STEP_MM + noise()
        elif action == "increase_force":
            self.state.indentation_mm += FORCE_STEP_MM + noise()
        elif action == "decrease_force":
            self.state.indentation_mm -= FORCE_STEP_MM + noise()
        elif action == "reset":
            self.state = self.random_state()
            self.clamped_last_step = False
            return

        bx, by = self._offset_bounds()
        clamped_x = float(np.clip(off[0], -bx, bx))
        clamped_y = float(np.clip(off[1], -by, by))
        clamped_d = float(
            np.clip(self.state.indentation_mm, 0.25, self.sensor.max_depth_mm)
        )
        self.clamped_last_step = (
            clamped_x != off[0]
            or clamped_y != off[1]
            or clamped_d != self.state.indentation_mm
        )
        off[0], off[1] = clamped_x, clamped_y
        self.state.indentation_mm = clamped_d


# ---------------------------------------------------------------------------
# Refinement loop
# ---------------------------------------------------------------------------

@dataclass
class RefinementStep:
    index: int
    description: str
    action: str | None
    position_cat: str
    depth_cat: str
    offset_mm: tuple[float, float]
    indentation_mm: float
    clamped: bool


@dataclass
class RefinementTrace:
    steps: list[RefinementStep]
    status: str  # "success" | "max-iters"

    def actions(self) -> list[str]:
        return [s.action for s in self.steps if s.action is not None]

    def to_json(self) -> str:
        return json.dumps(
            {
                "status": self.status,
                "steps": [
                    {
                        "index": s.index,
                        "description": s.description,
                        "action": s.action,
                        "position_cat": s.position_cat,
                        "depth_cat": s.depth_cat,
                        "offset_mm": list(s.offset_mm),
                        "indentation_mm": s.indentation_mm,
                        "clamped": s.clamped,
                    }
                    for s in self.steps
                ],
            }
        )

    @staticmethod
    def from_json(text: str) -> "RefinementTrace":
        d = json.loads(text)
        steps = [
            RefinementStep(
                index=s["index"],
                description=s["description"],
                action=s["action"],
                position_cat=s["position_cat"],
                depth_cat=s["depth_cat"],
                offset_mm=(s["offset_mm"][0], s["offset_mm"][1]),
                indentation_mm=s["indentation_mm"],
                clamped=s["clamped"],
            )
            for s in d["steps"]
        ]
        return RefinementTrace(steps=steps, status=d["status"])


def run_refinement(
    env: GraspEnv,
    reasoner: Callable[[np.ndarray, ContactState, str], str] = rule_based_reasoner,
    instruction: str = DEFAULT_INSTRUCTION,
    max_iters: int = 10,
) -> RefinementTrace:
    """Sense -> describe -> stop on success -> act, up to *max_iters* senses.

    A response carrying neither a success descriptor nor an action keyword
    is recorded as a no-op step and the loop continues; the iteration cap
    guarantees termination either way.
    """
    steps: list[RefinementStep] = []
    for index in range(max_iters):
        cloud, state = env.sense()
        description = reasoner(cloud, state, instruction)
        if detect_success(description):
            steps.append(
                RefinementStep(
                    index=index,
                    description=description,
                    action=None,
                    position_cat=state.position_cat,
                    depth_cat=state.depth_cat,
                    offset_mm=(
                        float(env.state.contact_offset_mm[0]),
                        float(env.state.contact_offset_mm[1]),
                    ),
                    indentation_mm=env.state.indentation_mm,
                    clamped=False,
                )
            )
            return RefinementTrace(steps=steps, status="success")
        action = extract_action(description)
        if action is not None:
            env.step(action)
        steps.append(
            RefinementStep(
                index=index,
                description=description,
                action=action,
                position_cat=state.position_cat,
                depth_cat=state.depth_cat,
                offset_mm=(
                    float(env.state.contact_offset_mm[0]),
                    float(env.state.contact_offset_mm[1]),
                ),
                indentation_mm=env.state.indentation_mm,
                clamped=env.clamped_last_step if action is not None else False,
            )
        )
    return RefinementTrace(steps=steps, status="max-iters")


def scripted_scenario_env(
    sensor: SensorSpec | None = None, noise_mm: float = 0.0
) -> GraspEnv:
    """The canonical two-correction demo: low contact first, then over-press.

    Starts at a bottom-centre contact with excessive indentation; the
    rule-based policy recentres (one move_down), then relieves the pressure
    (one decrease_force), then reports a stable grasp.
    """
    state = GraspEnvState(
        contact_offset_mm=np.array([0.0, -3.2]),
        indentation_mm=2.6,
    )
    return GraspEnv(state, sensor=sensor, rng=np.random.default_rng(0), noise_mm=noise_mm)

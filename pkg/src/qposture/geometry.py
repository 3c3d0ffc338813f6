"""Vector geometry shared by every fluent family.

All helpers broadcast over leading axes, so a whole sequence of frames can be
handled at once by passing ``(n_frames, 3)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .skeleton import Frame, augment_frame

# Cross products below this norm are treated as degenerate.
CROSS_TOL = 1e-12
# Links shorter than this fraction of the triangle scale are degenerate.
LINK_TOL = 1e-9


class DegenerateTorsoError(ValueError):
    pass


@dataclass(frozen=True)
class AngleMeasurement:
    radians: float
    vertex: str = ""
    valid: bool = True


def vertex_angles(a, b, c) -> tuple[np.ndarray, np.ndarray]:
    """Law-of-Cosines angle at ``b`` of triangle abc, vectorized.

    Returns ``(radians, valid)``. Invalid entries (a side collapsed onto b) hold NaN.
    """
    a, b, c = (np.asarray(x, dtype=float) for x in (a, b, c))
    ab = np.linalg.norm(b - a, axis=-1)
    bc = np.linalg.norm(c - b, axis=-1)
    ca = np.linalg.norm(a - c, axis=-1)
    floor = LINK_TOL * np.maximum(1.0, ca)
    valid = (ab >= floor) & (bc >= floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_b = (ab**2 + bc**2 - ca**2) / (2.0 * ab * bc)
    angle = np.arccos(np.clip(cos_b, -1.0, 1.0))
    return np.where(valid, angle, np.nan), valid


def angle_at_vertex(a, b, c, vertex: str = "") -> AngleMeasurement:
    angle, valid = vertex_angles(a, b, c)
    ok = bool(valid)
    return AngleMeasurement(float(angle) if ok else float("nan"), vertex, ok)


def vector_angles(u, v, scale=1.0) -> tuple[np.ndarray, np.ndarray]:
    """Angle between two link vectors that share their tail.

    ``scale`` sets the length below which a link counts as collapsed (pass the
    headlength so that tolerances are scale-free).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    origin = np.zeros_like(u)
    angle, ok = vertex_angles(u, origin, v)
    tol = LINK_TOL * np.asarray(scale, dtype=float)
    valid = ok & (np.linalg.norm(u, axis=-1) > tol) & (np.linalg.norm(v, axis=-1) > tol)
    return np.where(valid, angle, np.nan), valid


def project_onto_plane(v, normal) -> np.ndarray:
    """Remove the component of ``v`` along the unit ``normal``."""
    v = np.asarray(v, dtype=float)
    n = np.asarray(normal, dtype=float)
    return v - np.sum(v * n, axis=-1, keepdims=True) * n


def _unit(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    ok = norm[..., 0] > CROSS_TOL
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ok[..., None], v / norm, np.nan), ok


@dataclass(frozen=True)
class TorsoFrame:
    """Orthonormal body basis for one side.

    ``lateral`` points away from the body on ``side``. Plane normals follow:
    sagittal -> lateral, frontal -> forward, transverse -> up.
    """

    forward: np.ndarray
    lateral: np.ndarray
    up: np.ndarray
    side: str
    anchor: str
    valid: np.ndarray | bool = True

    @property
    def sagittal_normal(self) -> np.ndarray:
        return self.lateral

    @property
    def frontal_normal(self) -> np.ndarray:
        return self.forward

    @property
    def transverse_normal(self) -> np.ndarray:
        return self.up


def torso_frames(joints: Mapping[str, np.ndarray], side: str) -> TorsoFrame:
    """Vectorized torso frame from augmented joint arrays (name -> (..., 3)).

    Degenerate entries are NaN with ``valid`` False; no exception is raised.
    """
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    ls, rs = joints["left shoulder"], joints["right shoulder"]
    lh = joints["left hip"]
    forward, ok_f = _unit(np.cross(lh - ls, rs - ls))

    if "nose" in joints:
        facing = np.sum((joints["nose"] - joints["neck"]) * forward, axis=-1)
        forward = np.where((facing < 0)[..., None], -forward, forward)

    shoulder = joints[f"{side} shoulder"]
    hip = joints[f"{side} hip"]
    other = rs if side == "left" else ls
    lateral = np.cross(hip - shoulder, forward)
    outward = np.sum((shoulder - other) * lateral, axis=-1)
    lateral = np.where((outward < 0)[..., None], -lateral, lateral)
    # Gram-Schmidt with forward held fixed; the cross product above is already
    # orthogonal to forward, this only guards against round-off.
    lateral = lateral - np.sum(lateral * forward, axis=-1, keepdims=True) * forward
    lateral, ok_l = _unit(lateral)

    up = np.cross(lateral, forward)
    rising = np.sum((joints["neck"] - joints["mid-hip"]) * up, axis=-1)
    up = np.where((rising < 0)[..., None], -up, up)
    valid = ok_f & ok_l
    return TorsoFrame(forward, lateral, up, side, f"{side} shoulder", valid)


def torso_frame(frame: Frame, side: str) -> TorsoFrame:
    """Torso frame of one augmented frame; raises on a degenerate torso."""
    frame = augment_frame(frame)
    tf = torso_frames(frame.joints, side)
    if not bool(tf.valid):
        raise DegenerateTorsoError(f"frame {frame.index}: shoulders and hips span no plane")
    return TorsoFrame(tf.forward, tf.lateral, tf.up, side, tf.anchor, True)

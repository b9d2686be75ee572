"""Unit quaternion helpers, ``(w, x, y, z)`` order, batched over leading axes."""

from __future__ import annotations

import numpy as np

from goalforge.errors import ContractError

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])
UNIT_TOL = 1e-6


def check_unit(q, tol: float = UNIT_TOL) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1] != 4:
        raise ContractError(f"quaternion must have 4 components, got shape {q.shape}")
    norm = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(norm - 1.0) > tol):
        raise ContractError("quaternion is not unit norm")
    return q


def normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def multiply(a, b) -> np.ndarray:
    """Hamilton product ``a * b`` (apply ``b`` first, then ``a``)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - (ax * bx + ay * by + az * bz),
            # paired so conj(q) * q cancels exactly
            (aw * bx + ax * bw) + (ay * bz - az * by),
            (aw * by + ay * bw) + (az * bx - ax * bz),
            (aw * bz + az * bw) + (ax * by - ay * bx),
        ],
        axis=-1,
    )


def from_axis_angle(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = 0.5 * np.asarray(angle, dtype=np.float64)
    return np.concatenate([np.cos(half)[..., None], np.sin(half)[..., None] * axis], axis=-1)


def rot_x(angle) -> np.ndarray:
    return from_axis_angle([1.0, 0.0, 0.0], angle)


def rot_y(angle) -> np.ndarray:
    return from_axis_angle([0.0, 1.0, 0.0], angle)


def rot_z(angle) -> np.ndarray:
    return from_axis_angle([0.0, 0.0, 1.0], angle)


def exp_map(rotation_vector) -> np.ndarray:
    """Quaternion of the rotation ``rotation_vector`` (axis * angle, radians)."""
    v = np.asarray(rotation_vector, dtype=np.float64)
    angle = np.linalg.norm(v, axis=-1)
    half = 0.5 * angle
    # sin(half)/angle -> 1/2 as angle -> 0
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(angle > 1e-12, np.sin(half) / np.where(angle > 0, angle, 1.0), 0.5)
    return np.concatenate([np.cos(half)[..., None], k[..., None] * v], axis=-1)


def to_matrix(q) -> np.ndarray:
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=np.float64), -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
            np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
            np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=-2,
    )


def body_z_axis(q) -> np.ndarray:
    """World-frame image of the body z axis."""
    w, x, y, z = np.moveaxis(np.asarray(q, dtype=np.float64), -1, 0)
    return np.stack([2 * (x * z + y * w), 2 * (y * z - x * w), 1 - 2 * (x * x + y * y)], axis=-1)


def distance(q1, q2, check: bool = True):
    """Rotation angle between ``q1`` and ``q2`` in [0, pi]; sign-invariant.

    Equal to ``2 * arccos(|<q1, q2>|)`` but evaluated through atan2 so small
    angles keep full precision.
    """
    if check:
        q1, q2 = check_unit(q1), check_unit(q2)
    rel = multiply(conjugate(q1), q2)
    vec = np.linalg.norm(rel[..., 1:], axis=-1)
    angle = 2.0 * np.arctan2(vec, np.abs(rel[..., 0]))
    return angle if np.ndim(angle) else float(angle)


def distance_ignore_z(q1, q2, check: bool = True):
    """Angle between the body z axes of ``q1`` and ``q2``, in [0, pi]."""
    if check:
        q1, q2 = check_unit(q1), check_unit(q2)
    a, b = body_z_axis(q1), body_z_axis(q2)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    angle = np.arctan2(cross, np.sum(a * b, axis=-1))
    return angle if np.ndim(angle) else float(angle)


def random_uniform(rng: np.random.Generator, size=None) -> np.ndarray:
    """Haar-uniform rotations from normalized 4-D Gaussians."""
    shape = (4,) if size is None else (*np.atleast_1d(size), 4)
    return normalize(rng.standard_normal(shape))

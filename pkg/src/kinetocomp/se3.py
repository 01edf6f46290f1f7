"""Rigid-body poses, small displacements (twists) and wrenches.

Conventions used everywhere in this package:

* units are meters, radians, newtons, newton-meters;
* orientations are canonical rotation vectors (axis * angle, angle < pi);
* twists and wrenches are expressed in base-frame axes, with the moment /
  rotation referenced about the point of interest (usually the platform
  origin);
* mixed translation/rotation norms scale the rotational part by a
  characteristic length (`DEFAULT_CHAR_LENGTH`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BranchError, NonCanonical

# Characteristic length [m] used to weigh radians against meters in norms.
DEFAULT_CHAR_LENGTH = 0.1

_SMALL_ANGLE = 1e-8


def _vec3(x) -> np.ndarray:
    v = np.array(x, dtype=float).reshape(3)
    v.flags.writeable = False
    return v


def skew(v) -> np.ndarray:
    """Cross-product matrix: skew(a) @ b == np.cross(a, b)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotvec_to_matrix(r) -> np.ndarray:
    """Rodrigues formula, series-expanded near zero angle."""
    r = np.asarray(r, dtype=float)
    angle = math.sqrt(float(r @ r))
    k = skew(r)
    if angle < _SMALL_ANGLE:
        # sin(a)/a ~ 1 - a^2/6, (1-cos(a))/a^2 ~ 1/2 - a^2/24
        return np.eye(3) + (1.0 - angle * angle / 6.0) * k + (0.5 - angle * angle / 24.0) * (k @ k)
    c1 = math.sin(angle) / angle
    c2 = (1.0 - math.cos(angle)) / (angle * angle)
    return np.eye(3) + c1 * k + c2 * (k @ k)


def matrix_to_rotvec(mat) -> np.ndarray:
    """Canonical rotation-vector log of a rotation matrix (angle < pi)."""
    mat = np.asarray(mat, dtype=float)
    trace = min(3.0, max(-1.0, mat[0, 0] + mat[1, 1] + mat[2, 2]))
    angle = math.acos(max(-1.0, min(1.0, 0.5 * (trace - 1.0))))
    axial = np.array([mat[2, 1] - mat[1, 2], mat[0, 2] - mat[2, 0], mat[1, 0] - mat[0, 1]])
    if angle < _SMALL_ANGLE:
        return 0.5 * axial
    if angle > math.pi - 1e-9:
        raise NonCanonical("rotation angle at or beyond the pi branch")
    return (0.5 * angle / math.sin(angle)) * axial


def so3_left_jacobian(r) -> np.ndarray:
    """Left Jacobian of SO(3): d/dt exp(skew(r)) = skew(J_l(r) rdot) exp(skew(r))."""
    r = np.asarray(r, dtype=float)
    angle = math.sqrt(float(r @ r))
    k = skew(r)
    if angle < _SMALL_ANGLE:
        return np.eye(3) + 0.5 * k + (k @ k) / 6.0
    a2 = angle * angle
    c1 = (1.0 - math.cos(angle)) / a2
    c2 = (angle - math.sin(angle)) / (a2 * angle)
    return np.eye(3) + c1 * k + c2 * (k @ k)


@dataclass(frozen=True)
class Pose:
    """Rigid-body location: position [m] plus canonical rotation vector [rad]."""

    position: np.ndarray
    rotvec: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position))
        object.__setattr__(self, "rotvec", _vec3(self.rotvec))
        if float(np.linalg.norm(self.rotvec)) >= math.pi:
            raise NonCanonical("rotation-vector magnitude must stay below pi")

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), np.zeros(3))

    def rotation(self) -> np.ndarray:
        return rotvec_to_matrix(self.rotvec)


@dataclass(frozen=True)
class Twist:
    """Small displacement: dp [m] and dphi [rad], base-frame axes."""

    dp: np.ndarray
    dphi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dp", _vec3(self.dp))
        object.__setattr__(self, "dphi", _vec3(self.dphi))

    @staticmethod
    def zero() -> "Twist":
        return Twist(np.zeros(3), np.zeros(3))

    @staticmethod
    def from_array(a) -> "Twist":
        a = np.asarray(a, dtype=float).reshape(6)
        return Twist(a[:3], a[3:])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.dp, self.dphi])

    def __add__(self, other: "Twist") -> "Twist":
        return Twist(self.dp + other.dp, self.dphi + other.dphi)

    def __sub__(self, other: "Twist") -> "Twist":
        return Twist(self.dp - other.dp, self.dphi - other.dphi)

    def __neg__(self) -> "Twist":
        return Twist(-self.dp, -self.dphi)

    def __mul__(self, s: float) -> "Twist":
        return Twist(self.dp * s, self.dphi * s)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Wrench:
    """Force [N] and moment [N*m] about a reference point, base-frame axes."""

    force: np.ndarray
    moment: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "force", _vec3(self.force))
        object.__setattr__(self, "moment", _vec3(self.moment))

    @staticmethod
    def zero() -> "Wrench":
        return Wrench(np.zeros(3), np.zeros(3))

    @staticmethod
    def from_array(a) -> "Wrench":
        a = np.asarray(a, dtype=float).reshape(6)
        return Wrench(a[:3], a[3:])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])

    def __add__(self, other: "Wrench") -> "Wrench":
        return Wrench(self.force + other.force, self.moment + other.moment)

    def __sub__(self, other: "Wrench") -> "Wrench":
        return Wrench(self.force - other.force, self.moment - other.moment)

    def __neg__(self) -> "Wrench":
        return Wrench(-self.force, -self.moment)

    def __mul__(self, s: float) -> "Wrench":
        return Wrench(self.force * s, self.moment * s)

    __rmul__ = __mul__


def compose(a: Pose, b: Pose) -> Pose:
    """Group composition: the transform of `b` expressed through `a`."""
    ra = a.rotation()
    rab = ra @ b.rotation()
    return Pose(a.position + ra @ b.position, matrix_to_rotvec(rab))


def inverse(p: Pose) -> Pose:
    rt = p.rotation().T
    return Pose(-(rt @ p.position), matrix_to_rotvec(rt))


def apply_twist(p: Pose, d: Twist) -> Pose:
    """Displace a pose by a small twist (base-frame increments).

    Position shifts by d.dp exactly; the orientation is left-multiplied by
    exp(d.dphi). Exact inverse of `pose_delta` for the same pose pair.
    """
    nphi = float(np.linalg.norm(d.dphi))
    if nphi >= math.pi / 4.0:
        raise ValueError("twist rotation too large for the small-displacement regime")
    if nphi == 0.0:
        rot = p.rotvec
    else:
        # Continuous-branch estimate: the canonical log wraps silently at pi,
        # so flag motions whose un-wrapped rotation vector would leave the branch.
        predicted = p.rotvec + np.linalg.inv(so3_left_jacobian(p.rotvec)) @ d.dphi
        if float(np.linalg.norm(predicted)) >= math.pi - 1e-9:
            raise NonCanonical("twist drives the orientation across the pi branch")
        rot = matrix_to_rotvec(rotvec_to_matrix(d.dphi) @ p.rotation())
    return Pose(p.position + d.dp, rot)


def pose_delta(frm: Pose, to: Pose) -> Twist:
    """Twist taking `frm` to `to`: apply_twist(frm, pose_delta(frm, to)) == to."""
    rel = to.rotation() @ frm.rotation().T
    try:
        dphi = matrix_to_rotvec(rel)
    except NonCanonical as exc:
        raise BranchError("orientations differ by more than the comparison branch allows") from exc
    if float(np.linalg.norm(dphi)) >= math.pi / 4.0:
        raise BranchError("orientations differ by pi/4 or more")
    return Twist(to.position - frm.position, dphi)


def transport_wrench(w: Wrench, from_point, to_point) -> Wrench:
    """Re-express a wrench about a different reference point (force unchanged)."""
    offset = np.asarray(from_point, dtype=float) - np.asarray(to_point, dtype=float)
    return Wrench(w.force, w.moment + np.cross(offset, w.force))


def twist_norm(t: Twist, char_length: float = DEFAULT_CHAR_LENGTH) -> float:
    """Euclidean norm of a twist with rotation weighted by the characteristic length."""
    return math.sqrt(float(t.dp @ t.dp) + char_length ** 2 * float(t.dphi @ t.dphi))

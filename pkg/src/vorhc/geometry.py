"""Collision cones and velocity obstacles for pairs of disk agents.

Vectors are plain length-2 numpy arrays. The cone apex is the host centre and
all cone-level quantities are expressed relative to it, i.e. the cone lives in
relative-velocity space.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConeError, OverlapError

# relative tolerance for counting an exactly tangent ray as inside
_TANGENT_RTOL = 1e-12


def _vec(v) -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(2)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite vector {a}")
    return a


def cross2(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


@dataclass(frozen=True)
class Disk:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"radius must be positive and finite, got {self.radius}")


@dataclass(frozen=True)
class CollisionCone:
    apex: np.ndarray
    axis: np.ndarray
    half_angle: float
    tangent_1: np.ndarray
    tangent_2: np.ndarray
    normal_1: np.ndarray
    normal_2: np.ndarray
    combined_radius: float

    @property
    def distance(self) -> float:
        return float(math.hypot(self.axis[0], self.axis[1]))


@dataclass(frozen=True)
class VelocityObstacle:
    cone: CollisionCone
    translation: np.ndarray


class VoTag(enum.Enum):
    InsideCone = 1
    InsideInvertedCone = 2
    LeftHalf = 3
    RightHalf = 4


@dataclass(frozen=True)
class VoCase:
    tag: VoTag
    a: float
    b: float


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def tangent_directions(axis: np.ndarray, combined_radius: float):
    """Rotate ``axis`` clockwise (first) and counter-clockwise (second) by the half angle."""
    d2 = float(axis @ axis)
    d = math.sqrt(d2)
    s = combined_radius / d
    c = math.sqrt(d2 - combined_radius**2) / d
    t1 = np.array([c * axis[0] + s * axis[1], -s * axis[0] + c * axis[1]])
    t2 = np.array([c * axis[0] - s * axis[1], s * axis[0] + c * axis[1]])
    return t1, t2


def outer_normals_from_tangents(t1: np.ndarray, t2: np.ndarray):
    # quarter turns: clockwise for the first tangent, counter-clockwise for the second
    n1 = np.array([t1[1], -t1[0]])
    n2 = np.array([-t2[1], t2[0]])
    return n1, n2


def build_collision_cone(host: Disk, other: Disk) -> CollisionCone:
    axis = other.center - host.center
    r = host.radius + other.radius
    d = math.hypot(axis[0], axis[1])
    if d <= r:
        raise OverlapError(f"disks overlap: centre distance {d:.6g} <= combined radius {r:.6g}")
    t1, t2 = tangent_directions(axis, r)
    n1, n2 = outer_normals_from_tangents(t1, t2)
    half = math.atan2(r, math.sqrt(d * d - r * r))
    return CollisionCone(
        apex=host.center.copy(),
        axis=axis,
        half_angle=half,
        tangent_1=t1,
        tangent_2=t2,
        normal_1=n1,
        normal_2=n2,
        combined_radius=r,
    )


def outer_normals(cone: CollisionCone):
    return outer_normals_from_tangents(cone.tangent_1, cone.tangent_2)


def cone_contains(cone: CollisionCone, v) -> bool:
    """Exact ray/disk test: does the ray ``{lam * v, lam >= 0}`` hit the combined disk?

    Tangent rays count as inside.
    """
    v = _vec(v)
    p = cone.axis
    along = float(v @ p)
    if along <= 0.0:
        # closest ray point is the apex, which lies outside the disk
        return False
    vv = float(v @ v)
    cr = cross2(v, p)
    r2 = cone.combined_radius**2
    return cr * cr <= r2 * vv * (1.0 + _TANGENT_RTOL)


def normal_clear(cone: CollisionCone, v) -> bool:
    """Collision-free test through the outer normals: either dot product strictly positive."""
    v = _vec(v)
    return bool(v @ cone.normal_1 > 0.0 or v @ cone.normal_2 > 0.0)


def velocity_obstacle(cone: CollisionCone, v_other) -> VelocityObstacle:
    return VelocityObstacle(cone=cone, translation=_vec(v_other))


def vo_contains(vo: VelocityObstacle, v_host) -> bool:
    return cone_contains(vo.cone, _vec(v_host) - vo.translation)


def _solve_basis(e1: np.ndarray, e2: np.ndarray, v: np.ndarray):
    det = cross2(e1, e2)
    if abs(det) <= 1e-12 * math.hypot(*e1) * math.hypot(*e2):
        raise DegenerateConeError(f"basis vectors {e1} and {e2} are parallel")
    return cross2(v, e2) / det, cross2(e1, v) / det


def classify_vj_case(cone: CollisionCone, v_j) -> VoCase:
    """Write ``v_j = a*T1 + b*T2`` and map the coefficient signs to a case.

    ``a == 0`` with ``b > 0`` goes to LeftHalf and ``b == 0`` with ``a > 0`` to
    RightHalf; both coefficients non-positive is the inverted cone.
    """
    v_j = _vec(v_j)
    a, b = _solve_basis(cone.tangent_1, cone.tangent_2, v_j)
    if a > 0 and b > 0:
        tag = VoTag.InsideCone
    elif a <= 0 and b <= 0:
        tag = VoTag.InsideInvertedCone
    elif b > 0:
        tag = VoTag.LeftHalf
    else:
        tag = VoTag.RightHalf
    return VoCase(tag=tag, a=a, b=b)


def case_coefficients(cone: CollisionCone, v_j, v_i):
    """Case and the (c, d, e) decomposition of ``v_i`` used by :func:`feasible_by_cases`.

    Decompositions are anchored at the obstacle apex ``v_j``:

    * cone / inverted cone: ``v_i = c*T1 + d*T2 + v_j`` (``e`` fixed at 1)
    * left half:  ``v_i = c*T1 + e*v_j`` (``d = 0``)
    * right half: ``v_i = d*T2 + e*v_j`` (``c = 0``)
    """
    v_j = _vec(v_j)
    v_i = _vec(v_i)
    case = classify_vj_case(cone, v_j)
    if case.tag in (VoTag.InsideCone, VoTag.InsideInvertedCone):
        c, d = _solve_basis(cone.tangent_1, cone.tangent_2, v_i - v_j)
        e = 1.0
    elif case.tag is VoTag.LeftHalf:
        c, e = _solve_basis(cone.tangent_1, v_j, v_i)
        d = 0.0
    else:
        d, e = _solve_basis(cone.tangent_2, v_j, v_i)
        c = 0.0
    return case, c, d, e


def feasible_by_cases(cone: CollisionCone, v_j, v_i) -> bool:
    case, c, d, e = case_coefficients(cone, v_j, v_i)
    if case.tag in (VoTag.InsideCone, VoTag.InsideInvertedCone):
        return not (c >= 0 and d >= 0)
    if case.tag is VoTag.LeftHalf:
        # v_i - v_j = (c + (e-1)a) T1 + (e-1) b T2 with a <= 0 < b
        return not (e >= 1 and c >= (1.0 - e) * case.a)
    return not (e >= 1 and d >= (1.0 - e) * case.b)


def _cross_rows(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def cone_contains_many(cone: CollisionCone, v) -> np.ndarray:
    """:func:`cone_contains` over rows of ``v`` (shape (m, 2))."""
    v = np.asarray(v, dtype=float)
    p = cone.axis
    cr = _cross_rows(v, p)
    return (v @ p > 0.0) & (cr * cr <= cone.combined_radius**2 * np.einsum("ij,ij->i", v, v) * (1.0 + _TANGENT_RTOL))


def normal_clear_many(cone: CollisionCone, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return (v @ cone.normal_1 > 0.0) | (v @ cone.normal_2 > 0.0)


def feasible_by_cases_many(cone: CollisionCone, v_j, v_i) -> np.ndarray:
    """:func:`feasible_by_cases` for one ``v_j`` and many ``v_i`` rows."""
    v_j = _vec(v_j)
    v_i = np.asarray(v_i, dtype=float)
    case = classify_vj_case(cone, v_j)
    t1, t2 = cone.tangent_1, cone.tangent_2
    if case.tag in (VoTag.InsideCone, VoTag.InsideInvertedCone):
        rel = v_i - v_j
        det = cross2(t1, t2)
        c, d = _cross_rows(rel, t2) / det, _cross_rows(t1[None], rel) / det
        return ~((c >= 0) & (d >= 0))
    if case.tag is VoTag.LeftHalf:
        _solve_basis(t1, v_j, v_j)  # raises on a degenerate basis
        det = cross2(t1, v_j)
        c, e = _cross_rows(v_i, v_j) / det, _cross_rows(t1[None], v_i) / det
        return ~((e >= 1) & (c >= (1.0 - e) * case.a))
    _solve_basis(t2, v_j, v_j)
    det = cross2(t2, v_j)
    d, e = _cross_rows(v_i, v_j) / det, _cross_rows(t2[None], v_i) / det
    return ~((e >= 1) & (d >= (1.0 - e) * case.b))


def boundary_distance(cone: CollisionCone, v_rel) -> float:
    """Sine of the angle between ``v_rel`` and the nearer tangent line (0 on the boundary)."""
    v_rel = _vec(v_rel)
    nv = math.hypot(*v_rel)
    if nv == 0.0:
        return 0.0
    u = v_rel / nv
    s1 = abs(float(u @ cone.normal_1)) / math.hypot(*cone.normal_1)
    s2 = abs(float(u @ cone.normal_2)) / math.hypot(*cone.normal_2)
    return min(s1, s2)


def unit_normals_batch(axis, combined_radius, overlap_margin: float = 1e-3):
    """Unit outer normals for many cones at once.

    ``axis`` has shape ``(..., 2)``. Pairs that overlap (possible for predicted
    positions inside a planner iterate) are treated as if the centres were
    ``(1 + overlap_margin) * r`` apart, which opens the cone to almost a half
    plane whose normals point back along ``-axis``.
    """
    axis = np.asarray(axis, dtype=float)
    r = np.broadcast_to(np.asarray(combined_radius, dtype=float), axis.shape[:-1])
    d = np.hypot(axis[..., 0], axis[..., 1])
    safe_d = np.where(d > 0, d, 1.0)
    ux = np.where(d > 0, axis[..., 0] / safe_d, 1.0)
    uy = np.where(d > 0, axis[..., 1] / safe_d, 0.0)
    s = r / np.maximum(d, r * (1.0 + overlap_margin))
    c = np.sqrt(1.0 - s * s)
    t1 = np.stack([c * ux + s * uy, -s * ux + c * uy], axis=-1)
    t2 = np.stack([c * ux - s * uy, s * ux + c * uy], axis=-1)
    n1 = np.stack([t1[..., 1], -t1[..., 0]], axis=-1)
    n2 = np.stack([-t2[..., 1], t2[..., 0]], axis=-1)
    return n1, n2


_CW = np.array([[0.0, 1.0], [-1.0, 0.0]])  # quarter turn clockwise


def unit_normal_jacobians(axis, combined_radius):
    """Unit outer normals and their derivatives with respect to ``axis``.

    With ``d = |a|`` and ``L = sqrt(d^2 - r^2)`` the normals are
    ``n1 = (L*P a - r a)/d^2`` and ``n2 = (L*P' a - r a)/d^2`` where ``P`` is the
    clockwise quarter turn. Returns ``(n1, n2, dn1, dn2)`` with jacobians of
    shape ``(..., 2, 2)``. Requires ``d > r``.
    """
    a = np.asarray(axis, dtype=float)
    r = np.broadcast_to(np.asarray(combined_radius, dtype=float), a.shape[:-1])[..., None]
    d2 = np.sum(a * a, axis=-1, keepdims=True)
    big_l = np.sqrt(d2 - r * r)
    eye = np.eye(2)
    out = []
    for q in (_CW, _CW.T):
        qa = a @ q.T
        n = (big_l * qa - r * a) / d2
        jac = (qa[..., :, None] * a[..., None, :] / big_l[..., None]
               + big_l[..., None] * q - r[..., None] * eye
               - 2.0 * n[..., :, None] * a[..., None, :]) / d2[..., None]
        out.append((n, jac))
    (n1, j1), (n2, j2) = out
    return n1, n2, j1, j2

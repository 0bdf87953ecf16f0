"""Spherical geometry: hierarchical cube-face cells and great-circle distance.

The sphere is projected onto an enclosing cube; each face carries a
quad-tree of depth 30.  Face coordinates (u, v) in [-1, 1]^2 are remapped
to (s, t) in [0, 1]^2 with a quadratic transform so that cells at the same
level have near-uniform area, then subdivided in halves per level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_KM = 6371.0
MAX_LEVEL = 30

# face -> xyz construction, and its inverse below, follow the standard
# cube-face axis conventions (face i+3 is the negative of face i's axis).
_FACE_UV_TO_XYZ = (
    lambda u, v: (1.0, u, v),
    lambda u, v: (-u, 1.0, v),
    lambda u, v: (-u, -v, 1.0),
    lambda u, v: (-1.0, -v, -u),
    lambda u, v: (v, -1.0, -u),
    lambda u, v: (v, u, -1.0),
)

_FACE_XYZ_TO_UV = (
    lambda x, y, z: (y / x, z / x),
    lambda x, y, z: (-x / y, z / y),
    lambda x, y, z: (-x / z, -y / z),
    lambda x, y, z: (z / x, y / x),
    lambda x, y, z: (z / y, -x / y),
    lambda x, y, z: (-y / z, -x / z),
)


def latlon_to_xyz(lat: float, lon: float) -> tuple[float, float, float]:
    """Unit vector for a (degrees) latitude/longitude pair."""
    phi = math.radians(lat)
    lam = math.radians(lon)
    cos_phi = math.cos(phi)
    return (cos_phi * math.cos(lam), cos_phi * math.sin(lam), math.sin(phi))


def xyz_to_latlon(x: float, y: float, z: float) -> tuple[float, float]:
    hyp = math.hypot(x, y)
    return (math.degrees(math.atan2(z, hyp)), math.degrees(math.atan2(y, x)))


def uv_to_st(u: float) -> float:
    """Quadratic face-coordinate transform, [-1, 1] -> [0, 1].

    Chosen over the linear map because it keeps same-level cell areas
    within a ~2x band across the sphere.
    """
    if u >= 0:
        return 0.5 * math.sqrt(1.0 + 3.0 * u)
    return 1.0 - 0.5 * math.sqrt(1.0 - 3.0 * u)


def st_to_uv(s: float) -> float:
    """Inverse of :func:`uv_to_st`."""
    if s >= 0.5:
        return (1.0 / 3.0) * (4.0 * s * s - 1.0)
    return (1.0 / 3.0) * (1.0 - 4.0 * (1.0 - s) * (1.0 - s))


def xyz_to_face(x: float, y: float, z: float) -> int:
    """Cube face containing the direction (x, y, z).

    The face axis is the component with the largest magnitude; on exact
    ties the lowest resulting face index wins.
    """
    comps = (x, y, z)
    best = max(abs(c) for c in comps)
    candidates = [
        (axis if comps[axis] >= 0 else axis + 3)
        for axis in range(3)
        if abs(comps[axis]) == best
    ]
    return min(candidates)


@dataclass(frozen=True, order=True)
class CellId:
    """A cell of the hierarchical grid: cube face, level, and quad-tree path.

    Each path entry is a quadrant code in 0..3 (bit 0 = upper s-half,
    bit 1 = upper t-half); the path length equals the level.
    """

    face: int
    level: int
    path: tuple[int, ...]

    def __post_init__(self):
        if not 0 <= self.face <= 5:
            raise ValueError(f"face must be in 0..5, got {self.face}")
        if not 0 <= self.level <= MAX_LEVEL:
            raise ValueError(f"level must be in 0..{MAX_LEVEL}, got {self.level}")
        if len(self.path) != self.level:
            raise ValueError("path length must equal level")
        if any(not 0 <= q <= 3 for q in self.path):
            raise ValueError("path entries must be quadrant codes 0..3")

    def parent(self) -> "CellId":
        if self.level == 0:
            raise ValueError("a level-0 cell has no parent")
        return CellId(self.face, self.level - 1, self.path[:-1])

    def children(self) -> list["CellId"]:
        if self.level == MAX_LEVEL:
            raise ValueError(f"a level-{MAX_LEVEL} cell has no children")
        return [CellId(self.face, self.level + 1, self.path + (q,)) for q in range(4)]

    def ancestor(self, level: int) -> "CellId":
        if not 0 <= level <= self.level:
            raise ValueError("ancestor level must be in 0..level")
        return CellId(self.face, level, self.path[:level])

    def is_ancestor_of(self, other: "CellId") -> bool:
        """True for proper ancestors and for the cell itself."""
        return (
            self.face == other.face
            and self.level <= other.level
            and other.path[: self.level] == self.path
        )

    def st_bounds(self) -> tuple[float, float, float, float]:
        """(s_lo, t_lo, s_hi, t_hi) of this cell on its face."""
        s_lo = t_lo = 0.0
        size = 1.0
        for q in self.path:
            size *= 0.5
            s_lo += (q & 1) * size
            t_lo += ((q >> 1) & 1) * size
        return (s_lo, t_lo, s_lo + size, t_lo + size)

    def token(self) -> str:
        return f"{self.face}/" + "".join(str(q) for q in self.path)

    @classmethod
    def from_token(cls, token: str) -> "CellId":
        face_str, _, path_str = token.partition("/")
        path = tuple(int(c) for c in path_str)
        return cls(int(face_str), len(path), path)


def latlon_to_cell(lat: float, lon: float, level: int) -> CellId:
    """Cell of the given level containing the point."""
    if not 0 <= level <= MAX_LEVEL:
        raise ValueError(f"level must be in 0..{MAX_LEVEL}, got {level}")
    x, y, z = latlon_to_xyz(lat, lon)
    face = xyz_to_face(x, y, z)
    u, v = _FACE_XYZ_TO_UV[face](x, y, z)
    s = uv_to_st(u)
    t = uv_to_st(v)
    scale = 1 << level
    i = min(int(s * scale), scale - 1)
    j = min(int(t * scale), scale - 1)
    path = tuple(
        (((j >> (level - 1 - k)) & 1) << 1) | ((i >> (level - 1 - k)) & 1)
        for k in range(level)
    )
    return CellId(face, level, path)


def cell_vertices(cell: CellId) -> list[tuple[float, float]]:
    """The four corner (lat, lon) pairs in counter-clockwise (s, t) order."""
    s_lo, t_lo, s_hi, t_hi = cell.st_bounds()
    corners_st = ((s_lo, t_lo), (s_hi, t_lo), (s_hi, t_hi), (s_lo, t_hi))
    out = []
    for s, t in corners_st:
        x, y, z = _FACE_UV_TO_XYZ[cell.face](st_to_uv(s), st_to_uv(t))
        n = math.sqrt(x * x + y * y + z * z)
        out.append(xyz_to_latlon(x / n, y / n, z / n))
    return out


def cell_center(cell: CellId) -> tuple[float, float]:
    s_lo, t_lo, s_hi, t_hi = cell.st_bounds()
    u = st_to_uv(0.5 * (s_lo + s_hi))
    v = st_to_uv(0.5 * (t_lo + t_hi))
    x, y, z = _FACE_UV_TO_XYZ[cell.face](u, v)
    n = math.sqrt(x * x + y * y + z * z)
    return xyz_to_latlon(x / n, y / n, z / n)


def _triangle_solid_angle(a, b, c) -> float:
    """Solid angle of the spherical triangle spanned by unit vectors a, b, c."""
    det = (
        a[0] * (b[1] * c[2] - b[2] * c[1])
        - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
    )
    dot_ab = a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    dot_bc = b[0] * c[0] + b[1] * c[1] + b[2] * c[2]
    dot_ca = c[0] * a[0] + c[1] * a[1] + c[2] * a[2]
    return 2.0 * math.atan2(abs(det), 1.0 + dot_ab + dot_bc + dot_ca)


def cell_area_km2(cell: CellId) -> float:
    """Cell area by spherical excess over the two triangles of its quad."""
    s_lo, t_lo, s_hi, t_hi = cell.st_bounds()
    corners = []
    for s, t in ((s_lo, t_lo), (s_hi, t_lo), (s_hi, t_hi), (s_lo, t_hi)):
        x, y, z = _FACE_UV_TO_XYZ[cell.face](st_to_uv(s), st_to_uv(t))
        n = math.sqrt(x * x + y * y + z * z)
        corners.append((x / n, y / n, z / n))
    omega = _triangle_solid_angle(corners[0], corners[1], corners[2])
    omega += _triangle_solid_angle(corners[0], corners[2], corners[3])
    return omega * EARTH_RADIUS_KM * EARTH_RADIUS_KM


def cell_geometry(cell: CellId) -> dict:
    """Parent, children, corners, center, and area of a cell.

    Parent is None at level 0 and children is None at the deepest level;
    asking explicitly via :meth:`CellId.parent`/``children`` raises there.
    """
    return {
        "parent": cell.parent() if cell.level > 0 else None,
        "children": cell.children() if cell.level < MAX_LEVEL else None,
        "vertices": cell_vertices(cell),
        "center": cell_center(cell),
        "area_km2": cell_area_km2(cell),
    }


def haversine_km(p1: tuple[float, float], p2: tuple[float, float]) -> float:
    """Great-circle distance in km between two (lat, lon) pairs."""
    lat1, lon1 = p1
    lat2, lon2 = p2
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = (
        math.sin(dphi / 2.0) ** 2
        + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    )
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(a)))


def destination_point(
    lat: float, lon: float, bearing_deg: float, distance_km: float
) -> tuple[float, float]:
    """Point reached by travelling along a great circle from (lat, lon)."""
    delta = distance_km / EARTH_RADIUS_KM
    theta = math.radians(bearing_deg)
    phi1 = math.radians(lat)
    lam1 = math.radians(lon)
    sin_phi2 = math.sin(phi1) * math.cos(delta) + math.cos(phi1) * math.sin(
        delta
    ) * math.cos(theta)
    phi2 = math.asin(max(-1.0, min(1.0, sin_phi2)))
    lam2 = lam1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(phi1),
        math.cos(delta) - math.sin(phi1) * sin_phi2,
    )
    lon2 = math.degrees(lam2)
    lon2 = (lon2 + 180.0) % 360.0 - 180.0
    return (math.degrees(phi2), lon2)

"""Partitioning the sphere into labeled classes for coordinate prediction.

Four schemes share one Partition container: the bottom-up adaptive cell
grid, recursive k-d boxes, k-means clusters, and input polygons.  Every
class carries the component-wise median of its training members as the
coordinate assigned to predictions landing in it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .sphere import (
    MAX_LEVEL,
    CellId,
    cell_center,
    cell_vertices,
    haversine_km,
    latlon_to_cell,
)

S2_ADAPTIVE = "s2_adaptive"
KDTREE = "kdtree"
KMEANS = "kmeans"
POLYGONS = "polygons"


@dataclass
class PartitionClass:
    class_id: int
    geometry: dict
    member_ids: list[str]
    centroid: tuple[float, float]
    flags: list[str] = field(default_factory=list)


@dataclass
class Partition:
    scheme: str
    classes: list[PartitionClass]
    parameters: dict

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def labels(self) -> dict[str, int]:
        """Training label per member user."""
        out = {}
        for cls in self.classes:
            for uid in cls.member_ids:
                out[uid] = cls.class_id
        return out

    def centroids(self) -> np.ndarray:
        return np.array([c.centroid for c in self.classes], dtype=np.float64)


def coordinate_median(coords: list[tuple[float, float]]) -> tuple[float, float]:
    """Component-wise median; even counts average the two middle values."""
    arr = np.asarray(coords, dtype=np.float64)
    return (float(np.median(arr[:, 0])), float(np.median(arr[:, 1])))


def _straddles_antimeridian(coords: list[tuple[float, float]]) -> bool:
    lons = [lon for _, lon in coords]
    return max(lons) - min(lons) > 180.0


def _make_class(class_id, geometry, members, flags=()):
    coords = [coord for _, coord in members]
    flags = list(flags)
    if _straddles_antimeridian(coords):
        flags.append("antimeridian")
    return PartitionClass(
        class_id=class_id,
        geometry=geometry,
        member_ids=[uid for uid, _ in members],
        centroid=coordinate_median(coords),
        flags=flags,
    )


# ---------------------------------------------------------------------------
# Adaptive cell grid


def build_adaptive_grid(
    users: dict[str, tuple[float, float]], l_min: int, t_max: int
) -> Partition:
    """Bottom-up merge of occupied deepest-level cells under a population cap.

    Occupied leaves merge into their parent whenever the parent's total
    occupied-descendant count stays below ``t_max``, never climbing above
    level ``l_min``.  A deepest-level cell already at or over the cap
    stays a class of its own (flagged ``oversized`` when strictly over).
    """
    if t_max < 1:
        raise ValueError("t_max must be >= 1")
    if not 0 <= l_min <= MAX_LEVEL:
        raise ValueError(f"l_min must be in 0..{MAX_LEVEL}")
    if not users:
        raise ValueError("no training users to partition")

    leaf_members: dict[CellId, list] = {}
    for uid, coord in users.items():
        leaf = latlon_to_cell(coord[0], coord[1], MAX_LEVEL)
        leaf_members.setdefault(leaf, []).append((uid, coord))

    # Subtree population for every ancestor down to l_min.
    counts: dict[CellId, int] = {}
    for leaf, members in leaf_members.items():
        n = len(members)
        for level in range(l_min, MAX_LEVEL + 1):
            anc = leaf.ancestor(level)
            counts[anc] = counts.get(anc, 0) + n

    def class_cell(leaf: CellId) -> CellId:
        if counts[leaf] >= t_max:
            return leaf
        best = leaf
        for level in range(MAX_LEVEL - 1, l_min - 1, -1):
            anc = leaf.ancestor(level)
            if counts[anc] < t_max:
                best = anc
            else:
                break
        return best

    grouped: dict[CellId, list] = {}
    for leaf, members in leaf_members.items():
        grouped.setdefault(class_cell(leaf), []).extend(members)

    classes = []
    for i, cell in enumerate(sorted(grouped)):
        members = sorted(grouped[cell])
        flags = ["oversized"] if (cell.level == MAX_LEVEL and len(members) > t_max) else []
        geometry = {
            "cell": cell.token(),
            "level": cell.level,
            "vertices": cell_vertices(cell),
            "center": cell_center(cell),
        }
        classes.append(_make_class(i, geometry, members, flags))
    return Partition(S2_ADAPTIVE, classes, {"l_min": l_min, "t_max": t_max})


# ---------------------------------------------------------------------------
# k-d tree boxes


def _split_position(values: np.ndarray) -> tuple[float, int] | None:
    """Split value strictly between members, nearest to an even division."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    gaps = np.flatnonzero(v[1:] > v[:-1]) + 1
    if len(gaps) == 0:
        return None
    half = len(v) / 2.0
    best = gaps[np.argmin(np.abs(gaps - half))]
    return (0.5 * (v[best - 1] + v[best]), int(best))


def build_kdtree_partition(
    users: dict[str, tuple[float, float]], leaf_threshold: int
) -> Partition:
    """Recursive even splits along the wider box dimension.

    Splitting stops when a node holds fewer members than the threshold.
    A node of identical coordinates that cannot split is kept as an
    oversized leaf and flagged.
    """
    if leaf_threshold < 1:
        raise ValueError("leaf_threshold must be >= 1")
    if not users:
        raise ValueError("no training users to partition")

    ids = sorted(users)
    coords = np.array([users[uid] for uid in ids], dtype=np.float64)
    root_box = (
        float(coords[:, 0].min()),
        float(coords[:, 0].max()),
        float(coords[:, 1].min()),
        float(coords[:, 1].max()),
    )

    classes: list[PartitionClass] = []

    def build(indices: np.ndarray, box: tuple[float, float, float, float]):
        pts = coords[indices]
        if len(indices) >= leaf_threshold:
            extents = (box[1] - box[0], box[3] - box[2])
            dim = 0 if extents[0] >= extents[1] else 1
            split = _split_position(pts[:, dim])
            if split is None:
                split = _split_position(pts[:, 1 - dim])
                dim = 1 - dim if split is not None else dim
            if split is not None:
                value, _ = split
                left = indices[pts[:, dim] < value]
                right = indices[pts[:, dim] >= value]
                if dim == 0:
                    lbox = (box[0], value, box[2], box[3])
                    rbox = (value, box[1], box[2], box[3])
                else:
                    lbox = (box[0], box[1], box[2], value)
                    rbox = (box[0], box[1], value, box[3])
                left_node = build(left, lbox)
                right_node = build(right, rbox)
                return {"dim": dim, "value": value, "left": left_node, "right": right_node}
        members = sorted((ids[i], (float(coords[i, 0]), float(coords[i, 1]))) for i in indices)
        flags = ["oversized"] if len(indices) >= leaf_threshold else []
        geometry = {"box": list(box)}
        cls = _make_class(len(classes), geometry, members, flags)
        classes.append(cls)
        return {"leaf": cls.class_id}

    tree = build(np.arange(len(ids)), root_box)
    return Partition(
        KDTREE,
        classes,
        {"leaf_threshold": leaf_threshold, "root_box": list(root_box), "tree": tree},
    )


# ---------------------------------------------------------------------------
# k-means clusters


def build_kmeans_partition(
    users: dict[str, tuple[float, float]], k: int, seed: int = 0
) -> Partition:
    """Lloyd iterations on raw (lat, lon) with k-means++ seeding.

    Runs until assignments stop changing or 300 iterations.  A cluster
    that empties is re-seeded at the point currently farthest from its
    assigned center.
    """
    if not users:
        raise ValueError("no training users to partition")
    ids = sorted(users)
    coords = np.array([users[uid] for uid in ids], dtype=np.float64)
    distinct = np.unique(coords, axis=0)
    if k > len(distinct):
        raise ValueError(
            f"k={k} exceeds the {len(distinct)} distinct coordinates"
        )

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(coords, k, rng)
    assignment = np.full(len(coords), -1, dtype=np.int64)
    for _ in range(300):
        dists = ((coords[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assignment = np.argmin(dists, axis=1)
        for j in range(k):
            mask = new_assignment == j
            if mask.any():
                centers[j] = coords[mask].mean(axis=0)
            else:
                worst = int(np.argmax(dists[np.arange(len(coords)), new_assignment]))
                centers[j] = coords[worst]
                new_assignment[worst] = j
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment

    classes = []
    for j in range(k):
        members = sorted(
            (ids[i], (float(coords[i, 0]), float(coords[i, 1])))
            for i in np.flatnonzero(assignment == j)
        )
        geometry = {"center": [float(centers[j][0]), float(centers[j][1])]}
        classes.append(_make_class(j, geometry, members))
    return Partition(KMEANS, classes, {"k": k, "seed": seed})


def _kmeans_pp_init(coords: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty((k, 2), dtype=np.float64)
    centers[0] = coords[rng.integers(len(coords))]
    closest = ((coords - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            # All remaining mass at existing centers: pick any new distinct point.
            seen = {tuple(c) for c in centers[:j]}
            fresh = next(c for c in coords if tuple(c) not in seen)
            centers[j] = fresh
        else:
            r = rng.random() * total
            centers[j] = coords[np.searchsorted(np.cumsum(closest), r)]
        closest = np.minimum(closest, ((coords - centers[j]) ** 2).sum(axis=1))
    return centers


# ---------------------------------------------------------------------------
# Polygons and ray casting


@dataclass
class Polygon:
    name: str
    rings: list[list[tuple[float, float]]]

    def __post_init__(self):
        cleaned = []
        for ring in self.rings:
            ring = list(ring)
            if len(ring) > 1 and ring[0] == ring[-1]:
                ring = ring[:-1]
            if len(ring) < 3:
                raise ValueError(f"polygon {self.name!r}: ring needs >= 3 vertices")
            cleaned.append(ring)
        self.rings = cleaned


def point_in_polygon(point: tuple[float, float], polygon: Polygon) -> bool:
    """Even-odd test with an eastward ray in (lon, lat) space.

    Boundary points follow the half-open edge rule, so shared borders
    claim a point exactly once.
    """
    lat, lon = point
    inside = False
    for ring in polygon.rings:
        n = len(ring)
        for i in range(n):
            a_lat, a_lon = ring[i]
            b_lat, b_lon = ring[(i + 1) % n]
            if (a_lat > lat) != (b_lat > lat):
                cross = a_lon + (lat - a_lat) / (b_lat - a_lat) * (b_lon - a_lon)
                if lon < cross:
                    inside = not inside
    return inside


def load_polygons_geojson(path: str | Path) -> list[Polygon]:
    """Polygons in file order from a GeoJSON FeatureCollection."""
    doc = json.loads(Path(path).read_text("utf-8"))
    polygons = []
    for feature in doc.get("features", []):
        geom = feature.get("geometry", {})
        props = feature.get("properties", {}) or {}
        name = str(props.get("name", props.get("NAME", len(polygons))))
        gtype = geom.get("type")
        if gtype == "Polygon":
            ring_sets = [geom["coordinates"]]
        elif gtype == "MultiPolygon":
            ring_sets = geom["coordinates"]
        else:
            continue
        rings = [
            [(float(pt[1]), float(pt[0])) for pt in ring]
            for rs in ring_sets
            for ring in rs
        ]
        polygons.append(Polygon(name, rings))
    return polygons


def build_polygon_partition(
    users: dict[str, tuple[float, float]], polygons: list[Polygon]
) -> Partition:
    """Classes from input polygons; first containing polygon wins.

    Users outside every polygon join the class with the nearest centroid;
    centroids and those assignments are then re-iterated to a fixed point
    so later assignment reproduces training membership.
    """
    if not users:
        raise ValueError("no training users to partition")
    contained: dict[int, list] = {}
    outside = []
    for uid in sorted(users):
        coord = users[uid]
        for pi, poly in enumerate(polygons):
            if point_in_polygon(coord, poly):
                contained.setdefault(pi, []).append((uid, coord))
                break
        else:
            outside.append((uid, coord))
    if not contained:
        raise ValueError("no training user falls inside any polygon")

    kept = sorted(contained)
    extra: dict[int, list] = {pi: [] for pi in kept}
    centroids = {
        pi: coordinate_median([c for _, c in contained[pi]]) for pi in kept
    }
    flags: list[str] = []
    for _ in range(50):
        new_extra: dict[int, list] = {pi: [] for pi in kept}
        for uid, coord in outside:
            nearest = min(kept, key=lambda pi: (haversine_km(coord, centroids[pi]), pi))
            new_extra[nearest].append((uid, coord))
        if new_extra == extra:
            break
        extra = new_extra
        centroids = {
            pi: coordinate_median([c for _, c in contained[pi] + extra[pi]])
            for pi in kept
        }
    else:
        flags.append("fallback_unconverged")

    classes = []
    for class_id, pi in enumerate(kept):
        poly = polygons[pi]
        members = sorted(contained[pi] + extra[pi])
        geometry = {
            "name": poly.name,
            "polygon_index": pi,
            "rings": [[list(v) for v in ring] for ring in poly.rings],
        }
        classes.append(_make_class(class_id, geometry, members, flags))
    return Partition(POLYGONS, classes, {"num_polygons": len(polygons)})


# ---------------------------------------------------------------------------
# Assignment


def _nearest_centroid(partition: Partition, coord: tuple[float, float]) -> int:
    best = min(
        partition.classes,
        key=lambda cls: (haversine_km(coord, cls.centroid), cls.class_id),
    )
    return best.class_id


def assign_class(partition: Partition, lat: float, lon: float) -> int:
    """Class id of the point under the partition's own geometry.

    Points outside every class geometry fall back to the nearest class
    centroid, so every coordinate receives a label.
    """
    coord = (lat, lon)
    if partition.scheme == S2_ADAPTIVE:
        by_token = {cls.geometry["cell"]: cls.class_id for cls in partition.classes}
        leaf = latlon_to_cell(lat, lon, MAX_LEVEL)
        levels = sorted({cls.geometry["level"] for cls in partition.classes}, reverse=True)
        for level in levels:
            token = leaf.ancestor(level).token()
            if token in by_token:
                return by_token[token]
        return _nearest_centroid(partition, coord)
    if partition.scheme == KDTREE:
        lo_lat, hi_lat, lo_lon, hi_lon = partition.parameters["root_box"]
        if not (lo_lat <= lat <= hi_lat and lo_lon <= lon <= hi_lon):
            return _nearest_centroid(partition, coord)
        node = partition.parameters["tree"]
        while "leaf" not in node:
            value = coord[node["dim"]]
            node = node["left"] if value < node["value"] else node["right"]
        return node["leaf"]
    if partition.scheme == KMEANS:
        centers = np.array([cls.geometry["center"] for cls in partition.classes])
        d2 = ((centers - np.array(coord)) ** 2).sum(axis=1)
        return partition.classes[int(np.argmin(d2))].class_id
    if partition.scheme == POLYGONS:
        order = sorted(partition.classes, key=lambda c: c.geometry["polygon_index"])
        for cls in order:
            poly = Polygon(cls.geometry["name"], [
                [tuple(v) for v in ring] for ring in cls.geometry["rings"]
            ])
            if point_in_polygon(coord, poly):
                return cls.class_id
        return _nearest_centroid(partition, coord)
    raise ValueError(f"unknown scheme: {partition.scheme!r}")


# ---------------------------------------------------------------------------
# Serialization


def partition_to_dict(partition: Partition) -> dict:
    return {
        "scheme": partition.scheme,
        "parameters": partition.parameters,
        "classes": [
            {
                "class_id": cls.class_id,
                "geometry": cls.geometry,
                "member_ids": cls.member_ids,
                "member_count": len(cls.member_ids),
                "centroid": list(cls.centroid),
                "flags": cls.flags,
            }
            for cls in partition.classes
        ],
    }


def partition_from_dict(doc: dict) -> Partition:
    classes = [
        PartitionClass(
            class_id=entry["class_id"],
            geometry=entry["geometry"],
            member_ids=list(entry["member_ids"]),
            centroid=(entry["centroid"][0], entry["centroid"][1]),
            flags=list(entry.get("flags", [])),
        )
        for entry in doc["classes"]
    ]
    return Partition(doc["scheme"], classes, doc["parameters"])


def save_partition(partition: Partition, path: str | Path, provenance: dict | None = None) -> None:
    doc = partition_to_dict(partition)
    if provenance:
        doc["_provenance"] = provenance
    Path(path).write_text(json.dumps(doc, sort_keys=True), "utf-8")


def load_partition(path: str | Path) -> Partition:
    return partition_from_dict(json.loads(Path(path).read_text("utf-8")))


def partition_to_geojson(partition: Partition) -> dict:
    """FeatureCollection for map rendering; kmeans classes export as points."""
    features = []
    for cls in partition.classes:
        props = {
            "class_id": cls.class_id,
            "member_count": len(cls.member_ids),
            "centroid": list(cls.centroid),
            "flags": cls.flags,
        }
        if partition.scheme == S2_ADAPTIVE:
            ring = [[lon, lat] for lat, lon in cls.geometry["vertices"]]
            ring.append(ring[0])
            geometry = {"type": "Polygon", "coordinates": [ring]}
            props["cell"] = cls.geometry["cell"]
        elif partition.scheme == KDTREE:
            lo_lat, hi_lat, lo_lon, hi_lon = cls.geometry["box"]
            ring = [
                [lo_lon, lo_lat], [hi_lon, lo_lat], [hi_lon, hi_lat],
                [lo_lon, hi_lat], [lo_lon, lo_lat],
            ]
            geometry = {"type": "Polygon", "coordinates": [ring]}
        elif partition.scheme == POLYGONS:
            rings = [
                [[lon, lat] for lat, lon in ring] + [[ring[0][1], ring[0][0]]]
                for ring in [
                    [tuple(v) for v in r] for r in cls.geometry["rings"]
                ]
            ]
            geometry = {"type": "Polygon", "coordinates": rings}
            props["name"] = cls.geometry["name"]
        else:
            lat, lon = cls.geometry["center"]
            geometry = {"type": "Point", "coordinates": [lon, lat]}
        features.append({"type": "Feature", "geometry": geometry, "properties": props})
    return {"type": "FeatureCollection", "features": features}

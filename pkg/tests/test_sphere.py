import math

import numpy as np
import pytest

from mvgeo import sphere
from mvgeo.sphere import CellId, cell_area_km2, cell_geometry, haversine_km, latlon_to_cell

R = sphere.EARTH_RADIUS_KM
SPHERE_AREA = 4.0 * math.pi * R * R


def random_latlon(rng, n):
    lat = np.degrees(np.arcsin(rng.uniform(-1.0, 1.0, n)))
    lon = rng.uniform(-180.0, 180.0, n)
    return lat, lon


class TestCellId:
    def test_equator_prime_meridian_is_plus_x_face(self):
        assert latlon_to_cell(0.0, 0.0, 0) == CellId(0, 0, ())

    def test_level_zero_has_six_distinct_faces(self):
        probes = [(0, 0), (0, 90), (90, 0), (0, 180), (0, -90), (-90, 0)]
        faces = {latlon_to_cell(lat, lon, 0).face for lat, lon in probes}
        assert faces == set(range(6))

    def test_deeper_cells_keep_their_ancestors(self):
        rng = np.random.default_rng(7)
        lats, lons = random_latlon(rng, 100)
        for lat, lon in zip(lats, lons):
            for level in range(0, 15):
                parent = latlon_to_cell(lat, lon, level)
                child = latlon_to_cell(lat, lon, level + 1)
                assert parent.is_ancestor_of(child)
                assert child.parent() == parent

    def test_children_partition_parent_in_st(self):
        cell = latlon_to_cell(40.0, -75.0, 5)
        s_lo, t_lo, s_hi, t_hi = cell.st_bounds()
        child_bounds = [c.st_bounds() for c in cell.children()]
        assert all(b[0] >= s_lo and b[2] <= s_hi for b in child_bounds)
        total = sum((b[2] - b[0]) * (b[3] - b[1]) for b in child_bounds)
        assert total == pytest.approx((s_hi - s_lo) * (t_hi - t_lo))

    def test_invalid_level_rejected(self):
        with pytest.raises(ValueError):
            latlon_to_cell(0.0, 0.0, 31)
        with pytest.raises(ValueError):
            latlon_to_cell(0.0, 0.0, -1)

    def test_token_round_trip(self):
        cell = latlon_to_cell(51.5, -0.12, 9)
        assert CellId.from_token(cell.token()) == cell

    def test_parent_of_root_and_children_of_leaf_raise(self):
        with pytest.raises(ValueError):
            CellId(0, 0, ()).parent()
        leaf = latlon_to_cell(1.0, 2.0, 30)
        with pytest.raises(ValueError):
            leaf.children()


class TestCellGeometry:
    def test_level_zero_area_is_sixth_of_sphere(self):
        for face in range(6):
            area = cell_area_km2(CellId(face, 0, ()))
            assert area == pytest.approx(SPHERE_AREA / 6.0, rel=1e-3)

    def test_children_areas_sum_to_parent(self):
        rng = np.random.default_rng(3)
        lats, lons = random_latlon(rng, 20)
        for lat, lon in zip(lats, lons):
            cell = latlon_to_cell(lat, lon, 8)
            total = sum(cell_area_km2(c) for c in cell.children())
            assert total == pytest.approx(cell_area_km2(cell), rel=5e-3)

    def test_level12_area_band_is_tight(self):
        rng = np.random.default_rng(11)
        lats, lons = random_latlon(rng, 2000)
        areas = [cell_area_km2(latlon_to_cell(a, o, 12)) for a, o in zip(lats, lons)]
        assert max(areas) / min(areas) <= 2.1

    def test_geometry_bundle(self):
        cell = latlon_to_cell(48.85, 2.35, 4)
        geo = cell_geometry(cell)
        assert geo["parent"] == cell.parent()
        assert geo["children"] == cell.children()
        assert len(geo["vertices"]) == 4
        lat, lon = geo["center"]
        assert latlon_to_cell(lat, lon, 4) == cell

    def test_monte_carlo_area_oracle(self):
        """Uniform sphere sampling agrees with the spherical-excess area.

        The membership test below recomputes face and (s, t) coordinates
        vectorized, independent of the CellId path code.
        """
        cell = latlon_to_cell(40.7, -74.0, 3)
        level = cell.level
        rng = np.random.default_rng(123)
        n = 1_000_000
        z = rng.uniform(-1.0, 1.0, n)
        theta = rng.uniform(0.0, 2.0 * math.pi, n)
        r = np.sqrt(1.0 - z * z)
        xyz = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)

        axis = np.argmax(np.abs(xyz), axis=1)
        sign = xyz[np.arange(n), axis] >= 0
        faces = np.where(sign, axis, axis + 3)

        u = np.empty(n)
        v = np.empty(n)
        x, y, zc = xyz[:, 0], xyz[:, 1], xyz[:, 2]
        for f, (ufn, vfn) in enumerate([
            (lambda x, y, z: y / x, lambda x, y, z: z / x),
            (lambda x, y, z: -x / y, lambda x, y, z: z / y),
            (lambda x, y, z: -x / z, lambda x, y, z: -y / z),
            (lambda x, y, z: z / x, lambda x, y, z: y / x),
            (lambda x, y, z: z / y, lambda x, y, z: -x / y),
            (lambda x, y, z: -y / z, lambda x, y, z: -x / z),
        ]):
            mask = faces == f
            u[mask] = ufn(x[mask], y[mask], zc[mask])
            v[mask] = vfn(x[mask], y[mask], zc[mask])

        def st(w):
            out = np.empty_like(w)
            pos = w >= 0
            out[pos] = 0.5 * np.sqrt(1 + 3 * w[pos])
            out[~pos] = 1 - 0.5 * np.sqrt(1 - 3 * w[~pos])
            return out

        scale = 1 << level
        i = np.minimum((st(u) * scale).astype(np.int64), scale - 1)
        j = np.minimum((st(v) * scale).astype(np.int64), scale - 1)
        want_i = sum((q & 1) << (level - 1 - k) for k, q in enumerate(cell.path))
        want_j = sum(((q >> 1) & 1) << (level - 1 - k) for k, q in enumerate(cell.path))
        hits = int(np.sum((faces == cell.face) & (i == want_i) & (j == want_j)))

        p_hat = hits / n
        mc_area = p_hat * SPHERE_AREA
        sigma = math.sqrt(p_hat * (1 - p_hat) / n) * SPHERE_AREA
        assert abs(mc_area - cell_area_km2(cell)) < 3.0 * sigma


class TestHaversine:
    def test_zero_for_identical_points(self):
        assert haversine_km((37.0, -122.0), (37.0, -122.0)) == 0.0

    def test_antipodal_half_circumference(self):
        assert haversine_km((0.0, 0.0), (0.0, 180.0)) == pytest.approx(math.pi * R, abs=1e-6)

    def test_symmetry_and_nonnegativity(self):
        rng = np.random.default_rng(5)
        lats, lons = random_latlon(rng, 50)
        pairs = list(zip(lats, lons))
        for a, b in zip(pairs[:-1], pairs[1:]):
            assert haversine_km(a, b) == pytest.approx(haversine_km(b, a))
            assert haversine_km(a, b) >= 0.0

    def test_against_independent_great_circle_formula(self):
        """Cross-check with the atan2 form of the great-circle distance."""
        def oracle(p1, p2):
            phi1, lam1 = map(math.radians, p1)
            phi2, lam2 = map(math.radians, p2)
            dlam = lam2 - lam1
            num = math.hypot(
                math.cos(phi2) * math.sin(dlam),
                math.cos(phi1) * math.sin(phi2)
                - math.sin(phi1) * math.cos(phi2) * math.cos(dlam),
            )
            den = math.sin(phi1) * math.sin(phi2) + math.cos(phi1) * math.cos(phi2) * math.cos(dlam)
            return R * math.atan2(num, den)

        rng = np.random.default_rng(17)
        lats, lons = random_latlon(rng, 200)
        points = list(zip(lats, lons))
        for a, b in zip(points[:100], points[100:]):
            expected = oracle(a, b)
            assert haversine_km(a, b) == pytest.approx(expected, rel=5e-3, abs=1e-9)

    def test_destination_point_round_trip(self):
        start = (48.0, 11.0)
        end = sphere.destination_point(*start, bearing_deg=63.0, distance_km=250.0)
        assert haversine_km(start, end) == pytest.approx(250.0, rel=1e-9)

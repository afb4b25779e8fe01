import numpy as np
import pytest

from rwinspect.errors import MapError
from rwinspect.geometry import InspectorSpec, MapSpec, Rect, is_free
from rwinspect.grid import discretize, fundamental_length, is_traversable, validate


def flood_fill_components(free: np.ndarray) -> int:
    """Independent traversability oracle: count 4-connected components."""
    seen = np.zeros_like(free, dtype=bool)
    nx, ny = free.shape
    comps = 0
    for i in range(nx):
        for j in range(ny):
            if free[i, j] and not seen[i, j]:
                comps += 1
                stack = [(i, j)]
                seen[i, j] = True
                while stack:
                    a, b = stack.pop()
                    for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        na, nb = a + da, b + db
                        if 0 <= na < nx and 0 <= nb < ny and free[na, nb] and not seen[na, nb]:
                            seen[na, nb] = True
                            stack.append((na, nb))
    return comps


def test_discretize_empty(empty_map):
    cm = discretize(empty_map, 2.0, 0.4)
    assert (cm.nx, cm.ny) == (5, 5)
    assert cm.n_free == 25
    assert is_traversable(cm)


def test_discretize_full_height_wall():
    m = MapSpec(10, 10, (Rect(4, 0, 6, 10),))
    cm = discretize(m, 2.0, 0.4)
    # One occupied column; two free components.
    assert cm.n_free == 20
    assert not is_traversable(cm)
    assert flood_fill_components(cm.free) == 2


def test_discretize_corridor_connects():
    m = MapSpec(10, 10, (Rect(4, 0, 6, 8),))
    cm = discretize(m, 2.0, 0.4)
    assert cm.n_free == 21
    assert is_traversable(cm)
    assert flood_fill_components(cm.free) == 1


def test_discretize_rejects_bad_epsilon(empty_map):
    with pytest.raises(MapError, match="invalid discretization length"):
        discretize(empty_map, 0.0)
    with pytest.raises(MapError, match="invalid discretization length"):
        discretize(empty_map, 11.0)


def test_traversability_matches_flood_fill(drum_map, divider_map, barbell_map, dense_map):
    for m in (drum_map, divider_map, barbell_map, dense_map):
        for eps in (2.0, 1.0, 0.5):
            cm = discretize(m, eps, 0.4)
            assert is_traversable(cm) == (flood_fill_components(cm.free) == 1 and cm.n_free > 0)


def test_single_free_bin_is_traversable():
    m = MapSpec(1.0, 1.0, ())
    cm = discretize(m, 1.0, 0.4)
    assert cm.n_free == 1
    assert is_traversable(cm)


def test_fundamental_length_empty(empty_map, inspector):
    assert fundamental_length(empty_map, inspector, [2.0, 1.0, 0.5]) == 2.0


def test_fundamental_length_doorway(inspector):
    # 1.1 m doorway placed so the 1 m grid threads it; the 2 m grid closes
    # it conservatively.  Oracle: run discretize at each candidate.
    walls = (Rect(0.0, 4.5, 3.95, 5.5), Rect(5.05, 4.5, 10.0, 5.5))
    m = MapSpec(10, 10, walls)
    assert not is_traversable(discretize(m, 2.0, inspector.r_I))
    assert is_traversable(discretize(m, 1.0, inspector.r_I))
    assert fundamental_length(m, inspector, [2.0, 1.0, 0.5]) == 1.0


def test_fundamental_length_lower_bound_unmet(empty_map):
    big = InspectorSpec(r_I=1.5, r_D=3.0)
    assert fundamental_length(empty_map, big, [1.0, 0.5]) is None


def test_fundamental_length_rejects_empty_candidates(empty_map, inspector):
    with pytest.raises(MapError, match="no candidates"):
        fundamental_length(empty_map, inspector, [])


def test_validate_bounds(empty_map, inspector):
    cm = discretize(empty_map, 0.7, inspector.r_I)
    rep = validate(0.7, inspector, cm)
    assert rep.satisfies_lower and rep.satisfies_upper  # 0.7 <= 1/sqrt(2)
    rep = validate(0.75, inspector, discretize(empty_map, 0.75, inspector.r_I))
    assert not rep.satisfies_upper
    rep = validate(0.3, inspector, discretize(empty_map, 0.3, inspector.r_I))
    assert not rep.satisfies_lower


def test_conservative_monotonicity(drum_map, divider_map, barbell_map):
    # A coarse free bin never contains an occupied aligned sub-bin.
    for m in (drum_map, divider_map, barbell_map):
        fine = discretize(m, 0.5, 0.4)
        coarse = discretize(m, 1.0, 0.4)
        for i in range(coarse.nx):
            for j in range(coarse.ny):
                if coarse.free[i, j]:
                    sub = fine.free[2 * i : 2 * i + 2, 2 * j : 2 * j + 2]
                    assert sub.all()


def test_every_free_bin_admits_placement(drum_map, divider_map, rng):
    # Sampled check of the placement invariant behind conservative occupancy.
    for m in (drum_map, divider_map):
        cm = discretize(m, 1.0, 0.4)
        for i, j in cm.free_bins:
            x0, y0, x1, y1 = cm.bin_rect(i, j)
            found = any(
                is_free(m, (rng.uniform(x0, x1), rng.uniform(y0, y1)), 0.4) for _ in range(64)
            )
            assert found, f"free bin ({i},{j}) admits no sampled placement"


def test_grid_export_roundtrip(empty_map):
    cm = discretize(empty_map, 2.0, 0.4)
    doc = cm.to_dict()
    assert doc["epsilon"] == 2.0
    assert len(doc["free_rows"]) == cm.ny
    assert all(len(row) == cm.nx for row in doc["free_rows"])
    assert doc["free_rows"][0] == "1" * 5


def test_bfs_distances(barbell_map):
    cm = discretize(barbell_map, 2.0, 0.4)
    d = cm.bfs_distances(0)
    assert (d >= 0).all()
    assert d[0] == 0
    # Radius to a corner bin exceeds radius to the corridor bin.
    corridor = cm.free_index((2, 2))
    corner = cm.free_index((0, 0))
    assert cm.graph_radius_to(corner) > cm.graph_radius_to(corridor)

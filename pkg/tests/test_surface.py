"""Surface extraction, perturbation, meshing, and file round-trips."""
import numpy as np
import pytest

from tacsim.errors import ExtractionError
from tacsim.mpm.types import ELASTOMER, ParticleState
from tacsim.shapes import elastomer_block
from tacsim.surface import (DepthMap, contact_radius, depth_to_mesh,
                            extract_surface_depth, load_depth, perturb_depth,
                            save_depth, save_obj)


def _cloud_from_grid(z_values: np.ndarray, spacing: float = 1.0):
    """Elastomer surface layer laid out on a regular (x, y) grid."""
    h, w = z_values.shape
    ys, xs = np.mgrid[0:h, 0:w] * spacing
    pts = np.column_stack([xs.ravel(), ys.ravel(), z_values.ravel()])
    n = len(pts)
    state = ParticleState(pts, np.zeros((n, 3)), np.ones(n), np.ones(n),
                          np.full(n, ELASTOMER, dtype=np.uint8))
    state.surface_ids = np.arange(n, dtype=np.int64)
    return state


def test_undeformed_block_is_all_zero():
    block = elastomer_block(extent=(4, 4, 1), counts=(9, 9, 3))
    depth = extract_surface_depth(block, resolution=(7, 7), pitch=0.5)
    np.testing.assert_allclose(depth.values, 0.0, atol=1e-12)


def test_interpolation_interpolates():
    z = np.full((5, 5), 2.0)
    z[2, 3] = 1.4  # pressed by 0.6
    cloud = _cloud_from_grid(z)
    # raster nodes coincide with the particle lattice
    depth = extract_surface_depth(cloud, resolution=(5, 5), pitch=1.0,
                                  center=(2.0, 2.0), rest_height=2.0)
    assert depth.values[2, 3] == pytest.approx(0.6, abs=1e-9)
    assert depth.values[0, 0] == pytest.approx(0.0, abs=1e-9)


def test_between_node_displacement_bounded():
    z = np.full((6, 6), 1.0)
    z[3, 3] = 0.5
    cloud = _cloud_from_grid(z)
    # raster offset half a cell: every node sees interpolated values
    depth = extract_surface_depth(cloud, resolution=(5, 5), pitch=1.0,
                                  center=(3.0, 3.0), rest_height=1.0)
    assert depth.values.min() >= -1e-12
    assert depth.values.max() <= 0.5 + 1e-12
    assert depth.values.max() > 0.0


def test_too_few_surface_particles():
    z = np.zeros((1, 2))
    cloud = _cloud_from_grid(z)
    with pytest.raises(ExtractionError):
        extract_surface_depth(cloud, resolution=(4, 4), pitch=0.5)


def test_spherical_cap_press_geometry():
    # Analytic oracle: a sheet carrying an exact spherical-cap imprint of
    # radius R at depth d. The extracted map must report max depth within
    # 10% of d and a depth > d/10 contour radius within 5% of the cap
    # contact radius sqrt(d(2R - d)).
    R, d, spacing, n = 4.0, 1.0, 0.1, 201
    ys, xs = (np.mgrid[0:n, 0:n] - (n - 1) / 2.0) * spacing
    r2 = xs ** 2 + ys ** 2
    imprint = np.maximum(d - (R - np.sqrt(np.maximum(R * R - r2, 0.0))), 0.0)
    cloud = _cloud_from_grid(2.0 - imprint, spacing=spacing)
    depth = extract_surface_depth(cloud, resolution=(n, n), pitch=spacing,
                                  center=(10.0, 10.0), rest_height=2.0)
    assert depth.values.max() == pytest.approx(d, rel=0.10)
    expected = np.sqrt(d * (2 * R - d))
    assert contact_radius(depth, d / 10) == pytest.approx(expected, rel=0.05)


def test_contact_radius_rejects_negative_threshold():
    with pytest.raises(ExtractionError):
        contact_radius(DepthMap(np.zeros((4, 4)), pixel_pitch=0.5), -0.1)


def test_perturb_contract(rng):
    base = DepthMap(rng.uniform(0, 1, size=(20, 30)), pixel_pitch=0.1)
    same = perturb_depth(base, amplitude=0.0, seed=5)
    np.testing.assert_array_equal(same.values, base.values)

    a = perturb_depth(base, amplitude=1e-4, seed=7)
    b = perturb_depth(base, amplitude=1e-4, seed=7)
    np.testing.assert_array_equal(a.values, b.values)
    assert np.abs(a.values - base.values).max() <= 1e-4

    c = perturb_depth(base, amplitude=1e-4, seed=8)
    assert np.any(c.values != a.values)

    flat = perturb_depth(DepthMap(np.zeros((32, 32)), 0.1), amplitude=1e-4,
                         seed=0)
    assert np.all(flat.values[:, 1:] != flat.values[:, :-1])
    assert np.all(flat.values[1:, :] != flat.values[:-1, :])


def test_flat_mesh_topology():
    mesh = depth_to_mesh(DepthMap(np.zeros((2, 2)), pixel_pitch=1.0))
    assert mesh.vertices.shape == (4, 3)
    assert mesh.triangles.shape == (2, 3)
    np.testing.assert_allclose(mesh.normals, [[0, 0, 1]] * 4, atol=1e-12)
    # UV corners exact
    uvs = {tuple(uv) for uv in mesh.uvs}
    assert {(0, 0), (1, 0), (0, 1), (1, 1)} == uvs


def test_mesh_counts_at_sensor_resolution():
    mesh = depth_to_mesh(DepthMap(np.zeros((480, 640)), pixel_pitch=0.03125))
    assert len(mesh.vertices) == 307_200
    assert len(mesh.triangles) == 2 * 639 * 479


def test_mesh_vertex_and_uv_layout():
    vals = np.arange(12, dtype=np.float64).reshape(3, 4) * 0.01
    mesh = depth_to_mesh(DepthMap(vals, pixel_pitch=0.5))
    idx = 1 * 4 + 2  # row 1, col 2
    np.testing.assert_allclose(mesh.vertices[idx],
                               [2 * 0.5, 1 * 0.5, -vals[1, 2]])
    np.testing.assert_allclose(mesh.uvs[idx], [2 / 3, 1 / 2])


def test_ramp_normals_tilt_uniformly():
    rows = np.arange(6, dtype=np.float64)
    vals = np.tile(rows[:, None], (1, 5)) * 0.1  # deepens along +y
    mesh = depth_to_mesh(DepthMap(vals, pixel_pitch=1.0))
    interior = mesh.normals.reshape(6, 5, 3)[1:-1, 1:-1].reshape(-1, 3)
    np.testing.assert_allclose(
        interior, np.broadcast_to(interior[0], interior.shape), atol=1e-9)
    n = interior[0]
    assert n[2] > 0 and n[0] == pytest.approx(0.0, abs=1e-12)
    # surface z = -0.1*y, normal along (0, 0.1, 1)
    np.testing.assert_allclose(n, np.array([0, 0.1, 1]) / np.hypot(0.1, 1),
                               atol=1e-9)


def test_mesh_interior_edges_watertight():
    mesh = depth_to_mesh(DepthMap(np.random.default_rng(0).uniform(
        0, 1, size=(4, 5)), pixel_pitch=1.0))
    edges = {}
    for tri in mesh.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            edges[min(a, b), max(a, b)] = edges.get((min(a, b), max(a, b)), 0) + 1
    counts = np.array(list(edges.values()))
    assert set(counts) <= {1, 2}
    boundary = sum(1 for c in edges.values() if c == 1)
    assert boundary == 2 * (5 - 1) + 2 * (4 - 1)  # the raster perimeter


def test_mesh_rejects_degenerate_raster():
    with pytest.raises(ExtractionError):
        depth_to_mesh(DepthMap(np.zeros((1, 5)), pixel_pitch=1.0))


def test_depth_file_round_trip(tmp_path, rng):
    vals = rng.uniform(0, 3, size=(11, 7)).astype(np.float32).astype(np.float64)
    d = DepthMap(vals, pixel_pitch=0.125)
    path = tmp_path / "x.dpth"
    save_depth(d, path)
    back = load_depth(path)
    np.testing.assert_array_equal(back.values, vals)
    assert back.pixel_pitch == pytest.approx(0.125)
    raw = bytearray(path.read_bytes())
    assert raw[:4] == b"DPTH"
    raw[0] = ord("X")
    bad = tmp_path / "bad.dpth"
    bad.write_bytes(bytes(raw))
    with pytest.raises(Exception):
        load_depth(bad)


def test_obj_export(tmp_path):
    mesh = depth_to_mesh(DepthMap(np.zeros((2, 3)), pixel_pitch=1.0))
    path = tmp_path / "m.obj"
    save_obj(mesh, path)
    lines = path.read_text().splitlines()
    kinds = {}
    for line in lines:
        kinds[line.split()[0]] = kinds.get(line.split()[0], 0) + 1
    assert kinds["v"] == 6 and kinds["vt"] == 6 and kinds["vn"] == 6
    assert kinds["f"] == 4
    first_face = next(line for line in lines if line.startswith("f "))
    assert "1/1/1" in first_face  # 1-based indices

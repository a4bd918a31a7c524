"""Step-loop behavior: Algorithm-1 convergence semantics, phase targeting,
probe selection, fault surfacing and snapshot round trips."""
import numpy as np
import pytest

from tacsim.errors import ConfigurationError, SimulationFault, TacsimError
from tacsim.mpm.snapshot import load_snapshot, save_snapshot
from tacsim.mpm.solver import Simulation
from tacsim.mpm.types import (KinematicCommand, MaterialParams,
                              ParticleState, SimConfig, measure_progress,
                              merge_states, select_probes)
from tacsim.shapes import Pose, elastomer_block, sample_particles, shape_spec

SPACING = 0.5
W = 2.0 * SPACING


def _small_world(gap=0.0, margin=3):
    """6x6x2 mm gel slab with a 1 mm-radius sphere `gap` mm above it."""
    origin_z = W  # lowest particles one cell up so every base cell is >= 0
    gel = elastomer_block(extent=(6.0, 6.0, 2.0), counts=(13, 13, 5),
                          origin=(3.0, 3.0, origin_z))
    top_z = origin_z + 2.0
    sphere = shape_spec("sphere", radius=1.0)
    pose = Pose(translation=(6.0, 6.0, top_z + 1.0 + gap))
    obj = sample_particles(sphere, pose, SPACING)
    state = merge_states(gel, obj)
    config = SimConfig(grid_width=W, dt=1e-4, grid_dims=(13, 13, 10),
                       boundary_margin=margin)
    return state, config, top_z


def test_pure_press_is_trivially_converged():
    state, config, _ = _small_world()
    sim = Simulation(state, config)
    monitor = sim.new_monitor()
    stats = sim.step(KinematicCommand.translate((0, 0, -10.0)), monitor)
    assert stats.iterations == 1
    assert stats.converged


def test_slide_converges_within_threshold():
    state, config, _ = _small_world()
    sim = Simulation(state, config)
    monitor = sim.new_monitor()
    # establish contact first, as the pipeline does before any slide
    sim.run_phase(KinematicCommand.translate((0, 0, -20.0)), monitor,
                  target_distance=0.8)
    monitor = sim.new_monitor()
    cmd = KinematicCommand.translate((8.0, 0, 0))
    seen_converged = 0
    for _ in range(40):
        stats = sim.step(cmd, monitor)
        assert stats.iterations <= config.rest_limit
        if stats.converged:
            seen_converged += 1
            assert stats.ratio <= config.rest_threshold
    assert seen_converged > 0


def test_plain_mode_single_cycle_no_pinning():
    state, config, _ = _small_world(gap=-0.2)
    sim = Simulation(state, config, improved=False)
    assert not state.pinned.any()
    monitor = sim.new_monitor()
    for _ in range(5):
        stats = sim.step(KinematicCommand.translate((8.0, 0, 0)), monitor)
        assert stats.iterations == 1
    # improved mode pins the lower fraction of the elastomer
    state2, config2, _ = _small_world()
    Simulation(state2, config2, improved=True)
    pinned_z = state2.x[state2.pinned, 2]
    free_el = state2.elastomer_mask & ~state2.pinned
    assert state2.pinned.any()
    assert pinned_z.max() < state2.x[free_el, 2].min()
    assert not state2.pinned[state2.object_mask].any()


def test_run_phase_hits_translation_target():
    state, config, _ = _small_world()
    sim = Simulation(state, config)
    monitor = sim.new_monitor()
    speed = 10.0
    target = 0.35
    sim.run_phase(KinematicCommand.translate((0, 0, -speed)), monitor,
                  target_distance=target)
    moved = np.linalg.norm(
        measure_progress(monitor, sim.state)["displacement"])
    assert target <= moved <= target + speed * config.dt + 1e-12


def test_run_phase_hits_rotation_target():
    state, config, _ = _small_world(gap=-0.2)
    sim = Simulation(state, config)
    center = np.array([6.0, 6.0, 0.0])
    monitor = sim.new_monitor(rotation_center=center)
    omega = np.radians(3600.0)  # 0.36 deg per step: fast but CFL-safe
    sim.run_phase(KinematicCommand.rotate(center, omega), monitor,
                  target_angle=10.0)
    angle = measure_progress(monitor, sim.state)["rotation_angle"]
    step_deg = np.degrees(omega) * config.dt
    assert 10.0 <= abs(angle) <= 10.0 + step_deg + 1e-9


def test_rotation_angle_unwraps_past_half_turn():
    """measure_progress accumulates the signed angle across the atan2
    branch cut instead of wrapping back to (-180, 180]."""
    gel = elastomer_block(extent=(4.0, 4.0, 1.0), counts=(9, 9, 3),
                          origin=(3.0, 3.0, 1.0))
    obj = ParticleState(np.array([[7.0, 5.0, 3.0]]), np.zeros((1, 3)),
                        np.ones(1), np.ones(1),
                        np.full(1, 1, dtype=np.uint8))
    state = merge_states(gel, obj)
    center = np.array([5.0, 5.0, 0.0])
    monitor = select_probes(state, W, rotation_center=center)
    pid = monitor.object_probe
    for theta in np.linspace(0.0, np.radians(250.0), 40):
        state.x[pid, 0] = 5.0 + 2.0 * np.cos(theta)
        state.x[pid, 1] = 5.0 + 2.0 * np.sin(theta)
        progress = measure_progress(monitor, state)
    assert progress["rotation_angle"] == pytest.approx(250.0, abs=1e-9)


def test_run_phase_step_cap_faults():
    state, config, _ = _small_world(gap=1.0)
    sim = Simulation(state, config)
    monitor = sim.new_monitor()
    with pytest.raises(SimulationFault, match="failed to reach"):
        sim.run_phase(KinematicCommand.translate((0, 0, -1.0)), monitor,
                      target_distance=5.0, max_steps=3)


def test_escape_fault_carries_particle_index():
    state, config, _ = _small_world(margin=0)
    sim = Simulation(state, config)
    monitor = sim.new_monitor()
    # drive the object sideways until its leading particle leaves the grid
    cmd = KinematicCommand.translate((3500.0, 0, 0))
    with pytest.raises(SimulationFault) as err:
        for _ in range(200):
            sim.step(cmd, monitor)
    assert err.value.particle is not None
    assert 0 <= err.value.particle < len(state)


def test_cfl_fault_on_oversized_step():
    state, config, _ = _small_world(margin=0)
    sim = Simulation(state, config)
    monitor = sim.new_monitor()
    with pytest.raises(SimulationFault, match="one grid cell"):
        for _ in range(50):
            sim.step(KinematicCommand.translate((15000.0, 0, 0)), monitor)


def test_probe_selection_lowest_then_lexicographic():
    x = np.array([
        [5.0, 5.0, 3.0],
        [4.0, 7.0, 2.0],   # lowest z, x smaller -> object probe
        [4.5, 4.0, 2.0],   # same z but larger x
        [5.0, 5.0, 2.5],
    ])
    gel = elastomer_block(extent=(4.0, 4.0, 1.0), counts=(9, 9, 3),
                          origin=(3.0, 3.0, 0.0))
    obj = ParticleState(x, np.zeros((4, 3)), np.ones(4), np.ones(4),
                        np.full(4, 1, dtype=np.uint8))
    state = merge_states(gel, obj)
    monitor = select_probes(state, W)
    assert np.allclose(state.x[monitor.object_probe], [4.0, 7.0, 2.0])
    # elastomer probe is the gel particle nearest the object probe
    el = np.flatnonzero(state.elastomer_mask)
    d = np.linalg.norm(state.x[el] - state.x[monitor.object_probe], axis=1)
    assert monitor.elastomer_probe == el[np.argmin(d)]


def test_rotation_probe_moves_off_axis():
    # all bottom particles near the axis except one: it must be chosen
    x = np.array([
        [5.0, 5.0, 2.0],       # on the rotation axis
        [5.2, 5.0, 2.0],       # within 2W of the axis
        [7.5, 5.0, 2.0],       # far: valid angle lever
        [5.0, 5.0, 3.0],
    ])
    gel = elastomer_block(extent=(4.0, 4.0, 1.0), counts=(9, 9, 3),
                          origin=(3.0, 3.0, 0.0))
    obj = ParticleState(x, np.zeros((4, 3)), np.ones(4), np.ones(4),
                        np.full(4, 1, dtype=np.uint8))
    state = merge_states(gel, obj)
    monitor = select_probes(state, W, rotation_center=np.array([5.0, 5.0, 0.0]))
    assert np.allclose(state.x[monitor.object_probe], [7.5, 5.0, 2.0])


def test_select_probes_requires_both_bodies():
    gel = elastomer_block(extent=(4.0, 4.0, 1.0), counts=(9, 9, 3),
                          origin=(3.0, 3.0, 0.0))
    with pytest.raises(ConfigurationError):
        select_probes(gel, W)


def test_kinematic_command_fields():
    t = KinematicCommand.translate((1.0, 2.0, -3.0))
    pts = np.array([[0.0, 0.0, 0.0], [9.0, 9.0, 9.0]])
    np.testing.assert_allclose(t.velocity_at(pts),
                               [[1, 2, -3], [1, 2, -3]])
    np.testing.assert_allclose(t.affine(), np.zeros((3, 3)))
    assert t.inplane_speed(np.zeros(3)) == pytest.approx(np.hypot(1, 2))

    r = KinematicCommand.rotate((1.0, 1.0, 0.0), omega_rad_s=2.0)
    v = r.velocity_at(np.array([[2.0, 1.0, 5.0]]))[0]
    np.testing.assert_allclose(v, [0.0, 2.0, 0.0], atol=1e-12)
    a = r.affine()
    np.testing.assert_allclose(a, [[0, -2, 0], [2, 0, 0], [0, 0, 0]])
    # speed grows linearly with lever arm
    far = r.inplane_speed(np.array([5.0, 1.0, 0.0]))
    assert far == pytest.approx(8.0)


def test_snapshot_round_trip(tmp_path, rng):
    n = 37
    state = ParticleState(rng.uniform(1, 7, (n, 3)), rng.normal(size=(n, 3)),
                          rng.uniform(0.5, 2, n), rng.uniform(0.1, 0.2, n),
                          (rng.random(n) < 0.3).astype(np.uint8))
    state.C = rng.normal(size=(n, 3, 3))
    state.F = np.eye(3) + 0.01 * rng.normal(size=(n, 3, 3))
    path = tmp_path / "state.mpms"
    save_snapshot(state, path)
    back = load_snapshot(path)
    for field in ("x", "v", "m", "V0", "C", "F"):
        np.testing.assert_array_equal(getattr(back, field),
                                      getattr(state, field))
    np.testing.assert_array_equal(back.body, state.body)


def test_snapshot_rejects_bad_magic_and_truncation(tmp_path):
    bad = tmp_path / "bad.mpms"
    bad.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(TacsimError, match="not an MPMS snapshot"):
        load_snapshot(bad)

    gel = elastomer_block(extent=(2.0, 2.0, 1.0), counts=(5, 5, 3),
                          origin=(1.0, 1.0, 0.0))
    path = tmp_path / "ok.mpms"
    save_snapshot(gel, path)
    blob = path.read_bytes()
    trunc = tmp_path / "trunc.mpms"
    trunc.write_bytes(blob[:-7])
    with pytest.raises(TacsimError, match="truncated"):
        load_snapshot(trunc)


def test_improved_slide_tracks_commanded_speed():
    """Once converged, the surface under the object moves with it: the
    elastomer probe velocity approaches the object velocity."""
    state, config, _ = _small_world(gap=-0.2)
    sim = Simulation(state, config)
    monitor = sim.new_monitor()
    cmd = KinematicCommand.translate((8.0, 0, 0))
    last = None
    for _ in range(30):
        last = sim.step(cmd, monitor)
    if last.converged:
        rel = np.linalg.norm(last.v_elastomer - last.v_object)
        assert rel <= config.rest_threshold * np.linalg.norm(last.v_object)

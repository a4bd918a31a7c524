"""Scenario config parsing, trajectory expansion, placement, CLI exit codes."""
import json

import numpy as np
import pytest

from tacsim.errors import ConfigurationError
from tacsim.scenario.cli import main
from tacsim.scenario.config import parse_scenario, resolve_config_text
from tacsim.scenario.pipeline import (_local_bottom, build_world,
                                      place_indenter, run_pipeline)
from tacsim.scenario.trajectory import (DEFAULT_SPEEDS, Run, TrajectoryPhase,
                                        count_captures, expand_preset,
                                        expand_scenario)
from tacsim.shapes import Pose, sdf_eval, shape_spec
from tacsim.surface import DepthMap, save_depth
from tacsim.render.scene import load_png, save_png


def _write(tmp_path, text, name="scenario.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


MINIMAL = """
[scenario]
name = demo
[shape]
kind = sphere
[trajectory]
phase1 = press 1.0 capture
"""


# ---------------------------------------------------------------- expansion

def test_slip_preset_cardinality():
    runs = expand_preset("slip")
    assert count_captures(runs) == 48
    assert len(runs) == 8  # 4 shapes x 2 directions
    labels = {r.shape_label for r in runs}
    assert "sphere_left" in labels and "dot_in_right" in labels
    first = runs[0]
    assert first.phases[0].kind == "press"
    assert first.phases[0].magnitude == 0.5
    assert [p.label for p in first.phases] == \
        ["0mm", "1mm", "2mm", "3mm", "4mm", "5mm"]
    assert all(p.capture for p in first.phases)


def test_rotation_preset_cardinality():
    runs = expand_preset("rotation")
    assert count_captures(runs) == 60
    assert len(runs) == 6  # 3 shapes x 2 senses
    assert not any(r.shape.kind == "sphere" for r in runs)
    senses = {r.phases[1].heading for r in runs}
    assert senses == {-1.0, 1.0}
    assert [p.label for p in runs[0].phases][1:] == \
        [f"{a}deg" for a in range(5, 50, 5)]


def test_press_preset_cardinality():
    runs = expand_preset("press")
    assert count_captures(runs) == 2079
    assert len(runs) == 7 * 3 * 9  # shapes x size scales x 3x3 grid
    assert len(runs[0].phases) == 11  # dwell + ten 1 mm increments
    scaled = [r for r in runs if r.shape_label == "sphere_s075_r0c0"]
    assert len(scaled) == 1
    assert scaled[0].shape.dimensions["radius"] == pytest.approx(3.0)
    assert scaled[0].pose.translation[:2] == (-3.0, -3.0)


def test_expand_preset_unknown():
    with pytest.raises(ConfigurationError, match="press"):
        expand_preset("squeeze")


def test_expand_preset_speed_override():
    runs = expand_preset("slip", {"press": 10.0})
    assert runs[0].phases[0].speed == 10.0
    assert runs[0].phases[1].speed == DEFAULT_SPEEDS["slide"]


def test_phase_validation():
    with pytest.raises(ConfigurationError):
        TrajectoryPhase("twist", 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        TrajectoryPhase("press", -1.0, 1.0)
    with pytest.raises(ConfigurationError):
        TrajectoryPhase("slide", 1.0, 0.0)


# ------------------------------------------------------------------- parsing

def test_minimal_scenario_parses(tmp_path):
    cfg = parse_scenario(_write(tmp_path, MINIMAL))
    assert cfg.name == "demo"
    assert cfg.shape.kind == "sphere"
    assert cfg.trajectory_preset is None
    assert len(cfg.phases) == 1
    assert cfg.phases[0].speed == DEFAULT_SPEEDS["press"]
    runs = expand_scenario(cfg)
    assert len(runs) == 1 and count_captures(runs) == 1


def test_scenario_preset_materializes(tmp_path):
    cfg = parse_scenario(_write(tmp_path, """
[scenario]
preset = gelsight-press-sphere
"""))
    assert cfg.name == "press-sphere"
    assert cfg.shape.kind == "sphere"
    assert cfg.profile == "gelsight-desk"
    assert [p.kind for p in cfg.phases] == ["press"]
    assert cfg.phases[0].capture


def test_scenario_preset_overridable(tmp_path):
    cfg = parse_scenario(_write(tmp_path, """
[scenario]
preset = gelsight-press-sphere
profile = slip-sensor-desk
[shape]
kind = cylinder
"""))
    assert cfg.profile == "slip-sensor-desk"
    assert cfg.shape.kind == "cylinder"


def test_grid_preset_rejects_shape_section(tmp_path):
    path = _write(tmp_path, """
[scenario]
preset = slip
[shape]
kind = sphere
""")
    with pytest.raises(ConfigurationError, match="does not take"):
        parse_scenario(path)


def test_unknown_key_diagnostic_names_everything(tmp_path):
    path = _write(tmp_path, MINIMAL + "\n[render]\nbogus = 1\n")
    with pytest.raises(ConfigurationError) as err:
        parse_scenario(path)
    message = str(err.value)
    assert "scenario.ini" in message
    assert "[render]" in message
    assert "bogus" in message


def test_unknown_profile_lists_available(tmp_path):
    path = _write(tmp_path, MINIMAL.replace(
        "[shape]", "profile = nope\n[shape]"))
    with pytest.raises(ConfigurationError, match="gelsight"):
        parse_scenario(path)


def test_unknown_preset_lists_available(tmp_path):
    path = _write(tmp_path, "[scenario]\npreset = wat\n")
    with pytest.raises(ConfigurationError, match="slip"):
        parse_scenario(path)


def test_shape_dimension_keys_checked(tmp_path):
    cfg = parse_scenario(_write(tmp_path, MINIMAL.replace(
        "kind = sphere", "kind = sphere\nradius = 2.5")))
    assert cfg.shape.dimensions["radius"] == 2.5
    with pytest.raises(ConfigurationError, match="height"):
        parse_scenario(_write(tmp_path, MINIMAL.replace(
            "kind = sphere", "kind = sphere\nheight = 2"), "bad.ini"))
    with pytest.raises(ConfigurationError, match="without a"):
        parse_scenario(_write(tmp_path, MINIMAL.replace(
            "kind = sphere", "radius = 2.5"), "nokind.ini"))


def test_numeric_validation(tmp_path):
    bad_speed = MINIMAL + "\n[simulation]\npress_speed = 0\n"
    with pytest.raises(ConfigurationError, match="press_speed"):
        parse_scenario(_write(tmp_path, bad_speed))
    bad_settle = MINIMAL + "\n[simulation]\nsettle_time = -1\n"
    with pytest.raises(ConfigurationError, match="settle_time"):
        parse_scenario(_write(tmp_path, bad_settle, "b.ini"))
    bad_bool = MINIMAL + "\n[simulation]\nimproved = maybe\n"
    with pytest.raises(ConfigurationError, match="boolean"):
        parse_scenario(_write(tmp_path, bad_bool, "c.ini"))


def test_phase_order_and_auto_labels(tmp_path):
    cfg = parse_scenario(_write(tmp_path, """
[scenario]
name = multi
[shape]
kind = sphere
[trajectory]
phase1 = press 1.0
phase2 = slide 2.0 heading=90 capture
phase3 = press 0.5 capture label=extra
"""))
    assert [p.kind for p in cfg.phases] == ["press", "slide", "press"]
    run = expand_scenario(cfg)[0]
    assert [p.label for p in run.phases] == ["1mm", "2mm", "extra"]
    assert run.phases[1].heading == 90.0


def test_trajectory_without_capture_rejected(tmp_path):
    cfg = parse_scenario(_write(tmp_path, MINIMAL.replace(
        "press 1.0 capture", "press 1.0")))
    with pytest.raises(ConfigurationError, match="capture"):
        expand_scenario(cfg)


def test_resolved_text_stable(tmp_path):
    path = _write(tmp_path, MINIMAL)
    a = resolve_config_text(parse_scenario(path))
    b = resolve_config_text(parse_scenario(path))
    assert a == b
    other = parse_scenario(_write(tmp_path, MINIMAL.replace(
        "name = demo", "name = demo\nseed = 7"), "other.ini"))
    assert resolve_config_text(other) != a


# ------------------------------------------------------------------ placement

def test_local_bottom_oracles():
    spacing = 0.2
    assert _local_bottom(shape_spec("sphere"), spacing) == \
        pytest.approx(-4.0, abs=1e-9)
    assert _local_bottom(shape_spec("torus"), spacing) == \
        pytest.approx(-1.0, abs=1e-9)
    # extruded disc booleans carry a 0.5 mm rounding that inflates the SDF
    assert _local_bottom(shape_spec("dot_in"), spacing) == \
        pytest.approx(-3.5, abs=1e-9)
    assert _local_bottom(shape_spec("cylinder"), spacing) == \
        pytest.approx(-3.0, abs=1e-9)


def test_place_indenter_clearance_exact():
    world = build_world("desk", {})
    shape = shape_spec("sphere")
    run = Run(preset="x", shape_label="sphere", shape=shape,
              pose=Pose(translation=(2.0, -1.0, 0.0)), phases=())
    clearance = 0.4
    cloud, center = place_indenter(run, world, clearance)
    np.testing.assert_allclose(center, world.center + (2.0, -1.0))
    # lowest SDF point of the placed sphere sits exactly clearance above
    # the gel: center z minus radius
    center_z = cloud.x[:, 2].mean()
    assert center_z - 4.0 == pytest.approx(world.top_z + clearance, abs=1e-6)
    # no sampled particle dips below the analytic bottom
    assert cloud.x[:, 2].min() >= world.top_z + clearance - 1e-9
    sd = sdf_eval(shape, cloud.x - [center[0], center[1], center_z])
    assert sd.max() <= 1e-9  # all particles inside the shape


# ----------------------------------------------------------- dry-run manifest

def test_dry_run_manifest(tmp_path):
    path = _write(tmp_path, MINIMAL.replace(
        "name = demo", f"name = demo\noutput_dir = {tmp_path}/out"))
    cfg = parse_scenario(path)
    manifest = run_pipeline(cfg, dry_run=True)
    assert manifest["captures"] == 1
    assert manifest["runs"] == 1
    assert len(manifest["config_hash"]) == 64
    files = manifest["files"]
    assert set(files) == {"demo/sphere/00_1mm.dpth", "demo/sphere/00_1mm.obj",
                          "demo/sphere/00_1mm.png"}
    assert all(v is None for v in files.values())
    on_disk = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert on_disk["config_hash"] == manifest["config_hash"]
    # the hash covers the resolved config, so a reparse agrees
    again = run_pipeline(parse_scenario(path), dry_run=True)
    assert again["config_hash"] == manifest["config_hash"]


def test_dry_run_grid_counts(tmp_path):
    path = _write(tmp_path, f"""
[scenario]
preset = slip
output_dir = {tmp_path}/out
""")
    cfg = parse_scenario(path)
    manifest = run_pipeline(cfg, dry_run=True, with_images=False)
    assert manifest["captures"] == 48
    assert len(manifest["files"]) == 48
    assert all(f.endswith(".dpth") for f in manifest["files"])


def test_dry_run_renderer_both_names_phong_variant(tmp_path):
    path = _write(tmp_path, MINIMAL.replace(
        "name = demo",
        f"name = demo\nrenderer = both\noutput_dir = {tmp_path}/out"))
    manifest = run_pipeline(parse_scenario(path), dry_run=True)
    assert "demo/sphere/00_1mm_phong.png" in manifest["files"]
    assert len(manifest["files"]) == 4


# ------------------------------------------------------------------------ CLI

def test_cli_dry_run_exit_zero(tmp_path, capsys):
    path = _write(tmp_path, MINIMAL.replace(
        "name = demo", f"name = demo\noutput_dir = {tmp_path}/out"))
    assert main(["simulate", str(path), "--dry-run"]) == 0
    assert (tmp_path / "out" / "manifest.json").exists()
    assert "1 captures" in capsys.readouterr().out


def test_cli_out_override_keeps_config_hash(tmp_path):
    path = _write(tmp_path, MINIMAL.replace(
        "name = demo", f"name = demo\noutput_dir = {tmp_path}/out"))
    assert main(["simulate", str(path), "--dry-run",
                 "--out", str(tmp_path / "other")]) == 0
    a = json.loads((tmp_path / "other" / "manifest.json").read_text())
    assert main(["simulate", str(path), "--dry-run"]) == 0
    b = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert a["config_hash"] == b["config_hash"]


def test_cli_validation_error_exit_one(tmp_path, capsys):
    bad = _write(tmp_path, MINIMAL + "\n[render]\nbogus = 1\n")
    assert main(["simulate", str(bad), "--dry-run"]) == 1
    assert "error:" in capsys.readouterr().err
    assert main(["simulate", str(tmp_path / "missing.ini")]) == 1


def test_cli_simulation_fault_exit_two(tmp_path, capsys):
    # dt of one second: the first 20 mm/s press step exceeds one grid cell
    path = _write(tmp_path, MINIMAL.replace(
        "name = demo", f"name = demo\noutput_dir = {tmp_path}/out")
        + "\n[simulation]\ndt = 1.0\n")
    assert main(["simulate", str(path)]) == 2
    assert "simulation fault:" in capsys.readouterr().err
    assert (tmp_path / "out" / "manifest.json").exists()


def test_cli_render_depth_file(tmp_path, rng):
    values = np.zeros((24, 24))
    values[8:16, 8:16] = 0.4
    depth_path = tmp_path / "press.dpth"
    save_depth(DepthMap(values, pixel_pitch=0.15), depth_path)
    out = tmp_path / "press.png"
    assert main(["render", str(depth_path), "--profile", "slip-sensor-desk",
                 "--spp", "1", "--seed", "3"]) == 0
    image = load_png(out)
    assert image.shape == (120, 120, 3)
    assert image.max() > 0
    phong_out = tmp_path / "phong.png"
    assert main(["render", str(depth_path), "--profile", "slip-sensor-desk",
                 "--phong", "--out", str(phong_out)]) == 0
    assert load_png(phong_out).shape == (120, 120, 3)


def test_cli_render_missing_file_exit_three(tmp_path, capsys):
    assert main(["render", str(tmp_path / "absent.dpth")]) == 3
    assert "i/o error:" in capsys.readouterr().err


def test_cli_compare_trees(tmp_path, rng, capsys):
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    for sub in ("run", ):
        (dir_a / sub).mkdir(parents=True)
        (dir_b / sub).mkdir(parents=True)
    shared = rng.integers(0, 256, size=(48, 64, 3), dtype=np.uint8)
    save_png(shared, dir_a / "run" / "cap.png")
    save_png(shared, dir_b / "run" / "cap.png")
    save_png(shared, dir_a / "run" / "only_a.png")  # unmatched: skipped
    report = tmp_path / "report.csv"
    assert main(["compare", str(dir_a), str(dir_b),
                 "--out", str(report)]) == 0
    lines = report.read_text().strip().split("\n")
    assert lines[0] == "case,offset_x,offset_y,mse,psnr_db,ssim"
    assert lines[1].startswith("run/cap.png,0,0,0.0,inf,")
    assert len(lines) == 3  # header, one pair, summary
    assert "1 pairs" in capsys.readouterr().out


def test_cli_compare_no_matches_exit_one(tmp_path, rng):
    dir_a, dir_b = tmp_path / "a", tmp_path / "b"
    dir_a.mkdir()
    dir_b.mkdir()
    save_png(rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8),
             dir_a / "x.png")
    assert main(["compare", str(dir_a), str(dir_b)]) == 1

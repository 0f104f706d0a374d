import numpy as np
import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sensorattn import cli, export
from sensorattn.head import GroundTruth, parse_predictions
from sensorattn.tensor import Tensor, read_tsr1, write_tsr1
from sensorattn.verify import FIXTURE_ROOT

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def test_constant_map_is_mid_gray(tmp_path):
    path = export.export_attention(Tensor(np.full((3, 4), 0.37)), tmp_path / "flat.pgm")
    assert path.read_bytes().startswith(b"P5\n4 3\n255\n")
    np.testing.assert_array_equal(export.read_pgm(path), np.full((3, 4), 128, np.uint8))


def test_pgm_is_min_max_scaled(tmp_path):
    path = export.export_attention(Tensor([[0.0, 0.5], [1.0, 0.25]]), tmp_path / "a.pgm")
    np.testing.assert_array_equal(export.read_pgm(path), [[0, 128], [255, 64]])


def test_csv_layout(tmp_path):
    path = export.export_attention(Tensor([[1.0, 2.0], [3.0, 4.0]]), tmp_path / "a.csv")
    assert path.read_text() == "1,2\n3,4\n"
    assert export.csv_text(Tensor([0.5, -2.0])) == "0.5,-2\n"


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)), elements=finite))
def test_csv_parses_back_exactly(values):
    text = export.csv_text(Tensor(values))
    back = np.array([[float(v) for v in line.split(",")] for line in text.splitlines()])
    np.testing.assert_array_equal(back, values)


@given(arrays(np.float64, st.lists(st.integers(1, 3), min_size=0, max_size=3).map(tuple), elements=finite))
def test_tsr1_round_trip_is_bit_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("tsr1") / "m.tsr1"
    export.export_attention(Tensor(values), path)
    back = read_tsr1(path)
    assert back.shape == values.shape
    assert back.data.tobytes() == np.asarray(values, dtype=np.float64).tobytes()


def test_unknown_format_and_unwritable_path(tmp_path):
    with pytest.raises(ValueError):
        export.export_attention(Tensor([[1.0]]), tmp_path / "a.png")
    with pytest.raises(OSError):
        export.export_attention(Tensor([[1.0]]), tmp_path / "missing" / "a.csv")


def test_higher_rank_maps_flatten_to_rows(tmp_path):
    path = export.export_attention(Tensor(np.arange(12.0).reshape(2, 2, 3)), tmp_path / "a.pgm")
    assert export.read_pgm(path).shape == (4, 3)


def test_evaluate_dump_on_exact_predictions():
    boxes = np.array([[1.0, 2.0, 0.0, 1.0, 1.0, 2.0, 0.0, 1.0, 0.0, 0.0], [-3.0, 1.0, 0.0, 2.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0]])
    text = "# class score x y z w h l sin cos vx vy\n" + "".join(
        f"{lab} 0.9 " + " ".join(repr(float(v)) for v in b) + "\n" for lab, b in zip((1, 0), boxes[::-1])
    )
    m = cli.evaluate_dump(text, GroundTruth(boxes, [0, 1]))
    assert m == {"matched": 2.0, "center_error": 0.0, "bev_iou": 1.0, "label_accuracy": 1.0}


def run_cli(*args):
    return cli.main([str(a) for a in args])


def test_run_writes_deterministic_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("run", "--seed", 3, "--out", a) == 0
    assert run_cli("run", "--seed", 3, "--out", b) == 0
    dump = (a / "predictions.txt").read_bytes()
    assert dump == (b / "predictions.txt").read_bytes()
    assert len(parse_predictions(dump.decode())) == 16
    for f in sorted((a / "attention").iterdir()):
        assert f.read_bytes() == (b / "attention" / f.name).read_bytes()
    assert set(yaml.safe_load((a / "losses.yaml").read_text())) == {"cls", "reg_l1", "reg_iou", "total"}
    assert yaml.safe_load((a / "config.yaml").read_text())["seed"] == 3
    assert run_cli("run", "--seed", 4, "--out", tmp_path / "c") == 0
    assert (tmp_path / "c" / "predictions.txt").read_bytes() != dump


def test_run_mode_controls_dumps(tmp_path):
    assert run_cli("run", "--mode", "lidar_camera", "--out", tmp_path) == 0
    names = [p.name for p in (tmp_path / "attention").iterdir()]
    assert names and not any("radar" in n for n in names)
    assert any("lidar" in n for n in names)


def test_eval_scores_a_dump(tmp_path, capsys):
    assert run_cli("run", "--out", tmp_path) == 0
    capsys.readouterr()
    assert run_cli("eval", "--out", tmp_path) == 0
    assert "matched=3.000000" in capsys.readouterr().out


def test_config_file_is_honoured(tmp_path):
    cfg = tmp_path / "scene.yaml"
    cfg.write_text("n_queries: 6\nn_boxes: 1\n")
    assert run_cli("run", "--config", cfg, "--out", tmp_path / "o") == 0
    assert len(parse_predictions((tmp_path / "o" / "predictions.txt").read_text())) == 6


def test_configuration_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("n_queries: 0\n")
    assert run_cli("run", "--config", bad, "--out", tmp_path) == 2
    assert "n_queries" in capsys.readouterr().err
    assert run_cli("run", "--config", tmp_path / "absent.yaml") == 2
    assert run_cli("eval", "--out", tmp_path / "empty") == 2
    with pytest.raises(SystemExit) as exc:
        run_cli("run", "--mode", "sonar")
    assert exc.value.code == 2


def test_overfit_verb_passes_and_fails_by_target(tmp_path, capsys):
    assert run_cli("overfit", "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert out.count("PASS overfit") == 2
    assert (tmp_path / "overfit_lidar_camera.csv").read_text().startswith("step,total\n0,")
    assert run_cli("overfit", "--mode", "radar_camera", "--steps", 1, "--out", tmp_path) == 1
    assert "FAIL overfit radar_camera" in capsys.readouterr().out


def test_verify_verb_quick(tmp_path, capsys):
    assert run_cli("verify", "--seeds", 2, "--trials", 1) == 0
    assert "checks passed" in capsys.readouterr().out


def test_verify_fails_on_corrupted_fixture(tmp_path):
    assert run_cli("export-fixtures", "--out", tmp_path) == 0
    case = sorted((tmp_path / "v1").iterdir())[0]
    expected = case / "expected.tsr1"
    t = read_tsr1(expected)
    write_tsr1(Tensor(t.data + 1.0), expected)
    assert run_cli("verify", "--seeds", 1, "--trials", 1, "--fixtures", tmp_path) == 1


def test_export_fixtures_matches_the_shipped_set(tmp_path):
    assert run_cli("export-fixtures", "--out", tmp_path) == 0
    shipped = sorted(p.relative_to(FIXTURE_ROOT) for p in FIXTURE_ROOT.rglob("*") if p.is_file())
    fresh = sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*") if p.is_file())
    assert shipped == fresh
    for rel in shipped:
        assert (FIXTURE_ROOT / rel).read_bytes() == (tmp_path / rel).read_bytes()

import json

import numpy as np
import pytest

from maskforge.cli import main
from maskforge.masks import load_mask, save_mask
from maskforge.samples import write_sample_set

from conftest import make_disk, make_square


@pytest.fixture(scope="module")
def sample_dirs(tmp_path_factory):
    return write_sample_set(tmp_path_factory.mktemp("cli_samples"))


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert "maskforge 0.1.0" in out and "config-schema 1" in out


def test_invert_round_trip_byte_identical(tmp_path):
    src = tmp_path / "a.png"
    save_mask(make_disk(10), src)
    assert main(["invert", "--in", str(src), "--out", str(tmp_path / "b.png")]) == 0
    assert main(["invert", "--in", str(tmp_path / "b.png"), "--out", str(tmp_path / "c.png")]) == 0
    assert src.read_bytes() == (tmp_path / "c.png").read_bytes()


def test_unknown_subcommand_exit_1():
    assert main(["frobnicate"]) == 1


def test_missing_required_flag_exit_1():
    assert main(["invert", "--in", "x.png"]) == 1


def test_runtime_error_exit_2(tmp_path):
    assert main(["invert", "--in", str(tmp_path / "missing.png"),
                 "--out", str(tmp_path / "o.png")]) == 2


def test_json_errors_anywhere(tmp_path, capsys):
    code = main(["invert", "--in", str(tmp_path / "nope.png"),
                 "--out", str(tmp_path / "o.png"), "--json-errors"])
    assert code == 2
    err = capsys.readouterr().err.strip()
    doc = json.loads(err)
    assert doc["exit_code"] == 2 and "nope.png" in doc["error"]


def test_topology_json(tmp_path, capsys):
    p = tmp_path / "m.png"
    save_mask(make_disk(8), p)
    assert main(["topology", "--in", str(p)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc == {"components": 1, "holes": 0, "euler": 1}


def test_canny_and_graph(tmp_path):
    p = tmp_path / "m.png"
    save_mask(make_square(20), p)
    assert main(["canny", "--in", str(p), "--out", str(tmp_path / "e.png")]) == 0
    assert load_mask(tmp_path / "e.png").sum() > 0
    assert main(["graph", "--in", str(p), "--out", str(tmp_path / "g.json"),
                 "--n-v", "8", "--corner-snap"]) == 0
    doc = json.loads((tmp_path / "g.json").read_text())
    assert doc["contour_count"] == 1
    weights = [e["weight"] for e in doc["contours"][0]["edges"]]
    assert sum(weights) == pytest.approx(1.0, abs=1e-9)


def test_edit_rigid_identity(tmp_path):
    p = tmp_path / "m.png"
    save_mask(make_disk(9), p)
    assert main(["edit-rigid", "--in", str(p), "--out", str(tmp_path / "o.png")]) == 0
    assert (tmp_path / "o.png").read_bytes() == p.read_bytes()


def test_edit_nonrigid_single_mask(tmp_path):
    p = tmp_path / "m.png"
    save_mask(make_disk(13), p)
    assert main(["edit-nonrigid", "--in", str(p), "--prompt", "bulge", "--out-dir",
                 str(tmp_path / "o"), "--variants", "1", "--steps", "3", "--seed", "5"]) == 0
    assert (tmp_path / "o" / "m_n00.png").is_file()
    assert (tmp_path / "o" / "loss_trace.csv").is_file()


def test_evaluate_perfect_predictions(sample_dirs, tmp_path, capsys):
    masks_dir, _ = sample_dirs
    out = tmp_path / "rep.json"
    assert main(["evaluate", "--pred-dir", str(masks_dir), "--gt-dir", str(masks_dir),
                 "--out", str(out), "--csv", str(tmp_path / "rep.csv")]) == 0
    doc = json.loads(out.read_text())
    mean = doc["mean"]
    assert mean["max_f1"] == pytest.approx(1.0, abs=1e-9)
    assert mean["weighted_fbeta"] == pytest.approx(1.0, abs=1e-9)
    assert mean["mae"] == pytest.approx(0.0, abs=1e-9)
    assert mean["s_measure"] == pytest.approx(1.0, abs=1e-7)
    assert mean["e_measure"] == pytest.approx(1.0, abs=1e-9)
    assert (tmp_path / "rep.csv").read_text().startswith("name,max_f1")


def test_report_markdown(sample_dirs, tmp_path, capsys):
    masks_dir, _ = sample_dirs
    out = tmp_path / "rep.json"
    main(["evaluate", "--pred-dir", str(masks_dir), "--gt-dir", str(masks_dir),
          "--out", str(out)])
    capsys.readouterr()
    assert main(["report", "--metrics", str(out), "--markdown"]) == 0
    text = capsys.readouterr().out
    assert text.startswith("| image |")
    assert "**mean**" in text


def test_report_distribution(tmp_path, capsys):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    a.write_text("1,0\n0,1\n")
    b.write_text("1,0\n0,1\n")
    assert main(["report", "--dist-a", str(a), "--dist-b", str(b)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["cosine_similarity"] == pytest.approx(1.0)


def test_stub_generate(tmp_path):
    p = tmp_path / "m.png"
    save_mask(make_disk(10), p)
    assert main(["stub-generate", "--mask", str(p), "--prompt", "x",
                 "--out", str(tmp_path / "img.png"), "--seed", "2"]) == 0
    from PIL import Image
    img = np.asarray(Image.open(tmp_path / "img.png"))
    assert img.shape == (64, 64, 3)


def test_pipeline_command(sample_dirs, tmp_path, capsys):
    masks_dir, prompts_dir = sample_dirs
    cfg = {
        "source_mask_dir": str(masks_dir), "prompt_dir": str(prompts_dir),
        "out_dir": str(tmp_path / "pout"), "seed": 3,
        "rigid_variants": 1, "nonrigid_variants": 0, "backend": "stub",
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main(["pipeline", "--config", str(cfg_path)]) == 0
    doc = json.loads((tmp_path / "pout" / "manifest.json").read_text())
    assert len(doc["entries"]) == 10

import json

import numpy as np
import pytest
from click.testing import CliRunner

from finercam.cli import main
from finercam.colormap import overlay_rgb
from finercam.tensor_store import read_tensor


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """synth -> train once; most CLI tests only read from here."""
    root = tmp_path_factory.mktemp("cli")
    runner = CliRunner()
    r = runner.invoke(main, ["synth", "--out", str(root / "bench"), "--seed", "0", "--images", "32"])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, [
        "train", "--manifest", str(root / "bench/manifest.json"), "--out", str(root / "head.json"),
        "--seed", "7", "--learning-rate", "0.01", "--epochs", "150", "--batch-size", "64",
    ])
    assert r.exit_code == 0, r.output
    return root


def test_synth_deterministic(tmp_path):
    runner = CliRunner()
    for sub in ("a", "b"):
        r = runner.invoke(main, ["synth", "--out", str(tmp_path / sub), "--seed", "3", "--images", "16"])
        assert r.exit_code == 0, r.output
    assert (tmp_path / "a/manifest.json").read_bytes() == (tmp_path / "b/manifest.json").read_bytes()


def test_train_missing_manifest_exits_2(tmp_path):
    runner = CliRunner()
    r = runner.invoke(main, ["train", "--manifest", str(tmp_path / "nope.json"), "--out", str(tmp_path / "h.json")])
    assert r.exit_code == 2
    assert "error" in (r.stderr or r.output).lower()


def test_train_seed_reproducible(workspace, tmp_path):
    runner = CliRunner()
    for sub in ("h1", "h2"):
        r = runner.invoke(main, [
            "train", "--manifest", str(workspace / "bench/manifest.json"),
            "--out", str(tmp_path / f"{sub}.json"), "--seed", "11", "--epochs", "20",
        ])
        assert r.exit_code == 0, r.output
    assert (tmp_path / "h1.weights.fct").read_bytes() == (tmp_path / "h2.weights.fct").read_bytes()
    assert (tmp_path / "h1.bias.fct").read_bytes() == (tmp_path / "h2.bias.fct").read_bytes()


def test_explain_gamma_zero_equals_baseline(workspace, tmp_path):
    runner = CliRunner()
    common = ["explain", "--manifest", str(workspace / "bench/manifest.json"),
              "--head", str(workspace / "head.json"), "--sample", "s0002"]
    r = runner.invoke(main, common + ["--refs", "auto:1", "--gamma", "0", "--out", str(tmp_path / "a.fct")])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, common + ["--refs", "none", "--out", str(tmp_path / "b.fct")])
    assert r.exit_code == 0, r.output
    assert (tmp_path / "a.fct").read_bytes() == (tmp_path / "b.fct").read_bytes()


def test_explain_auto_vs_explicit_coincide(workspace, tmp_path):
    runner = CliRunner()
    common = ["explain", "--manifest", str(workspace / "bench/manifest.json"),
              "--head", str(workspace / "head.json"), "--sample", "s0002", "--gamma", "0.6"]
    r = runner.invoke(main, common + ["--refs", "auto:1", "--out", str(tmp_path / "auto.fct")])
    assert r.exit_code == 0, r.output
    auto_ref = int(r.output.split("references=[")[1].split("]")[0])
    r = runner.invoke(main, common + ["--refs", str(auto_ref), "--out", str(tmp_path / "explicit.fct")])
    assert r.exit_code == 0, r.output
    assert (tmp_path / "auto.fct").read_bytes() == (tmp_path / "explicit.fct").read_bytes()


def test_explain_unknown_sample_exits_2(workspace, tmp_path):
    runner = CliRunner()
    r = runner.invoke(main, ["explain", "--manifest", str(workspace / "bench/manifest.json"),
                             "--head", str(workspace / "head.json"), "--sample", "missing",
                             "--out", str(tmp_path / "x.fct")])
    assert r.exit_code == 2


def test_explain_overlay_golden(workspace, tmp_path):
    """The PNG overlay decodes to exactly the documented blend of the
    normalized map over the stored image."""
    from PIL import Image

    runner = CliRunner()
    r = runner.invoke(main, ["explain", "--manifest", str(workspace / "bench/manifest.json"),
                             "--head", str(workspace / "head.json"), "--sample", "s0002",
                             "--output", "overlay_png", "--out", str(tmp_path / "o.png")])
    assert r.exit_code == 0, r.output
    r = runner.invoke(main, ["explain", "--manifest", str(workspace / "bench/manifest.json"),
                             "--head", str(workspace / "head.json"), "--sample", "s0002",
                             "--output", "normalized", "--out", str(tmp_path / "n.fct")])
    assert r.exit_code == 0, r.output
    saliency = read_tensor(tmp_path / "n.fct")
    from finercam.tensor_store import load_manifest

    manifest = load_manifest(workspace / "bench/manifest.json")
    pixels = read_tensor(manifest.image_file(manifest.sample("s0002")))
    expected = overlay_rgb(pixels, saliency, opacity=0.5)
    got = np.asarray(Image.open(tmp_path / "o.png"))
    np.testing.assert_array_equal(got, expected)


def test_eval_report_roundtrip(workspace, tmp_path):
    runner = CliRunner()
    r = runner.invoke(main, ["eval", "--manifest", str(workspace / "bench/manifest.json"),
                             "--head", str(workspace / "head.json"),
                             "--backend", str(workspace / "bench/backend.json"),
                             "--no-deletion", "--out", str(tmp_path / "report.json")])
    assert r.exit_code == 0, r.output
    doc = json.loads((tmp_path / "report.json").read_text())
    assert set(doc) == {"config", "aggregate", "per_image"}
    from finercam.metrics import EvalReport

    agg = EvalReport.from_dict(doc["aggregate"])
    assert agg.aggregate
    assert agg.to_dict() == doc["aggregate"]


def test_eval_empty_split_fails(workspace, tmp_path):
    runner = CliRunner()
    # rewrite the manifest with train-only samples
    doc = json.loads((workspace / "bench/manifest.json").read_text())
    for s in doc["samples"]:
        s["split"] = "train"
    bad = tmp_path / "all_train"
    bad.mkdir()
    (bad / "manifest.json").write_text(json.dumps(doc))
    for rel in ("images", "features"):
        (bad / rel).symlink_to(workspace / "bench" / rel)
    r = runner.invoke(main, ["eval", "--manifest", str(bad / "manifest.json"),
                             "--head", str(workspace / "head.json"),
                             "--backend", str(workspace / "bench/backend.json"),
                             "--no-deletion", "--out", str(tmp_path / "r.json")])
    assert r.exit_code == 2
    assert not (tmp_path / "r.json").exists()


def test_eval_curves_csv(workspace, tmp_path):
    runner = CliRunner()
    r = runner.invoke(main, ["eval", "--manifest", str(workspace / "bench/manifest.json"),
                             "--head", str(workspace / "head.json"),
                             "--backend", str(workspace / "bench/backend.json"),
                             "--deletion-step", "0.5", "--out", str(tmp_path / "r.json"),
                             "--curves-dir", str(tmp_path / "curves")])
    assert r.exit_code == 0, r.output
    csvs = list((tmp_path / "curves").glob("*.csv"))
    assert csvs
    header = csvs[0].read_text().splitlines()[0]
    assert header == "fraction,p_target,p_reference"


def test_similarity_fixtures(tmp_path):
    import numpy as np

    from finercam.head import ClassifierHead, save_head

    runner = CliRunner()
    head = ClassifierHead(weights=np.array([[1, 0], [1, 0], [0, 1]], dtype=np.float32),
                          class_names=["a", "b", "c"])
    save_head(tmp_path / "h.json", head)
    r = runner.invoke(main, ["similarity", "--head", str(tmp_path / "h.json")])
    assert r.exit_code == 0, r.output
    lines = r.output.strip().splitlines()
    assert lines[0] == "rank,mean,std"
    first = [float(v) for v in lines[1].split(",")]
    second = [float(v) for v in lines[2].split(",")]
    assert first[1] == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert second[1] == pytest.approx(0.0, abs=1e-12)

import json

import pytest

from edfa_twin import cli, io, nn

TINY = """
seed = 4
[campaign]
n_fixed = 20
n_random = 60
n_goalpost = 30
[split]
test_count = 20
[pretrain]
samples_per_gain_setting = 32
epochs_per_layer = 3
[finetune]
labeled_count = 48
epochs = 5
[homo]
epochs = 5
[hetero]
epochs = 5
shots_per_gain_setting = 4
"""


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "tiny.toml").write_text(TINY)
    return d


@pytest.fixture(scope="module")
def datasets(workdir):
    cfg = workdir / "tiny.toml"
    assert cli.main(["synth", "--config", str(cfg), "--kind", "Booster", "--out", str(workdir / "b")]) == 0
    assert cli.main(["synth", "--config", str(cfg), "--kind", "ILA", "--ila-raw", "--out", str(workdir / "i")]) == 0
    assert cli.main(["train", "--config", str(cfg), "--data", str(workdir / "b"), "--out", str(workdir / "b.json")]) == 0
    return workdir


def test_synth_full_campaign(tmp_path, capsys):
    code, summary, _ = run(capsys, "synth", "--kind", "Booster", "--seed", "1", "--out", tmp_path / "d")
    assert code == 0 and summary["n_records"] == 9504
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert manifest["n_records"] == 9504 and manifest["config_hash"]
    assert len(io.ingest(tmp_path / "d" / "records.csv")) == 9504


def test_train_eval_deterministic(datasets, capsys):
    d, cfg = datasets, datasets / "tiny.toml"
    reports = []
    for tag in ("x", "y"):
        assert run(capsys, "train", "--config", cfg, "--data", d / "b", "--out", d / f"{tag}.json")[0] == 0
        code, summary, _ = run(capsys, "eval", "--config", cfg, "--ckpt", d / f"{tag}.json", "--data", d / "b",
                               "--report", d / f"{tag}.report.json", "--cdf", d / f"{tag}.cdf.csv",
                               "--svg", d / f"{tag}.svg")
        assert code == 0
        reports.append(d / f"{tag}.report.json")
    assert (d / "x.json").read_bytes() == (d / "y.json").read_bytes()
    a, b = (json.loads(p.read_text()) for p in reports)
    a["meta"].pop("checkpoint"), b["meta"].pop("checkpoint")
    assert a == b
    assert (d / "x.cdf.csv").read_bytes() == (d / "y.cdf.csv").read_bytes()
    assert json.loads((d / "x.cdf.csv.config.json").read_text())["config_hash"] == a["meta"]["config_hash"]


def test_artifacts_carry_schema_and_hash(datasets):
    ckpt = json.loads((datasets / "b.json").read_text())
    assert ckpt["schema_version"] and ckpt["metadata"]["config_hash"]
    side = json.loads((datasets / "b.json.config.json").read_text())
    assert side["config_hash"] == ckpt["metadata"]["config_hash"]
    assert ckpt["coral_reference"] is not None


def test_transfer_modes(datasets, capsys):
    d, cfg = datasets, datasets / "tiny.toml"
    code, s, _ = run(capsys, "transfer", "--config", cfg, "--source", d / "b.json", "--target-data", d / "i",
                     "--mode", "hetero", "--out", d / "t.json")
    assert code == 0 and s["test_mae_db"] >= 0
    manifest = json.loads((d / "t.json.manifest.json").read_text())
    assert manifest["mode"] == "hetero" and manifest["source_checkpoint"].endswith("b.json")
    code, s, _ = run(capsys, "transfer", "--config", cfg, "--source", d / "b.json", "--target-data", d / "b",
                     "--mode", "homo", "--out", d / "h.json")
    assert code == 0


def test_missing_reference_exit(datasets, capsys):
    net = nn.load_checkpoint(datasets / "b.json")
    net.coral_reference = None
    nn.save_checkpoint(net, datasets / "noref.json")
    code, out, err = run(capsys, "transfer", "--config", datasets / "tiny.toml", "--source", datasets / "noref.json",
                         "--target-data", datasets / "i", "--mode", "hetero", "--out", datasets / "z.json")
    assert code == 2 and out is None
    assert json.loads(err.strip().splitlines()[-1])["error"] == "missing_reference"
    assert not (datasets / "z.json").exists()


def test_sweep_and_matrix(datasets, capsys):
    d, cfg = datasets, datasets / "tiny.toml"
    code, s, _ = run(capsys, "sweep", "--config", cfg, "--source", d / "b.json", "--target-data", d / "i",
                     "--shots", "2,4", "--seeds", "0,1", "--epochs", "2", "--out", d / "sweep.csv")
    assert code == 0 and set(s["mean_mae_db"]) == {"2", "4"}
    assert len((d / "sweep.csv").read_text().splitlines()) == 5
    code, s, _ = run(capsys, "matrix", "--config", cfg, "--devices", f"{d / 'b'},{d / 'i'}", "--mode", "hetero",
                     "--epochs", "2", "--out", d / "m.json")
    assert code == 0 and len(s["mae_db"]) == 2


def test_ingest(datasets, capsys, tmp_path):
    code, s, _ = run(capsys, "ingest", "--in", datasets / "i" / "ila_raw.csv", "--ila-normalize",
                     "--out", tmp_path / "ila.jsonl")
    assert code == 0 and s["n_rejected"] == 0 and s["n_records"] == 330
    assert len(io.ingest(tmp_path / "ila.jsonl")) == 330


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[pretrain]\nnope = 1\n")
    code, _, err = run(capsys, "synth", "--config", bad, "--kind", "ILA", "--out", tmp_path / "o")
    assert code == 2 and json.loads(err)["error"] == "config_error"
    code, _, err = run(capsys, "eval", "--ckpt", tmp_path / "none.json", "--data", tmp_path, "--report", tmp_path / "r")
    assert code == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["synth"])
    assert e.value.code == 2

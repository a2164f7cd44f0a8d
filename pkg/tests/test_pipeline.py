import csv
import json

import numpy as np
import pytest

from tgcn_fault import pipeline
from tgcn_fault.detection import to_csv
from tgcn_fault.errors import ConfigError, DataError
from tgcn_fault.ingest import features_to_csv, generate_synthetic
from tgcn_fault.pipeline import PRESETS, RunConfig, StageError, build_config, coerce


@pytest.mark.parametrize("field, value", [
    ("window", 0),
    ("hidden", -3),
    ("layers", 0),
    ("batch_size", 0),
    ("epochs", 0),
    ("train_frac", 1.0),
    ("val_frac", 0.0),
    ("lr", 0.0),
    ("m", -1.0),
    ("seed", -1),
    ("clip_norm", 0.0),
    ("synth_onset", 1.5),
    ("synth_gain", -0.1),
    ("source", "kafka"),
    ("synth_fault_nodes", [9]),
    ("preset", "turbine"),
])
def test_config_rejects_out_of_range_fields(field, value):
    with pytest.raises(ConfigError) as info:
        build_config({field: value})
    assert info.value.field == field
    assert field in str(info.value)


def test_config_rejects_unknown_field_and_bad_graph():
    with pytest.raises(ConfigError, match="colour"):
        build_config({"colour": "red"})
    with pytest.raises(ConfigError):
        build_config({"graph": {"adjacency": [[0, 1], [0, 0]]}})
    with pytest.raises(ConfigError, match="input"):
        build_config({"source": "csv"})


def test_bearing_preset_echo():
    cfg = build_config({"preset": "bearing", "input": "somewhere"})
    echo = cfg.echo()
    assert {k: echo[k] for k in ("window", "batch_size", "hidden", "layers", "lr", "epochs")} == {
        "window": 4, "batch_size": 32, "hidden": 128, "layers": 2, "lr": 0.001, "epochs": 50,
    }
    assert (echo["train_frac"], echo["val_frac"]) == (0.4, 0.2)
    assert "out_dir" not in echo


def test_fanjet_preset():
    cfg = build_config({"preset": "fanjet", "input": "x.csv"})
    assert (cfg.window, cfg.batch_size, cfg.hidden, cfg.train_frac, cfg.val_frac) == (4, 4, 256, 0.6, 0.3)
    assert cfg.graph == "pair2"


def test_overrides_beat_file_and_preset():
    cfg = build_config({"preset": "synthetic", "hidden": 8}, {"hidden": 12, "epochs": None})
    assert cfg.hidden == 12 and cfg.epochs == PRESETS["synthetic"]["epochs"]


def test_coerce():
    assert coerce("hidden", "16") == 16
    assert coerce("lr", "0.01") == 0.01
    assert coerce("clip_norm", "none") is None
    assert coerce("synth_fault_nodes", "0,2") == [0, 2]
    assert coerce("graph", '{"preset": "pair2"}') == {"preset": "pair2"}
    assert coerce("graph", "path4") == "path4"
    with pytest.raises(ConfigError, match="hidden"):
        coerce("hidden", "lots")
    with pytest.raises(ConfigError):
        coerce("nonsense", "1")


def test_config_file_errors(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        pipeline.load_config_file(p)
    p.write_text("{oops")
    with pytest.raises(ConfigError, match="invalid JSON"):
        pipeline.load_config_file(p)


def _flag_counts(path):
    counts = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            counts[row["node"]] = counts.get(row["node"], 0) + int(row["flag"])
    return counts


def test_run_writes_every_artifact(synthetic_run):
    art = synthetic_run
    for p in (art.checkpoint, art.loss_csv, art.anomaly_csv, art.severity_csv, art.summary_json):
        assert p.is_file() and p.stat().st_size > 0
    assert len(art.plots) == 4
    summary = json.loads(art.summary_json.read_text())
    assert summary["nodes"] == ["node0", "node1", "node2", "node3"]
    assert set(summary["threshold"]) == set(summary["nodes"])
    assert summary["config"]["seed"] == 7
    assert summary["training"]["epochs"] == 50


def test_summary_fault_counts_match_anomaly_csv(synthetic_run):
    summary = json.loads(synthetic_run.summary_json.read_text())
    assert _flag_counts(synthetic_run.anomaly_csv) == summary["fault_count"]


def test_summary_final_severity_matches_csv(synthetic_run):
    summary = json.loads(synthetic_run.summary_json.read_text())
    last = {}
    with open(synthetic_run.severity_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            last[row["node"]] = float(row["index"])
    assert {n: v["index"] for n, v in summary["severity_final"].items()} == last


def test_detect_from_checkpoint_reproduces_run(synthetic_run):
    syn = generate_synthetic(seed=7)
    ds, det = pipeline.detect_from_checkpoint(synthetic_run.checkpoint, syn.features)
    assert to_csv(det.test, ds.labels) == synthetic_run.anomaly_csv.read_text()


def test_csv_source_runs(tmp_path):
    syn = generate_synthetic(seed=1, n=2, length=200, graph=pipeline.graph_from_spec("pair2"))
    data = tmp_path / "fan.csv"
    data.write_text(features_to_csv(syn.features, ["vibration_rms", "rpm"]))
    cfg = build_config({"preset": "fanjet", "input": str(data), "hidden": 4, "epochs": 2,
                        "out_dir": str(tmp_path / "out")})
    art = pipeline.run_pipeline(cfg)
    assert art.summary["nodes"] == ["vibration_rms", "rpm"]
    assert "onset" not in art.summary


def test_ims_source_runs(tmp_path, ims_dir):
    # five snapshots are too few to train on; the data stage fails cleanly
    cfg = build_config({"preset": "bearing", "input": str(ims_dir), "hidden": 4, "epochs": 1,
                        "out_dir": str(tmp_path)})
    with pytest.raises(StageError) as info:
        pipeline.run_pipeline(cfg)
    assert info.value.stage == "train" and info.value.exit_code == 2


def test_stage_error_names_stage_and_keeps_outputs(tmp_path):
    cfg = build_config({"source": "csv", "input": str(tmp_path / "missing.csv"),
                        "out_dir": str(tmp_path / "out")})
    with pytest.raises(StageError, match="acquire") as info:
        pipeline.run_pipeline(cfg)
    assert isinstance(info.value.cause, DataError)
    assert (tmp_path / "out").is_dir()


def test_dataset_for_checks_channels(synthetic_run):
    model = pipeline.load_checkpoint(synthetic_run.checkpoint)
    with pytest.raises(DataError):
        pipeline.dataset_for(model, np.zeros((3, 100)))


def test_runconfig_defaults_validate():
    assert RunConfig().validate().echo()["graph"] == "path4"

import json
import os
import subprocess
import sys
from dataclasses import fields, replace

import pytest

from aigts.cli import COMMANDS, main
from aigts.config import RunConfig, load_config, parse_config_text

SMALL = """\
input_dir = data
out_dir = out
synth_users = 6
synth_days = 5
knn_k = 3,5
rf_n_trees = 10
rf_max_depth = none
gb_n_trees = 10
gb_learning_rate = 0.1
gb_max_depth = 2
general_outer_k = 3
general_inner_k = 2
general_trials = 1
individual_min_rows = 20
cluster_k_max = 8
"""

REPORTS = (
    "segments.csv",
    "ig_curves.csv",
    "k_selection.csv",
    "activities.csv",
    "prototypes.csv",
    "features.csv",
    "codebook.json",
    "feature_scores.csv",
    "correlations.csv",
    "correlation_extremes.csv",
    "general_report.csv",
    "group_report.csv",
    "individual_report.csv",
    "importance.csv",
    "run_manifest.json",
)


def run_pipeline(workdir):
    workdir.mkdir(parents=True, exist_ok=True)
    cfg = workdir / "run.cfg"
    cfg.write_text(SMALL)
    for stage in COMMANDS:
        assert main([stage, "--config", str(cfg)]) == 0, stage
    return workdir / "out"


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    return run_pipeline(tmp_path_factory.mktemp("a"))


def test_all_stages_write_outputs(pipeline):
    for name in REPORTS:
        assert (pipeline / name).exists(), name
    for stage in COMMANDS[1:]:
        man = json.loads((pipeline / "manifests" / f"{stage}.json").read_text())
        assert man["stage"] == stage and len(man["config_hash"]) == 64
        assert man["outputs"]
    head = (pipeline / "segments.csv").read_text().splitlines()[0]
    assert head.startswith("user_id,day,seg_index,start_bin,end_bin,start_ts,end_ts")
    head = (pipeline / "activities.csv").read_text().splitlines()[0].split(",")
    assert {"user_id", "day", "start_ts", "end_ts", "label", "duration_min"} <= set(head)
    rows = (pipeline / "general_report.csv").read_text().splitlines()
    assert len(rows) == 1 + 30
    assert any(p.name.endswith("_rf.json") for p in (pipeline / "models").iterdir())


def test_rerun_is_byte_identical(pipeline, tmp_path):
    other = run_pipeline(tmp_path / "b")
    for name in REPORTS:
        assert (pipeline / name).read_bytes() == (other / name).read_bytes(), name
    for stage in COMMANDS[1:]:
        a = (pipeline / "manifests" / f"{stage}.json").read_bytes()
        assert a == (other / "manifests" / f"{stage}.json").read_bytes()


def test_missing_prerequisite(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(SMALL)
    assert main(["train", "--config", str(cfg)]) == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "missing_prerequisite" and "featurize" in err["message"]


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["ingest", "--config", str(cfg)]) == 1
    assert "colour" in json.loads(capsys.readouterr().err)["message"]


def test_welch_and_fscore_print_json(capsys):
    assert main(["welch", "1,2,3,4,5", "2,3,4,5,6"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["t"] == pytest.approx(-1.0) and out["df"] == pytest.approx(8.0)
    assert main(["fscore", "1,2,3,4", "2,4,6,8"]) == 0
    assert json.loads(capsys.readouterr().out)["F"] == 1e12
    assert main(["welch", "1,1", "2,2"]) == 1


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "aigts", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()


# -- config ------------------------------------------------------------------


def test_config_parsing_and_defaults():
    cfg = parse_config_text("rf_max_depth = none, 8\nseed = 3\ngroup_by_user = yes\n# comment\n")
    assert cfg.rf_max_depth == (None, 8) and cfg.seed == 3 and cfg.group_by_user
    d = RunConfig()
    assert d.window_minutes == 90 and d.corr_lookback_minutes == 60 and d.bin_width_s == 30
    assert (d.general_outer_k, d.general_inner_k, d.general_trials) == (5, 3, 3)
    assert (d.group_outer_k, d.group_inner_k, d.group_trials) == (3, 2, 1)
    assert d.individual_min_rows == 50 and d.cluster_k_max == 20 and d.f_thresholds == (5.0, 10.0)
    assert d.importance_top_general == 15 and d.importance_top_group == 5
    assert len(d.grid("rf")) == 8 and len(d.grid("gb")) == 8 and len(d.grid("knn")) == 4
    assert d.named_seed("cv") == d.seed and replace(d, cv_seed=9).named_seed("cv") == 9
    for bad in ("models = svm\n", "seg_solver = magic\n", "seed = x\n", "early_work_start = 7\n"):
        with pytest.raises(ValueError):
            parse_config_text(bad)


def _render(v):
    if isinstance(v, list):
        return ",".join(_render(x) for x in v)
    return "none" if v is None else str(v)


def test_written_defaults_keep_hash():
    d = RunConfig()
    text = "".join(f"{k} = {_render(v)}\n" for k, v in d.to_dict().items())
    assert parse_config_text(text).hash() == d.hash()


@pytest.mark.parametrize("name", [f.name for f in fields(RunConfig) if f.name != "base_dir"])
def test_hash_changes_with_every_field(name):
    d = RunConfig()
    v = getattr(d, name)
    if isinstance(v, bool):
        new = not v
    elif isinstance(v, (int, float)):
        new = v + 1
    elif v is None:
        new = 5
    elif isinstance(v, tuple):
        new = v[:-1] if len(v) > 1 else v + v
    else:
        new = v + "x"
    assert replace(d, **{name: new}).hash() != d.hash()
    assert replace(d, base_dir="/elsewhere").hash() == d.hash()


def test_relative_paths_resolve_against_config_dir(tmp_path):
    cfg = tmp_path / "sub" / "run.cfg"
    cfg.parent.mkdir()
    cfg.write_text("input_dir = data\n")
    c = load_config(cfg)
    assert c.path(c.input_dir) == os.path.join(str(cfg.parent), "data")

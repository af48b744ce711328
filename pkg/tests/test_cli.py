import csv
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from intentraj.cli import main
from intentraj.data import load_corpus
from intentraj.plots import read_svg_data


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One synth -> train -> run-filter -> eval -> plot pipeline, shared."""
    root = tmp_path_factory.mktemp("pipeline")
    synth_cfg = {
        "bounds": [-5, -5, 5, 5],
        "num_regions": 8,
        "side": 1.5,
        "num_trajectories": 10,
        "speed_range": [0.08, 0.12],
        "heading_noise_std": 0.02,
        "position_noise_std": 0.005,
        "curvature_amplitude": 0.1,
        "intention_switch_probability": 0.0,
        "rng_seed": 5,
    }
    (root / "synth.json").write_text(json.dumps(synth_cfg))
    train_cfg = {"epochs": 2, "d_e": 6, "d_h": 6, "learning_rate": 1e-3, "rng_seed": 1}
    (root / "train.json").write_text(json.dumps(train_cfg))

    assert main(["synth", "--config", str(root / "synth.json"),
                 "--out", str(root / "corpus")]) == 0
    assert main(["train", "--corpus", str(root / "corpus/manifest.json"),
                 "--config", str(root / "train.json"), "--out", str(root / "bank")]) == 0
    assert main(["run-filter", "--corpus", str(root / "corpus/manifest.json"),
                 "--map", str(root / "corpus/map.json"), "--out", str(root / "runs"),
                 "--tau", "10", "--num-particles", "40", "--seed", "3"]) == 0
    assert main(["eval", "--runs", str(root / "runs"),
                 "--corpus", str(root / "corpus/manifest.json"),
                 "--map", str(root / "corpus/map.json"),
                 "--nti", "1,3", "--out", str(root / "reports")]) == 0
    assert main(["plot", "--run", str(root / "runs/synth-00000.jsonl"),
                 "--map", str(root / "corpus/map.json"),
                 "--corpus", str(root / "corpus/manifest.json"),
                 "--out", str(root / "figs")]) == 0
    return root


class TestSynth:
    def test_corpus_files_exist_and_load(self, workspace):
        records = load_corpus(workspace / "corpus/manifest.json")
        assert len(records) == 10
        assert all(r.goal_region_id is not None for r in records)

    def test_rerun_is_byte_identical(self, workspace, tmp_path):
        assert main(["synth", "--config", str(workspace / "synth.json"),
                     "--out", str(tmp_path / "again")]) == 0
        for name in ("map.json", "trajectories.csv", "manifest.json"):
            assert (tmp_path / "again" / name).read_bytes() == \
                (workspace / "corpus" / name).read_bytes()

    def test_invalid_config_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"bounds": [0, 0, 1, 1], "num_regions": 99,
                                   "side": 1.5, "num_trajectories": 1}))
        assert main(["synth", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


class TestTrain:
    def test_checkpoints_reload_bit_exactly(self, workspace):
        from intentraj.warp import load_bank, load_checkpoint

        bank = load_bank(workspace / "bank/bank.json")
        bank.require_complete()
        for pct in (0, 25, 50, 75):
            reloaded, meta = load_checkpoint(workspace / f"bank/warp_pct{pct:02d}.json")
            assert meta["percent_observed"] == pct
            for (name, a), (_, b) in zip(bank.models[pct].named_params(),
                                         reloaded.named_params()):
                np.testing.assert_array_equal(a, b, err_msg=name)

    def test_loss_curves_written(self, workspace):
        for pct in (0, 25, 50, 75):
            rows = list(csv.DictReader(open(workspace / f"bank/loss_pct{pct:02d}.csv")))
            assert len(rows) == 2
            assert float(rows[-1]["loss"]) > 0

    def test_all_unlabeled_exits_2(self, tmp_path):
        csv_path = tmp_path / "traj.csv"
        csv_path.write_text("ped_id,frame,x,y\nu,0,0.0,0.0\nu,1,0.5,0.0\nu,2,1.0,0.0\n")
        manifest = {"format": "intentraj-corpus", "version": 1, "frame_interval": 0.1,
                    "files": ["traj.csv"], "config": None,
                    "records": [{"ped_id": "u", "goal_region_id": None,
                                 "switch_frame": None, "num_frames": 3}]}
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        assert main(["train", "--corpus", str(tmp_path / "manifest.json"),
                     "--out", str(tmp_path / "bank")]) == 2


class TestRunFilter:
    def test_logs_exist_with_headers(self, workspace):
        logs = sorted((workspace / "runs").glob("*.jsonl"))
        assert len(logs) == 10
        header = json.loads(logs[0].read_text().splitlines()[0])
        assert header["type"] == "header"
        assert header["config"]["tau"] == 10.0

    def test_same_seed_byte_identical(self, workspace, tmp_path):
        assert main(["run-filter", "--corpus", str(workspace / "corpus/manifest.json"),
                     "--map", str(workspace / "corpus/map.json"),
                     "--out", str(tmp_path / "rerun"),
                     "--tau", "10", "--num-particles", "40", "--seed", "3"]) == 0
        for log in sorted((workspace / "runs").glob("*.jsonl")):
            assert (tmp_path / "rerun" / log.name).read_bytes() == log.read_bytes()

    def test_missing_bank_exits_2(self, workspace, tmp_path):
        assert main(["run-filter", "--corpus", str(workspace / "corpus/manifest.json"),
                     "--map", str(workspace / "corpus/map.json"),
                     "--model", str(tmp_path / "nonexistent"),
                     "--out", str(tmp_path / "r")]) == 2

    def test_wlstm_model_accepted(self, workspace, tmp_path):
        # single shortest record corpus to keep the recurrent path quick
        records = load_corpus(workspace / "corpus/manifest.json")
        shortest = min(records, key=lambda r: len(r.trajectory))
        from intentraj.data import save_corpus

        save_corpus([shortest], tmp_path / "mini")
        assert main(["run-filter", "--corpus", str(tmp_path / "mini/manifest.json"),
                     "--map", str(workspace / "corpus/map.json"),
                     "--model", str(workspace / "bank/bank.json"),
                     "--out", str(tmp_path / "wruns"),
                     "--num-particles", "10", "--seed", "1"]) == 0
        header = json.loads(
            (tmp_path / "wruns" / f"{shortest.ped_id}.jsonl").read_text().splitlines()[0]
        )
        assert header["model"] == "wlstm"


class TestEval:
    def test_report_files(self, workspace):
        report_csv = (workspace / "reports/report.csv").read_text().splitlines()
        assert report_csv[0].startswith("model,tau,p_mutation,nti,iea,nll")
        assert len(report_csv) == 3  # header + nti 1 and 3
        data = json.loads((workspace / "reports/report_ilm_tau10_pm0.01_nti1.json").read_text())
        assert data["num_trajectories"] == 10
        assert len(data["rows"]) == 10
        assert data["min_aoe"] <= data["mean_aoe"] + 1e-12

    def test_min_aoe_non_increasing_in_nti(self, workspace):
        r1 = json.loads((workspace / "reports/report_ilm_tau10_pm0.01_nti1.json").read_text())
        r3 = json.loads((workspace / "reports/report_ilm_tau10_pm0.01_nti3.json").read_text())
        assert r3["min_aoe"] <= r1["min_aoe"] + 1e-12

    def test_summary_figure_has_data(self, workspace):
        payload = read_svg_data(workspace / "reports/summary.svg")
        assert payload["kind"] == "report_summary"
        assert len(payload["reports"]) == 2

    def test_corpus_mismatch_exits_2(self, workspace, tmp_path):
        records = load_corpus(workspace / "corpus/manifest.json")
        from intentraj.data import save_corpus

        save_corpus(records[:5], tmp_path / "partial")
        assert main(["eval", "--runs", str(workspace / "runs"),
                     "--corpus", str(tmp_path / "partial/manifest.json"),
                     "--map", str(workspace / "corpus/map.json"),
                     "--out", str(tmp_path / "rep")]) == 2


class TestPlot:
    def test_svgs_well_formed(self, workspace):
        for svg in sorted((workspace / "figs").glob("*.svg")):
            ET.parse(svg)  # raises on malformed XML

    def test_belief_timeline_rows_sum_to_one(self, workspace):
        payload = read_svg_data(workspace / "figs/belief_timeline.svg")
        assert payload["kind"] == "belief_timeline"
        belief = np.asarray(payload["belief"])
        np.testing.assert_allclose(belief.sum(axis=1), 1.0, atol=1e-9)

    def test_fan_has_belief_payload(self, workspace):
        fans = sorted((workspace / "figs").glob("fan_frame*.svg"))
        assert fans
        payload = read_svg_data(fans[0])
        assert abs(sum(payload["belief"]) - 1.0) < 1e-9

    def test_empty_log_exits_2(self, workspace, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text(json.dumps({"type": "header", "ped_id": "x"}) + "\n")
        assert main(["plot", "--run", str(empty),
                     "--map", str(workspace / "corpus/map.json"),
                     "--out", str(tmp_path / "f")]) == 2

    def test_rerender_is_byte_identical(self, workspace, tmp_path):
        args = ["plot", "--run", str(workspace / "runs/synth-00001.jsonl"),
                "--map", str(workspace / "corpus/map.json")]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        for svg in sorted((tmp_path / "a").glob("*.svg")):
            assert svg.read_bytes() == (tmp_path / "b" / svg.name).read_bytes()


class TestEnvDefaultOut:
    def test_out_falls_back_to_env(self, workspace, tmp_path, monkeypatch):
        monkeypatch.setenv("INTENTRAJ_OUT", str(tmp_path / "envout"))
        assert main(["synth", "--config", str(workspace / "synth.json")]) == 0
        assert (tmp_path / "envout/manifest.json").exists()

    def test_no_out_anywhere_exits_2(self, workspace, monkeypatch):
        monkeypatch.delenv("INTENTRAJ_OUT", raising=False)
        assert main(["synth", "--config", str(workspace / "synth.json")]) == 2

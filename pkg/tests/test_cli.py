"""CLI subcommands, exit codes, and the full command-line workflow."""
import json

import pytest

from followshift.cli import exit_code_for, main
from followshift.errors import DataError, InvariantError, UsageError


def write_snapshot_file(path, account, ts, ids):
    lines = [f"account={account} ts={ts}"] + [str(i) for i in ids]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestExitCodes:
    def test_mapping(self):
        assert exit_code_for(UsageError("x")) == 1
        assert exit_code_for(DataError("x")) == 2
        assert exit_code_for(InvariantError("x")) == 3
        assert exit_code_for(RuntimeError("x")) == 3

    def test_unknown_command_is_usage_error(self, capsys):
        assert main(["frobnicate"]) == 1

    def test_missing_required_flag_is_usage_error(self):
        assert main(["scoretest", "--x1", "1"]) == 1

    def test_missing_file_is_data_error(self, tmp_path):
        assert main(["diff", str(tmp_path / "a.snap"), str(tmp_path / "b.snap")]) == 2

    def test_degenerate_scoretest_is_data_error(self):
        assert main(["scoretest", "--x1", "0", "--n1", "5", "--x2", "0", "--n2", "5"]) == 2


class TestScoretest:
    def test_csv_output(self, capsys):
        rc = main(["scoretest", "--x1", "600", "--n1", "1000", "--x2", "500", "--n2", "1000"])
        assert rc == 0
        out = capsys.readouterr().out
        lines = out.strip().split("\n")
        assert lines[0] == "z,p_two_sided,pooled_p,n1,x1,n2,x2"
        assert float(lines[1].split(",")[0]) == pytest.approx(4.4947, abs=1e-4)

    def test_json_output(self, capsys):
        rc = main(["--format", "json", "scoretest", "--x1", "6", "--n1", "10", "--x2", "5", "--n2", "10"])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n1"] == 10

    def test_markdown_output(self, capsys):
        rc = main(["scoretest", "--x1", "6", "--n1", "10", "--x2", "5", "--n2", "10", "--format", "markdown"])
        assert rc == 0
        assert capsys.readouterr().out.startswith("| z |")


class TestSnapshotCommands:
    def test_ingest_reports_duplicates(self, tmp_path, capsys):
        snap = tmp_path / "raw.snap"
        write_snapshot_file(snap, "alpha", "2021-03-01T00:00:00Z", [1, 2, 2, 3])
        rc = main(["ingest", str(snap)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "alpha,2021-03-01T00:00:00Z,3,1" in out

    def test_ingest_writes_normalized_copy(self, tmp_path, capsys):
        snap = tmp_path / "raw.snap"
        write_snapshot_file(snap, "alpha", "2021-03-01T00:00:00Z", [3, 1, 2])
        out_dir = tmp_path / "out"
        rc = main(["ingest", str(snap), "--out-dir", str(out_dir)])
        assert rc == 0
        normalized = list(out_dir.glob("alpha_*.snap"))
        assert len(normalized) == 1
        body = normalized[0].read_text().strip().split("\n")
        assert body[1:] == ["1", "2", "3"]

    def test_diff_csv(self, tmp_path, capsys):
        a, b = tmp_path / "a.snap", tmp_path / "b.snap"
        write_snapshot_file(a, "alpha", "2021-03-01T00:00:00Z", [1, 2, 3])
        write_snapshot_file(b, "alpha", "2021-03-08T00:00:00Z", [2, 3, 4, 5])
        rc = main(["diff", str(a), str(b)])
        assert rc == 0
        out = capsys.readouterr().out.strip().split("\n")
        assert out[1].endswith("2,1,2")  # new=2, unfollowed=1, retained=2

    def test_diff_write_sets(self, tmp_path, capsys):
        a, b = tmp_path / "a.snap", tmp_path / "b.snap"
        write_snapshot_file(a, "alpha", "2021-03-01T00:00:00Z", [1, 2, 3])
        write_snapshot_file(b, "alpha", "2021-03-08T00:00:00Z", [2, 3, 4])
        out_dir = tmp_path / "sets"
        rc = main(["diff", str(a), str(b), "--write-sets", "--out-dir", str(out_dir)])
        assert rc == 0
        new = (out_dir / "alpha_new_followers.snap").read_text().strip().split("\n")
        assert new[1:] == ["4"]

    def test_transitions(self, tmp_path, capsys):
        before, after = tmp_path / "a.snap", tmp_path / "b.snap"
        write_snapshot_file(before, "alpha", "2021-03-01T00:00:00Z", [1, 2, 3, 4])
        write_snapshot_file(after, "alpha", "2021-03-08T00:00:00Z", [3, 4])
        dest = tmp_path / "d.snap"
        write_snapshot_file(dest, "gamma", "2021-03-08T00:00:00Z", [2, 9])
        rc = main(["transitions", "--before", str(before), "--after", str(after), str(dest)])
        assert rc == 0
        out = capsys.readouterr().out.strip().split("\n")
        assert out[0] == "destination,fraction,numerator,denominator"
        assert out[1] == "gamma,0.5,1,2"


class TestLabelCommand:
    def test_default_lexicon(self, tmp_path, capsys):
        profiles = tmp_path / "profiles.csv"
        profiles.write_text(
            "user_id,display_name\n1,James Smith\n2,emily_r\n3,Zorblax\n",
            encoding="utf-8",
        )
        rc = main(["label", "--profiles", str(profiles)])
        assert rc == 0
        out = capsys.readouterr().out.strip().split("\n")
        assert out == ["user_id,label", "1,male", "2,female", "3,unknown"]

    def test_custom_lexicon_requires_both_files(self, tmp_path):
        profiles = tmp_path / "profiles.csv"
        profiles.write_text("user_id,display_name\n1,Bob\n", encoding="utf-8")
        male = tmp_path / "male.txt"
        male.write_text("bob\n", encoding="utf-8")
        assert main(["label", "--profiles", str(profiles), "--lexicon-male", str(male)]) == 1


class TestFullWorkflow:
    def test_synth_prep_train_eval_classify_report(self, tmp_path, capsys):
        ds_dir = tmp_path / "ds"
        work = tmp_path / "work"
        rc = main(
            [
                "--seed", "5", "--out-dir", str(ds_dir), "synth",
                "--retained", "20", "--new-before", "30", "--new-after", "30",
                "--unfollow-before", "10", "--unfollow-after", "10",
                "--female-new-before", "0.4", "--female-new-after", "0.7",
            ]
        )
        assert rc == 0
        assert (ds_dir / "analysis.cfg").exists()

        rc = main(["label", "--profiles", str(ds_dir / "profiles.csv"), "--out-dir", str(work)])
        assert rc == 0
        rc = main(
            ["prep", "--manifest", str(ds_dir / "manifest.csv"), "--threshold", "1", "--out-dir", str(work)]
        )
        assert rc == 0
        assert (work / "faces.npz").exists()
        assert (work / "prep_drops.csv").read_text().startswith("user_id,reason")

        rc = main(
            [
                "train", "--faces", str(work / "faces.npz"), "--labels", str(work / "labels.csv"),
                "--epochs", "1", "--seed", "5", "--out-dir", str(work),
            ]
        )
        assert rc == 0
        history = (work / "history.csv").read_text().strip().split("\n")
        assert history[0] == "epoch,loss,train_acc,val_acc"
        assert len(history) == 2

        capsys.readouterr()
        rc = main(
            [
                "eval", "--model", str(work / "model.cnnw"), "--faces", str(work / "faces.npz"),
                "--labels", str(work / "labels.csv"), "--positive-class", "female",
            ]
        )
        assert rc == 0
        eval_out = capsys.readouterr().out
        assert eval_out.startswith("positive_class,precision,recall,f1,accuracy,n")
        accuracy = float(eval_out.strip().split("\n")[1].split(",")[4])
        assert accuracy == 1.0  # noise-free synthetic corpus

        rc = main(
            ["classify", "--model", str(work / "model.cnnw"), "--faces", str(work / "faces.npz"),
             "--out-dir", str(work)]
        )
        assert rc == 0
        predictions = (work / "predictions.csv").read_text().strip().split("\n")
        assert predictions[0] == "user_id,label,probability"
        assert len(predictions) == 81  # 2*30 + 2*10 cohort members

        rc = main(
            ["--format", "json", "report", "--config", str(ds_dir / "analysis.cfg"),
             "--set", f"model={work / 'model.cnnw'}", "--out-dir", str(work)]
        )
        assert rc == 0
        payload = json.loads((work / "report.json").read_text())
        assert payload["new_followers"]["before"]["female"] == round(0.4 * 30)
        assert payload["new_followers"]["after"]["female"] == round(0.7 * 30)

        rc = main(
            ["report", "--config", str(ds_dir / "analysis.cfg"),
             "--set", f"model={work / 'model.cnnw'}", "--format", "markdown"]
        )
        assert rc == 0

    def test_report_without_config_is_usage_error(self):
        assert main(["report"]) == 1

    def test_prep_requires_out_dir(self, tmp_path):
        manifest = tmp_path / "m.csv"
        manifest.write_text("user_id,image_path,byte_size\n", encoding="utf-8")
        assert main(["prep", "--manifest", str(manifest)]) == 1

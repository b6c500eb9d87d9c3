"""End-to-end analysis, drop-ledger reconciliation, and report rendering."""
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pytest

from followshift.cnn import CnnModel, TrainConfig, init_model, save_model, train
from followshift.errors import DataError, UsageError
from followshift.imageprep import DropReason, prepare_faces, read_manifest, write_manifest
from followshift.pipeline import (
    AnalysisConfig,
    EmptyCohort,
    PipelineStageError,
    SyntheticSpec,
    assemble_training_set,
    gen_synthetic,
    load_account_series,
    read_kv_config,
    read_truth,
    render_csv,
    render_markdown,
    render_report,
    report_from_csv,
    report_to_json,
    run_analysis,
)
from followshift.pipeline.analysis import CohortComparison, CohortWindowStats, CompositionReport
from followshift.stats import ProportionSample, score_test

GOLDEN = Path(__file__).parent / "data" / "golden"


def constant_female_model() -> CnnModel:
    model = CnnModel(
        conv1_w=np.zeros((32, 3, 5, 5)),
        conv1_b=np.zeros(32),
        conv2_w=np.zeros((64, 32, 5, 5)),
        conv2_b=np.zeros(64),
        fc_w=np.zeros((2, 1024)),
        fc_b=np.zeros(2),
    )
    model.fc_b[1] = 5.0
    return model


def fixture_report() -> CompositionReport:
    def stats(size, classified, female, no_image=0, no_face=0, below_size=0, below_floor=0):
        return CohortWindowStats(
            cohort_size=size,
            classified=classified,
            female=female,
            drops={
                DropReason.NO_IMAGE: no_image,
                DropReason.NO_FACE: no_face,
                DropReason.BELOW_SIZE_THRESHOLD: below_size,
                DropReason.BELOW_PROBABILITY_FLOOR: below_floor,
            },
        )

    nb = stats(60, 50, 20, no_image=4, no_face=3, below_size=2, below_floor=1)
    na = stats(55, 48, 30, no_image=3, no_face=2, below_size=1, below_floor=1)
    ub = stats(12, 10, 10, no_image=1, no_face=1)
    ua = stats(9, 8, 8, no_image=1)
    t = lambda m, d: datetime(2021, m, d, tzinfo=timezone.utc)
    return CompositionReport(
        account="alpha",
        before_start=t(3, 1),
        event_time=t(3, 8),
        after_end=t(3, 15),
        snapshot_times=(t(3, 1), t(3, 8), t(3, 15)),
        new_followers=CohortComparison(
            "new_followers", nb, na, score_test(ProportionSample(30, 48), ProportionSample(20, 50))
        ),
        unfollowers=CohortComparison(
            "unfollowers",
            ub,
            ua,
            None,
            degenerate_reason="pooled proportion 1.0 has zero variance; test undefined",
        ),
        notes=(
            "female shares use successfully classified members as denominators;"
            " drops are itemized per cohort",
            "score test compares the after window against the before window:"
            " positive z means a higher female share after the event",
        ),
    )


class TestRendering:
    def test_markdown_golden(self):
        assert render_markdown(fixture_report()) == (GOLDEN / "report_small.md").read_text()

    def test_csv_golden(self):
        assert render_csv(fixture_report()) == (GOLDEN / "report_small.csv").read_text()

    def test_csv_round_trip_value_exact(self):
        report = fixture_report()
        parsed = report_from_csv(render_csv(report))
        assert parsed.account == report.account
        assert parsed.snapshot_times == report.snapshot_times
        for orig, back in zip(report.comparisons(), parsed.comparisons()):
            assert back.before == orig.before
            assert back.after == orig.after
            if orig.test is None:
                assert back.test is None
                assert back.degenerate_reason == orig.degenerate_reason
            else:
                assert back.test.z == orig.test.z
                assert back.test.p_two_sided == orig.test.p_two_sided
                assert back.test.pooled_p == orig.test.pooled_p

    def test_degenerate_rendered_na(self):
        text = render_markdown(fixture_report())
        assert "Score test (after vs before): n/a" in text

    def test_json_valid_and_complete(self):
        payload = json.loads(report_to_json(fixture_report()))
        assert payload["account"] == "alpha"
        assert payload["new_followers"]["test"]["z"] == pytest.approx(2.2274, abs=1e-4)
        assert payload["unfollowers"]["test"] is None
        assert payload["unfollowers"]["before"]["drops"]["no_image"] == 1

    def test_rendering_deterministic(self):
        report = fixture_report()
        for fmt in ("csv", "markdown", "json"):
            assert render_report(report, fmt) == render_report(report, fmt)

    def test_unknown_format_rejected(self):
        with pytest.raises(DataError):
            render_report(fixture_report(), "xml")

    def test_ledger_reconciliation_enforced(self):
        with pytest.raises(Exception):
            CohortWindowStats(
                cohort_size=10, classified=5, female=2, drops={DropReason.NO_IMAGE: 2}
            )


class TestConfig:
    def test_kv_parsing(self, tmp_path):
        cfg = tmp_path / "a.cfg"
        cfg.write_text("# comment\nkey = value\nspaced=  x  \n\n", encoding="utf-8")
        assert read_kv_config(cfg) == {"key": "value", "spaced": "x"}

    def test_kv_bad_line(self, tmp_path):
        cfg = tmp_path / "a.cfg"
        cfg.write_text("not a pair\n", encoding="utf-8")
        with pytest.raises(UsageError):
            read_kv_config(cfg)

    def test_from_file_resolves_relative_paths(self, tmp_path):
        ds = gen_synthetic(0, SyntheticSpec(new_before=5, new_after=5, unfollow_before=2, unfollow_after=2), tmp_path / "ds")
        config = AnalysisConfig.from_file(ds.config_path)
        assert config.snapshots_dir == ds.root / "snapshots"
        assert config.manifest_path == ds.root / "manifest.csv"
        assert config.image_byte_threshold == 1

    def test_overrides_win(self, tmp_path):
        ds = gen_synthetic(0, SyntheticSpec(new_before=5, new_after=5, unfollow_before=2, unfollow_after=2), tmp_path / "ds")
        config = AnalysisConfig.from_file(ds.config_path, overrides={"probability_floor": "0.75"})
        assert config.probability_floor == 0.75

    def test_boundary_order_enforced(self, tmp_path):
        t = datetime(2021, 3, 8, tzinfo=timezone.utc)
        with pytest.raises(UsageError):
            AnalysisConfig(
                account="a",
                before_start=t,
                event_time=t,
                after_end=t,
                snapshots_dir=tmp_path,
                manifest_path=tmp_path / "m.csv",
                model_path=tmp_path / "m.cnnw",
            )

    def test_floor_range_enforced(self, tmp_path):
        t = lambda d: datetime(2021, 3, d, tzinfo=timezone.utc)
        for bad in (0.4, 1.0):
            with pytest.raises(UsageError):
                AnalysisConfig(
                    account="a",
                    before_start=t(1),
                    event_time=t(2),
                    after_end=t(3),
                    snapshots_dir=tmp_path,
                    manifest_path=tmp_path / "m.csv",
                    model_path=tmp_path / "m.cnnw",
                    probability_floor=bad,
                )


def small_dataset(tmp_path, seed=1, **overrides):
    spec_kwargs = dict(
        retained=30,
        new_before=40,
        new_after=40,
        unfollow_before=15,
        unfollow_after=15,
        female_frac_new_before=0.4,
        female_frac_new_after=0.6,
        noise_level=0.0,
    )
    spec_kwargs.update(overrides)
    return gen_synthetic(seed, SyntheticSpec(**spec_kwargs), tmp_path / "ds")


class TestRunAnalysis:
    def run(self, tmp_path, model=None, ds=None, **config_overrides):
        ds = ds or small_dataset(tmp_path)
        model_path = ds.root / "model.cnnw"
        save_model(model or constant_female_model(), model_path)
        overrides = {k: str(v) for k, v in config_overrides.items()}
        config = AnalysisConfig.from_file(ds.config_path, overrides=overrides)
        return ds, run_analysis(config)

    def test_counts_and_ledger(self, tmp_path):
        ds, report = self.run(tmp_path)
        nf = report.new_followers
        assert nf.before.cohort_size == 40
        assert nf.after.cohort_size == 40
        assert nf.before.classified == 40  # constant model classifies everything
        assert nf.before.female == 40  # ... as female
        assert nf.before.dropped == 0
        assert report.unfollowers.test is None  # all-female pool is degenerate

    def test_deterministic(self, tmp_path):
        _, a = self.run(tmp_path)
        _, b = self.run(tmp_path)
        assert render_csv(a) == render_csv(b)

    def test_trained_model_recovers_planted_shift(self, tmp_path):
        corpus = gen_synthetic(
            2,
            SyntheticSpec(new_before=80, new_after=80, unfollow_before=20, unfollow_after=20),
            tmp_path / "corpus",
        )
        prep = prepare_faces(read_manifest(corpus.manifest_path), corpus.root, threshold_bytes=1)
        truth = read_truth(corpus.truth_path)
        labels = {uid: truth[uid][0] for uid in truth}
        x, y, _ = assemble_training_set(prep.user_ids, prep.tensors, labels, seed=0)
        model, _ = train(x, y, TrainConfig(epochs=1, seed=0))

        ds, report = self.run(tmp_path, model=model)
        nf = report.new_followers
        assert nf.before.female == round(0.4 * 40)
        assert nf.after.female == round(0.6 * 40)
        assert nf.test is not None and nf.test.z > 0

    def test_empty_after_cohort_structured_error(self, tmp_path):
        ds = small_dataset(tmp_path, new_after=0)
        with pytest.raises(EmptyCohort) as err:
            self.run(tmp_path, ds=ds)
        assert err.value.cohort == "new_followers"
        assert err.value.window == "after"

    def test_all_below_floor_structured_error(self, tmp_path):
        # zero model predicts exactly 0.5 everywhere; floor 0.51 rejects all
        model = constant_female_model()
        model.fc_b[...] = 0.0
        with pytest.raises(EmptyCohort) as err:
            self.run(tmp_path, model=model, probability_floor=0.51)
        assert "survived" in str(err.value)

    def test_probability_floor_drops_counted(self, tmp_path):
        # noise-free members share one tensor per gender, so an untrained
        # model emits exactly two probability values; a floor between them
        # must drop exactly one gender's members
        from followshift.cnn import predict
        from followshift.imageprep import FaceBox, RasterImage, crop_resize
        from followshift.pipeline.synth import gender_pattern
        from followshift.weaklabel import WeakLabel

        model = init_model(42)
        probs = {}
        for gender in (WeakLabel.MALE, WeakLabel.FEMALE):
            pixels = gender_pattern(28, gender).astype(np.uint8)
            tensor = crop_resize(
                RasterImage(pixels=pixels, source_byte_size=1000), FaceBox(0, 0, 28, 28)
            )
            probs[gender] = predict(model, tensor)[1]
        floor = (probs[WeakLabel.MALE] + probs[WeakLabel.FEMALE]) / 2.0
        assert floor >= 0.5
        dropped_gender = min(probs, key=probs.get)

        ds = small_dataset(tmp_path)
        truth = read_truth(ds.truth_path)
        _, report = self.run(tmp_path, ds=ds, model=model, probability_floor=floor)
        planted = {
            ("new_followers", "new_before"): None,
            ("new_followers", "new_after"): None,
            ("unfollowers", "unfollow_before"): None,
            ("unfollowers", "unfollow_after"): None,
        }
        comps = {"new_followers": report.new_followers, "unfollowers": report.unfollowers}
        for (name, cohort_key) in planted:
            expected = sum(
                1
                for _, (gender, cohort) in truth.items()
                if cohort == cohort_key and gender is dropped_gender
            )
            side = (
                comps[name].before if cohort_key.endswith("before") else comps[name].after
            )
            assert side.drops[DropReason.BELOW_PROBABILITY_FLOOR] == expected
            assert side.classified + side.dropped == side.cohort_size

    def test_no_image_and_no_face_drops(self, tmp_path):
        ds = small_dataset(tmp_path)
        entries = read_manifest(ds.manifest_path)
        removed = entries[0].user_id
        defaced = entries[1]
        entries[1] = type(defaced)(
            user_id=defaced.user_id,
            image_path=defaced.image_path,
            byte_size=defaced.byte_size,
            boxes=(),
        )
        write_manifest(entries[1:], ds.manifest_path)  # drop row 0 entirely
        _, report = self.run(tmp_path, ds=ds)
        all_drops = {}
        for comp in report.comparisons():
            for side in (comp.before, comp.after):
                for reason, count in side.drops.items():
                    all_drops[reason] = all_drops.get(reason, 0) + count
        assert all_drops[DropReason.NO_IMAGE] == 1
        assert all_drops[DropReason.NO_FACE] == 1

    def test_missing_image_file_surfaces_stage_error(self, tmp_path):
        ds = small_dataset(tmp_path)
        entries = read_manifest(ds.manifest_path)
        (ds.root / entries[0].image_path).unlink()
        model_path = ds.root / "model.cnnw"
        save_model(constant_female_model(), model_path)
        config = AnalysisConfig.from_file(ds.config_path)
        with pytest.raises(PipelineStageError) as err:
            run_analysis(config)
        assert err.value.stage == "imageprep"

    def test_monotone_z_in_planted_fraction(self, tmp_path):
        corpus = gen_synthetic(
            3,
            SyntheticSpec(new_before=80, new_after=80, unfollow_before=20, unfollow_after=20),
            tmp_path / "corpus",
        )
        prep = prepare_faces(read_manifest(corpus.manifest_path), corpus.root, threshold_bytes=1)
        truth = read_truth(corpus.truth_path)
        x, y, _ = assemble_training_set(
            prep.user_ids, prep.tensors, {uid: truth[uid][0] for uid in truth}, seed=0
        )
        model, _ = train(x, y, TrainConfig(epochs=1, seed=0))
        zs = []
        for frac in (0.45, 0.5, 0.55, 0.6):
            ds = gen_synthetic(
                7,
                SyntheticSpec(
                    retained=20,
                    new_before=60,
                    new_after=60,
                    unfollow_before=15,
                    unfollow_after=15,
                    female_frac_new_after=frac,
                    noise_level=0.0,
                ),
                tmp_path / f"ds_{frac}",
            )
            save_model(model, ds.root / "model.cnnw")
            report = run_analysis(AnalysisConfig.from_file(ds.config_path))
            assert report.new_followers.test is not None
            zs.append(report.new_followers.test.z)
        assert all(a <= b for a, b in zip(zs, zs[1:]))


class TestSeriesLoading:
    def test_filters_by_account(self, tmp_path):
        from followshift.snapshots import FollowerSnapshot, write_snapshot

        d = tmp_path / "snaps"
        d.mkdir()
        t = lambda day: datetime(2021, 3, day, tzinfo=timezone.utc)
        write_snapshot(
            FollowerSnapshot("alpha", t(1), frozenset({1, 2})), d / "a1.snap"
        )
        write_snapshot(
            FollowerSnapshot("beta", t(2), frozenset({9})), d / "b1.snap"
        )
        write_snapshot(
            FollowerSnapshot("alpha", t(3), frozenset({2, 3})), d / "a2.snap"
        )
        series = load_account_series(d, "alpha")
        assert len(series) == 2

    def test_missing_account_fails(self, tmp_path):
        d = tmp_path / "snaps"
        d.mkdir()
        with pytest.raises(DataError):
            load_account_series(d, "nobody")

import numpy as np
import pytest

from actionrc import dataset as ds
from actionrc.errors import ManifestError, UnrecoverableGapError
from actionrc.pgm import read_pgm, read_pgm_header, write_pgm

from synthdata import grid_manifest, render_video_dataset


def test_pgm_roundtrip(tmp_path):
    rng = np.random.Generator(np.random.Philox(3))
    frame = rng.random((120, 160))
    path = tmp_path / "f.pgm"
    write_pgm(path, frame)
    assert read_pgm_header(path) == (160, 120)
    back = read_pgm(path)
    assert back.shape == (120, 160)
    assert np.abs(back - frame).max() <= 0.5 / 255 + 1e-12


def test_pgm_rejects_non_p5(tmp_path):
    path = tmp_path / "f.pgm"
    path.write_bytes(b"P2\n2 2\n255\n0 1 2 3\n")
    with pytest.raises(DataError, match="not a binary PGM"):
        read_pgm(path)


class TestLoadManifest:
    def test_loads_and_sorts(self, video_dataset):
        manifest = ds.load_manifest(video_dataset)
        assert len(manifest) == 24
        keys = [r.sort_key() for r in manifest.records]
        assert keys == sorted(keys)
        by_key = manifest.by_key()
        for rec in manifest:
            if rec.action in ds.INPLACE_ACTIONS:
                assert rec.background_ref in by_key
            else:
                assert rec.background_ref is None

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestError, match="not found"):
            ds.load_manifest(tmp_path / "nope.tsv")

    def test_empty_manifest(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("# only comments\n\n")
        with pytest.raises(ManifestError, match="no records"):
            ds.load_manifest(path)

    def test_malformed_row(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("1\tboxing\ts1\n")
        with pytest.raises(ManifestError, match="line 1"):
            ds.load_manifest(path)

    def test_repetition_out_of_range(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("1\tboxing\ts1\t5\tframes/x\t-\n")
        with pytest.raises(ManifestError, match="repetition 5"):
            ds.load_manifest(path)

    def test_missing_frame_dir(self, tmp_path):
        path = tmp_path / "m.tsv"
        path.write_text("1\tboxing\ts1\t1\tframes/x\t-\n")
        with pytest.raises(ManifestError, match="does not exist"):
            ds.load_manifest(path)

    def test_wrong_frame_size(self, tmp_path):
        frame_dir = tmp_path / "frames" / "x"
        frame_dir.mkdir(parents=True)
        write_pgm(frame_dir / "00000.pgm", np.zeros((60, 80)))
        path = tmp_path / "m.tsv"
        path.write_text(f"1\tboxing\ts1\t1\t{frame_dir}\t-\n")
        with pytest.raises(ManifestError, match="frame size 80x60"):
            ds.load_manifest(path)
        manifest = ds.load_manifest(path, frame_size=None)
        assert len(manifest) == 1

    def test_duplicate_identity(self, tmp_path):
        frame_dir = tmp_path / "frames" / "x"
        frame_dir.mkdir(parents=True)
        write_pgm(frame_dir / "00000.pgm", np.zeros((120, 160)))
        path = tmp_path / "m.tsv"
        row = f"1\tboxing\ts1\t1\t{frame_dir}\t-\n"
        path.write_text(row + row)
        with pytest.raises(ManifestError, match="duplicate"):
            ds.load_manifest(path)

    def test_unresolvable_background_ref(self, tmp_path):
        frame_dir = tmp_path / "frames" / "x"
        frame_dir.mkdir(parents=True)
        write_pgm(frame_dir / "00000.pgm", np.zeros((120, 160)))
        path = tmp_path / "m.tsv"
        path.write_text(f"1\tboxing\ts1\t1\t{frame_dir}\tp01_running_s1_r1\n")
        with pytest.raises(ManifestError, match="background_ref"):
            ds.load_manifest(path)


class TestCompleteDataset:
    def test_fills_to_2400(self):
        manifest = grid_manifest(missing=9)
        assert len(manifest) == 2391
        completed = ds.complete_dataset(manifest, seed=5)
        assert len(completed) == 2400
        assert sum(r.synthetic for r in completed) == 9
        keys = {r.key for r in completed.records}
        assert len(keys) == 2400
        for scenario in ds.SCENARIOS:
            assert len(ds.scenario_subset(completed, scenario)) == 600

    def test_copies_match_cell(self):
        manifest = grid_manifest(missing=9)
        completed = ds.complete_dataset(manifest, seed=5)
        originals = manifest.by_key()
        for rec in completed.records:
            if rec.synthetic:
                assert rec.key not in originals
                # frame_dir copied from a sibling repetition of the same cell
                source = [r for r in manifest.records
                          if (r.subject, r.action, r.scenario) ==
                             (rec.subject, rec.action, rec.scenario)
                          and r.frame_dir == rec.frame_dir]
                assert source

    def test_fixed_point_and_idempotent(self):
        completed = ds.complete_dataset(grid_manifest(missing=9), seed=5)
        again = ds.complete_dataset(completed, seed=11)
        assert [r.key for r in again.records] == [r.key for r in completed.records]
        assert [r.frame_dir for r in again.records] == [r.frame_dir for r in completed.records]

    def test_deterministic(self):
        manifest = grid_manifest(missing=9)
        a = ds.complete_dataset(manifest, seed=5)
        b = ds.complete_dataset(manifest, seed=5)
        assert [(r.key, str(r.frame_dir)) for r in a.records] == \
               [(r.key, str(r.frame_dir)) for r in b.records]

    def test_unrecoverable_gap(self):
        manifest = grid_manifest(missing=0)
        records = [r for r in manifest.records
                   if not (r.subject == 3 and r.action == "running" and r.scenario == "s2")]
        with pytest.raises(UnrecoverableGapError, match="subject 3 running s2"):
            ds.complete_dataset(ds.DatasetManifest(records), seed=0)

    def test_rejects_oversized(self):
        manifest = grid_manifest(missing=0)
        extra = manifest.records + [ds.VideoRecord(1, "boxing", "s1", 1, "/x")]
        with pytest.raises(ManifestError, match="more than"):
            ds.complete_dataset(ds.DatasetManifest(extra), seed=0)


class TestScenarioSubset:
    def test_filter_semantics(self):
        completed = ds.complete_dataset(grid_manifest(), seed=0)
        s2 = ds.scenario_subset(completed, "s2")
        assert len(s2) == 600
        assert all(r.scenario == "s2" for r in s2.records)

    def test_idempotent(self):
        completed = ds.complete_dataset(grid_manifest(), seed=0)
        s1 = ds.scenario_subset(completed, "s1")
        again = ds.scenario_subset(s1, "s1")
        assert [r.key for r in again.records] == [r.key for r in s1.records]

    def test_unknown_scenario(self):
        with pytest.raises(ManifestError):
            ds.scenario_subset(grid_manifest(), "s9")


class TestKFold:
    @pytest.fixture(scope="class")
    def s1(self):
        return ds.scenario_subset(ds.complete_dataset(grid_manifest(), seed=0), "s1")

    def test_fold_sizes(self, s1):
        splits = ds.kfold_splits(s1, 4, seed=1)
        assert [len(s.test_indices) for s in splits] == [150, 150, 150, 150]

    def test_cover_and_disjoint(self, s1):
        splits = ds.kfold_splits(s1, 4, seed=1)
        seen = np.concatenate([s.test_indices for s in splits])
        assert sorted(seen) == list(range(600))
        for s in splits:
            assert not set(s.train_indices) & set(s.test_indices)
            assert len(s.train_indices) + len(s.test_indices) == 600

    def test_stratified(self, s1):
        labels = s1.labels()
        for s in ds.kfold_splits(s1, 4, seed=1):
            counts = np.bincount(labels[s.test_indices], minlength=6)
            expected = len(s.test_indices) / 6
            assert np.all(np.abs(counts - expected) <= 1)

    def test_uneven_sizes_differ_by_at_most_one(self, s1):
        splits = ds.kfold_splits(s1, 7, seed=3)
        sizes = [len(s.test_indices) for s in splits]
        assert max(sizes) - min(sizes) <= 1
        assert sum(sizes) == 600

    def test_leave_one_out(self):
        manifest = ds.scenario_subset(ds.complete_dataset(grid_manifest(), seed=0), "s1")
        small = ds.DatasetManifest(manifest.records[:12])
        splits = ds.kfold_splits(small, 12, seed=0)
        assert all(len(s.test_indices) == 1 for s in splits)

    def test_deterministic(self, s1):
        a = ds.kfold_splits(s1, 4, seed=9)
        b = ds.kfold_splits(s1, 4, seed=9)
        for x, y in zip(a, b):
            assert np.array_equal(x.test_indices, y.test_indices)

    def test_k_out_of_range(self, s1):
        with pytest.raises(ManifestError):
            ds.kfold_splits(s1, 1, seed=0)
        with pytest.raises(ManifestError):
            ds.kfold_splits(s1, 601, seed=0)

    def test_subject_folds(self, s1):
        splits = ds.kfold_splits(s1, 4, seed=2, by_subject=True)
        for s in splits:
            test_subjects = {s1.records[i].subject for i in s.test_indices}
            train_subjects = {s1.records[i].subject for i in s.train_indices}
            assert not test_subjects & train_subjects


def test_infer_background_refs(tmp_path):
    manifest_path = render_video_dataset(tmp_path, subjects=(1,), repetitions=(1,))
    manifest = ds.load_manifest(manifest_path)
    stripped = ds.DatasetManifest(
        [ds.VideoRecord(r.subject, r.action, r.scenario, r.repetition, r.frame_dir)
         for r in manifest.records])
    inferred = ds.infer_background_refs(stripped)
    for rec in inferred.records:
        if rec.action in ds.INPLACE_ACTIONS:
            assert rec.background_ref == ds.record_key(rec.subject, "running",
                                                       rec.scenario, 1)
        else:
            assert rec.background_ref is None

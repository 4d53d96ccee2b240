import json
import os

import numpy as np
import pytest

from patchecg.data import (
    LEADS, DataFormatError, SynthConfig, detect_r_peaks, load_dataset, rr_variability,
    save_dataset, synth_dataset, synth_record,
)


def test_same_seed_same_record():
    a = synth_record(5, {"AF", "WIDE"})
    b = synth_record(5, {"AF", "WIDE"})
    assert a.signal.values.tobytes() == b.signal.values.tobytes()
    np.testing.assert_array_equal(a.labels, b.labels)


def test_norm_record_is_complete_and_sized():
    rec = synth_record(0, {"NORM"})
    assert rec.signal.values.shape == (12, 1000)
    assert np.all(np.isfinite(rec.signal.values))
    assert rec.signal.fs * 10 == rec.signal.n_samples
    np.testing.assert_array_equal(rec.labels, [1, 0, 0])


def test_af_record_irregular_without_p_wave():
    rec = synth_record(3, {"AF"})
    assert rec.meta["p_amplitude"] == 0.0
    assert rr_variability(rec.signal) > 0.15
    np.testing.assert_array_equal(rec.labels, [0, 1, 0])


def test_wide_qrs_at_least_twice_normal():
    normal = synth_record(1, {"NORM"}).meta["qrs_width"]
    wide = synth_record(1, {"WIDE"}).meta["qrs_width"]
    assert wide >= 2 * normal


def test_detect_r_peaks_matches_schedule():
    rec = synth_record(11, {"NORM"})
    peaks = detect_r_peaks(rec.signal.values[1], rec.signal.fs)
    truth = rec.meta["r_times"]
    truth = truth[(truth > 0.05) & (truth < 9.95)] * rec.signal.fs
    assert len(peaks) == len(truth)
    assert np.max(np.abs(peaks - truth)) <= 1.0


def test_rr_statistic_separates_af_from_norm():
    seeds = range(1000)
    ok = [rr_variability(synth_record(s, {"AF"}).signal) > 0.15 > rr_variability(synth_record(s, {"NORM"}).signal)
          for s in seeds]
    assert np.mean(ok) >= 0.99


def test_invalid_config_rejected():
    with pytest.raises(ValueError):
        synth_record(0, {"NORM"}, SynthConfig(fs=0))
    with pytest.raises(ValueError):
        synth_record(0, {"NORM"}, SynthConfig(duration_s=-1))
    with pytest.raises(ValueError):
        synth_record(0, {"NORM", "AF"})


def test_dataset_labels_consistent():
    ds = synth_dataset(40, seed=3)
    y = ds.label_matrix()
    # NORM exactly when neither AF nor WIDE
    np.testing.assert_array_equal(y[:, 0], (y[:, 1] == 0) & (y[:, 2] == 0))
    assert y[:, 1].any() and y[:, 2].any() and y[:, 0].any()


def test_two_class_vocabulary():
    ds = synth_dataset(10, seed=1, classes="NORM,AF")
    assert ds.vocab == ("NORM", "AF")
    assert ds.label_matrix().shape == (10, 2)


def test_round_trip(tmp_path):
    ds = synth_dataset(10, seed=7)
    ds.records[0].signal.values[2, 10:20] = np.nan
    save_dataset(ds, tmp_path)
    back = load_dataset(tmp_path)
    assert back.vocab == ds.vocab and back.leads == LEADS and back.fs == ds.fs
    for a, b in zip(ds.records, back.records):
        np.testing.assert_array_equal(a.labels, b.labels)
        assert a.record_id == b.record_id
        np.testing.assert_array_equal(a.signal.values, b.signal.values)  # NaN-aware, exact at float32


def test_file_format_is_plain(tmp_path):
    ds = synth_dataset(2, seed=0)
    ds.records[0].signal.values[0, 0] = np.nan
    save_dataset(ds, tmp_path)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest) == {"version", "fs", "leads", "labels_vocab", "records"}
    assert set(manifest["records"][0]) == {"id", "file", "labels"}
    raw = (tmp_path / manifest["records"][0]["file"]).read_bytes()
    assert b"\r" not in raw
    lines = raw.decode("utf-8").split("\n")
    assert lines[0] == ",".join(LEADS)
    assert lines[1].split(",")[0] == "nan"
    assert len([l for l in lines if l]) == 1001


def test_missing_manifest(tmp_path):
    with pytest.raises(DataFormatError, match="no manifest"):
        load_dataset(tmp_path)


def test_manifest_references_absent_file(tmp_path):
    save_dataset(synth_dataset(2, seed=0), tmp_path)
    os.remove(tmp_path / "rec00001.csv")
    with pytest.raises(DataFormatError, match="rec00001.csv"):
        load_dataset(tmp_path)


def test_column_count_mismatch(tmp_path):
    save_dataset(synth_dataset(1, seed=0), tmp_path)
    path = tmp_path / "rec00000.csv"
    lines = path.read_text().split("\n")
    lines[5] = lines[5] + ",0.0"
    path.write_text("\n".join(lines))
    with pytest.raises(DataFormatError, match=r"rec00000\.csv:6"):
        load_dataset(tmp_path)


def test_label_outside_vocabulary(tmp_path):
    save_dataset(synth_dataset(1, seed=0), tmp_path)
    mpath = tmp_path / "manifest.json"
    manifest = json.loads(mpath.read_text())
    manifest["records"][0]["labels"] = ["MI"]
    mpath.write_text(json.dumps(manifest))
    with pytest.raises(DataFormatError, match="rec00000"):
        load_dataset(tmp_path)

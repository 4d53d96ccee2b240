import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patchecg.data import Signal, synth_record
from patchecg.layouts import apply_mask, layout_mask, random_mask
from patchecg.patching import Patch, PatchKind, attach_marker, classify_patch, segment

# Visible sample ranges of the 3x4 print at T=1000, written out by hand.
VISIBLE_3X4 = [(0, 250)] * 3 + [(250, 500)] * 3 + [(500, 750)] * 3 + [(750, 1000)] * 3


def brute_force_kinds(visible, T, P):
    """Classify every patch by counting visible samples one by one."""
    kinds = []
    for start, stop in visible:
        for j in range(T // P):
            seen = sum(1 for s in range(j * P, (j + 1) * P) if start <= s < stop)
            kinds.append("Complete" if seen == P else "Missing" if seen == 0 else "Partial")
    return kinds


def test_counts_full_record():
    seq = segment(synth_record(0, {"NORM"}).signal, 64)
    assert seq.N == 180 and seq.N_miss == 0
    assert np.bincount(seq.lead_idx).tolist() == [15] * 12
    assert 1000 - 15 * 64 == 40


def test_counts_short_record():
    sig = Signal(np.zeros((2, 130)), 100.0, ("I", "II"))
    assert segment(sig, 64).N == 4


def test_patch_larger_than_record():
    sig = Signal(np.zeros((2, 30)), 100.0, ("I", "II"))
    with pytest.raises(ValueError, match="no complete patch"):
        segment(sig, 64)


def test_3x4_accounting_against_brute_force():
    sig = apply_mask(synth_record(0, {"NORM"}).signal, layout_mask("3x4", 12, 1000))
    seq = segment(sig, 64)
    oracle = brute_force_kinds(VISIBLE_3X4, 1000, 64)
    assert [PatchKind(k).name.capitalize() for k in seq.kind] == oracle
    # columns lose 11, 10, 10 and 11 patches per lead
    assert oracle.count("Missing") == 126
    assert seq.N_miss == 126
    assert seq.N - seq.N_miss == 54
    # lead I: j=0..2 complete, j=3 straddles sample 250, the rest missing
    lead_i = seq.kind[:15].tolist()
    assert lead_i == [0, 0, 0, 1] + [2] * 11


def test_attach_marker_rows():
    p = Patch(0, 0, np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    np.testing.assert_array_equal(attach_marker(p), [[1.0, 0.0], [1.0, 0.0]])
    full = Patch(0, 0, np.array([0.3, -0.2]), np.ones(2))
    np.testing.assert_array_equal(attach_marker(full)[1], [1.0, 1.0])
    empty = Patch(0, 0, np.zeros(2), np.zeros(2))
    np.testing.assert_array_equal(attach_marker(empty), np.zeros((2, 2)))


def test_segment_marks_and_zero_fills():
    values = np.array([[1.0, np.nan, 3.0, 4.0]])
    seq = segment(Signal(values, 1.0, ("I",)), 2)
    np.testing.assert_array_equal(seq.values, [[1.0, 0.0], [3.0, 4.0]])
    np.testing.assert_array_equal(seq.marker, [[1.0, 0.0], [1.0, 1.0]])
    np.testing.assert_array_equal(attach_marker(seq[0]), [[1.0, 0.0], [1.0, 0.0]])


def test_classify_patch():
    assert classify_patch(Patch(0, 0, np.zeros(3), np.ones(3))) == PatchKind.COMPLETE
    assert classify_patch(Patch(0, 0, np.zeros(3), np.zeros(3))) == PatchKind.MISSING
    assert classify_patch(Patch(0, 0, np.zeros(3), np.array([1.0, 0.0, 1.0]))) == PatchKind.PARTIAL


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), P=st.sampled_from([16, 32, 64, 100]))
def test_reconstruction(seed, P):
    sig = apply_mask(synth_record(2, {"AF"}).signal, random_mask(np.random.default_rng(seed), 12, 1000))
    seq = segment(sig, P)
    n = 1000 // P
    for i in range(12):
        rows = slice(i * n, (i + 1) * n)
        vals = seq.values[rows].reshape(-1)
        marks = seq.marker[rows].reshape(-1)
        orig = sig.values[i, :n * P]
        np.testing.assert_array_equal(marks == 1, np.isfinite(orig))
        np.testing.assert_array_equal(vals[marks == 1], orig[np.isfinite(orig)])
        assert np.all(vals[marks == 0] == 0)
    for k in seq.kind:
        assert k in (PatchKind.COMPLETE, PatchKind.PARTIAL, PatchKind.MISSING)


@settings(max_examples=40, deadline=None)
@given(seed_a=st.integers(0, 10**6), seed_b=st.integers(0, 10**6))
def test_hiding_more_never_reduces_missing(seed_a, seed_b):
    sig = synth_record(4, {"NORM"}).signal
    m1 = random_mask(np.random.default_rng(seed_a), 12, 1000)
    m2 = m1 & random_mask(np.random.default_rng(seed_b), 12, 1000)
    assert segment(apply_mask(sig, m2), 64).N_miss >= segment(apply_mask(sig, m1), 64).N_miss


def test_all_true_mask_has_no_missing():
    sig = synth_record(6, {"WIDE"}).signal
    assert segment(apply_mask(sig, np.ones((12, 1000), bool)), 64).N_miss == 0

"""Confusion counts and mask metrics against an exhaustive pixel oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kanseg.errors import InputError
from kanseg.losses import dice_loss_on_probs
from kanseg.metrics import (METRIC_NAMES, ConfusionCounts, compute_metrics,
                            confusion_counts, dice_coefficient,
                            format_metric_block)

from oracles import confusion_oracle, metrics_oracle

import torch


# ----------------------------------------------------------- confusion

def test_confusion_perfect_prediction():
    m = np.array([[1, 0], [0, 1]])
    counts = confusion_counts(m, m)
    assert counts.fp.sum() == 0
    assert counts.fn.sum() == 0
    assert counts.tp[1] == 2
    assert counts.tn[1] == 2


def test_confusion_two_by_two_case():
    pred = np.array([[1, 0], [1, 0]])
    target = np.array([[1, 1], [0, 0]])
    counts = confusion_counts(pred, target)
    assert (counts.tp[1], counts.fp[1], counts.fn[1], counts.tn[1]) \
        == (1, 1, 1, 1)


def test_confusion_all_background():
    z = np.zeros((3, 3), dtype=np.int64)
    counts = confusion_counts(z, z)
    assert counts.tp[1] == 0
    assert counts.tn[1] == 9
    assert counts.tp[0] == 9


def test_confusion_rejects_out_of_range():
    with pytest.raises(InputError, match="outside"):
        confusion_counts(np.array([[2, 0]]), np.array([[1, 0]]))
    with pytest.raises(InputError, match="outside"):
        confusion_counts(np.array([[1, 0]]), np.array([[-1, 0]]))


def test_confusion_rejects_shape_mismatch():
    with pytest.raises(InputError, match="match"):
        confusion_counts(np.zeros((2, 2)), np.zeros((2, 3)))


def test_confusion_merge_accumulates():
    a = confusion_counts(np.array([[1, 0]]), np.array([[1, 1]]))
    b = confusion_counts(np.array([[0, 0]]), np.array([[0, 1]]))
    merged = ConfusionCounts(2)
    merged.add(a)
    merged.add(b)
    assert merged.tp[1] == a.tp[1] + b.tp[1]
    assert merged.total == 4
    with pytest.raises(InputError, match="merge"):
        merged.add(ConfusionCounts(3))


# ------------------------------------------------------------- metrics

def test_metrics_two_by_two_case():
    pred = np.array([[1, 0], [1, 0]])
    target = np.array([[1, 1], [0, 0]])
    m = compute_metrics(confusion_counts(pred, target))
    assert m["miou"] == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert m["accuracy"] == 0.5
    assert m["recall"] == 0.5


def test_metrics_perfect_prediction_all_ones():
    pred = np.array([[1, 0], [0, 1]])
    m = compute_metrics(confusion_counts(pred, pred))
    assert m["miou"] == 1.0
    assert m["accuracy"] == 1.0
    assert m["recall"] == 1.0
    assert m["dice"] == pytest.approx(1.0, abs=1e-6)


def test_metrics_absent_foreground_counts_as_one():
    z = np.zeros((4, 4), dtype=np.int64)
    m = compute_metrics(confusion_counts(z, z))
    assert m["miou"] == 1.0
    assert m["dice"] == 1.0  # eps/eps
    assert m["recall"] == 1.0


def test_metrics_match_oracle_on_random_masks(rng):
    for _ in range(200):
        h = int(rng.integers(1, 17))
        w = int(rng.integers(1, 17))
        pred = rng.integers(0, 2, size=(h, w))
        target = rng.integers(0, 2, size=(h, w))
        got = compute_metrics(confusion_counts(pred, target))
        want = metrics_oracle(pred, target)
        for name in METRIC_NAMES:
            assert abs(got[name] - want[name]) < 1e-12, name


def test_confusion_matches_oracle(rng):
    pred = rng.integers(0, 2, size=(7, 5))
    target = rng.integers(0, 2, size=(7, 5))
    counts = confusion_counts(pred, target)
    want = confusion_oracle(pred, target)
    for c in (0, 1):
        assert [counts.tp[c], counts.fp[c], counts.fn[c], counts.tn[c]] \
            == want[c]


@settings(max_examples=150, deadline=None)
@given(arrays(np.int64, (3, 4), elements=st.integers(0, 1)),
       arrays(np.int64, (3, 4), elements=st.integers(0, 1)))
def test_metrics_bounded(pred, target):
    m = compute_metrics(confusion_counts(pred, target))
    for name in METRIC_NAMES:
        assert 0.0 <= m[name] <= 1.0, name


# ---------------------------------------------------- dice coefficient

def test_dice_coefficient_complement_of_loss(rng):
    pred = rng.integers(0, 2, size=(6, 6)).astype(np.float64)
    target = rng.integers(0, 2, size=(6, 6)).astype(np.float64)
    coeff = dice_coefficient(pred, target)
    loss = dice_loss_on_probs(torch.from_numpy(pred),
                              torch.from_numpy(target)).item()
    assert coeff + loss == pytest.approx(1.0, abs=1e-12)


def test_dice_coefficient_agrees_with_confusion_form(rng):
    pred = rng.integers(0, 2, size=(8, 8))
    target = rng.integers(0, 2, size=(8, 8))
    via_counts = compute_metrics(confusion_counts(pred, target))["dice"]
    direct = dice_coefficient(pred, target)
    assert direct == pytest.approx(via_counts, abs=1e-12)


def test_dice_coefficient_shape_mismatch():
    with pytest.raises(InputError, match="match"):
        dice_coefficient(np.zeros((2, 2)), np.zeros(4))


# ------------------------------------------------------------- format

def test_format_metric_block():
    m = {"miou": 0.5, "dice": 1.0, "accuracy": 0.25, "recall": 0.125}
    text = format_metric_block(m, prefix="val_")
    lines = text.splitlines()
    assert lines[0] == "val_miou = 0.500000"
    assert lines[1] == "val_dice = 1.000000"
    assert lines[-1] == "val_recall = 0.125000"
    assert len(lines) == len(METRIC_NAMES)

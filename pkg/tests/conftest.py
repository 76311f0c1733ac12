"""Shared fixtures: deterministic seeds and throwaway datasets."""

import numpy as np
import pytest
import torch

from kanseg.data import synth_generate, save_dataset


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_dataset(tmp_path):
    """Four 32x32 synthetic pairs written in the standard layout."""
    root = tmp_path / "data"
    pairs = synth_generate(4, 32, seed=7)
    save_dataset(pairs, root)
    return root, pairs

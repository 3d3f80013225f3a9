"""Shared fixtures: a small, fast experiment configuration for end-to-end
tests of the runner and the command line."""

import json

import pytest

TINY_DOC = {
    "benchmark": {
        "num_domains": 3,
        "classes_per_domain": 4,
        "train_per_class": 12,
        "test_per_class": 10,
        "pretrain_per_class": 12,
        "image_dim": 10,
        "text_dim": 8,
        "embed_dim": 6,
        "hidden_width": 10,
        "image_noise": 0.2,
    },
    "pretrain": {"iterations": 150, "min_accuracy_ratio": 1.0},
    "recipe": {"iterations": 12, "batch_size": 16, "lr": 1e-3},
    "seeds": [1],
}


@pytest.fixture
def tiny_doc():
    return json.loads(json.dumps(TINY_DOC))


@pytest.fixture
def tiny_config_path(tmp_path, tiny_doc):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_doc))
    return path

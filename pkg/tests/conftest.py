"""Shared fixtures: synthetic corpora and trained conditional models.

The expensive fixtures are session-scoped and lazy, so a single corpus
generation / training run is shared by every test that needs one.
"""

import json
import sys

import pytest
from hypothesis import settings

from avalonsim import factor_model, harness
from avalonsim.language import ChatProvider, ProviderUsage

settings.register_profile("suite", deadline=None, max_examples=60)
settings.load_profile("suite")


def pytest_terminal_summary(terminalreporter):
    """Echo the release-check verdict lines after the run.

    The acceptance module accumulates them in CRITERION_LINES; printing here
    keeps them visible even though capture swallows in-test stdout. Looked up
    by module suffix since the tests directory is not a package.
    """
    lines = []
    for name, mod in sys.modules.items():
        if name.rsplit(".", 1)[-1] == "test_acceptance":
            lines.extend(getattr(mod, "CRITERION_LINES", []))
    if lines:
        terminalreporter.section("release criteria")
        for line in lines:
            terminalreporter.write_line(line)


# Corpus recipe for training a model aimed at random opposition: all-random
# Evil at the documented default fail probability, Good seats with jittered
# voting regimes for vote-signal diversity.
RANDOM_OPPONENT_PARAMS = {
    "fail_prob": 1.0,
    "reject_good_prob": 0.0,
    "deceive_prob": 0.0,
    "fail_from_quest": 1,
    "random_evil_fraction": 1.0,
    "good_approve_prob": (0.2, 0.8),
    "good_self_bias": (0.0, 0.5),
}

FAST_TRAIN = dict(max_epochs=40, patience=6, batch_size=512, split_seed=1, init_seed=1)


@pytest.fixture(scope="session")
def corpus_records():
    """Default heterogeneous 3000-game corpus (the gen-data recipe)."""
    return harness.generate_synthetic_corpus(3000, seed=11)


@pytest.fixture(scope="session")
def corpus_dataset(corpus_records):
    return factor_model.build_dataset(corpus_records)


@pytest.fixture(scope="session")
def trained_model(corpus_dataset):
    cfg = factor_model.TrainConfig(**FAST_TRAIN)
    model, _ = factor_model.train(cfg, corpus_dataset)
    return model


@pytest.fixture(scope="session")
def play_model():
    """Conditional model matched to the random-Evil opponent (12k games)."""
    records = harness.generate_synthetic_corpus(
        12000, evil_policy_params=RANDOM_OPPONENT_PARAMS, seed=11
    )
    ds = factor_model.build_dataset(records)
    cfg = factor_model.TrainConfig(max_epochs=60, patience=10, batch_size=512,
                                   split_seed=1, init_seed=1)
    model, _ = factor_model.train(cfg, ds)
    return model


class CannedProvider(ChatProvider):
    """Deterministic provider: fixed judgment for prior prompts, fixed JSON
    message otherwise. Stands in for a fixture directory in replay tests."""

    def __init__(self, judgment=None, message="sticking with my read"):
        super().__init__()
        self.judgment = judgment or {}
        self.message = message

    def _call_impl(self, prompt, params):
        if "increase" in prompt and "decrease" in prompt:
            text = json.dumps(self.judgment)
        else:
            text = json.dumps({"message": self.message})
        return text, ProviderUsage(input_tokens=len(prompt) // 4, output_tokens=8, latency=0.0)


@pytest.fixture
def canned_provider_factory():
    return CannedProvider

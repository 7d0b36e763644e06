"""Conditional model: dataset assembly, hand-written backprop, calibration,
and weights persistence."""

import json
import math
import random

import numpy as np
import pytest

from avalonsim import factor_model
from avalonsim.codec import EncodedState, encode_party, encode_vote
from avalonsim.factor_model import (
    EMBED_WIDTHS,
    STATE_CARDINALITIES,
    FactorModel,
    TrainConfig,
    build_dataset,
    calibrate,
    conditional_provider,
    expected_calibration_error,
    f1_score_binary,
    fit_temperature,
    forward,
    load_weights,
    loss_and_grads,
    save_weights,
    train,
    uniform_model,
)
from tests.test_game import ROLES_14, play_scripted
from avalonsim.game import record_from_state


def three_round_record(seed=5):
    return record_from_state(play_scripted(seed=seed, outcomes="SFS"), seed=seed)


# -- dataset assembly


def test_sample_count_formula():
    # 3 completed quests -> 3 prefixes x 6 rotations x 6 egos = 108
    ds = build_dataset([three_round_record()])
    assert len(ds) == 108


def test_label_balance_one_to_two():
    ds = build_dataset([three_round_record()])
    evil = int(ds.labels.sum())
    assert evil * 2 == len(ds) - evil


def test_prefix_masking():
    ds = build_dataset([three_round_record()])
    # every sample's encoded state must honor the all-zero-or-all-set rule and
    # at least one sample covers only quest 1
    seen_t1 = False
    for sample in ds:
        flat = sample.features.flatten()
        quests_set = [flat[3 * q] != 0 for q in range(5)]
        # prefixes: once a quest is masked all later ones are too
        for a, b in zip(quests_set, quests_set[1:]):
            assert a or not b
        if quests_set == [True, False, False, False, False]:
            seen_t1 = True
    assert seen_t1


def test_dataset_bad_line_skipped(tmp_path):
    from avalonsim.game import write_records

    path = tmp_path / "corpus.jsonl"
    write_records(path, [three_round_record()], header={"n": 1})
    with open(path, "a") as fh:
        fh.write('{"seed": 1}\n')  # malformed record
    ds = factor_model.build_dataset_from_file(path)
    assert len(ds) == 108


def test_game_level_split_disjoint(corpus_dataset):
    train_part, val_part, test_part = corpus_dataset.split_by_game(3)
    groups = [set(np.unique(part.game_ids)) for part in (train_part, val_part, test_part)]
    assert not (groups[0] & groups[1]) and not (groups[0] & groups[2]) and not (groups[1] & groups[2])
    assert len(train_part) + len(val_part) + len(test_part) == len(corpus_dataset)


# -- forward semantics


def test_all_zero_features_constant_across_egos():
    model = FactorModel(seed=1)
    empty = EncodedState.empty()
    base = forward(model, empty)
    provider = conditional_provider(model)
    assert all(p == pytest.approx(base, abs=1e-12) for p in provider(empty))


def test_masked_rows_contribute_nothing():
    """Row 0 of every embedding is pinned to zero, so an all-zero state rides
    only on biases; perturbing row 0 must not change the output."""
    model = FactorModel(seed=2)
    empty = EncodedState.empty()
    base = forward(model, empty)
    by_hand = 1.0 / (1.0 + math.exp(-(
        np.maximum(np.maximum(np.zeros(57) @ model.w1 + model.b1, 0) @ model.w2 + model.b2, 0)
        @ model.w3 + model.b3
    ) / model.temperature))
    assert base == pytest.approx(by_hand, abs=1e-12)
    for table in model.embeddings:
        assert np.all(table[0] == 0.0)


def test_temperature_to_infinity_flattens():
    model = FactorModel(seed=3)
    state = EncodedState(
        parties=(encode_party({1, 2}, 2), 0, 0, 0, 0),
        votes=(encode_vote({1, 2, 3, 4}), 0, 0, 0, 0),
        outcomes=(1, 0, 0, 0, 0),
    )
    model.temperature = 1e9
    assert forward(model, state) == pytest.approx(0.5, abs=1e-6)


def test_feature_code_out_of_range_rejected():
    model = FactorModel(seed=0)
    bad = np.zeros((1, 15), dtype=np.int64)
    bad[0, 0] = 16  # quest-1 party codes stop at 15
    with pytest.raises(ValueError):
        model.logits(bad)


def test_uniform_model_outputs_half():
    model = uniform_model()
    assert forward(model, EncodedState.empty()) == 0.5


# -- gradient check (central differences vs the hand-written backprop)


def test_gradient_check_matches_finite_differences(corpus_dataset):
    rng = np.random.default_rng(0)
    rows = rng.choice(len(corpus_dataset), size=10, replace=False)
    batch = corpus_dataset.take_rows(rows)
    model = FactorModel(seed=4)
    flat = batch.features.astype(np.int64)
    labels = batch.labels.astype(float)
    _, grads = loss_and_grads(model, flat, labels, class_weight=2.0, weight_decay=1e-4)

    eps = 1e-5
    worst = 0.0
    params = model.parameters()
    checked = 0
    for name, param in params.items():
        grad = grads[name]
        flat_param = param.reshape(-1)
        flat_grad = grad.reshape(-1)
        # probe a deterministic subset of coordinates per tensor
        idx = rng.choice(flat_param.size, size=min(6, flat_param.size), replace=False)
        for i in idx:
            if name.startswith("emb") and i < param.shape[1]:
                continue  # row 0 is pinned; analytic grad is zeroed there
            orig = flat_param[i]
            flat_param[i] = orig + eps
            up, _ = loss_and_grads(model, flat, labels, class_weight=2.0, weight_decay=1e-4)
            flat_param[i] = orig - eps
            down, _ = loss_and_grads(model, flat, labels, class_weight=2.0, weight_decay=1e-4)
            flat_param[i] = orig
            numeric = (up - down) / (2 * eps)
            denom = max(abs(numeric), abs(flat_grad[i]), 1e-8)
            worst = max(worst, abs(numeric - flat_grad[i]) / denom)
            checked += 1
    # b3 is scalar-backed, checked separately
    orig = model.b3
    model.b3 = orig + eps
    up, _ = loss_and_grads(model, flat, labels, class_weight=2.0, weight_decay=1e-4)
    model.b3 = orig - eps
    down, _ = loss_and_grads(model, flat, labels, class_weight=2.0, weight_decay=1e-4)
    model.b3 = orig
    numeric = (up - down) / (2 * eps)
    worst = max(worst, abs(numeric - grads["b3"][0]) / max(abs(numeric), 1e-8))
    assert checked >= 50
    assert worst < 1e-4


def test_class_weight_direction():
    """Doubling the Evil-class weight must raise predicted probabilities on a
    base-rate-only task: p* = wq/(wq + 1 - q)."""
    rng = np.random.default_rng(1)
    flat = np.zeros((600, 15), dtype=np.int64)
    labels = (rng.random(600) < (1 / 3)).astype(float)
    model = FactorModel(seed=5)
    opt = factor_model._Adam(dict(model.parameters(), b3=np.array([model.b3])), lr=0.05)
    for _ in range(120):
        _, grads = loss_and_grads(model, flat, labels, class_weight=2.0)
        opt.step(model, grads)
    p = float(model.predict_flat(flat[:1])[0])
    q = labels.mean()
    assert p == pytest.approx(2 * q / (1 + q), abs=0.02)


# -- training loop


def test_train_deterministic_with_fixed_seeds(corpus_records):
    small = factor_model.build_dataset(corpus_records[:120])
    cfg = TrainConfig(max_epochs=3, patience=3, batch_size=256, split_seed=2, init_seed=2)
    m1, _ = train(cfg, small)
    m2, _ = train(cfg, small)
    for key, value in m1.parameters().items():
        assert np.array_equal(value, m2.parameters()[key])
    assert m1.b3 == m2.b3


def test_train_reports_metrics(corpus_records):
    small = factor_model.build_dataset(corpus_records[:200])
    cfg = TrainConfig(max_epochs=4, patience=4, batch_size=512, split_seed=1, init_seed=1)
    model, metrics = train(cfg, small)
    assert metrics.epochs_run >= 1
    assert len(metrics.val_loss) == metrics.epochs_run
    assert 0.0 <= metrics.test_f1 <= 1.0
    assert model.metadata["train_config"]["batch_size"] == 512


def test_training_learns_failed_party_signal(trained_model):
    """Mean prediction of members of two failed quests must exceed the
    empty-state baseline (sabotage is the dominant corpus signal)."""
    base = forward(trained_model, EncodedState.empty())
    state = EncodedState(
        parties=(encode_party({2, 3}, 2), encode_party({2, 4, 5}, 3), 0, 0, 0),
        votes=(encode_vote({1, 2, 3, 4}), encode_vote({2, 3, 4, 5}), 0, 0, 0),
        outcomes=(1, 1, 0, 0, 0),
    )
    provider = conditional_provider(trained_model)
    ps = provider(state)
    on_both = ps[1]  # player 2 sat on both failed quests
    assert on_both > base
    assert on_both > np.mean([ps[0], ps[5]])


def test_f1_arithmetic():
    labels = np.array([1, 1, 1, 1, 1, 0, 0, 0])
    preds = np.array([1, 1, 1, 0, 0, 1, 0, 0])
    # TP=3 FP=1 FN=2 -> 2*3 / (2*3 + 1 + 2)
    assert f1_score_binary(labels, preds) == pytest.approx(2 * 3 / (2 * 3 + 1 + 2), abs=1e-12)


# -- calibration


def synth_logits(n, scale, seed=0):
    rng = np.random.default_rng(seed)
    z_true = rng.normal(0.0, 2.0, size=n)
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-z_true))).astype(float)
    return z_true * scale, y


def test_fit_temperature_identity():
    logits, y = synth_logits(20000, scale=1.0)
    assert fit_temperature(logits, y) == pytest.approx(1.0, abs=0.05)


def test_fit_temperature_recovers_overconfidence():
    logits, y = synth_logits(20000, scale=3.0)
    t = fit_temperature(logits, y)
    assert abs(t - 3.0) / 3.0 < 0.10


def test_calibrate_reduces_ece(trained_model, corpus_dataset):
    _, _, heldout = corpus_dataset.split_by_game(1)
    before = expected_calibration_error(
        trained_model.predict_flat(heldout.features.astype(np.int64)), heldout.labels
    )
    calibrated = calibrate(trained_model, heldout)
    after = expected_calibration_error(
        calibrated.predict_flat(heldout.features.astype(np.int64)), heldout.labels
    )
    assert after <= before
    assert calibrated.temperature > 0


def test_calibrate_empty_heldout_rejected(trained_model, corpus_dataset):
    empty = corpus_dataset.take_rows(np.array([], dtype=int))
    with pytest.raises(ValueError):
        calibrate(trained_model, empty)


# -- persistence


def test_weights_round_trip(tmp_path, trained_model):
    path = tmp_path / "weights.json"
    save_weights(trained_model, path)
    clone = load_weights(path)
    state = EncodedState(
        parties=(3, 0, 0, 0, 0), votes=(5, 0, 0, 0, 0), outcomes=(2, 0, 0, 0, 0)
    )
    assert forward(clone, state) == forward(trained_model, state)
    assert clone.temperature == trained_model.temperature


def test_weights_version_guard(tmp_path, trained_model):
    path = tmp_path / "weights.json"
    save_weights(trained_model, path)
    doc = json.loads(path.read_text())
    doc["format_version"] = 999
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="version"):
        load_weights(path)


def test_weights_ordering_tag_guard(tmp_path, trained_model):
    path = tmp_path / "weights.json"
    save_weights(trained_model, path)
    doc = json.loads(path.read_text())
    doc["vote_ordering"] = "other-ordering"
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError, match="ordering"):
        load_weights(path)


def test_weights_truncated_file(tmp_path, trained_model):
    path = tmp_path / "weights.json"
    save_weights(trained_model, path)
    blob = path.read_text()
    path.write_text(blob[: len(blob) // 2])
    with pytest.raises(ValueError, match="corrupt|truncated"):
        load_weights(path)

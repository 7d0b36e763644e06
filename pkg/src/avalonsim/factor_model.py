"""Learned conditional factor p(evil | observed history).

The model embeds each of the 15 categorical state variables (embedding
width ceil(log2 C_i), code 0 mapped to the zero vector), concatenates the
embeddings, and applies two 16-wide rectified-linear layers to produce a
single logit; probability = sigmoid(logit / temperature).  Forward and
backward passes are written out directly against numpy so the gradients
are auditable and checkable by finite differences.

Training samples come from finished game records: for each completed-round
prefix, each of the 6 seat rotations, and each of the 6 egos, the
ego-transformed masked observation is paired with that ego's true role
(label 1 = Evil).  Samples are stored columnar; TrainingSample is the
per-row view.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from .codec import (
    N_STATE_VARS,
    ROTATION_TABLES,
    STATE_CARDINALITIES,
    VOTE_ORDERING_TAG,
    EncodedState,
    ego_rotation,
    encode_party,
    encode_vote,
    rotate_flat_batch,
)
from .game import N_PLAYERS, GameRecord, Role, read_log

WEIGHTS_FORMAT_VERSION = 1
HIDDEN_WIDTH = 16
PROB_CLIP = 1e-6  # forward outputs squeezed into (0,1) at the graph boundary

EMBED_WIDTHS = tuple(math.ceil(math.log2(c)) for c in STATE_CARDINALITIES)
INPUT_WIDTH = sum(EMBED_WIDTHS)  # 57
_EMBED_OFFSETS = tuple(
    sum(EMBED_WIDTHS[:i]) for i in range(N_STATE_VARS)
)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the epoch and step for diagnosis."""


@dataclass(frozen=True)
class TrainingSample:
    features: EncodedState
    label: int
    game_id: int = 0


class SampleSet:
    """Columnar store of training samples (memory matters at corpus scale)."""

    def __init__(self, features: np.ndarray, labels: np.ndarray, game_ids: np.ndarray,
                 skipped_records: int = 0) -> None:
        if features.ndim != 2 or features.shape[1] != N_STATE_VARS:
            raise ValueError(f"features must be (n, {N_STATE_VARS})")
        if len(labels) != len(features) or len(game_ids) != len(features):
            raise ValueError("misaligned sample columns")
        self.features = features.astype(np.int16, copy=False)
        self.labels = labels.astype(np.int8, copy=False)
        self.game_ids = game_ids.astype(np.int64, copy=False)
        self.skipped_records = skipped_records

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> TrainingSample:
        return TrainingSample(
            features=EncodedState.from_flat(self.features[i].tolist()),
            label=int(self.labels[i]),
            game_id=int(self.game_ids[i]),
        )

    def __iter__(self) -> Iterator[TrainingSample]:
        return (self[i] for i in range(len(self)))

    def take_rows(self, index: np.ndarray) -> "SampleSet":
        return SampleSet(self.features[index], self.labels[index], self.game_ids[index])

    def restrict_to_games(self, games: Sequence[int]) -> "SampleSet":
        mask = np.isin(self.game_ids, np.asarray(list(games)))
        return self.take_rows(np.nonzero(mask)[0])

    def split_by_game(
        self, seed: int, fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    ) -> Tuple["SampleSet", "SampleSet", "SampleSet"]:
        """Game-level split: all samples of one game land in one part."""
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        games = np.unique(self.game_ids)
        rng = np.random.default_rng(seed)
        rng.shuffle(games)
        n = len(games)
        n_train = int(round(n * fractions[0]))
        n_val = int(round(n * fractions[1]))
        train_games = games[:n_train]
        val_games = games[n_train : n_train + n_val]
        test_games = games[n_train + n_val :]
        return (
            self.restrict_to_games(train_games),
            self.restrict_to_games(val_games),
            self.restrict_to_games(test_games),
        )


def _completed_prefixes(record: GameRecord) -> list[np.ndarray]:
    """Flattened observation after each completed quest, in order."""
    flat = np.zeros(N_STATE_VARS, dtype=np.int16)
    prefixes: list[np.ndarray] = []
    for quest in sorted(record.quests, key=lambda q: q["index"]):
        if quest["outcome"] == "unplayed":
            break
        idx = quest["index"] - 1
        size = len(quest["party"])
        approvers = [int(p) for p, v in quest["party_votes"].items() if v == "approve"]
        flat[3 * idx] = encode_party(quest["party"], size)
        flat[3 * idx + 1] = encode_vote(approvers)
        flat[3 * idx + 2] = 1 if quest["outcome"] == "fail" else 2
        prefixes.append(flat.copy())
    return prefixes


def build_dataset(records: Iterable[GameRecord]) -> SampleSet:
    """T prefixes x 6 rotations x 6 egos samples per game of T rounds.

    Rotation r of a prefix, seen from any ego seated at index 1 after the
    ego transform, is the same observation; the (rotation, ego) grid is
    kept at full 36-fold size so sample counts match the stated recipe.
    Malformed records are skipped and counted, never fatal.
    """
    feat_chunks: list[np.ndarray] = []
    label_chunks: list[np.ndarray] = []
    game_chunks: list[np.ndarray] = []
    skipped = 0
    for game_index, record in enumerate(records):
        try:
            prefixes = _completed_prefixes(record)
            if not prefixes:
                continue
            evil = record.evil_players()
            base = np.stack(prefixes)  # (T, 15)
            t_rounds = base.shape[0]
            rotations = np.arange(N_PLAYERS)
            tiled = np.repeat(base, N_PLAYERS, axis=0)  # (T*6, 15)
            ks = np.tile(rotations, t_rounds)
            rotated = rotate_flat_batch(tiled, ks)
            # After rotation r, seat 1 is the original player ((-r) mod 6)+1;
            # its role is the label shared by the 6 (rotation, ego) aliases.
            seat1_owner = np.array([((-r) % N_PLAYERS) + 1 for r in rotations])
            labels_per_rot = np.array(
                [1 if p in evil else 0 for p in seat1_owner], dtype=np.int8
            )
            labels = np.tile(labels_per_rot, t_rounds)
            feat_chunks.append(np.repeat(rotated, N_PLAYERS, axis=0))
            label_chunks.append(np.repeat(labels, N_PLAYERS))
            game_chunks.append(
                np.full(t_rounds * N_PLAYERS * N_PLAYERS, game_index, dtype=np.int64)
            )
        except (KeyError, TypeError, ValueError):
            skipped += 1
    if not feat_chunks:
        return SampleSet(
            np.zeros((0, N_STATE_VARS), dtype=np.int16),
            np.zeros(0, dtype=np.int8),
            np.zeros(0, dtype=np.int64),
            skipped_records=skipped,
        )
    return SampleSet(
        np.concatenate(feat_chunks),
        np.concatenate(label_chunks),
        np.concatenate(game_chunks),
        skipped_records=skipped,
    )


def build_dataset_from_file(path) -> SampleSet:
    records, skipped_lines = read_log(path)
    sample_set = build_dataset(records)
    sample_set.skipped_records += skipped_lines
    return sample_set


# ---------------------------------------------------------------------------
# Model


class FactorModel:
    """Embedding + two-hidden-layer network with a temperature scalar."""

    def __init__(self, seed: int = 0) -> None:
        rng = np.random.default_rng(seed)
        self.embeddings: list[np.ndarray] = []
        for card, width in zip(STATE_CARDINALITIES, EMBED_WIDTHS):
            table = rng.normal(0.0, 0.1, size=(card, width))
            table[0] = 0.0  # code 0 = unseen contributes nothing
            self.embeddings.append(table)
        self.w1 = rng.normal(0.0, math.sqrt(2.0 / INPUT_WIDTH), size=(INPUT_WIDTH, HIDDEN_WIDTH))
        self.b1 = np.zeros(HIDDEN_WIDTH)
        self.w2 = rng.normal(0.0, math.sqrt(2.0 / HIDDEN_WIDTH), size=(HIDDEN_WIDTH, HIDDEN_WIDTH))
        self.b2 = np.zeros(HIDDEN_WIDTH)
        self.w3 = rng.normal(0.0, math.sqrt(2.0 / HIDDEN_WIDTH), size=HIDDEN_WIDTH)
        self.b3 = 0.0
        self.temperature = 1.0
        self.metadata: dict = {}

    # -- parameter plumbing (shared by Adam and the gradient check)

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {f"emb{i}": table for i, table in enumerate(self.embeddings)}
        params.update(w1=self.w1, b1=self.b1, w2=self.w2, b2=self.b2, w3=self.w3)
        return params

    def get_b3(self) -> float:
        return self.b3

    def clone_weights(self) -> Dict[str, np.ndarray]:
        snap = {k: v.copy() for k, v in self.parameters().items()}
        snap["b3"] = np.array([self.b3])
        return snap

    def restore_weights(self, snap: Dict[str, np.ndarray]) -> None:
        for key, value in self.parameters().items():
            value[...] = snap[key]
        self.b3 = float(snap["b3"][0])

    # -- forward

    def _gather(self, flat: np.ndarray) -> np.ndarray:
        x = np.empty((flat.shape[0], INPUT_WIDTH))
        for i, table in enumerate(self.embeddings):
            lo = _EMBED_OFFSETS[i]
            x[:, lo : lo + table.shape[1]] = table[flat[:, i]]
        return x

    def logits(self, flat: np.ndarray) -> np.ndarray:
        flat = np.asarray(flat)
        if flat.ndim != 2 or flat.shape[1] != N_STATE_VARS:
            raise ValueError(f"expected (n, {N_STATE_VARS}) feature codes")
        for i, card in enumerate(STATE_CARDINALITIES):
            col = flat[:, i]
            if col.min(initial=0) < 0 or col.max(initial=0) >= card:
                raise ValueError(f"feature code out of range for variable {i}")
        x = self._gather(flat)
        h1 = np.maximum(x @ self.w1 + self.b1, 0.0)
        h2 = np.maximum(h1 @ self.w2 + self.b2, 0.0)
        return h2 @ self.w3 + self.b3

    def predict_flat(self, flat: np.ndarray) -> np.ndarray:
        z = self.logits(flat) / self.temperature
        return 1.0 / (1.0 + np.exp(-z))


def forward(model: FactorModel, features: EncodedState) -> float:
    """Calibrated p(seat-1 player is Evil | features), in the open (0,1)."""
    p = float(model.predict_flat(np.array([features.flatten()], dtype=np.int64))[0])
    return min(max(p, PROB_CLIP), 1.0 - PROB_CLIP)


def conditional_provider(model: FactorModel):
    """Adapter: one shared network serves all six role factors via the ego
    transform (seat j's conditional = forward on the j-centered view)."""

    def provider(encoded: EncodedState) -> list[float]:
        flat = np.array(encoded.flatten(), dtype=np.int64)
        views = np.empty((N_PLAYERS, N_STATE_VARS), dtype=np.int64)
        for j in range(1, N_PLAYERS + 1):
            k = ego_rotation(j)
            views[j - 1] = [
                ROTATION_TABLES[i][k, code] for i, code in enumerate(flat)
            ]
        ps = model.predict_flat(views)
        return [float(min(max(p, PROB_CLIP), 1.0 - PROB_CLIP)) for p in ps]

    return provider


# ---------------------------------------------------------------------------
# Loss and gradients (hand-derived; verified by the finite-difference test)


def loss_and_grads(
    model: FactorModel,
    flat: np.ndarray,
    labels: np.ndarray,
    class_weight: float = 2.0,
    weight_decay: float = 0.0,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Weighted binary cross-entropy (weight on the Evil class) plus L2.

    Returns the scalar loss and gradients for every parameter, including
    the L2 term on weights and embeddings (biases excluded), so analytic
    and numeric derivatives refer to the same objective.
    """
    n = flat.shape[0]
    y = labels.astype(float)
    x = model._gather(flat)
    z1 = x @ model.w1 + model.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ model.w2 + model.b2
    h2 = np.maximum(z2, 0.0)
    z = h2 @ model.w3 + model.b3
    # stable log-sigmoid pieces: log p = -log1p(e^-z), log(1-p) = -z - log1p(e^-z)
    log_p = -np.logaddexp(0.0, -z)
    log_1mp = -z + log_p
    loss = -np.mean(class_weight * y * log_p + (1.0 - y) * log_1mp)
    p = np.exp(log_p)
    dz = ((1.0 - y) * p - class_weight * y * (1.0 - p)) / n

    grads: Dict[str, np.ndarray] = {}
    grads["w3"] = h2.T @ dz
    grads["b3"] = np.array([dz.sum()])
    dh2 = np.outer(dz, model.w3)
    dz2 = dh2 * (z2 > 0.0)
    grads["w2"] = h1.T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    dh1 = dz2 @ model.w2.T
    dz1 = dh1 * (z1 > 0.0)
    grads["w1"] = x.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    dx = dz1 @ model.w1.T
    for i, table in enumerate(model.embeddings):
        lo = _EMBED_OFFSETS[i]
        grad = np.zeros_like(table)
        np.add.at(grad, flat[:, i], dx[:, lo : lo + table.shape[1]])
        grad[0] = 0.0  # the unseen row stays pinned at zero
        grads[f"emb{i}"] = grad

    if weight_decay > 0.0:
        for name, param in model.parameters().items():
            if name.startswith("b"):
                continue
            loss += 0.5 * weight_decay * float(np.sum(param * param))
            grads[name] = grads[name] + weight_decay * param
    return float(loss), grads


class _Adam:
    def __init__(self, params: Dict[str, np.ndarray], lr: float) -> None:
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.m = {k: np.zeros(v.shape if hasattr(v, "shape") else 1) for k, v in params.items()}
        self.v = {k: np.zeros_like(m) for k, m in self.m.items()}
        self.t = 0

    def step(self, model: FactorModel, grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        params = model.parameters()
        for name, grad in grads.items():
            if name == "b3":
                current = np.array([model.b3])
            else:
                current = params[name]
            m = self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            v = self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad * grad
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            update = self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if name == "b3":
                model.b3 = float(current[0] - update[0])
            else:
                current -= update


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 256
    class_weight: float = 2.0  # Good:Evil ratio in any full role deal
    max_epochs: int = 200
    patience: int = 10
    split_seed: int = 0
    init_seed: int = 0
    split_fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "batch_size": self.batch_size,
            "class_weight": self.class_weight,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "split_seed": self.split_seed,
            "init_seed": self.init_seed,
            "split_fractions": list(self.split_fractions),
        }


@dataclass
class TrainMetrics:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0
    test_f1: float = float("nan")
    test_ece_before: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "final_train_loss": self.train_loss[-1] if self.train_loss else None,
            "best_val_loss": min(self.val_loss) if self.val_loss else None,
            "best_val_f1": max(self.val_f1) if self.val_f1 else None,
            "test_f1": self.test_f1,
        }


def f1_score_binary(labels: np.ndarray, predictions: np.ndarray) -> float:
    labels = np.asarray(labels).astype(bool)
    predictions = np.asarray(predictions).astype(bool)
    tp = int(np.sum(labels & predictions))
    fp = int(np.sum(~labels & predictions))
    fn = int(np.sum(labels & ~predictions))
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def _eval_loss_f1(
    model: FactorModel, sample_set: SampleSet, class_weight: float, chunk: int = 131072
) -> Tuple[float, float]:
    total, count = 0.0, 0
    preds = np.empty(len(sample_set), dtype=bool)
    for lo in range(0, len(sample_set), chunk):
        hi = min(lo + chunk, len(sample_set))
        flat = sample_set.features[lo:hi].astype(np.int64)
        y = sample_set.labels[lo:hi].astype(float)
        z = model.logits(flat)
        log_p = -np.logaddexp(0.0, -z)
        log_1mp = -z + log_p
        total += float(-np.sum(class_weight * y * log_p + (1.0 - y) * log_1mp))
        count += hi - lo
        preds[lo:hi] = z >= 0.0
    f1 = f1_score_binary(sample_set.labels, preds)
    return total / max(count, 1), f1


def train(
    config: TrainConfig, dataset: SampleSet
) -> Tuple[FactorModel, TrainMetrics]:
    """Minimize weighted BCE with Adam; early-stop on validation loss."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    train_set, val_set, test_set = dataset.split_by_game(
        config.split_seed, config.split_fractions
    )
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("split produced an empty train or validation part")
    model = FactorModel(seed=config.init_seed)
    optimizer = _Adam(dict(model.parameters(), b3=np.array([model.b3])), config.learning_rate)
    rng = np.random.default_rng(config.split_seed + 1)
    metrics = TrainMetrics()
    best_val = float("inf")
    best_snapshot = model.clone_weights()
    stale = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_set))
        epoch_loss, n_batches = 0.0, 0
        for lo in range(0, len(order), config.batch_size):
            rows = order[lo : lo + config.batch_size]
            flat = train_set.features[rows].astype(np.int64)
            labels = train_set.labels[rows]
            loss, grads = loss_and_grads(
                model, flat, labels, config.class_weight, config.weight_decay
            )
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}"
                )
            optimizer.step(model, grads)
            epoch_loss += loss
            n_batches += 1
        val_loss, val_f1 = _eval_loss_f1(model, val_set, config.class_weight)
        metrics.train_loss.append(epoch_loss / max(n_batches, 1))
        metrics.val_loss.append(val_loss)
        metrics.val_f1.append(val_f1)
        metrics.epochs_run = epoch
        if val_loss < best_val - 1e-6:
            best_val = val_loss
            best_snapshot = model.clone_weights()
            metrics.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    model.restore_weights(best_snapshot)
    if len(test_set):
        _, metrics.test_f1 = _eval_loss_f1(model, test_set, config.class_weight)
        probs = model.predict_flat(test_set.features.astype(np.int64))
        metrics.test_ece_before = expected_calibration_error(
            probs, test_set.labels.astype(float)
        )
    model.metadata = {
        "train_config": config.to_dict(),
        "train_games": int(len(np.unique(train_set.game_ids))),
        "best_epoch": metrics.best_epoch,
        "val_loss": best_val,
    }
    return model, metrics


# ---------------------------------------------------------------------------
# Calibration


def fit_temperature(logits: np.ndarray, labels: np.ndarray) -> float:
    """Temperature minimizing NLL of sigmoid(logit / T) on held-out data."""
    z = np.asarray(logits, dtype=float)
    y = np.asarray(labels, dtype=float)
    if len(z) == 0:
        raise ValueError("cannot fit a temperature on an empty set")

    def nll(log_t: float) -> float:
        zt = z / math.exp(log_t)
        log_p = -np.logaddexp(0.0, -zt)
        log_1mp = -zt + log_p
        return float(-np.mean(y * log_p + (1.0 - y) * log_1mp))

    result = minimize_scalar(nll, bounds=(math.log(0.05), math.log(50.0)), method="bounded")
    return float(math.exp(result.x))


def calibrate(model: FactorModel, heldout: SampleSet) -> FactorModel:
    """Fit only the temperature; all other weights are left untouched."""
    if len(heldout) == 0:
        raise ValueError("held-out set is empty")
    logits = model.logits(heldout.features.astype(np.int64))
    model.temperature = fit_temperature(logits, heldout.labels)
    model.metadata["temperature"] = model.temperature
    return model


def expected_calibration_error(
    probs: np.ndarray, labels: np.ndarray, n_bins: int = 15
) -> float:
    """Standard confidence-binned ECE with confidence = max(p, 1-p)."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    confidence = np.maximum(probs, 1.0 - probs)
    predictions = (probs >= 0.5).astype(float)
    correct = (predictions == labels).astype(float)
    edges = np.linspace(0.5, 1.0, n_bins + 1)
    ece = 0.0
    n = len(probs)
    for i in range(n_bins):
        lo, hi = edges[i], edges[i + 1]
        mask = (confidence > lo) & (confidence <= hi) if i else (confidence >= lo) & (
            confidence <= hi
        )
        if not np.any(mask):
            continue
        gap = abs(correct[mask].mean() - confidence[mask].mean())
        ece += (mask.sum() / n) * gap
    return float(ece)


# ---------------------------------------------------------------------------
# Weights persistence


def save_weights(model: FactorModel, path) -> None:
    doc = {
        "format_version": WEIGHTS_FORMAT_VERSION,
        "vote_ordering": VOTE_ORDERING_TAG,
        "cardinalities": list(STATE_CARDINALITIES),
        "embed_widths": list(EMBED_WIDTHS),
        "hidden_width": HIDDEN_WIDTH,
        "temperature": model.temperature,
        "embeddings": [t.tolist() for t in model.embeddings],
        "w1": model.w1.tolist(),
        "b1": model.b1.tolist(),
        "w2": model.w2.tolist(),
        "b2": model.b2.tolist(),
        "w3": model.w3.tolist(),
        "b3": model.b3,
        "metadata": model.metadata,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_weights(path) -> FactorModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"weights file {path} is corrupt or truncated: {exc}") from exc
    if doc.get("format_version") != WEIGHTS_FORMAT_VERSION:
        raise ValueError(
            f"weights format version {doc.get('format_version')} unsupported "
            f"(expected {WEIGHTS_FORMAT_VERSION})"
        )
    if doc.get("vote_ordering") != VOTE_ORDERING_TAG:
        raise ValueError(
            f"weights were trained under vote ordering {doc.get('vote_ordering')!r}; "
            f"this build uses {VOTE_ORDERING_TAG!r}"
        )
    if tuple(doc.get("cardinalities", ())) != STATE_CARDINALITIES:
        raise ValueError("weights cardinalities do not match the codec")
    model = FactorModel(seed=0)
    try:
        model.embeddings = [np.asarray(t, dtype=float) for t in doc["embeddings"]]
        model.w1 = np.asarray(doc["w1"], dtype=float)
        model.b1 = np.asarray(doc["b1"], dtype=float)
        model.w2 = np.asarray(doc["w2"], dtype=float)
        model.b2 = np.asarray(doc["b2"], dtype=float)
        model.w3 = np.asarray(doc["w3"], dtype=float)
        model.b3 = float(doc["b3"])
        model.temperature = float(doc["temperature"])
        model.metadata = dict(doc.get("metadata", {}))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"weights file {path} is missing fields: {exc}") from exc
    for i, (card, width) in enumerate(zip(STATE_CARDINALITIES, EMBED_WIDTHS)):
        if model.embeddings[i].shape != (card, width):
            raise ValueError(f"embedding {i} has wrong shape in {path}")
    return model


def uniform_model() -> FactorModel:
    """A model whose output is exactly 0.5 everywhere (graph-only baseline
    before any training data exists)."""
    model = FactorModel(seed=0)
    for table in model.embeddings:
        table[...] = 0.0
    model.w1[...] = 0.0
    model.w2[...] = 0.0
    model.w3[...] = 0.0
    model.b1[...] = 0.0
    model.b2[...] = 0.0
    model.b3 = 0.0
    return model

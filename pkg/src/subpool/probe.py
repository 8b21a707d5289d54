"""Train and evaluate one (dataset, store, layer, pooling) probing experiment.

Protocol: fresh init per seed, Adam(0.001, 0.9, 0.999), early stopping on dev
accuracy, best-dev checkpoint evaluated on test, results averaged over seeds.
The classifier is always a pooled_dim -> 50 -> classes MLP with ReLU; for
tagging it is applied to every token.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field

import numpy as np

from .embed import layer_view
from .pool import POOLING_METHODS, make_pooling, pool_backward, pool_forward, attention_weights
from .tinynet import Adam, Mlp, softmax_xent


@dataclass
class ExperimentSpec:
    layer: object  # 0..num_layers-1 or "sum"
    pooling: str
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 5
    lr: float = 0.001
    classifier_hidden: int = 50
    attn_hidden: int = 50
    lstm_hidden: int = 50

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed required")
        if self.pooling not in POOLING_METHODS:
            raise ValueError(f"unknown pooling {self.pooling!r}")


@dataclass
class ProbeModel:
    pooler: object  # PoolingSpec
    classifier: Mlp
    labels: list  # index -> label string
    layer: object

    @property
    def params(self):
        out = {f"pool.{k}": v for k, v in self.pooler.params.items()}
        out.update({f"clf.{k}": v for k, v in self.classifier.params.items()})
        return out


@dataclass
class SeedResult:
    seed: int
    dev_acc: float
    test_acc: float
    epochs: int


@dataclass
class ExperimentResult:
    per_seed: list
    param_count: int
    seconds: float

    @property
    def dev_accs(self):
        return [r.dev_acc for r in self.per_seed]

    @property
    def test_accs(self):
        return [r.test_acc for r in self.per_seed]

    @property
    def mean_test_acc(self):
        return float(np.mean(self.test_accs))

    @property
    def std_test_acc(self):
        return float(np.std(self.test_accs))


def build_examples(pairs, layer):
    """Materialize (span matrix, label string) training items.

    pairs: list of (LayerEmbeddings, Example). Word-classification records
    yield one item per sentence; tagging records yield one item per word.
    """
    items = []
    for emb, ex in pairs:
        mat = layer_view(emb, layer)
        if ex.labels is not None:
            if len(ex.labels) != len(emb.spans):
                raise ValueError("label count does not match word spans")
            for (start, end), lab in zip(emb.spans, ex.labels):
                items.append((mat[start:end], lab))
        else:
            start, end = emb.spans[ex.target_index]
            items.append((mat[start:end], ex.label))
    return items


def _accuracy(model, items, label_index):
    correct = 0
    for mat, lab in items:
        pooled, _ = pool_forward(model.pooler, mat)
        logits, _ = model.classifier.forward(pooled)
        if model.labels[int(np.argmax(logits))] == lab:
            correct += 1
    return correct / len(items) if items else 0.0


def evaluate(model, pairs):
    """Word-level label accuracy of a trained model on a split."""
    items = build_examples(pairs, model.layer)
    return _accuracy(model, items, None)


def _train_one_seed(train_items, dev_items, spec, hidden, labels, seed):
    rng = np.random.default_rng(seed)
    pooler = make_pooling(
        spec.pooling, hidden, rng,
        attn_hidden=spec.attn_hidden, lstm_hidden=spec.lstm_hidden,
    )
    classifier = Mlp.create(
        [pooler.output_dim, spec.classifier_hidden, len(labels)], rng
    )
    model = ProbeModel(pooler, classifier, labels, None)
    label_to_idx = {lab: i for i, lab in enumerate(labels)}
    params = model.params
    opt = Adam(params, lr=spec.lr)
    best_acc = -1.0
    best_params = None
    best_epoch = 0
    since_improved = 0
    n = len(train_items)
    for epoch in range(spec.max_epochs):
        order = np.random.default_rng([seed, epoch]).permutation(n)
        for lo in range(0, n, spec.batch_size):
            batch = order[lo : lo + spec.batch_size]
            grads = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
            for i in batch:
                mat, lab = train_items[i]
                pooled, pcache = pool_forward(pooler, mat)
                logits, ccache = classifier.forward(pooled)
                _, dlogits = softmax_xent(logits, label_to_idx[lab])
                dpooled, cgrads = classifier.backward(ccache, dlogits)
                _, pgrads = pool_backward(pooler, pcache, dpooled)
                for k, g in cgrads.items():
                    grads[f"clf.{k}"] += g
                for k, g in pgrads.items():
                    grads[f"pool.{k}"] += g
            for k in grads:
                grads[k] /= len(batch)
            opt.step(grads)
        dev_acc = _dev_accuracy(pooler, classifier, labels, dev_items)
        if dev_acc > best_acc:  # ties keep the earlier checkpoint
            best_acc = dev_acc
            best_params = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch
            since_improved = 0
        else:
            since_improved += 1
            if since_improved >= spec.patience:
                break
    for k, v in params.items():
        v[...] = best_params[k]
    return model, best_acc, best_epoch + 1


def _dev_accuracy(pooler, classifier, labels, items):
    correct = 0
    for mat, lab in items:
        pooled, _ = pool_forward(pooler, mat)
        logits, _ = classifier.forward(pooled)
        if labels[int(np.argmax(logits))] == lab:
            correct += 1
    return correct / len(items) if items else 0.0


def run_experiment(data, spec, return_models=False):
    """data: {"train"|"dev"|"test": list of (LayerEmbeddings, Example)}."""
    started = time.perf_counter()
    for split in ("train", "dev", "test"):
        if not data.get(split):
            raise ValueError(f"empty {split} split")
    hidden = data["train"][0][0].hidden
    train_items = build_examples(data["train"], spec.layer)
    dev_items = build_examples(data["dev"], spec.layer)
    test_items = build_examples(data["test"], spec.layer)
    labels = sorted({lab for _, lab in train_items})
    per_seed = []
    models = []
    n_params = None
    for seed in spec.seeds:
        model, dev_acc, epochs = _train_one_seed(
            train_items, dev_items, spec, hidden, labels, seed
        )
        model.layer = spec.layer
        test_acc = _dev_accuracy(model.pooler, model.classifier, labels, test_items)
        per_seed.append(SeedResult(seed, dev_acc, test_acc, epochs))
        models.append(model)
        if n_params is None:
            n_params = int(sum(p.size for p in model.params.values()))
    result = ExperimentResult(per_seed, n_params, time.perf_counter() - started)
    if return_models:
        return result, models
    return result


def attention_locations(model, pairs):
    """Where the attn pooler puts its highest weight, over all target words.

    Returns proportions over {"first", "last", "middle", "single"}; argmax
    ties resolve to the lowest index.
    """
    if model.pooler.method != "attn":
        raise ValueError("attention_locations requires attn pooling")
    counts = {"first": 0, "last": 0, "middle": 0, "single": 0}
    items = build_examples(pairs, model.layer)
    for mat, _ in items:
        n = mat.shape[0]
        if n == 1:
            counts["single"] += 1
            continue
        weights = attention_weights(model.pooler, mat)
        top = int(np.argmax(weights))
        if top == 0:
            counts["first"] += 1
        elif top == n - 1:
            counts["last"] += 1
        else:
            counts["middle"] += 1
    total = sum(counts.values())
    if total == 0:
        raise ValueError("no target words")
    return {k: v / total for k, v in counts.items()}

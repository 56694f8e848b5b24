"""Cross-entropy training with decoupled weight decay.

The loss is one fused tape node: forward is a log-sum-exp, backward is
(softmax - onehot)/batch. The optimizer applies decay directly to the
weights before the adaptive step, so decay strength does not pass
through the moment estimates.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import batches
from .layers import ModelSpec, init_model
from .tensor import NumericsError, Tensor, make_node, no_grad


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels under softmax logits."""
    labels = np.asarray(labels)
    z = logits.data
    b = z.shape[0]
    if labels.shape != (b,):
        raise ValueError(
            f"labels shape {labels.shape} does not match batch {b}")
    if b and (labels.min() < 0 or labels.max() >= z.shape[1]):
        raise ValueError(
            f"labels must lie in [0, {z.shape[1]}), got range "
            f"[{labels.min()}, {labels.max()}]")
    shift = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shift).sum(axis=1, keepdims=True))
    log_p = shift - lse
    value = -log_p[np.arange(b), labels].mean()

    def vjp(g):
        soft = np.exp(log_p)
        soft[np.arange(b), labels] -= 1.0
        return (g * soft / b,)

    return make_node(np.array(value), (logits,), vjp, "cross_entropy")


def lr_schedule(base, gamma, epoch):
    """Exponential decay; epoch 0 runs at the base rate."""
    return base * gamma ** epoch


class AdamW:
    """Adam with bias correction and decoupled weight decay."""

    def __init__(self, params, lr=1e-3, weight_decay=1e-4,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for _, p in self.params]
        self.v = [np.zeros_like(p.data) for _, p in self.params]

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, (_, p) in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            # decay first, on the weights themselves
            data = p.data * (1.0 - lr * self.weight_decay)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            p.data = data - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def accuracy(pred, true):
    pred = np.asarray(pred)
    true = np.asarray(true)
    return float((pred == true).mean())


def macro_f1(pred, true, num_classes=10):
    """Unweighted mean of per-class F1. A class with no precision and no
    recall mass contributes 0."""
    pred = np.asarray(pred)
    true = np.asarray(true)
    scores = []
    for c in range(num_classes):
        tp = int(np.sum((pred == c) & (true == c)))
        fp = int(np.sum((pred == c) & (true != c)))
        fn = int(np.sum((pred != c) & (true == c)))
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 2.0 * tp / denom)
    return float(np.mean(scores))


def metrics(pred, true, num_classes=10):
    return {"accuracy": accuracy(pred, true),
            "macro_f1": macro_f1(pred, true, num_classes)}


def evaluate(model, dataset, batch_size=256):
    """Full-split loss, accuracy and macro F1 without touching the tape."""
    losses = []
    preds = np.empty(len(dataset), dtype=np.int64)
    with no_grad():
        for start in range(0, len(dataset), batch_size):
            stop = min(start + batch_size, len(dataset))
            x = Tensor(dataset.images[start:stop])
            y = dataset.labels[start:stop]
            logits = model.forward(x, training=False)
            losses.append(float(cross_entropy(logits, y).data) * (stop - start))
            preds[start:stop] = logits.data.argmax(axis=1)
    loss = sum(losses) / len(dataset)
    return loss, accuracy(preds, dataset.labels), \
        macro_f1(preds, dataset.labels, dataset.num_classes)


@dataclass
class TrainConfig:
    model: ModelSpec
    epochs: int = 25
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 1e-4
    gamma: float = 0.8
    runs: int = 1
    seed: int = 0


@dataclass
class EpochRecord:
    run_seed: int
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    test_acc: float
    macro_f1: float
    seconds: float


@dataclass
class RunHistory:
    run_seed: int
    records: list = field(default_factory=list)

    @property
    def final_test_acc(self):
        return self.records[-1].test_acc

    @property
    def final_f1(self):
        return self.records[-1].macro_f1


def train_model(cfg, train_ds, test_ds, run_seed=None, progress=None):
    """Train one model for cfg.epochs and score it after every epoch.

    Training metrics come from a full pass over the training split after
    the epoch's updates, not from running batch averages. Returns the
    trained model and its history; raises NumericsError with the epoch
    and batch index if the loss ever leaves the finite range.
    """
    seed = cfg.seed if run_seed is None else run_seed
    model = init_model(replace(cfg.model, seed=seed))
    opt = AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    history = RunHistory(run_seed=seed)
    for epoch in range(cfg.epochs):
        t0 = time.time()
        lr = lr_schedule(cfg.lr, cfg.gamma, epoch)
        for i, (xb, yb) in enumerate(
                batches(train_ds, cfg.batch_size, seed, epoch)):
            logits = model.forward(Tensor(xb), training=True)
            loss = cross_entropy(logits, yb)
            if not np.isfinite(loss.data):
                raise NumericsError(
                    f"non-finite loss at epoch {epoch} batch {i}")
            opt.zero_grad()
            loss.backward()
            opt.step(lr)
        train_loss, train_acc, _ = evaluate(model, train_ds)
        _, test_acc, f1 = evaluate(model, test_ds)
        rec = EpochRecord(
            run_seed=seed, epoch=epoch, lr=lr, train_loss=train_loss,
            train_acc=train_acc, test_acc=test_acc, macro_f1=f1,
            seconds=time.time() - t0)
        history.records.append(rec)
        if progress:
            progress(rec)
    return model, history


@dataclass
class MultiRunSummary:
    histories: list
    mean_acc: float
    std_acc: float
    mean_f1: float
    std_f1: float
    last_model: object = None

    @property
    def accs(self):
        return [h.final_test_acc for h in self.histories]


def _spread(values):
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1))


def multi_run(cfg, train_ds, test_ds, progress=None):
    """Repeat training over consecutive seeds cfg.seed .. cfg.seed+runs-1
    and aggregate final test metrics as mean and sample deviation."""
    histories = []
    model = None
    for r in range(cfg.runs):
        model, hist = train_model(cfg, train_ds, test_ds,
                                  run_seed=cfg.seed + r, progress=progress)
        histories.append(hist)
    accs = [h.final_test_acc for h in histories]
    f1s = [h.final_f1 for h in histories]
    return MultiRunSummary(
        histories=histories,
        mean_acc=float(np.mean(accs)), std_acc=_spread(accs),
        mean_f1=float(np.mean(f1s)), std_f1=_spread(f1s),
        last_model=model)


def write_metrics(path, summary, config=None):
    """JSONL: one line per epoch record, then one aggregate line."""
    with open(path, "w") as f:
        for hist in summary.histories:
            for rec in hist.records:
                f.write(json.dumps(vars(rec)) + "\n")
        final = {
            "aggregate": {
                "mean_acc": summary.mean_acc,
                "std_acc": summary.std_acc,
                "mean_f1": summary.mean_f1,
                "std_f1": summary.std_f1,
                "runs": len(summary.histories),
            }
        }
        if config is not None:
            final["config"] = config
        f.write(json.dumps(final) + "\n")

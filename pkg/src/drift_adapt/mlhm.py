"""Dense-network regressor from feature vectors to per-element fields.

The estimator maps one impact's feature vector to a full field of
per-element values (strain or strain rate).  Training minimizes the
batch-mean per-sample sum of squared errors plus an L2 penalty on the
weight matrices, with Adam updates, inverted dropout on hidden layers,
and early stopping on a validation split with best-weights restore.

Targets are standardized internally using training-split statistics
(stored on the model and undone in ``predict``), so label scale does not
interact with the learning rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from ._net import Adam, DenseNet
from .errors import ConfigError, DimensionError, DivergenceError


@dataclass(frozen=True)
class LayerSpec:
    """One hidden layer: width, activation, dropout rate on its output."""

    width: int
    activation: str = "relu"
    dropout: float = 0.0


@dataclass(frozen=True)
class MlhmArch:
    input_dim: int
    output_dim: int
    hidden: tuple[LayerSpec, ...]

    def validate(self) -> None:
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError("input_dim and output_dim must be positive")
        for spec in self.hidden:
            if spec.width < 1:
                raise ConfigError(f"hidden width must be positive, got {spec.width}")
            if not 0.0 <= spec.dropout < 1.0:
                raise ConfigError(f"dropout must be in [0, 1), got {spec.dropout}")

    def dims(self) -> list[int]:
        return [self.input_dim] + [h.width for h in self.hidden] + [self.output_dim]

    def activations(self) -> list[str]:
        return [h.activation for h in self.hidden] + ["linear"]

    def dropout_rates(self) -> list[float]:
        return [h.dropout for h in self.hidden] + [0.0]

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden": [[h.width, h.activation, h.dropout] for h in self.hidden],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlhmArch":
        hidden = tuple(LayerSpec(int(w), str(a), float(r)) for w, a, r in d["hidden"])
        return cls(int(d["input_dim"]), int(d["output_dim"]), hidden)


def default_arch(input_dim: int, output_dim: int) -> MlhmArch:
    """Desk-scale stack: 64/32/16 hidden units, dropout on the first two."""
    hidden = (LayerSpec(64, "relu", 0.5), LayerSpec(32, "relu", 0.5), LayerSpec(16, "relu", 0.0))
    return MlhmArch(input_dim, output_dim, hidden)


def paper_arch(input_dim: int = 510, output_dim: int = 4124) -> MlhmArch:
    """Full-scale stack: 500/300/100 hidden units, dropout on the first two."""
    hidden = (
        LayerSpec(500, "relu", 0.5),
        LayerSpec(300, "relu", 0.5),
        LayerSpec(100, "relu", 0.0),
    )
    return MlhmArch(input_dim, output_dim, hidden)


@dataclass
class TrainConfig:
    epochs: int = 150
    batch_size: int = 64
    learning_rate: float = 1e-3
    l2_weight: float = 1e-5
    train_fraction: float = 0.70
    val_fraction: float = 0.15
    test_fraction: float = 0.15
    early_stop_patience: int = 20
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0.0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.l2_weight < 0.0:
            raise ConfigError(f"l2_weight must be >= 0, got {self.l2_weight}")
        fracs = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f <= 0.0 for f in fracs):
            raise ConfigError(f"split fractions must all be positive, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(fracs)}")
        if self.early_stop_patience < 1:
            raise ConfigError(
                f"early_stop_patience must be >= 1, got {self.early_stop_patience}"
            )


@dataclass
class MlhmModel:
    """Trained regressor: the network plus split bookkeeping and history."""

    net: DenseNet
    arch: MlhmArch
    config: TrainConfig
    history: dict[str, list[float]]
    split: dict[str, np.ndarray] = field(default_factory=dict)
    y_center: np.ndarray | None = None
    y_scale: np.ndarray | None = None
    # Provenance stamps set by the pipeline before saving.
    schema_fingerprint: str = ""
    projection_hash: str = ""

    def predict(self, x) -> np.ndarray:
        values = np.asarray(getattr(x, "values", x), dtype=np.float64)
        out = self.net.forward(values)
        if self.y_scale is not None:
            out = out * self.y_scale
        if self.y_center is not None:
            out = out + self.y_center
        return out


def predict(model: MlhmModel, x) -> np.ndarray:
    return model.predict(x)


def _data_loss(pred: np.ndarray, y: np.ndarray) -> float:
    r = pred - y
    return float(np.mean(np.sum(r * r, axis=1)))


def _weight_penalty(net: DenseNet, l2_weight: float) -> float:
    if l2_weight == 0.0:
        return 0.0
    return l2_weight * float(sum(np.sum(w * w) for w in net.weights))


def loss_and_gradients(model_or_net, x, y, l2_weight: float = 0.0):
    """Loss and parameter gradients for a deterministic (no dropout) pass.

    Loss is mean over samples of the summed squared error per sample,
    plus ``l2_weight`` times the sum of squared weight entries (biases
    are not penalized).  Returns (loss, weight_grads, bias_grads).
    """
    net: DenseNet = getattr(model_or_net, "net", model_or_net)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"x has {x.shape[0]} rows, y has {y.shape[0]}")
    pred, cache = net.forward(x, want_cache=True)
    loss = _data_loss(pred, y) + _weight_penalty(net, l2_weight)
    d_out = 2.0 * (pred - y) / x.shape[0]
    _, grads_w, grads_b = net.backward(cache, d_out)
    if l2_weight != 0.0:
        grads_w = [gw + 2.0 * l2_weight * w for gw, w in zip(grads_w, net.weights)]
    return loss, grads_w, grads_b


def gradient_check(model_or_net, x, y, l2_weight: float = 0.0, eps: float = 1e-5) -> float:
    """Max relative disagreement between backprop and central differences.

    The relative error per parameter is |g_a - g_n| / max(|g_a|, |g_n|,
    1e-12); the maximum over all parameters is returned.
    """
    if not 1e-6 <= eps <= 1e-4:
        raise ConfigError(f"eps must be within [1e-6, 1e-4], got {eps}")
    net: DenseNet = getattr(model_or_net, "net", model_or_net)
    _, grads_w, grads_b = loss_and_gradients(net, x, y, l2_weight)
    analytic = grads_w + grads_b
    worst = 0.0
    for p, g_a in zip(net.params(), analytic):
        flat = p.reshape(-1)
        g_flat = np.asarray(g_a).reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + eps
            up, _, _ = loss_and_gradients(net, x, y, l2_weight)
            flat[i] = orig - eps
            dn, _, _ = loss_and_gradients(net, x, y, l2_weight)
            flat[i] = orig
            g_n = (up - dn) / (2.0 * eps)
            err = abs(g_flat[i] - g_n) / max(abs(g_flat[i]), abs(g_n), 1e-12)
            worst = max(worst, err)
    return worst


def _three_way_split(n: int, cfg: TrainConfig, g: np.random.Generator):
    perm = g.permutation(n)
    # Every partition gets at least one sample; train absorbs rounding.
    n_val = max(1, int(round(cfg.val_fraction * n)))
    n_test = max(1, int(round(cfg.test_fraction * n)))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise DimensionError(f"{n} samples cannot fill a three-way split")
    return {
        "train": perm[:n_train],
        "val": perm[n_train:n_train + n_val],
        "test": perm[n_train + n_val:],
    }


def train_mlhm(x, y, config: TrainConfig | None = None,
               arch: MlhmArch | None = None) -> MlhmModel:
    """Fit the regressor on (features, fields) with a seeded 70/15/15 split.

    Deterministic for a fixed config: split, init, batch order, and
    dropout masks all derive from ``config.seed``.  Zero epochs returns
    the freshly initialized model with empty history.
    """
    cfg = config or TrainConfig()
    cfg.validate()
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise DimensionError("x and y must both be 2-d")
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"x has {x.shape[0]} rows, y has {y.shape[0]}")
    if x.shape[0] < 10:
        raise DimensionError(f"need at least 10 samples to split, got {x.shape[0]}")
    if arch is None:
        arch = default_arch(x.shape[1], y.shape[1])
    arch.validate()
    if arch.input_dim != x.shape[1] or arch.output_dim != y.shape[1]:
        raise DimensionError(
            f"arch expects {arch.input_dim}->{arch.output_dim}, "
            f"data is {x.shape[1]}->{y.shape[1]}"
        )

    split = _three_way_split(x.shape[0], cfg, rng.generator(cfg.seed, "split"))
    x_train, y_train = x[split["train"]], y[split["train"]]
    x_val, y_val = x[split["val"]], y[split["val"]]

    y_center = y_train.mean(axis=0)
    y_scale = np.maximum(y_train.std(axis=0), 1e-8)
    yt = (y_train - y_center) / y_scale
    yv = (y_val - y_center) / y_scale if len(x_val) else y_val

    net = DenseNet.create(arch.dims(), arch.activations(), rng.generator(cfg.seed, "init"))
    adam = Adam(net.params(), cfg.learning_rate)
    dropout = arch.dropout_rates()
    g_train = rng.generator(cfg.seed, "train")
    history: dict[str, list[float]] = {"train_loss": [], "val_loss": []}

    best_val = np.inf
    best_net = None
    bad_epochs = 0
    n_train = x_train.shape[0]
    for epoch in range(cfg.epochs):
        order = g_train.permutation(n_train)
        batch_losses = []
        for start in range(0, n_train, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x_train[idx], yt[idx]
            pred, cache = net.forward(xb, dropout=dropout, g=g_train, want_cache=True)
            loss = _data_loss(pred, yb) + _weight_penalty(net, cfg.l2_weight)
            batch_losses.append(loss)
            d_out = 2.0 * (pred - yb) / xb.shape[0]
            _, grads_w, grads_b = net.backward(cache, d_out)
            if cfg.l2_weight != 0.0:
                grads_w = [gw + 2.0 * cfg.l2_weight * w for gw, w in zip(grads_w, net.weights)]
            adam.step(net.params(), grads_w + grads_b)
        train_loss = float(np.mean(batch_losses))
        history["train_loss"].append(train_loss)
        if not np.isfinite(train_loss):
            raise DivergenceError(epoch)
        if len(x_val):
            val_loss = _data_loss(net.forward(x_val), yv)
            history["val_loss"].append(val_loss)
            if not np.isfinite(val_loss):
                raise DivergenceError(epoch)
            if val_loss < best_val - 1e-12:
                best_val = val_loss
                best_net = net.copy()
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs >= cfg.early_stop_patience:
                    break
    if best_net is not None:
        net.set_from(best_net)
    return MlhmModel(net, arch, cfg, history, split, y_center, y_scale)


def save_model(model: MlhmModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "arch": model.arch.to_dict(),
        "net": model.net.to_dict(),
        "history": model.history,
        "config": vars(model.config),
        "split": {k: np.asarray(v).tolist() for k, v in model.split.items()},
        "y_center": None if model.y_center is None else model.y_center.tolist(),
        "y_scale": None if model.y_scale is None else model.y_scale.tolist(),
        "schema_fingerprint": model.schema_fingerprint,
        "projection_hash": model.projection_hash,
    }
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_model(path: str | Path) -> MlhmModel:
    doc = json.loads(Path(path).read_text())
    cfg = TrainConfig(**doc["config"])
    return MlhmModel(
        DenseNet.from_dict(doc["net"]),
        MlhmArch.from_dict(doc["arch"]),
        cfg,
        {k: list(v) for k, v in doc["history"].items()},
        {k: np.array(v, dtype=np.int64) for k, v in doc["split"].items()},
        None if doc["y_center"] is None else np.array(doc["y_center"]),
        None if doc["y_scale"] is None else np.array(doc["y_scale"]),
        doc.get("schema_fingerprint", ""),
        doc.get("projection_hash", ""),
    )

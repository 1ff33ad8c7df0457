"""Adversarial feature translation and kernel-based sample reweighting.

``train_cyclegan`` fits two small generators on feature vectors: G_s
maps source-like rows toward the target domain and G_t maps target-like
rows back toward the source.  Noise enters as random feature dropout on
generator inputs.  The generators minimize

    lambda_s * ||G_t(G_s(x_s, z), z') - x_s||
  + lambda_t * ||G_s(G_t(x_t, z'), z) - x_t||
  - D_s(G_t(x_t, z')) - D_t(G_s(x_s, z))

while the sigmoid-output discriminators D_s and D_t maximize their
component; the ascent direction additionally includes +D(real) so the
discriminators see both sides of each domain.

``kmm_weights`` solves kernel mean matching: nonnegative weights beta on
adjusted rows, bounded by ``b_max`` and with mean pinned near one, that
pull the weighted kernel mean of the adjusted sample toward the
reference sample.  Solved by projected gradient descent on the quadratic
objective; used to reweight cycle-GAN-translated rows (the shift-GAN
combination).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, rng
from ._net import Adam, DenseNet
from .errors import ConfigError, DimensionError, DivergenceError, SchemaError
from .featurize import FeatureMatrix


@dataclass
class GanConfig:
    generator_widths: tuple[int, ...] = (64, 64)
    discriminator_widths: tuple[int, ...] = (64, 64)
    lambda_s: float = 1.0
    lambda_t: float = 1.0
    noise_dropout_p: float = 0.1
    cycle_norm: str = "l2"
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    d_weight_decay: float = 1e-2
    d_steps: int = 1
    epochs: int = 200
    batch_size: int = 64
    seed: int = 0

    def validate(self) -> None:
        if any(w < 1 for w in self.generator_widths + self.discriminator_widths):
            raise ConfigError("network widths must be positive")
        if self.lambda_s <= 0.0 or self.lambda_t <= 0.0:
            raise ConfigError("cycle weights lambda_s and lambda_t must be positive")
        if not 0.0 <= self.noise_dropout_p < 1.0:
            raise ConfigError(
                f"noise_dropout_p must be in [0, 1), got {self.noise_dropout_p}"
            )
        if self.cycle_norm not in ("l1", "l2"):
            raise ConfigError(f"cycle_norm must be 'l1' or 'l2', got {self.cycle_norm!r}")
        if self.lr_g <= 0.0 or self.lr_d <= 0.0:
            raise ConfigError("learning rates must be positive")
        if self.d_weight_decay < 0.0:
            raise ConfigError(f"d_weight_decay must be >= 0, got {self.d_weight_decay}")
        if self.d_steps < 1:
            raise ConfigError(f"d_steps must be >= 1, got {self.d_steps}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class CycleGanModel:
    """Trained translator pair with discriminators and standardization stats."""

    g_s: DenseNet
    g_t: DenseNet
    d_s: DenseNet
    d_t: DenseNet
    center: np.ndarray
    scale: np.ndarray
    config: GanConfig
    history: dict[str, list[float]] = field(default_factory=dict)
    schema_fingerprint: str | None = None

    @classmethod
    def identity(cls, dim: int) -> "CycleGanModel":
        """Translators that pass features through unchanged (for testing)."""
        return cls(
            DenseNet.identity(dim),
            DenseNet.identity(dim),
            DenseNet.identity(dim),
            DenseNet.identity(dim),
            np.zeros(dim),
            np.ones(dim),
            GanConfig(),
        )


def _values_of(x, name: str) -> tuple[np.ndarray, str | None]:
    values = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError(f"{name} must be 2-d, got shape {values.shape}")
    schema = getattr(x, "schema", None)
    return values, (schema.fingerprint() if schema is not None else None)


def _generator_net(dim: int, widths: tuple[int, ...], g: np.random.Generator) -> DenseNet:
    dims = [dim] + list(widths) + [dim]
    acts = ["relu"] * len(widths) + ["linear"]
    return DenseNet.create(dims, acts, g)


def _discriminator_net(dim: int, widths: tuple[int, ...], g: np.random.Generator) -> DenseNet:
    dims = [dim] + list(widths) + [1]
    acts = ["relu"] * len(widths) + ["sigmoid"]
    return DenseNet.create(dims, acts, g)


def _mask(x: np.ndarray, p: float, g: np.random.Generator) -> np.ndarray:
    if p <= 0.0:
        return x
    return x * (g.random(x.shape) >= p)


def _cycle_loss_and_grad(residual: np.ndarray, norm: str):
    n = residual.shape[0]
    if norm == "l1":
        loss = float(np.mean(np.sum(np.abs(residual), axis=1)))
        grad = np.sign(residual) / n
    else:
        norms = np.sqrt(np.sum(residual * residual, axis=1))
        loss = float(np.mean(norms))
        safe = np.maximum(norms, 1e-12)
        grad = residual / safe[:, None] / n
    return loss, grad


def train_cyclegan(x_s, x_t, config: GanConfig | None = None) -> CycleGanModel:
    """Fit the translator pair on source and target feature rows.

    Rows are standardized by source statistics before training; the
    stats are stored on the model so translation works in raw feature
    space.  Fully deterministic for a fixed config.
    """
    cfg = config or GanConfig()
    cfg.validate()
    vs, fp_s = _values_of(x_s, "x_s")
    vt, fp_t = _values_of(x_t, "x_t")
    if vs.shape[1] != vt.shape[1]:
        raise DimensionError(f"feature dims differ: {vs.shape[1]} vs {vt.shape[1]}")
    if fp_s is not None and fp_t is not None and fp_s != fp_t:
        raise SchemaError("source and target feature schemas differ")
    if vs.shape[0] < 2 or vt.shape[0] < 2:
        raise DimensionError("need at least two rows per domain")
    dim = vs.shape[1]

    center = vs.mean(axis=0)
    scale = np.maximum(vs.std(axis=0), 1e-8)
    zs = (vs - center) / scale
    zt = (vt - center) / scale

    g_init = rng.generator(cfg.seed, "gan", "init")
    g_s = _generator_net(dim, cfg.generator_widths, g_init)
    g_t = _generator_net(dim, cfg.generator_widths, g_init)
    d_s = _discriminator_net(dim, cfg.discriminator_widths, g_init)
    d_t = _discriminator_net(dim, cfg.discriminator_widths, g_init)
    opt_gs = Adam(g_s.params(), cfg.lr_g)
    opt_gt = Adam(g_t.params(), cfg.lr_g)
    opt_ds = Adam(d_s.params(), cfg.lr_d)
    opt_dt = Adam(d_t.params(), cfg.lr_d)

    g_train = rng.generator(cfg.seed, "gan", "train")
    history: dict[str, list[float]] = {
        "cycle_s": [], "cycle_t": [], "adv": [], "disc_s": [], "disc_t": [], "total_g": [],
    }
    n_batch = max(1, min(vs.shape[0], vt.shape[0]) // cfg.batch_size)
    for epoch in range(cfg.epochs):
        order_s = g_train.permutation(vs.shape[0])
        order_t = g_train.permutation(vt.shape[0])
        sums = {k: 0.0 for k in history}
        for b in range(n_batch):
            xs = zs[order_s[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            xt = zt[order_t[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            if xs.shape[0] == 0 or xt.shape[0] == 0:
                continue

            for _ in range(cfg.d_steps):
                fake_t = g_s.forward(_mask(xs, cfg.noise_dropout_p, g_train))
                fake_s = g_t.forward(_mask(xt, cfg.noise_dropout_p, g_train))
                for disc, opt, real, fake, key in (
                    (d_s, opt_ds, xs, fake_s, "disc_s"),
                    (d_t, opt_dt, xt, fake_t, "disc_t"),
                ):
                    out_r, cache_r = disc.forward(real, want_cache=True)
                    out_f, cache_f = disc.forward(fake, want_cache=True)
                    # minimize mean D(fake) - mean D(real)
                    loss_d = float(np.mean(out_f) - np.mean(out_r))
                    _, gw_f, gb_f = disc.backward(cache_f, np.full_like(out_f, 1.0 / out_f.shape[0]))
                    _, gw_r, gb_r = disc.backward(cache_r, np.full_like(out_r, -1.0 / out_r.shape[0]))
                    grads = [a + b2 for a, b2 in zip(gw_f + gb_f, gw_r + gb_r)]
                    if cfg.d_weight_decay > 0.0:
                        # keeps the sigmoid out of its saturated regime so the
                        # discriminator can keep tracking the generators
                        n_w = len(disc.weights)
                        for i, w in enumerate(disc.weights):
                            grads[i] = grads[i] + 2.0 * cfg.d_weight_decay * w
                        for i, bias in enumerate(disc.biases):
                            grads[n_w + i] = grads[n_w + i] + 2.0 * cfg.d_weight_decay * bias
                    opt.step(disc.params(), grads)
                    sums[key] += loss_d / (n_batch * cfg.d_steps)

            # generator step; the translated batches feed both the cycle
            # chains and the adversarial terms, as in the joint loss
            gs_out, cache_gs = g_s.forward(_mask(xs, cfg.noise_dropout_p, g_train), want_cache=True)
            mask_s2 = _mask(np.ones_like(gs_out), cfg.noise_dropout_p, g_train)
            cyc_s, cache_cyc_s = g_t.forward(gs_out * mask_s2, want_cache=True)
            res_s = cyc_s - xs
            loss_cs, d_res_s = _cycle_loss_and_grad(res_s, cfg.cycle_norm)

            gt_out, cache_gt = g_t.forward(_mask(xt, cfg.noise_dropout_p, g_train), want_cache=True)
            mask_t2 = _mask(np.ones_like(gt_out), cfg.noise_dropout_p, g_train)
            cyc_t, cache_cyc_t = g_s.forward(gt_out * mask_t2, want_cache=True)
            res_t = cyc_t - xt
            loss_ct, d_res_t = _cycle_loss_and_grad(res_t, cfg.cycle_norm)

            out_ds, cache_ds = d_s.forward(gt_out, want_cache=True)
            out_dt, cache_dt = d_t.forward(gs_out, want_cache=True)
            loss_adv = float(-np.mean(out_ds) - np.mean(out_dt))

            # backprop the source cycle chain
            d_a2, gw_gt_1, gb_gt_1 = g_t.backward(cache_cyc_s, cfg.lambda_s * d_res_s)
            d_gs_out = d_a2 * mask_s2
            # backprop the target cycle chain
            d_b2, gw_gs_2, gb_gs_2 = g_s.backward(cache_cyc_t, cfg.lambda_t * d_res_t)
            d_gt_out = d_b2 * mask_t2
            # adversarial gradients reach the generators through frozen discriminators
            d_gt_adv, _, _ = d_s.backward(cache_ds, np.full_like(out_ds, -1.0 / out_ds.shape[0]))
            d_gs_adv, _, _ = d_t.backward(cache_dt, np.full_like(out_dt, -1.0 / out_dt.shape[0]))

            _, gw_gs_1, gb_gs_1 = g_s.backward(cache_gs, d_gs_out + d_gs_adv)
            _, gw_gt_2, gb_gt_2 = g_t.backward(cache_gt, d_gt_out + d_gt_adv)

            grads_gs = [a + b2 for a, b2 in zip(gw_gs_1 + gb_gs_1, gw_gs_2 + gb_gs_2)]
            grads_gt = [a + b2 for a, b2 in zip(gw_gt_1 + gb_gt_1, gw_gt_2 + gb_gt_2)]
            opt_gs.step(g_s.params(), grads_gs)
            opt_gt.step(g_t.params(), grads_gt)

            sums["cycle_s"] += loss_cs / n_batch
            sums["cycle_t"] += loss_ct / n_batch
            sums["adv"] += loss_adv / n_batch
            sums["total_g"] += (
                cfg.lambda_s * loss_cs + cfg.lambda_t * loss_ct + loss_adv
            ) / n_batch
        for k in history:
            history[k].append(sums[k])
        if not all(np.isfinite(sums[k]) for k in sums):
            raise DivergenceError(epoch)
    return CycleGanModel(g_s, g_t, d_s, d_t, center, scale, cfg, history,
                         fp_s if fp_s is not None else fp_t)


def cycle_losses(model: CycleGanModel, x_s, x_t) -> tuple[float, float]:
    """Noise-free cycle-consistency losses (source chain, target chain).

    Rows pass through both generators deterministically in standardized
    space; identity generators therefore give exactly zero on both
    chains.
    """
    vs, _ = _values_of(x_s, "x_s")
    vt, _ = _values_of(x_t, "x_t")
    zs = (vs - model.center) / model.scale
    zt = (vt - model.center) / model.scale
    loss_s, _ = _cycle_loss_and_grad(model.g_t.forward(model.g_s.forward(zs)) - zs,
                                     model.config.cycle_norm)
    loss_t, _ = _cycle_loss_and_grad(model.g_s.forward(model.g_t.forward(zt)) - zt,
                                     model.config.cycle_norm)
    return loss_s, loss_t


def translate_to_source(model: CycleGanModel, x_t) -> FeatureMatrix | np.ndarray:
    """Map target-domain feature rows into the source domain via G_t.

    Translation is deterministic (no input noise at inference).  Returns
    a FeatureMatrix when given one, otherwise a plain array.
    """
    values, fp = _values_of(x_t, "x_t")
    if model.schema_fingerprint is not None and fp is not None:
        if fp != model.schema_fingerprint:
            raise SchemaError("feature schema does not match the translator")
    if values.shape[1] != model.g_t.input_dim:
        raise DimensionError(
            f"{values.shape[1]} columns vs translator dim {model.g_t.input_dim}"
        )
    z = (values - model.center) / model.scale
    out = model.g_t.forward(z) * model.scale + model.center
    if isinstance(x_t, FeatureMatrix):
        return FeatureMatrix(out, x_t.schema, list(x_t.impact_ids), x_t.domain_tag + "-to-source")
    return out


def save_cyclegan(model: CycleGanModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "g_s": model.g_s.to_dict(),
        "g_t": model.g_t.to_dict(),
        "d_s": model.d_s.to_dict(),
        "d_t": model.d_t.to_dict(),
        "center": model.center.tolist(),
        "scale": model.scale.tolist(),
        "config": {k: list(v) if isinstance(v, tuple) else v
                   for k, v in vars(model.config).items()},
        "history": model.history,
        "schema_fingerprint": model.schema_fingerprint,
    }
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_cyclegan(path: str | Path) -> CycleGanModel:
    doc = json.loads(Path(path).read_text())
    raw_cfg = dict(doc["config"])
    raw_cfg["generator_widths"] = tuple(raw_cfg["generator_widths"])
    raw_cfg["discriminator_widths"] = tuple(raw_cfg["discriminator_widths"])
    return CycleGanModel(
        DenseNet.from_dict(doc["g_s"]),
        DenseNet.from_dict(doc["g_t"]),
        DenseNet.from_dict(doc["d_s"]),
        DenseNet.from_dict(doc["d_t"]),
        np.array(doc["center"]),
        np.array(doc["scale"]),
        GanConfig(**raw_cfg),
        {k: list(v) for k, v in doc["history"].items()},
        doc["schema_fingerprint"],
    )


@dataclass
class KmmConfig:
    b_max: float = 10.0
    mean_tol: float = 0.1
    bandwidth: float | None = None
    max_iters: int = 500
    tol: float = 1e-12

    def validate(self) -> None:
        if self.b_max <= 1.0:
            raise ConfigError(f"b_max must exceed 1, got {self.b_max}")
        if not 0.0 < self.mean_tol < 1.0:
            raise ConfigError(f"mean_tol must be in (0, 1), got {self.mean_tol}")
        if self.bandwidth is not None and self.bandwidth <= 0.0:
            raise ConfigError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol <= 0.0:
            raise ConfigError(f"tol must be positive, got {self.tol}")


@dataclass
class KmmResult:
    beta: np.ndarray
    objective: float
    objective_uniform: float
    bandwidth: float
    iterations: int
    converged: bool


def _pairwise_sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.empty((x.shape[0], y.shape[0]))
    _kernels.pairwise_sq_dists_inplace(
        np.ascontiguousarray(x), np.ascontiguousarray(y), out
    )
    return out


def _median_bandwidth(pooled: np.ndarray) -> float:
    # cap the median-heuristic cost on large samples by an even subsample
    if pooled.shape[0] > 1024:
        step = int(np.ceil(pooled.shape[0] / 1024))
        pooled = pooled[::step]
    d2 = _pairwise_sq_dists(pooled, pooled)
    vals = d2[np.triu_indices(pooled.shape[0], 1)]
    vals = vals[vals > 0.0]
    if vals.size == 0:
        return 1.0
    return float(np.sqrt(np.median(vals)))


def _project_box_mean(beta: np.ndarray, b_max: float, mean_tol: float) -> np.ndarray:
    """Euclidean projection onto {0 <= beta <= B, |mean(beta) - 1| <= tol}.

    A uniform shift followed by clipping realizes the projection when the
    mean constraint is active; the shift is found by bisection on the
    monotone map s -> mean(clip(beta + s, 0, B)).
    """
    beta = np.clip(beta, 0.0, b_max)
    mean = float(beta.mean())
    if abs(mean - 1.0) <= mean_tol:
        return beta
    target = 1.0 + mean_tol if mean > 1.0 else 1.0 - mean_tol
    lo, hi = -b_max, b_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(np.clip(beta + mid, 0.0, b_max).mean()) < target:
            lo = mid
        else:
            hi = mid
    return np.clip(beta + hi, 0.0, b_max)


def kmm_weights(x_ref, x_adj, config: KmmConfig | None = None) -> KmmResult:
    """Importance weights aligning the adjusted sample to the reference.

    Minimizes the squared RBF-kernel mean discrepancy

        || (1/n_ref) sum phi(ref) - (1/n_adj) sum beta_i phi(adj_i) ||^2

    over the feasible box by projected gradient descent with a fixed step
    1/L, starting from uniform weights.  The best feasible iterate is
    returned, so the objective never exceeds its uniform-weight value.
    """
    cfg = config or KmmConfig()
    cfg.validate()
    vr, fp_r = _values_of(x_ref, "x_ref")
    va, fp_a = _values_of(x_adj, "x_adj")
    if vr.shape[1] != va.shape[1]:
        raise DimensionError(f"feature dims differ: {vr.shape[1]} vs {va.shape[1]}")
    if fp_r is not None and fp_a is not None and fp_r != fp_a:
        raise SchemaError("reference and adjusted feature schemas differ")
    n_r, n_a = vr.shape[0], va.shape[0]
    if n_r < 1 or n_a < 1:
        raise DimensionError("both samples must be nonempty")

    sigma = cfg.bandwidth if cfg.bandwidth is not None else _median_bandwidth(
        np.vstack([vr, va])
    )
    gamma = 1.0 / (2.0 * sigma * sigma)
    k_aa = np.exp(-gamma * _pairwise_sq_dists(va, va))
    k_ar = np.exp(-gamma * _pairwise_sq_dists(va, vr))
    k_rr_sum = float(np.sum(np.exp(-gamma * _pairwise_sq_dists(vr, vr))))
    kappa = k_ar.sum(axis=1)
    const = k_rr_sum / (n_r * n_r)

    def objective(beta: np.ndarray) -> float:
        return (
            float(beta @ (k_aa @ beta)) / (n_a * n_a)
            - 2.0 * float(kappa @ beta) / (n_a * n_r)
            + const
        )

    # Lipschitz constant of the gradient from the top eigenvalue of K_aa
    v = np.ones(n_a) / np.sqrt(n_a)
    for _ in range(50):
        w = k_aa @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            break
        v = w / nw
    lip = 2.0 * max(float(v @ (k_aa @ v)), 1e-12) / (n_a * n_a)
    step = 1.0 / lip

    beta = np.ones(n_a)
    best_beta = beta.copy()
    best_obj = objective(beta)
    obj_uniform = best_obj
    prev = best_obj
    converged = False
    iterations = 0
    for it in range(cfg.max_iters):
        iterations = it + 1
        grad = 2.0 * (k_aa @ beta) / (n_a * n_a) - 2.0 * kappa / (n_a * n_r)
        beta = _project_box_mean(beta - step * grad, cfg.b_max, cfg.mean_tol)
        cur = objective(beta)
        if cur < best_obj:
            best_obj = cur
            best_beta = beta.copy()
        if abs(prev - cur) <= cfg.tol * max(1.0, abs(prev)):
            converged = True
            break
        prev = cur
    return KmmResult(best_beta, best_obj, obj_uniform, sigma, iterations, converged)

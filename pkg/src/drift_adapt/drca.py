"""Domain-regularized subspace fitting and projection.

``fit_drca`` finds directions that keep within-domain spread while
collapsing the gap between domain means: the top-d generalized
eigenvectors of

    (S_w_s + alpha * S_w_t) p = theta * (S_b + ridge * I) p

computed on source and target feature rows standardized by the source
column statistics.  The between-domain scatter S_b has rank at most one,
so the denominator carries a small ridge proportional to trace(S_b)/D;
directions across the domain gap are heavily penalized and the surviving
subspace mixes the domains while preserving their internal variance.
``drca_transform`` then maps rows into that subspace.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import linalg
from .errors import ConfigError, DimensionError, SchemaError
from .featurize import FeatureMatrix

_SCALE_FLOOR = 1e-8


@dataclass(frozen=True)
class DrcaConfig:
    d: int = 32
    alpha: float = 1.0
    epsilon: float = 1e-6
    standardize: bool = True

    def validate(self, feature_dim: int | None = None) -> None:
        if self.d < 1:
            raise ConfigError(f"d must be >= 1, got {self.d}")
        if feature_dim is not None and self.d >= feature_dim:
            raise ConfigError(
                f"d must be below the feature dimension {feature_dim}, got {self.d}"
            )
        if self.alpha < 0.0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")

    def to_dict(self) -> dict:
        return {"d": self.d, "alpha": self.alpha, "epsilon": self.epsilon,
                "standardize": self.standardize}


@dataclass
class ProjectionModel:
    """Fitted subspace: projection directions plus standardization stats.

    ``p`` holds one unit-norm direction per column (largest-magnitude
    entry positive), ``theta`` the matching generalized eigenvalues in
    strictly descending order, and ``ridge`` the value actually added to
    the diagonal of the between-domain scatter during the fit.
    """

    p: np.ndarray
    theta: np.ndarray
    config: DrcaConfig
    center: np.ndarray
    scale: np.ndarray
    ridge: float = 0.0
    schema_fingerprint: str | None = None


def _values_of(x, name: str) -> tuple[np.ndarray, str | None]:
    values = np.asarray(getattr(x, "values", x), dtype=np.float64)
    if values.ndim != 2:
        raise DimensionError(f"{name} must be 2-d, got shape {values.shape}")
    schema = getattr(x, "schema", None)
    return values, (schema.fingerprint() if schema is not None else None)


def _ridge_for(s_b: np.ndarray, m: np.ndarray, epsilon: float) -> float:
    dim = s_b.shape[0]
    # delta keeps the ridge positive when the domain means coincide
    delta = 1e-12 * max(1.0, float(np.trace(m)) / dim)
    return epsilon * (float(np.trace(s_b)) / dim + delta)


def fit_drca(x_s, x_t, config: DrcaConfig | None = None) -> ProjectionModel:
    """Fit the projection on source and target feature rows.

    Both matrices are standardized by source column mean/std (floored at
    1e-8) unless the config disables it; the model stores the vectors so
    transforms accept raw features.
    """
    cfg = config or DrcaConfig()
    vs, fp_s = _values_of(x_s, "x_s")
    vt, fp_t = _values_of(x_t, "x_t")
    if vs.shape[1] != vt.shape[1]:
        raise DimensionError(f"feature dims differ: {vs.shape[1]} vs {vt.shape[1]}")
    if fp_s is not None and fp_t is not None and fp_s != fp_t:
        raise SchemaError("source and target feature schemas differ")
    if vs.shape[0] < 2 or vt.shape[0] < 2:
        raise DimensionError("need at least two rows per domain")
    dim = vs.shape[1]
    cfg.validate(feature_dim=dim)

    if cfg.standardize:
        center = vs.mean(axis=0)
        scale = np.maximum(vs.std(axis=0), _SCALE_FLOOR)
    else:
        center = np.zeros(dim)
        scale = np.ones(dim)
    zs = (vs - center) / scale
    zt = (vt - center) / scale

    summary = linalg.scatter_summary(zs, zt)
    m = summary.s_w_s + cfg.alpha * summary.s_w_t
    ridge = _ridge_for(summary.s_b, m, cfg.epsilon)
    b = summary.s_b + ridge * np.eye(dim)
    pairs = linalg.generalized_eig(m, b)
    theta = pairs.eigenvalues[:cfg.d].copy()
    p = pairs.vectors[:, :cfg.d].copy()
    if theta[-1] <= 0.0:
        raise ConfigError(
            f"within-domain scatter supports fewer than d={cfg.d} directions; "
            "reduce d"
        )
    return ProjectionModel(p, theta, cfg, center, scale, ridge,
                           fp_s if fp_s is not None else fp_t)


def drca_transform(model: ProjectionModel, x) -> np.ndarray:
    """Standardize rows with the stored stats and project onto the subspace."""
    values, fp = _values_of(x, "x")
    if model.schema_fingerprint is not None and fp is not None:
        if fp != model.schema_fingerprint:
            raise SchemaError("feature schema does not match the projection model")
    if values.shape[1] != model.p.shape[0]:
        raise DimensionError(
            f"{values.shape[1]} columns vs projection dim {model.p.shape[0]}"
        )
    return ((values - model.center) / model.scale) @ model.p


def drca_objective(model: ProjectionModel, summary: linalg.ScatterSummary) -> float:
    """Preserved-spread-to-domain-gap ratio of the projection on given scatters.

    Returns tr(P'(S_w_s + alpha S_w_t)P) / tr(P'(S_b + ridge I)P) using the
    model's alpha and ridge.  A zero denominator is reported as +inf with
    a warning.
    """
    if summary.dim != model.p.shape[0]:
        raise DimensionError(
            f"scatter dim {summary.dim} vs projection dim {model.p.shape[0]}"
        )
    m = summary.s_w_s + model.config.alpha * summary.s_w_t
    b = summary.s_b + model.ridge * np.eye(summary.dim)
    numerator = float(np.trace(model.p.T @ m @ model.p))
    denominator = float(np.trace(model.p.T @ b @ model.p))
    if denominator == 0.0:
        warnings.warn("projected between-domain scatter is zero", RuntimeWarning)
        return float("inf")
    return numerator / denominator


def save_projection(model: ProjectionModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "p": model.p.tolist(),
        "theta": model.theta.tolist(),
        "config": model.config.to_dict(),
        "center": model.center.tolist(),
        "scale": model.scale.tolist(),
        "ridge": model.ridge,
        "schema_fingerprint": model.schema_fingerprint,
    }
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_projection(path: str | Path) -> ProjectionModel:
    doc = json.loads(Path(path).read_text())
    return ProjectionModel(
        np.array(doc["p"], dtype=np.float64),
        np.array(doc["theta"], dtype=np.float64),
        DrcaConfig(**doc["config"]),
        np.array(doc["center"], dtype=np.float64),
        np.array(doc["scale"], dtype=np.float64),
        float(doc["ridge"]),
        doc["schema_fingerprint"],
    )

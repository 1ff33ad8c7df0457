"""Config-driven orchestration of the full adaptation experiment.

A run synthesizes (or loads) one source and any number of target
datasets, labels them with the surrogate per-element fields, extracts
features, trains the baseline estimators on the source, applies each
requested adaptation method per target, and writes errors, a
comparative report, injury flags, and a manifest.  Everything derives
from the global seed, so a repeated run produces byte-identical
reports.

Methods, mirroring the published comparison:

- ``baseline``   source-trained estimators applied to the target as-is
- ``drca``       fit the domain-regularized projection on (source,
                 target), retrain the estimators in the subspace
- ``cyclegan``   translate target features to the source domain and
                 reuse the preset estimators
- ``shiftgan``   cyclegan translation plus kernel-matching importance
                 weights, recorded per impact (weighted aggregates are a
                 labeled diagnostic, not the primary metric)
- ``gan+drca``   translate first, then fit DRCA against the translated
                 target and retrain in the subspace
"""

from __future__ import annotations

import dataclasses
import difflib
import hashlib
import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import adversarial, drca, evaluation, featurize, impact_data, mlhm, rng
from .errors import ConfigError, DriftAdaptError, StageError

STAGES = ("synth", "featurize", "train", "adapt", "evaluate")
METHODS = ("baseline", "drca", "cyclegan", "shiftgan", "gan+drca")
KINDS = ("mps", "mpsr")
_GAN_METHODS = {"cyclegan", "shiftgan", "gan+drca"}


@dataclass
class DomainSpec:
    """One dataset to synthesize (``n`` + ``synth``) or load (``path``)."""

    name: str
    n: int = 0
    path: str = ""
    synth: impact_data.DriftConfig | None = None

    def validate(self) -> None:
        if not self.name:
            raise ConfigError("domain name must be nonempty")
        if self.path and self.synth is not None:
            raise ConfigError(f"domain {self.name!r}: give either path or synth, not both")
        if not self.path:
            if self.synth is None:
                raise ConfigError(f"domain {self.name!r}: needs a path or a synth section")
            if self.n < 1:
                raise ConfigError(f"domain {self.name!r}: n must be >= 1, got {self.n}")
            self.synth.validate()


@dataclass
class PipelineConfig:
    seed: int = 0
    out: str = "runs/out"
    element_count: int = 128
    methods: tuple[str, ...] = ("baseline", "drca")
    augment_source: bool = False
    # wide enough that the subspace retrains keep pace with the
    # 512-feature preset estimators at the default element count
    arch_hidden: tuple[tuple[int, str, float], ...] = (
        (128, "relu", 0.0), (64, "relu", 0.0), (32, "relu", 0.0)
    )
    source: DomainSpec = field(default_factory=lambda: DomainSpec("source"))
    targets: list[DomainSpec] = field(default_factory=list)
    holdout: list[DomainSpec] = field(default_factory=list)
    drca: drca.DrcaConfig = field(default_factory=drca.DrcaConfig)
    gan: adversarial.GanConfig = field(default_factory=adversarial.GanConfig)
    kmm: adversarial.KmmConfig = field(default_factory=adversarial.KmmConfig)
    train: mlhm.TrainConfig = field(default_factory=mlhm.TrainConfig)
    flags: evaluation.ThresholdFlags = field(default_factory=evaluation.ThresholdFlags)

    def validate(self) -> None:
        if self.element_count < 1:
            raise ConfigError(f"element_count must be >= 1, got {self.element_count}")
        if not self.methods:
            raise ConfigError("methods must name at least one method")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(
                f"unknown methods {unknown}; choose from {list(METHODS)}"
            )
        if not self.targets:
            raise ConfigError("at least one target domain is required")
        names = [self.source.name] + [t.name for t in self.targets + self.holdout]
        if len(set(names)) != len(names):
            raise ConfigError(f"domain names must be unique, got {names}")
        self.source.validate()
        for t in self.targets + self.holdout:
            t.validate()
        for width, act, rate in self.arch_hidden:
            if width < 1 or act not in ("relu", "sigmoid", "linear") or not 0 <= rate < 1:
                raise ConfigError(f"bad arch_hidden layer ({width}, {act!r}, {rate})")
        self.drca.validate()
        self.gan.validate()
        self.kmm.validate()
        self.train.validate()
        self.flags.validate()


def _suggest(key: str, allowed: set[str]) -> str:
    close = difflib.get_close_matches(key, sorted(allowed), n=1, cutoff=0.6)
    return f" (did you mean {close[0]!r}?)" if close else ""


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be an object, got {type(doc).__name__}")
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}{_suggest(key, allowed)}")


def _fields_of(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _build(cls, doc: dict, where: str, tuple_fields: dict | None = None):
    """Instantiate a config dataclass from a JSON object, keys checked."""
    _check_keys(doc, _fields_of(cls), where)
    kwargs = dict(doc)
    for name, conv in (tuple_fields or {}).items():
        if name in kwargs:
            kwargs[name] = conv(kwargs[name])
    try:
        obj = cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e
    return obj


def _parse_drift(doc: dict, default_seed: int, where: str) -> impact_data.DriftConfig:
    doc = dict(doc)
    doc.setdefault("seed", default_seed)
    pair = lambda v: tuple(float(x) for x in v)
    triple = lambda v: tuple(float(x) for x in v)
    return _build(impact_data.DriftConfig, doc, where, {
        "pulse_duration_range": pair, "peak_ang_vel_range": pair,
        "peak_lin_acc_range": pair, "channel_gain": triple, "dc_offset": triple,
    })


def _parse_domain(doc: dict, global_seed: int, where: str, default_name: str) -> DomainSpec:
    _check_keys(doc, {"name", "n", "path", "synth"}, where)
    name = str(doc.get("name", default_name))
    spec = DomainSpec(name=name, n=int(doc.get("n", 0)), path=str(doc.get("path", "")))
    if "synth" in doc:
        spec.synth = _parse_drift(
            doc["synth"], rng.derive_seed(global_seed, "synth", name), f"{where}.synth"
        )
    elif not spec.path:
        spec.synth = _parse_drift(
            {}, rng.derive_seed(global_seed, "synth", name), f"{where}.synth"
        )
    return spec


_TOP_KEYS = {
    "seed", "out", "element_count", "methods", "augment_source", "arch_hidden",
    "source", "targets", "holdout", "drca", "gan", "kmm", "train", "flags",
}


def parse_config_dict(doc: dict) -> PipelineConfig:
    """Validated PipelineConfig from a JSON-shaped dict, defaults filled."""
    _check_keys(doc, _TOP_KEYS, "config")
    seed = int(doc.get("seed", 0))
    cfg = PipelineConfig(seed=seed)
    cfg.out = str(doc.get("out", cfg.out))
    cfg.element_count = int(doc.get("element_count", cfg.element_count))
    if "methods" in doc:
        cfg.methods = tuple(str(m) for m in doc["methods"])
    if "baseline" not in cfg.methods:
        cfg.methods = ("baseline",) + cfg.methods
    # canonical order keeps the resolved config and reports stable;
    # unrecognized names ride along so validate() can reject them
    cfg.methods = tuple(m for m in METHODS if m in cfg.methods) + tuple(
        m for m in cfg.methods if m not in METHODS
    )
    cfg.augment_source = bool(doc.get("augment_source", False))
    if "arch_hidden" in doc:
        cfg.arch_hidden = tuple(
            (int(w), str(a), float(r)) for w, a, r in doc["arch_hidden"]
        )
    cfg.source = _parse_domain(doc.get("source", {}), seed, "source", "source")
    cfg.targets = [
        _parse_domain(t, seed, f"targets[{i}]", f"target{i}")
        for i, t in enumerate(doc.get("targets", []))
    ]
    cfg.holdout = [
        _parse_domain(t, seed, f"holdout[{i}]", f"holdout{i}")
        for i, t in enumerate(doc.get("holdout", []))
    ]
    if "drca" in doc:
        cfg.drca = _build(drca.DrcaConfig, doc["drca"], "drca")
    if "gan" in doc:
        gan_doc = dict(doc["gan"])
        gan_doc.setdefault("seed", rng.derive_seed(seed, "gan"))
        cfg.gan = _build(adversarial.GanConfig, gan_doc, "gan", {
            "generator_widths": lambda v: tuple(int(x) for x in v),
            "discriminator_widths": lambda v: tuple(int(x) for x in v),
        })
    else:
        cfg.gan = replace(cfg.gan, seed=rng.derive_seed(seed, "gan"))
    if "kmm" in doc:
        cfg.kmm = _build(adversarial.KmmConfig, doc["kmm"], "kmm")
    train_doc = dict(doc.get("train", {}))
    train_doc.setdefault("seed", rng.derive_seed(seed, "train"))
    cfg.train = _build(mlhm.TrainConfig, train_doc, "train")
    if "flags" in doc:
        _check_keys(doc["flags"], {"mps_threshold", "mpsr_threshold"}, "flags")
        cfg.flags = evaluation.ThresholdFlags(**doc["flags"])
    cfg.validate()
    return cfg


def parse_config(path: str | Path) -> PipelineConfig:
    """Read, validate, and default-fill a JSON config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    return parse_config_dict(doc)


def _domain_dict(spec: DomainSpec) -> dict:
    out: dict = {"name": spec.name}
    if spec.path:
        out["path"] = spec.path
    else:
        out["n"] = spec.n
        out["synth"] = {
            "pulse_duration_range": list(spec.synth.pulse_duration_range),
            "peak_ang_vel_range": list(spec.synth.peak_ang_vel_range),
            "peak_lin_acc_range": list(spec.synth.peak_lin_acc_range),
            "noise_std": spec.synth.noise_std,
            "channel_gain": list(spec.synth.channel_gain),
            "dc_offset": list(spec.synth.dc_offset),
            "frequency_shift": spec.synth.frequency_shift,
            "seed": spec.synth.seed,
            "sample_rate": spec.synth.sample_rate,
            "duration": spec.synth.duration,
        }
    return out


def resolved_config_dict(cfg: PipelineConfig) -> dict:
    """JSON-shaped echo of the config; parsing it back gives an equal config."""
    return {
        "seed": cfg.seed,
        "out": cfg.out,
        "element_count": cfg.element_count,
        "methods": list(cfg.methods),
        "augment_source": cfg.augment_source,
        "arch_hidden": [list(layer) for layer in cfg.arch_hidden],
        "source": _domain_dict(cfg.source),
        "targets": [_domain_dict(t) for t in cfg.targets],
        "holdout": [_domain_dict(t) for t in cfg.holdout],
        "drca": cfg.drca.to_dict(),
        "gan": {k: list(v) if isinstance(v, tuple) else v
                for k, v in vars(cfg.gan).items()},
        "kmm": vars(cfg.kmm).copy(),
        "train": vars(cfg.train).copy(),
        "flags": {"mps_threshold": cfg.flags.mps_threshold,
                  "mpsr_threshold": cfg.flags.mpsr_threshold},
    }


class Manifest:
    """Single collector for run artifacts, model hashes, and stage status."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / "manifest.json"
        self.doc = {
            "status": "running",
            "stages": [],
            "artifacts": [],
            "models": {},
            "diagnostics": {},
        }
        self._lock = threading.Lock()

    def write(self) -> None:
        self.path.write_text(json.dumps(self.doc, sort_keys=True, indent=1) + "\n")

    def artifact(self, rel: str) -> None:
        with self._lock:
            if rel not in self.doc["artifacts"]:
                self.doc["artifacts"].append(rel)
                self.doc["artifacts"].sort()

    def model(self, key: str, rel: str, digest: str) -> None:
        with self._lock:
            self.doc["models"][key] = {"file": rel, "sha256": digest}

    def diagnostic(self, key: str, value) -> None:
        with self._lock:
            self.doc["diagnostics"][key] = value

    def stage_done(self, name: str) -> None:
        with self._lock:
            self.doc["stages"].append(name)
            self.write()

    def fail(self, stage: str, err: Exception) -> None:
        with self._lock:
            self.doc["status"] = "failed"
            self.doc["failed_stage"] = stage
            self.doc["error"] = f"{type(err).__name__}: {err}"
            self.write()

    def finish(self) -> None:
        with self._lock:
            self.doc["status"] = "complete"
            self.write()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _worker_count(n_tasks: int) -> int:
    cap = os.environ.get("DRIFT_ADAPT_THREADS", "")
    try:
        cap_n = int(cap) if cap else 1
    except ValueError:
        raise ConfigError(f"DRIFT_ADAPT_THREADS must be an integer, got {cap!r}")
    return max(1, min(n_tasks, cap_n))


@dataclass
class _Domain:
    spec: DomainSpec
    ds: impact_data.Dataset = None
    features: featurize.FeatureMatrix = None
    z: np.ndarray = None


@dataclass
class _State:
    cfg: PipelineConfig
    out: Path
    manifest: Manifest
    schema: featurize.FeatureSchema = None
    source: _Domain = None
    targets: list[_Domain] = field(default_factory=list)
    x_center: np.ndarray = None
    x_scale: np.ndarray = None
    presets: dict = field(default_factory=dict)
    # (target_name, method, kind) -> predictions (n_target, E)
    predictions: dict = field(default_factory=dict)
    # target_name -> KmmResult
    kmm_results: dict = field(default_factory=dict)


def _load_domain(spec: DomainSpec) -> impact_data.Dataset:
    if spec.path:
        ds = impact_data.load_dataset(spec.path)
        return impact_data.Dataset(ds.recordings, spec.name, ds.labels_mps, ds.labels_mpsr)
    return impact_data.synth_impacts(spec.synth, spec.n, domain_tag=spec.name)


def _stage_synth(state: _State, final: bool) -> None:
    cfg = state.cfg
    state.source = _Domain(cfg.source, _load_domain(cfg.source))
    if cfg.augment_source:
        state.source.ds = impact_data.augment_axes(state.source.ds)
    state.targets = [_Domain(t, _load_domain(t)) for t in cfg.targets + cfg.holdout]
    # one shared label basis: the per-element map is a fixed property of
    # the anatomy, not of the domain
    for dom in [state.source] + state.targets:
        if dom.ds.labels_mps is None or dom.ds.labels_mpsr is None:
            dom.ds = impact_data.label_dataset(dom.ds, cfg.element_count, cfg.seed)
    if final:
        for dom in [state.source] + state.targets:
            rel = f"data/{dom.spec.name}"
            impact_data.save_dataset(dom.ds, state.out / rel)
            state.manifest.artifact(rel)


def _stage_featurize(state: _State, final: bool) -> None:
    state.schema = featurize.default_schema()
    for dom in [state.source] + state.targets:
        dom.features = featurize.featurize_dataset(dom.ds, state.schema)
    src = state.source.features.values
    state.x_center = src.mean(axis=0)
    state.x_scale = np.maximum(src.std(axis=0), 1e-8)
    for dom in [state.source] + state.targets:
        dom.z = (dom.features.values - state.x_center) / state.x_scale
    if final:
        for dom in [state.source] + state.targets:
            rel = f"features/{dom.spec.name}.csv"
            featurize.save_features(dom.features, state.out / rel)
            state.manifest.artifact(rel)


def _subspace_coords(proj: drca.ProjectionModel, z: np.ndarray) -> np.ndarray:
    """Coordinates of standardized features in an orthonormal basis of the
    projection span.

    Spans the same subspace as ``drca_transform`` but through ``qr(p).q``:
    the generalized eigendirections are not mutually orthogonal, so raw
    projection coordinates can be strongly coupled and badly scaled, which
    skews per-coordinate optimizer steps during the retrain.  The basis is
    a deterministic function of the saved projection, so anyone holding the
    artifact can reproduce these coordinates.
    """
    q, _ = np.linalg.qr(proj.p)
    return ((z - proj.center) / proj.scale) @ q


def _train_estimator(state: _State, x: np.ndarray, kind: str, *labels: str) -> mlhm.MlhmModel:
    cfg = state.cfg
    y = getattr(state.source.ds, f"labels_{kind}")
    arch = mlhm.MlhmArch(
        x.shape[1], y.shape[1],
        tuple(mlhm.LayerSpec(w, a, r) for w, a, r in cfg.arch_hidden),
    )
    train_cfg = replace(cfg.train, seed=rng.derive_seed(cfg.train.seed, kind, *labels))
    model = mlhm.train_mlhm(x, y, config=train_cfg, arch=arch)
    model.schema_fingerprint = state.schema.fingerprint()
    return model


def _save_model(state: _State, model: mlhm.MlhmModel, key: str, rel: str) -> str:
    path = state.out / rel
    mlhm.save_model(model, path)
    digest = _sha256(path)
    state.manifest.model(key, rel, digest)
    state.manifest.artifact(rel)
    return digest


def _stage_train(state: _State, final: bool) -> None:
    for kind in KINDS:
        model = _train_estimator(state, state.source.z, kind, "preset")
        _save_model(state, model, f"preset_{kind}", f"models/preset_{kind}.json")
        state.presets[kind] = model
        test_idx = model.split["test"]
        summary = evaluation.error_metrics(
            model.predict(state.source.z[test_idx]),
            getattr(state.source.ds, f"labels_{kind}")[test_idx],
        )
        state.manifest.diagnostic(f"source_test_mae_{kind}", summary.mae)
        state.manifest.diagnostic(f"source_test_rmse_{kind}", summary.rmse)


def _adapt_target(state: _State, dom: _Domain) -> None:
    cfg = state.cfg
    name = dom.spec.name
    zs, zt = state.source.z, dom.z

    for kind in KINDS:
        state.predictions[(name, "baseline", kind)] = state.presets[kind].predict(zt)

    if "drca" in cfg.methods:
        proj = drca.fit_drca(zs, zt, cfg.drca)
        proj.schema_fingerprint = state.schema.fingerprint()
        rel = f"models/{name}/drca_projection.json"
        drca.save_projection(proj, state.out / rel)
        proj_digest = _sha256(state.out / rel)
        state.manifest.model(f"{name}/drca_projection", rel, proj_digest)
        state.manifest.artifact(rel)
        xs_p, xt_p = _subspace_coords(proj, zs), _subspace_coords(proj, zt)
        for kind in KINDS:
            model = _train_estimator(state, xs_p, kind, "drca", name)
            model.projection_hash = proj_digest
            _save_model(state, model, f"{name}/drca_{kind}", f"models/{name}/drca_{kind}.json")
            state.predictions[(name, "drca", kind)] = model.predict(xt_p)

    if _GAN_METHODS & set(cfg.methods):
        gan_cfg = replace(cfg.gan, seed=rng.derive_seed(cfg.gan.seed, name))
        translator = adversarial.train_cyclegan(zs, zt, gan_cfg)
        rel = f"models/{name}/translator.json"
        adversarial.save_cyclegan(translator, state.out / rel)
        state.manifest.model(f"{name}/translator", rel, _sha256(state.out / rel))
        state.manifest.artifact(rel)
        translated = adversarial.translate_to_source(translator, zt)

        for method in ("cyclegan", "shiftgan"):
            if method not in cfg.methods:
                continue
            for kind in KINDS:
                state.predictions[(name, method, kind)] = state.presets[kind].predict(translated)
                # these methods reuse the preset estimator; the manifest
                # entry points at the preset file so the reuse is checkable
                preset_entry = state.manifest.doc["models"][f"preset_{kind}"]
                state.manifest.model(
                    f"{name}/{method}_{kind}", preset_entry["file"], preset_entry["sha256"]
                )

        if "shiftgan" in cfg.methods:
            result = adversarial.kmm_weights(zs, translated, cfg.kmm)
            state.kmm_results[name] = result
            state.manifest.diagnostic(f"{name}/kmm_converged", result.converged)
            state.manifest.diagnostic(f"{name}/kmm_objective", result.objective)
            state.manifest.diagnostic(f"{name}/kmm_objective_uniform", result.objective_uniform)

        if "gan+drca" in cfg.methods:
            proj = drca.fit_drca(zs, translated, cfg.drca)
            proj.schema_fingerprint = state.schema.fingerprint()
            rel = f"models/{name}/gan_drca_projection.json"
            drca.save_projection(proj, state.out / rel)
            proj_digest = _sha256(state.out / rel)
            state.manifest.model(f"{name}/gan_drca_projection", rel, proj_digest)
            state.manifest.artifact(rel)
            xs_p = _subspace_coords(proj, zs)
            xt_p = _subspace_coords(proj, translated)
            for kind in KINDS:
                model = _train_estimator(state, xs_p, kind, "gan+drca", name)
                model.projection_hash = proj_digest
                _save_model(
                    state, model, f"{name}/gan+drca_{kind}",
                    f"models/{name}/gan_drca_{kind}.json",
                )
                state.predictions[(name, "gan+drca", kind)] = model.predict(xt_p)


def _stage_adapt(state: _State, final: bool) -> None:
    workers = _worker_count(len(state.targets))
    if workers == 1:
        for dom in state.targets:
            _adapt_target(state, dom)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_adapt_target, state, dom) for dom in state.targets]
        for f in futures:
            f.result()


def _weight_column(state: _State, name: str, method: str, n: int) -> np.ndarray | None:
    if method != "shiftgan" or name not in state.kmm_results:
        return None
    beta = state.kmm_results[name].beta
    return beta if beta.shape[0] == n else None


def _stage_evaluate(state: _State, final: bool) -> None:
    cfg = state.cfg
    entries = []
    diagnostics_lines = []
    for dom in state.targets:
        name = dom.spec.name
        ids = [rec.impact_id for rec in dom.ds.recordings]
        for kind in KINDS:
            ref = getattr(dom.ds, f"labels_{kind}")
            for method in cfg.methods:
                pred = state.predictions.get((name, method, kind))
                if pred is None:
                    continue
                summary = evaluation.error_metrics(pred, ref, ids)
                entries.append(evaluation.MethodErrors(kind.upper(), name, method, summary))
                weights = _weight_column(state, name, method, len(ids))
                rel = f"errors/{name}_{method.replace('+', '_')}_{kind}.csv"
                _write_errors_csv(state.out / rel, summary, weights)
                state.manifest.artifact(rel)
                if weights is not None:
                    maes = summary.impact_maes()
                    weighted = float(np.sum(weights * maes) / np.sum(weights))
                    state.manifest.diagnostic(f"{name}/weighted_mae_{kind}", weighted)
                    diagnostics_lines.append(
                        f"# diagnostic (extension): {name} shiftgan "
                        f"kernel-weighted mean MAE [{kind.upper()}] = {weighted:.6g} "
                        f"(unweighted = {summary.mae:.6g})"
                    )

    report = evaluation.build_report(entries, baseline="baseline")
    text = report.text
    if diagnostics_lines:
        text = text + "\n" + "\n".join(diagnostics_lines) + "\n"
    (state.out / "report.csv").write_text(report.csv)
    (state.out / "report.txt").write_text(text)
    state.manifest.artifact("report.csv")
    state.manifest.artifact("report.txt")

    all_fields = []
    all_ids = []
    for dom in state.targets:
        ids = [rec.impact_id for rec in dom.ds.recordings]
        for kind in KINDS:
            all_fields.extend(dom.ds.label_fields(kind))
            all_ids.extend(ids)
    flags = evaluation.threshold_flags(all_fields, cfg.flags, all_ids)
    (state.out / "flags.csv").write_text(evaluation.render_flags_csv(flags))
    state.manifest.artifact("flags.csv")


def _write_errors_csv(path: Path, summary: evaluation.ErrorSummary,
                      weights: np.ndarray | None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    header = "impact_id,mae,rmse" + (",weight" if weights is not None else "")
    lines = [header]
    for i, e in enumerate(summary.per_impact):
        row = f"{e.impact_id},{e.mae!r},{e.rmse!r}"
        if weights is not None:
            row += f",{float(weights[i])!r}"
        lines.append(row)
    path.write_text("\n".join(lines) + "\n")


_STAGE_FNS = {
    "synth": _stage_synth,
    "featurize": _stage_featurize,
    "train": _stage_train,
    "adapt": _stage_adapt,
    "evaluate": _stage_evaluate,
}


def run_pipeline(cfg: PipelineConfig, upto: str = "evaluate") -> Manifest:
    """Execute stages through ``upto`` and write artifacts under cfg.out.

    Any stage failure marks the manifest ``failed`` with the stage name
    and cause before the error propagates.
    """
    if upto not in STAGES:
        raise ConfigError(f"unknown stage {upto!r}{_suggest(upto, set(STAGES))}")
    cfg.validate()
    out = Path(cfg.out)
    for sub in ("models", "errors"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.json").write_text(
        json.dumps(resolved_config_dict(cfg), sort_keys=True, indent=1) + "\n"
    )
    manifest = Manifest(out)
    manifest.artifact("resolved_config.json")
    manifest.write()
    state = _State(cfg, out, manifest)
    for stage in STAGES[: STAGES.index(upto) + 1]:
        try:
            _STAGE_FNS[stage](state, final=(stage == upto))
        except Exception as e:
            manifest.fail(stage, e)
            if isinstance(e, ConfigError):
                raise
            if isinstance(e, DriftAdaptError):
                raise StageError(f"stage {stage!r} failed: {e}") from e
            raise StageError(
                f"stage {stage!r} failed: {type(e).__name__}: {e}"
            ) from e
        manifest.stage_done(stage)
    manifest.finish()
    return manifest

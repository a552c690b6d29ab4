"""Benchmark harness: cross-validated next-activity prediction runs.

The protocol per run: parse and preprocess a log, expand prefixes, split
into case-level CV folds, and per fold fit everything that is fitted
(vocabularies, scalers, transition/batch statistics, the classifier) on
the training folds only. The peer-event index used by window features is
built once over the preprocessed log: concurrency context is observable
environment at prediction time, while all *learned* statistics stay
train-fold-only. Accuracy is micro (correct / total) per fold.

All randomness derives from the single config seed via named sub-seeds.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import time
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from datetime import date, datetime
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .encoding import (
    FeatureVector,
    Vocabulary,
    apply_scaler,
    fit_scaler,
    make_intra_encoder,
)
from .errors import ConfigError
from .eventlog import (
    EventLog,
    PrefixSample,
    build_prefix_log,
    filter_singleton_variants,
    load_log,
    make_cv_folds,
    slice_date_range,
    stratified_subsample,
)
from .intercase import (
    EventIndex,
    InterCaseEncoder,
    PeerWindow,
    compose,
    fit_batch_stats,
    fit_transition_stats,
)
from .qkernel import KernelKind, cache_key, cross, gram, load_kernel, psd_repair, save_kernel
from .qsim import FeatureMapKind, ShotConfig
from .svm import fit_multiclass, predict as svm_predict
from .vqc import OptimizerConfig, predict as vqc_predict, train as vqc_train

log_ = logging.getLogger("icppm.bench")

DATA_DIR_ENV = "ICPPM_DATA_DIR"

CLASSIFIERS = ("majority", "svc_linear", "svc_rbf", "qke", "vqc")


def derive_seed(master: int, tag: str) -> int:
    """Stable named sub-seed so one --seed drives every random choice."""
    digest = hashlib.sha256(f"{master}|{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2 ** 63)


def _parse_date(text: str) -> date:
    for fmt in ("%Y%m%d", "%Y-%m-%d"):
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    raise ConfigError(f"cannot parse date {text!r} (expected YYYYMMDD or YYYY-MM-DD)")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str | None = None
    fmt: str | None = None
    column_map: Mapping[str, str] | None = None
    filter_singletons: bool = False
    date_start: str | None = None
    date_end: str | None = None
    slice_rule: str = "first"
    min_prefix: int = 1
    max_prefix: int | None = None
    encoder: str = "index_bsd"
    k: int = 4
    static_attrs: tuple[str, ...] = ()
    inter_features: tuple[str, ...] = ()
    window_fraction: float = 0.3
    window_base: float | str = "train_median"
    epsilon: float = 86400.0
    min_burst: int = 3
    classifier: str = "svc_rbf"
    C: float = 1.0
    tol: float = 1e-3
    gamma: float | None = None
    shots: int | None = None
    vqc_layers: int = 1
    learning_rate: float = 0.05
    epochs: int = 30
    opt_method: str = "parameter_shift"
    folds: int = 3
    sampling_fraction: float = 1.0
    seed: int = 0
    scale_lo: float = 0.0
    scale_hi: float = math.pi
    threads: int = 1
    cache_dir: str | None = None
    mode: str = "experiment"
    window_fractions: tuple[float, ...] = (0.15, 0.3, 0.5)
    sampling_fractions: tuple[float, ...] = (1.0, 0.5)
    prefix_lengths: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.inter_features) > 2:
            raise ConfigError(
                f"at most 2 inter-case features are allowed, got {self.inter_features}"
            )
        if self.folds < 2:
            raise ConfigError(f"need at least 2 folds, got {self.folds}")
        if isinstance(self.window_base, str) and self.window_base != "train_median":
            raise ConfigError(
                f"window_base must be a number of seconds or 'train_median', got {self.window_base!r}"
            )
        if self.mode not in ("experiment", "window_sweep", "sampling_sweep", "prefix_grid"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        _parse_classifier(self.classifier)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        coerced = dict(data)
        for key in ("static_attrs", "inter_features", "window_fractions",
                    "sampling_fractions", "prefix_lengths"):
            if key in coerced and coerced[key] is not None:
                coerced[key] = tuple(coerced[key])
        return cls(**coerced)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            elif isinstance(value, Mapping):
                value = dict(value)
            out[f.name] = value
        return out

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _parse_classifier(name: str) -> tuple[str, str | None, int | None]:
    """Split a classifier label into (kind, feature map variant, map layers)."""
    if name in ("majority", "svc_linear", "svc_rbf"):
        return name, None, None
    parts = name.split("_")
    if len(parts) >= 3 and parts[0] in ("qke", "vqc"):
        variant = "_".join(parts[1:-1])
        if variant == "zz_a":
            variant = "angle_zz"
        try:
            layers = int(parts[-1])
        except ValueError:
            raise ConfigError(f"classifier {name!r}: trailing layer count missing") from None
        if variant not in ("angle", "zz", "angle_zz"):
            raise ConfigError(f"classifier {name!r}: unknown feature map {variant!r}")
        return parts[0], variant, layers
    raise ConfigError(
        f"unknown classifier {name!r} (expected majority, svc_linear, svc_rbf, "
        f"qke_<map>_<layers> or vqc_<map>_<layers>)"
    )


def resolve_dataset_path(dataset: str) -> Path:
    """Resolve a dataset path, falling back to $ICPPM_DATA_DIR for relatives."""
    path = Path(dataset)
    if path.exists():
        return path
    root = os.environ.get(DATA_DIR_ENV)
    if root and not path.is_absolute():
        candidate = Path(root) / dataset
        if candidate.exists():
            return candidate
    raise ConfigError(
        f"dataset not found: {dataset!r} (also tried ${DATA_DIR_ENV} root)"
    )


@dataclass
class RunResult:
    classifier: str
    features: str
    fold_accuracies: tuple[float, ...]
    mean_accuracy: float
    fit_time_s: float
    gram_time_s: float
    kernel_evaluations: int
    cross_evaluations: int
    config_fingerprint: str
    window_fraction: float | None
    sampling_fraction: float
    seed: int
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "classifier": self.classifier,
            "features": self.features,
            "fold_accuracies": list(self.fold_accuracies),
            "mean_accuracy": self.mean_accuracy,
            "fit_time_s": self.fit_time_s,
            "gram_time_s": self.gram_time_s,
            "kernel_evaluations": self.kernel_evaluations,
            "cross_evaluations": self.cross_evaluations,
            "config_fingerprint": self.config_fingerprint,
            "window_fraction": self.window_fraction,
            "sampling_fraction": self.sampling_fraction,
            "seed": self.seed,
            "n_samples": self.n_samples,
        }


def _build_vocab(values) -> Vocabulary:
    return Vocabulary.from_values(values)


def feature_label(cfg: ExperimentConfig) -> str:
    name = cfg.encoder if cfg.encoder != "index_bsd" else f"index_bsd_{cfg.k}"
    if cfg.inter_features:
        name += "+" + "+".join(cfg.inter_features)
    return name


def prepare_samples(cfg: ExperimentConfig) -> tuple[EventLog, list[PrefixSample]]:
    """Load, preprocess, and expand the configured dataset into samples."""
    if cfg.dataset is None:
        raise ConfigError("config has no dataset path")
    path = resolve_dataset_path(cfg.dataset)
    t0 = time.perf_counter()
    log = load_log(path, cfg.fmt, cfg.column_map)
    log_.info("parsed %s: %d cases, %d events in %.1fs",
              path.name, len(log), log.n_events, time.perf_counter() - t0)
    return _preprocess(cfg, log)


def _preprocess(cfg: ExperimentConfig, log: EventLog) -> tuple[EventLog, list[PrefixSample]]:
    if cfg.filter_singletons:
        log = filter_singleton_variants(log)
    if cfg.date_start or cfg.date_end:
        if not (cfg.date_start and cfg.date_end):
            raise ConfigError("date slicing needs both date_start and date_end")
        log = slice_date_range(
            log, _parse_date(cfg.date_start), _parse_date(cfg.date_end), cfg.slice_rule
        )
    samples = build_prefix_log(log, cfg.min_prefix, cfg.max_prefix)
    if not samples:
        raise ConfigError("preprocessing left no prefix samples")
    if cfg.sampling_fraction < 1.0:
        samples = stratified_subsample(
            samples, cfg.sampling_fraction, derive_seed(cfg.seed, "subsample")
        )
    return log, samples


def _train_window_width(cfg: ExperimentConfig, train_log: EventLog) -> float:
    if isinstance(cfg.window_base, (int, float)):
        base = float(cfg.window_base)
    else:
        durations = sorted(t.duration.total_seconds() for t in train_log.traces)
        mid = len(durations) // 2
        if len(durations) % 2:
            base = durations[mid]
        else:
            base = 0.5 * (durations[mid - 1] + durations[mid])
    width = cfg.window_fraction * base
    if width <= 0:
        raise ConfigError(
            f"window width {width} is not positive (fraction {cfg.window_fraction}, "
            f"base {base}); configure an explicit window_base"
        )
    return width


def _encode_fold(
    cfg: ExperimentConfig,
    log: EventLog,
    index: EventIndex,
    samples: Sequence[PrefixSample],
    train_idx: Sequence[int],
    test_idx: Sequence[int],
):
    train_cases = {samples[i].case_id for i in train_idx}
    train_log = EventLog.from_traces(
        [t for t in log.traces if t.case_id in train_cases]
    )
    act_vocab = _build_vocab(train_log.activity_vocab)
    res_vocab = _build_vocab(train_log.resource_vocab)
    attr_vocabs = {
        name: _build_vocab(
            t.attributes.get(name, "") for t in train_log.traces
        )
        for name in cfg.static_attrs
    }
    intra = make_intra_encoder(
        cfg.encoder, act_vocab, res_vocab, cfg.k, cfg.static_attrs, attr_vocabs
    )
    inter = None
    if cfg.inter_features:
        needs_t = bool({"avg_delay", "batch"} & set(cfg.inter_features))
        t_stats = fit_transition_stats(train_log) if needs_t else None
        b_stats = (
            fit_batch_stats(train_log, cfg.epsilon, cfg.min_burst)
            if "batch" in cfg.inter_features
            else None
        )
        window = PeerWindow(_train_window_width(cfg, train_log))
        inter = InterCaseEncoder(
            index,
            tuple(cfg.inter_features),
            window,
            act_vocab=act_vocab,
            res_vocab=res_vocab,
            transition_stats=t_stats,
            batch_stats=b_stats,
        )

    def encode(sample: PrefixSample) -> FeatureVector:
        vec = intra(sample)
        if inter is not None:
            anchor = sample.prefix.events[-1]
            inter_vec = inter.encode(
                anchor.timestamp.timestamp(), sample.case_id, anchor.activity
            )
            vec = compose(vec, inter_vec).combined
        return vec

    train_vecs = [encode(samples[i]) for i in train_idx]
    test_vecs = [encode(samples[i]) for i in test_idx]
    scaler = fit_scaler(train_vecs, (cfg.scale_lo, cfg.scale_hi))
    x_train = np.stack([apply_scaler(v, scaler).values for v in train_vecs])
    x_test = np.stack([apply_scaler(v, scaler).values for v in test_vecs])
    y_train = [samples[i].label for i in train_idx]
    y_test = [samples[i].label for i in test_idx]
    return x_train, y_train, x_test, y_test


def _kernel_kind(cfg: ExperimentConfig, variant: str | None, layers: int | None,
                 fold: int) -> KernelKind:
    kind, _, _ = _parse_classifier(cfg.classifier)
    if kind == "svc_linear":
        return KernelKind.linear()
    if kind == "svc_rbf":
        return KernelKind.rbf(cfg.gamma)
    shots = ShotConfig(cfg.shots, derive_seed(cfg.seed, f"shots/{fold}")) \
        if cfg.shots else ShotConfig()
    return KernelKind.quantum(FeatureMapKind(variant, layers), shots)


def run_experiment(
    cfg: ExperimentConfig,
    log: EventLog | None = None,
    samples: Sequence[PrefixSample] | None = None,
) -> RunResult:
    """One cross-validated run; pass (log, samples) to skip re-preprocessing."""
    if log is None or samples is None:
        log, samples = prepare_samples(cfg)
    samples = list(samples)
    kind, variant, fm_layers = _parse_classifier(cfg.classifier)
    folds = make_cv_folds(samples, cfg.folds, derive_seed(cfg.seed, "folds"))
    index = EventIndex(log) if cfg.inter_features else None

    fold_accs: list[float] = []
    fit_time = 0.0
    gram_time = 0.0
    gram_evals = 0
    cross_evals = 0
    for fold in range(cfg.folds):
        train_idx, test_idx = folds.split(fold)
        x_train, y_train, x_test, y_test = _encode_fold(
            cfg, log, index, samples, train_idx, test_idx
        )
        t_fit0 = time.perf_counter()
        if kind == "majority":
            counts = Counter(y_train)
            top = max(counts.values())
            majority = min(lab for lab, c in counts.items() if c == top)
            predictions = [majority] * len(y_test)
            fit_time += time.perf_counter() - t_fit0
        elif kind == "vqc":
            opt = OptimizerConfig(
                learning_rate=cfg.learning_rate,
                epochs=cfg.epochs,
                method=cfg.opt_method,
                seed=derive_seed(cfg.seed, f"vqc/{fold}"),
            )
            shots = ShotConfig(cfg.shots, derive_seed(cfg.seed, f"shots/{fold}")) \
                if cfg.shots else ShotConfig()
            model = vqc_train(
                x_train, y_train, FeatureMapKind(variant, fm_layers),
                cfg.vqc_layers, opt, shots=shots,
            )
            fit_time += time.perf_counter() - t_fit0
            predictions = [vqc_predict(model, row, shots) for row in x_test]
        else:
            kernel_kind = _kernel_kind(cfg, variant, fm_layers, fold)
            key = None
            k_train = None
            if cfg.cache_dir:
                data_hash = hashlib.sha256(
                    x_train.tobytes() + "\x1f".join(map(str, y_train)).encode("utf-8")
                ).hexdigest()
                key = cache_key(
                    data_hash,
                    {"features": feature_label(cfg), "scale": [cfg.scale_lo, cfg.scale_hi]},
                    {"classifier": cfg.classifier, "shots": cfg.shots, "gamma": cfg.gamma},
                    derive_seed(cfg.seed, f"shots/{fold}"),
                )
                k_train = load_kernel(cfg.cache_dir, key)
            if k_train is None:
                t_gram0 = time.perf_counter()
                k_train = gram(x_train, kernel_kind, n_jobs=cfg.threads)
                gram_time += time.perf_counter() - t_gram0
                if key is not None:
                    save_kernel(k_train, cfg.cache_dir, key)
            gram_evals += k_train.eval_count
            if kernel_kind.variant == "quantum" and not kernel_kind.shots.exact:
                k_train = psd_repair(k_train)
            model = fit_multiclass(k_train, y_train, C=cfg.C, tol=cfg.tol)
            fit_time += time.perf_counter() - t_fit0
            k_test = cross(x_test, x_train, kernel_kind, n_jobs=cfg.threads)
            cross_evals += k_test.eval_count
            predictions = svm_predict(model, k_test)
        correct = sum(1 for p, t in zip(predictions, y_test) if p == t)
        acc = correct / len(y_test)
        fold_accs.append(acc)
        log_.info("fold %d/%d: accuracy %.4f (%d test samples)",
                  fold + 1, cfg.folds, acc, len(y_test))

    return RunResult(
        classifier=cfg.classifier,
        features=feature_label(cfg),
        fold_accuracies=tuple(fold_accs),
        mean_accuracy=float(np.mean(fold_accs)),
        fit_time_s=fit_time,
        gram_time_s=gram_time,
        kernel_evaluations=gram_evals,
        cross_evaluations=cross_evals,
        config_fingerprint=cfg.fingerprint(),
        window_fraction=cfg.window_fraction if cfg.inter_features else None,
        sampling_fraction=cfg.sampling_fraction,
        seed=cfg.seed,
        n_samples=len(samples),
    )


def window_sweep(
    cfg: ExperimentConfig,
    fractions: Sequence[float] | None = None,
    log: EventLog | None = None,
    samples: Sequence[PrefixSample] | None = None,
) -> list[RunResult]:
    """One run per window fraction plus a final averaged row.

    The averaged row takes the fold means per window first, then averages
    across windows (its per-fold entries are cross-window means per fold).
    """
    fractions = tuple(fractions if fractions is not None else cfg.window_fractions)
    if not fractions:
        raise ConfigError("window sweep needs at least one fraction")
    if any(f <= 0 for f in fractions):
        raise ConfigError(f"window fractions must be positive, got {fractions}")
    if not cfg.inter_features:
        raise ConfigError("window sweep requires at least one inter-case feature")
    if log is None or samples is None:
        log, samples = prepare_samples(cfg)
    results = [
        run_experiment(replace(cfg, window_fraction=f), log, samples) for f in fractions
    ]
    per_fold = np.mean([r.fold_accuracies for r in results], axis=0)
    averaged = RunResult(
        classifier=cfg.classifier,
        features=feature_label(cfg) + "@avg",
        fold_accuracies=tuple(float(a) for a in per_fold),
        mean_accuracy=float(np.mean([r.mean_accuracy for r in results])),
        fit_time_s=sum(r.fit_time_s for r in results),
        gram_time_s=sum(r.gram_time_s for r in results),
        kernel_evaluations=sum(r.kernel_evaluations for r in results),
        cross_evaluations=sum(r.cross_evaluations for r in results),
        config_fingerprint=cfg.fingerprint(),
        window_fraction=None,
        sampling_fraction=cfg.sampling_fraction,
        seed=cfg.seed,
        n_samples=results[0].n_samples,
    )
    return results + [averaged]


def sampling_sweep(
    cfg: ExperimentConfig,
    fractions: Sequence[float] | None = None,
    log: EventLog | None = None,
    samples: Sequence[PrefixSample] | None = None,
) -> list[RunResult]:
    """Re-run the experiment on stratified subsamples of the prefix set."""
    fractions = tuple(fractions if fractions is not None else cfg.sampling_fractions)
    if not fractions:
        raise ConfigError("sampling sweep needs at least one fraction")
    if log is None or samples is None:
        log, samples = prepare_samples(cfg)
    results = []
    for f in fractions:
        cfg_f = replace(cfg, sampling_fraction=f)
        if f < 1.0:
            subset = stratified_subsample(samples, f, derive_seed(cfg.seed, "subsample"))
        else:
            subset = list(samples)
        results.append(run_experiment(cfg_f, log, subset))
    return results


def grid_prefix_length(
    cfg: ExperimentConfig,
    lengths: Sequence[int] | None = None,
    log: EventLog | None = None,
    samples: Sequence[PrefixSample] | None = None,
) -> list[RunResult]:
    """One run per index-encoding prefix length k."""
    lengths = tuple(lengths if lengths is not None else cfg.prefix_lengths)
    if not lengths:
        raise ConfigError("prefix-length grid needs at least one length")
    if any(k < 1 for k in lengths):
        raise ConfigError(f"prefix lengths must be >= 1, got {lengths}")
    if log is None or samples is None:
        log, samples = prepare_samples(cfg)
    return [run_experiment(replace(cfg, k=k), log, samples) for k in lengths]


def emit_results(results: Sequence[RunResult], out_dir: str | Path) -> tuple[Path, Path]:
    """Write results.csv (classifier x feature-config accuracy matrix) and
    results.json (full per-run provenance). Re-emitting identical results
    produces byte-identical files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    classifiers: list[str] = []
    feature_sets: list[str] = []
    cells: dict[tuple[str, str], float] = {}
    for r in results:
        if r.classifier not in classifiers:
            classifiers.append(r.classifier)
        if r.features not in feature_sets:
            feature_sets.append(r.features)
        cells[(r.classifier, r.features)] = r.mean_accuracy

    csv_path = out_dir / "results.csv"
    lines = [",".join(["classifier"] + feature_sets)]
    for clf in classifiers:
        row = [clf]
        for feat in feature_sets:
            value = cells.get((clf, feat))
            row.append("" if value is None else f"{value:.4f}")
        lines.append(",".join(row))
    csv_path.write_text("\n".join(lines) + "\n")

    json_path = out_dir / "results.json"
    payload = {"runs": [r.to_dict() for r in results]}
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path

"""Intra-case prefix encoders.

Categorical values are encoded as ordinal vocabulary codes (index 0 is
reserved for padding/unknown) so the feature count, and with it the qubit
count of downstream quantum models, stays equal to the slot count instead
of growing with the vocabulary. Scaling maps each feature into a fixed
target interval, by default [0, pi], with train-fitted min/max and
clamping at prediction time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .eventlog import PrefixSample

PAD_TOKEN = "<PAD>"


@dataclass(frozen=True)
class Vocabulary:
    """Ordered value list with PAD at index 0; unknown values map to 0."""

    entries: tuple[str, ...]
    _lookup: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if not self.entries or self.entries[0] != PAD_TOKEN:
            raise ValueError("vocabulary must reserve index 0 for PAD")
        if len(set(self.entries)) != len(self.entries):
            raise ValueError("vocabulary entries must be unique")
        object.__setattr__(
            self, "_lookup", {v: i for i, v in enumerate(self.entries)}
        )

    @classmethod
    def from_values(cls, values: Iterable[str]) -> "Vocabulary":
        distinct = sorted({v for v in values if v})
        return cls((PAD_TOKEN, *distinct))

    def index(self, value: str | None) -> int:
        if value is None:
            return 0
        return self._lookup.get(value, 0)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, value: str) -> bool:
        return value in self._lookup


@dataclass(eq=False)
class FeatureVector:
    """Numeric feature values with a parallel schema of feature names."""

    values: np.ndarray
    schema: tuple[str, ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or len(self.values) != len(self.schema):
            raise ValueError("values and schema lengths differ")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")

    def __len__(self) -> int:
        return len(self.schema)

    def concat(self, other: "FeatureVector") -> "FeatureVector":
        return FeatureVector(
            np.concatenate([self.values, other.values]),
            self.schema + other.schema,
        )


def encode_static(
    prefix: PrefixSample,
    attr_names: Sequence[str],
    attr_vocabs: Mapping[str, Vocabulary],
) -> FeatureVector:
    """One ordinal code per selected case attribute; missing values map to 0."""
    values = []
    for name in attr_names:
        vocab = attr_vocabs.get(name)
        raw = prefix.prefix.attributes.get(name)
        values.append(float(vocab.index(raw)) if vocab else 0.0)
    return FeatureVector(np.array(values), tuple(f"static_{n}" for n in attr_names))


def encode_last_state(
    prefix: PrefixSample,
    act_vocab: Vocabulary,
    res_vocab: Vocabulary | None = None,
) -> FeatureVector:
    """Ordinal code of the last activity, plus the last resource when present."""
    last = prefix.prefix.events[-1]
    values = [float(act_vocab.index(last.activity))]
    schema = ["last_act"]
    if res_vocab is not None and len(res_vocab) > 1:
        values.append(float(res_vocab.index(last.resource)))
        schema.append("last_res")
    return FeatureVector(np.array(values), tuple(schema))


def encode_aggregation(
    prefix: PrefixSample,
    act_vocab: Vocabulary,
    mode: str = "count",
) -> FeatureVector:
    """Occurrence counts (or presence flags) per known activity."""
    if mode not in ("count", "boolean"):
        raise ConfigError(f"aggregation mode must be count or boolean, got {mode!r}")
    values = np.zeros(len(act_vocab) - 1)
    for ev in prefix.prefix.events:
        code = act_vocab.index(ev.activity)
        if code > 0:
            values[code - 1] += 1.0
    if mode == "boolean":
        values = (values > 0).astype(np.float64)
    return FeatureVector(values, tuple(f"agg_{a}" for a in act_vocab.entries[1:]))


def encode_index_based(
    prefix: PrefixSample,
    k: int,
    act_vocab: Vocabulary,
    res_vocab: Vocabulary | None = None,
) -> FeatureVector:
    """Ordinal codes of the last k activities, oldest first, left-padded with 0.

    When the log carries resources a parallel k-slot resource block is added.
    """
    if k < 1:
        raise ConfigError(f"index encoding needs k >= 1, got {k}")
    events = prefix.prefix.events[-k:]
    pad = k - len(events)
    acts = [0.0] * pad + [float(act_vocab.index(e.activity)) for e in events]
    schema = [f"act_{i + 1}" for i in range(k)]
    if res_vocab is not None and len(res_vocab) > 1:
        acts += [0.0] * pad + [float(res_vocab.index(e.resource)) for e in events]
        schema += [f"res_{i + 1}" for i in range(k)]
    return FeatureVector(np.array(acts), tuple(schema))


@dataclass(frozen=True)
class ScalingParams:
    """Per-feature min/max fitted on training data, mapping into [lo, hi]."""

    mins: np.ndarray
    maxs: np.ndarray
    schema: tuple[str, ...]
    lo: float = 0.0
    hi: float = math.pi


def fit_scaler(
    train: Sequence[FeatureVector],
    target: tuple[float, float] = (0.0, math.pi),
) -> ScalingParams:
    if not train:
        raise ConfigError("cannot fit a scaler on an empty training set")
    lo, hi = target
    if not lo < hi:
        raise ConfigError(f"scaling interval must be increasing, got {target}")
    matrix = np.stack([fv.values for fv in train])
    schema = train[0].schema
    for fv in train:
        if fv.schema != schema:
            raise ValueError("training vectors disagree on schema")
    return ScalingParams(matrix.min(axis=0), matrix.max(axis=0), schema, lo, hi)


def apply_scaler(fv: FeatureVector, params: ScalingParams) -> FeatureVector:
    """Scale into [lo, hi]; out-of-range values are clamped first.

    A feature that was constant in training maps to the interval midpoint.
    """
    if fv.schema != params.schema:
        raise ValueError("feature schema does not match fitted scaler")
    span = params.maxs - params.mins
    clipped = np.clip(fv.values, params.mins, params.maxs)
    width = params.hi - params.lo
    mid = params.lo + 0.5 * width
    with np.errstate(invalid="ignore", divide="ignore"):
        scaled = params.lo + (clipped - params.mins) / span * width
    scaled = np.where(span == 0, mid, scaled)
    return FeatureVector(scaled, fv.schema)


def write_feature_csv(
    vectors: Sequence[FeatureVector],
    labels: Sequence[str],
    sink: IO[str],
) -> None:
    """Feature matrix as CSV: header is the schema, label in the last column."""
    if len(vectors) != len(labels):
        raise ValueError("vectors and labels lengths differ")
    writer = csv.writer(sink, lineterminator="\n")
    if not vectors:
        writer.writerow(["label"])
        return
    schema = vectors[0].schema
    writer.writerow(list(schema) + ["label"])
    for fv, label in zip(vectors, labels):
        if fv.schema != schema:
            raise ValueError("inconsistent schema across rows")
        writer.writerow([repr(v) for v in fv.values.tolist()] + [label])


INTRA_ENCODERS = ("static", "last_state", "agg_count", "agg_bool", "index_bsd")


def make_intra_encoder(
    name: str,
    act_vocab: Vocabulary,
    res_vocab: Vocabulary | None,
    k: int = 4,
    static_attrs: Sequence[str] = (),
    attr_vocabs: Mapping[str, Vocabulary] | None = None,
):
    """Bind an encoder name to fitted vocabularies; returns prefix -> vector."""
    if name == "static":
        if not static_attrs:
            raise ConfigError("static encoder requires at least one case attribute")
        vocabs = attr_vocabs or {}
        return lambda p: encode_static(p, static_attrs, vocabs)
    if name == "last_state":
        return lambda p: encode_last_state(p, act_vocab, res_vocab)
    if name == "agg_count":
        return lambda p: encode_aggregation(p, act_vocab, "count")
    if name == "agg_bool":
        return lambda p: encode_aggregation(p, act_vocab, "boolean")
    if name == "index_bsd":
        return lambda p: encode_index_based(p, k, act_vocab, res_vocab)
    raise ConfigError(f"unknown intra-case encoder {name!r}, expected {INTRA_ENCODERS}")

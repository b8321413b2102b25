"""Data model for multi-source samples, losses and decision rules."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .exceptions import (
    EmptyInput,
    EmptySample,
    InvalidParameters,
    NonFiniteValue,
    OosError,
    SingleSource,
)

SourceLabel = Hashable


def _readonly(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MultiSourceDataset:
    """Scalar observations grouped by source.

    Sources are stored in canonical order (lexicographic on ``str(label)``)
    so that every ``(j, l)``-indexed quantity downstream is reproducible.
    Within a source the input order is preserved.
    """

    labels: tuple
    groups: tuple

    def __post_init__(self):
        if len(self.labels) != len(self.groups):
            raise InvalidParameters("labels and groups differ in length")
        if len(self.labels) < 2:
            raise SingleSource()
        rendered = [str(lab) for lab in self.labels]
        if len(set(rendered)) != len(rendered):
            raise InvalidParameters("source labels must be distinct")
        if rendered != sorted(rendered):
            raise InvalidParameters("sources must be in canonical order; use from_groups")
        for lab, g in zip(self.labels, self.groups):
            if g.ndim != 1 or g.size == 0:
                raise EmptySample(f"source {lab!r} has no observations")
            if not np.all(np.isfinite(g)):
                raise NonFiniteValue(f"source {lab!r} contains a non-finite value")

    @classmethod
    def from_groups(cls, groups: Mapping[SourceLabel, Iterable[float]]) -> "MultiSourceDataset":
        items = sorted(groups.items(), key=lambda kv: str(kv[0]))
        return cls(
            labels=tuple(lab for lab, _ in items),
            groups=tuple(_readonly(list(vals)) for _, vals in items),
        )

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([g.size for g in self.groups], dtype=np.int64)

    @property
    def n(self) -> int:
        return int(sum(g.size for g in self.groups))

    def concatenated(self) -> np.ndarray:
        """All observations, source blocks in canonical order."""
        return np.concatenate(self.groups)

    def __repr__(self):
        sizes = ", ".join(f"{lab}:{g.size}" for lab, g in zip(self.labels, self.groups))
        return f"MultiSourceDataset(k={self.k}, n={self.n}, sizes={{{sizes}}})"


def dataset_from_records(records: Iterable[tuple[SourceLabel, float]]) -> MultiSourceDataset:
    """Group ``(label, value)`` pairs into a dataset.

    Raises
    ------
    EmptyInput
        No records.
    SingleSource
        Fewer than two distinct labels.
    NonFiniteValue
        A NaN or infinite value.
    """
    groups: dict = {}
    count = 0
    for label, value in records:
        value = float(value)
        if not math.isfinite(value):
            raise NonFiniteValue(f"non-finite value {value!r} for source {label!r}")
        groups.setdefault(label, []).append(value)
        count += 1
    if count == 0:
        raise EmptyInput("no records")
    if len(groups) < 2:
        raise SingleSource()
    return MultiSourceDataset.from_groups(groups)


class CsvFormatError(Exception):
    """Input file does not follow the ``source,value`` layout."""


def read_csv(path) -> MultiSourceDataset:
    """Read a ``source,value`` CSV file (UTF-8, header required).

    Malformed files raise :class:`CsvFormatError`; domain problems (one
    source, non-finite values) raise the usual :class:`OosError` subclasses.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CsvFormatError(f"{path}: empty file")
        if [h.strip().lower() for h in header] != ["source", "value"]:
            raise CsvFormatError(f"{path}: expected header 'source,value', got {','.join(header)!r}")
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise CsvFormatError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                value = float(row[1])
            except ValueError:
                raise CsvFormatError(f"{path}:{lineno}: value {row[1]!r} is not a number") from None
            records.append((row[0].strip(), value))
    return dataset_from_records(records)


@dataclass(frozen=True, eq=False)
class Proportions:
    """Source proportions ``p`` and odds ``p / (1 - p)``."""

    p: np.ndarray
    od: np.ndarray

    @classmethod
    def from_vector(cls, p: Sequence[float]) -> "Proportions":
        p = np.asarray(p, dtype=np.float64)
        if p.ndim != 1 or p.size < 2:
            raise SingleSource()
        if np.any(p <= 0) or np.any(p >= 1):
            raise InvalidParameters("every proportion must lie strictly in (0, 1)")
        if abs(math.fsum(p) - 1.0) > 1e-9:
            raise InvalidParameters(f"proportions sum to {math.fsum(p)!r}, not 1")
        return cls(p=_readonly(p), od=_readonly(p / (1.0 - p)))

    @property
    def k(self) -> int:
        return self.p.size


def proportions(dataset: MultiSourceDataset) -> Proportions:
    sizes = dataset.sizes
    return Proportions.from_vector(sizes / sizes.sum())


# ---------------------------------------------------------------------------
# losses and decision rules


@dataclass(frozen=True)
class LossFunction:
    """Nonnegative loss ``L(target, decision)``.

    ``evaluate`` must broadcast over numpy arrays the way a ufunc does.
    """

    name: str
    evaluate: Callable

    def __call__(self, target, decision):
        return self.evaluate(target, decision)


@dataclass(frozen=True)
class DecisionRule:
    """Statistic fitted on one source's sample.

    ``fit`` must be deterministic and invariant to the order of its sample.
    """

    name: str
    fit_fn: Callable[[np.ndarray], float]

    def fit(self, sample) -> float:
        return fit_rule(self, sample)


def _squared(z, d):
    r = np.subtract(z, d)
    return r * r


def _mean(sample: np.ndarray) -> float:
    # fsum is exactly rounded, hence independent of summation order
    return math.fsum(sample) / len(sample)


SQUARED = LossFunction("squared", _squared)
ABSOLUTE = LossFunction("absolute", lambda z, d: np.abs(np.subtract(z, d)))
MEAN = DecisionRule("mean", _mean)

LOSSES = {"squared": SQUARED, "absolute": ABSOLUTE}
RULES = {"mean": MEAN}


def get_loss(name: str | LossFunction) -> LossFunction:
    if isinstance(name, LossFunction):
        return name
    try:
        return LOSSES[name]
    except KeyError:
        raise OosError(f"unknown loss {name!r}; choose from {sorted(LOSSES)}") from None


def get_rule(name: str | DecisionRule) -> DecisionRule:
    if isinstance(name, DecisionRule):
        return name
    try:
        return RULES[name]
    except KeyError:
        raise OosError(f"unknown decision rule {name!r}; choose from {sorted(RULES)}") from None


def fit_rule(rule: DecisionRule, sample) -> float:
    sample = np.asarray(sample, dtype=np.float64)
    if sample.size == 0:
        raise EmptySample("decision rule needs a nonempty sample")
    return float(rule.fit_fn(sample))

"""Scenario files for ``oos-error simulate``.

A TOML document with two sections::

    [sources]
    F1 = { dist = "normal(0, 9)", p = 0.2 }
    F2 = { dist = "normal(2, 1)", p = 0.3 }
    F3 = { dist = "normal(5, 5)", p = 0.5 }

    [run]
    loss = "squared"        # or "absolute"
    rule = "mean"
    n_grid = [100, 200]
    reps = 2000
    seed = 42
    strict = true           # reject non-integral n * p_j

Unknown sections or keys are errors, reported with their line number.
"""

from __future__ import annotations

import re
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .exceptions import OosError
from .simulation import DistributionSpec, ScenarioConfig

RUN_KEYS = {"loss", "rule", "n_grid", "reps", "seed", "strict", "name"}
SOURCE_KEYS = {"dist", "p"}


class ConfigError(Exception):
    pass


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(r"^\s*(\[\s*)?[\"']?" + re.escape(key) + r"[\"']?\s*[=\]]")
    for i, line in enumerate(text.splitlines(), start=1):
        if pat.search(line):
            return i
    return None


def _where(text, key):
    line = _line_of(text, key)
    return f"line {line}: " if line else ""


def parse_config(text: str, origin: str = "<config>") -> ScenarioConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{origin}: {exc}") from None

    for section in doc:
        if section not in ("sources", "run"):
            raise ConfigError(f"{origin}: {_where(text, section)}unknown section [{section}]")
    if "sources" not in doc:
        raise ConfigError(f"{origin}: missing [sources] section")
    run = doc.get("run", {})
    for key in run:
        if key not in RUN_KEYS:
            raise ConfigError(f"{origin}: {_where(text, key)}unknown key {key!r} in [run]")

    sources, labels = [], []
    for label, entry in doc["sources"].items():
        if not isinstance(entry, dict):
            raise ConfigError(f"{origin}: {_where(text, label)}source {label!r} must be a table "
                              "with 'dist' and 'p'")
        for key in entry:
            if key not in SOURCE_KEYS:
                raise ConfigError(f"{origin}: {_where(text, label)}unknown key {key!r} in source {label!r}")
        missing = SOURCE_KEYS - set(entry)
        if missing:
            raise ConfigError(f"{origin}: {_where(text, label)}source {label!r} lacks {sorted(missing)}")
        try:
            spec = DistributionSpec.parse(str(entry["dist"]))
        except OosError as exc:
            raise ConfigError(f"{origin}: {_where(text, label)}{exc}") from None
        sources.append((spec, float(entry["p"])))
        labels.append(str(label))

    try:
        return ScenarioConfig(
            sources=tuple(sources),
            labels=tuple(labels),
            loss=run.get("loss", "squared"),
            rule=run.get("rule", "mean"),
            n_grid=tuple(run.get("n_grid", (100,))),
            reps=int(run.get("reps", 1000)),
            master_seed=int(run.get("seed", 0)),
            strict=bool(run.get("strict", True)),
            name=str(run.get("name", "")),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, OosError):
            raise
        raise ConfigError(f"{origin}: {exc}") from None


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))

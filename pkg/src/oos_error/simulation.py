"""Seeded Monte Carlo study of the OOS estimator.

Reproducibility contract: replicate ``r`` at grid position ``i`` draws from
its own stream, seeded by ``SeedSequence(master_seed, spawn_key=(i, r))``.
Results are aggregated in replicate order, so a report depends only on the
configuration and the master seed, never on the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .closed_form import MomentComponents, NormalSourceParams, normal_oos_absolute, normal_oos_squared
from .core import MultiSourceDataset, Proportions, get_loss
from .exceptions import InvalidParameters, NonIntegralAllocation, OosError, TooFewReplicates

DEFAULT_N_GRID = (100, 200, 300, 500, 700, 1000, 10_000)
TABLE_PROPORTIONS = (0.2, 0.3, 0.5)
LARGE_N = 10_000
LARGE_N_REPS = 1000
CHUNK = 1000


@dataclass(frozen=True)
class DistributionSpec:
    """A source distribution.

    ``normal(mean, var)``, ``uniform(a, b)``, ``shifted_t(df, shift)``,
    ``gamma(shape, rate)`` and ``exponential(rate)``. Gamma uses the rate
    parameterization, so ``gamma(10, 2)`` has mean 5.
    """

    kind: str
    params: tuple

    _ARITY = {"normal": 2, "uniform": 2, "shifted_t": 2, "gamma": 2, "exponential": 1}

    def __post_init__(self):
        if self.kind not in self._ARITY:
            raise InvalidParameters(f"unknown distribution {self.kind!r}")
        if len(self.params) != self._ARITY[self.kind]:
            raise InvalidParameters(f"{self.kind} takes {self._ARITY[self.kind]} parameters")
        object.__setattr__(self, "params", tuple(float(x) for x in self.params))
        if not all(math.isfinite(x) for x in self.params):
            raise InvalidParameters("distribution parameters must be finite")
        a = self.params
        bad = {
            "normal": a[-1] <= 0,
            "uniform": a[0] >= a[-1],
            "shifted_t": a[0] <= 2,
            "gamma": min(a) <= 0,
            "exponential": a[0] <= 0,
        }[self.kind]
        if bad:
            raise InvalidParameters(f"invalid parameters for {self}")
        if self.kind == "shifted_t" and a[0] <= 4:
            warnings.warn(f"{self}: fourth moment is infinite, squared-loss variance is unstable",
                          stacklevel=3)

    @classmethod
    def normal(cls, mean, var):
        return cls("normal", (mean, var))

    @classmethod
    def uniform(cls, a, b):
        return cls("uniform", (a, b))

    @classmethod
    def shifted_t(cls, df, shift=0.0):
        return cls("shifted_t", (df, shift))

    @classmethod
    def gamma(cls, shape, rate):
        return cls("gamma", (shape, rate))

    @classmethod
    def exponential(cls, rate):
        return cls("exponential", (rate,))

    @classmethod
    def parse(cls, text: str) -> "DistributionSpec":
        """Parse ``"normal(0, 9)"``-style text. ``t`` is an alias of ``shifted_t``."""
        m = re.fullmatch(r"\s*([a-z_]+)\s*\(([^)]*)\)\s*", text)
        if not m:
            raise InvalidParameters(f"cannot parse distribution {text!r}")
        kind = {"t": "shifted_t", "exp": "exponential"}.get(m.group(1), m.group(1))
        try:
            params = tuple(float(x) for x in m.group(2).split(",") if x.strip())
        except ValueError:
            raise InvalidParameters(f"non-numeric parameter in {text!r}") from None
        if kind == "shifted_t" and len(params) == 1:
            params += (0.0,)
        return cls(kind, params)

    def __str__(self):
        return f"{self.kind}({', '.join(f'{x:g}' for x in self.params)})"

    @property
    def mean(self) -> float:
        a = self.params
        return {
            "normal": lambda: a[0],
            "uniform": lambda: (a[0] + a[1]) / 2,
            "shifted_t": lambda: a[1],
            "gamma": lambda: a[0] / a[1],
            "exponential": lambda: 1 / a[0],
        }[self.kind]()

    @property
    def var(self) -> float:
        a = self.params
        return {
            "normal": lambda: a[1],
            "uniform": lambda: (a[1] - a[0]) ** 2 / 12,
            "shifted_t": lambda: a[0] / (a[0] - 2),
            "gamma": lambda: a[0] / a[1] ** 2,
            "exponential": lambda: 1 / a[0] ** 2,
        }[self.kind]()

    def sample(self, rng: np.random.Generator, size, out=None) -> np.ndarray:
        a = self.params
        if self.kind == "normal":
            x = rng.normal(a[0], math.sqrt(a[1]), size)
        elif self.kind == "uniform":
            x = rng.uniform(a[0], a[1], size)
        elif self.kind == "shifted_t":
            x = rng.standard_t(a[0], size) + a[1]
        elif self.kind == "gamma":
            x = rng.gamma(a[0], 1.0 / a[1], size)
        else:
            x = rng.exponential(1.0 / a[0], size)
        if out is not None:
            out[...] = x
            return out
        return x


@dataclass(frozen=True)
class ScenarioConfig:
    sources: tuple  # of (DistributionSpec, p)
    loss: str = "squared"
    rule: str = "mean"
    n_grid: tuple = DEFAULT_N_GRID
    reps: int = 10_000
    master_seed: int = 0
    strict: bool = True
    name: str = ""
    labels: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple((s, float(p)) for s, p in self.sources))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        Proportions.from_vector(self.proportions)
        get_loss(self.loss)
        if self.rule != "mean":
            raise OosError("simulations support the mean rule only")
        if self.labels is not None and len(self.labels) != len(self.sources):
            raise InvalidParameters("one label per source required")
        if self.strict:
            for n in self.n_grid:
                allocate(n, self.proportions, strict=True)

    @property
    def proportions(self) -> tuple:
        return tuple(p for _, p in self.sources)

    @property
    def specs(self) -> tuple:
        return tuple(s for s, _ in self.sources)

    @property
    def source_labels(self) -> tuple:
        return self.labels or tuple(str(j + 1) for j in range(len(self.sources)))

    def normal_params(self, n: int) -> NormalSourceParams | None:
        """Closed-form parameters when every source is normal, else ``None``."""
        if not all(s.kind == "normal" for s in self.specs):
            return None
        sizes = allocate(n, self.proportions, strict=self.strict)
        return NormalSourceParams.create([s.mean for s in self.specs], [s.var for s in self.specs],
                                         sizes / sizes.sum(), n)

    def closed_form_oos(self, n: int) -> float | None:
        params = self.normal_params(n)
        if params is None:
            return None
        return normal_oos_squared(params) if self.loss == "squared" else normal_oos_absolute(params)


def allocate(n: int, p: Sequence[float], strict: bool = True) -> np.ndarray:
    """Per-source sizes ``n p_j``.

    Strict mode demands integral products. Lenient mode rounds down and hands
    the remaining units to the largest fractional parts (ties to the first
    source).
    """
    exact = np.asarray(p, dtype=float) * n
    rounded = np.round(exact)
    if np.all(np.abs(exact - rounded) < 1e-9):
        sizes = rounded.astype(np.int64)
    elif strict:
        raise NonIntegralAllocation(f"n={n} with p={tuple(p)} gives non-integral sizes {exact.tolist()}")
    else:
        sizes = np.floor(exact).astype(np.int64)
        order = sorted(range(len(exact)), key=lambda j: (-(exact[j] - sizes[j]), j))
        for j in order[: n - int(sizes.sum())]:
            sizes[j] += 1
    if np.any(sizes < 1):
        raise NonIntegralAllocation(f"n={n} leaves an empty source")
    return sizes


def replicate_seed(master_seed: int, grid_index: int, replicate: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(grid_index, replicate))


def sample_dataset(config: ScenarioConfig, n: int, replicate_seed) -> MultiSourceDataset:
    sizes = allocate(n, config.proportions, config.strict)
    rng = np.random.default_rng(replicate_seed)
    groups = {lab: spec.sample(rng, int(m))
              for lab, spec, m in zip(config.source_labels, config.specs, sizes)}
    return MultiSourceDataset.from_groups(groups)


def _simulate_block(specs, sizes, loss, master_seed, grid_index, start, stop):
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    data = np.empty((stop - start, int(offsets[-1])))
    for row, r in enumerate(range(start, stop)):
        rng = np.random.default_rng(replicate_seed(master_seed, grid_index, r))
        for j, spec in enumerate(specs):
            spec.sample(rng, int(sizes[j]), out=data[row, offsets[j]:offsets[j + 1]])
    return kernels.oos_rows(data, sizes, loss)


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        workers = os.cpu_count() or 1
    cap = os.environ.get("OOS_THREADS")
    if cap:
        workers = min(workers, max(1, int(cap)))
    return max(1, workers)


def simulate_estimates(config: ScenarioConfig, n: int, grid_index: int, reps: int | None = None,
                       workers: int | None = None) -> np.ndarray:
    """Raw OOS estimates for ``reps`` replicates at sample size ``n``."""
    reps = config.reps if reps is None else reps
    sizes = allocate(n, config.proportions, config.strict)
    blocks = [(s, min(s + CHUNK, reps)) for s in range(0, reps, CHUNK)]
    args = (config.specs, sizes, config.loss, config.master_seed, grid_index)
    workers = worker_count(workers)
    if workers == 1 or len(blocks) == 1:
        parts = [_simulate_block(*args, a, b) for a, b in blocks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_simulate_block, *args, a, b) for a, b in blocks]
            parts = [f.result() for f in futures]
    return np.concatenate(parts)


@dataclass(frozen=True)
class ReportRow:
    table: str
    loss: str
    n: int
    reps: int
    mean: float
    var: float
    se: float
    mu_os: float | None = None
    bias2: float | None = None
    mse: float | None = None


@dataclass
class SimulationReport:
    rows: list = field(default_factory=list)

    FIELDS = ("table", "loss", "n", "reps", "mean", "var", "se", "mu_os", "bias2", "mse")

    def row(self, loss: str, n: int) -> ReportRow:
        for r in self.rows:
            if r.loss == loss and r.n == n:
                return r
        raise KeyError((loss, n))

    def to_records(self) -> list[dict]:
        return [{f: getattr(r, f) for f in self.FIELDS} for r in self.rows]

    def to_csv(self, precision: int | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.FIELDS)
        for rec in self.to_records():
            w.writerow(["" if v is None else _fmt(v, precision) for v in rec.values()])
        return buf.getvalue()

    def to_json(self, precision: int | None = None) -> str:
        recs = [{k: (round(v, precision) if isinstance(v, float) and precision is not None else v)
                 for k, v in rec.items()} for rec in self.to_records()]
        return json.dumps(recs, indent=2)


def _fmt(v, precision):
    if isinstance(v, float) and precision is not None:
        return f"{v:.{precision}f}"
    return repr(v) if isinstance(v, float) else str(v)


def run_monte_carlo(config: ScenarioConfig, workers: int | None = None,
                    reps_for=None) -> SimulationReport:
    """Empirical mean, variance and standard error of the estimator per ``n``.

    ``reps_for``, if given, maps ``n`` to the replicate count used there
    (defaults to ``config.reps`` everywhere). When every source is normal
    the closed-form OOS error, bias^2 and MSE (bias^2 + variance) are filled in.
    """
    report = SimulationReport()
    for i, n in enumerate(config.n_grid):
        reps = config.reps if reps_for is None else reps_for(n)
        if reps < 2:
            raise TooFewReplicates("reps must be ≥ 2")
        est = simulate_estimates(config, n, i, reps, workers)
        mean = math.fsum(est) / reps
        var = math.fsum((est - mean) ** 2) / (reps - 1)
        mu_os = config.closed_form_oos(n)
        bias2 = None if mu_os is None else (mean - mu_os) ** 2
        report.rows.append(ReportRow(
            table=config.name, loss=config.loss, n=n, reps=reps, mean=mean, var=var,
            se=math.sqrt(var / reps), mu_os=mu_os, bias2=bias2,
            mse=None if mu_os is None else bias2 + var))
    return report


# ---------------------------------------------------------------------------
# presets for the four published scenarios

TABLE_SOURCES = {
    1: (DistributionSpec.normal(0, 9), DistributionSpec.normal(2, 1), DistributionSpec.normal(5, 5)),
    2: (DistributionSpec.uniform(-1, 1), DistributionSpec.uniform(0.5, 1.5), DistributionSpec.uniform(3, 7)),
    3: (DistributionSpec.shifted_t(7, 0), DistributionSpec.shifted_t(5, 2), DistributionSpec.shifted_t(6, 5)),
    4: (DistributionSpec.exponential(1), DistributionSpec.gamma(2, 1), DistributionSpec.gamma(10, 2)),
}


def table_config(table_id: int, loss: str = "squared", reps: int = 10_000, master_seed: int = 0,
                 n_grid: Sequence[int] = DEFAULT_N_GRID) -> ScenarioConfig:
    if table_id not in TABLE_SOURCES:
        raise OosError(f"unknown table {table_id}; choose 1-4")
    return ScenarioConfig(
        sources=tuple(zip(TABLE_SOURCES[table_id], TABLE_PROPORTIONS)),
        loss=loss, n_grid=tuple(n_grid), reps=reps, master_seed=master_seed,
        name=str(table_id))


def reproduce_table(table_id: int, reps: int = 10_000, master_seed: int = 0,
                    n_grid: Sequence[int] = DEFAULT_N_GRID, large_n_reps: int | None = LARGE_N_REPS,
                    workers: int | None = None) -> SimulationReport:
    """Both losses over ``n_grid`` for one of the four published scenarios.

    At ``n >= 10_000`` the replicate count is capped at ``large_n_reps``
    (``None`` disables the cap).
    """
    if reps < 2:
        raise TooFewReplicates("reps must be ≥ 2")

    def reps_for(n):
        if large_n_reps is not None and n >= LARGE_N:
            return min(reps, large_n_reps)
        return reps

    report = SimulationReport()
    for loss in ("squared", "absolute"):
        cfg = table_config(table_id, loss, reps, master_seed, n_grid)
        report.rows.extend(run_monte_carlo(cfg, workers, reps_for).rows)
    return report


def format_table(report: SimulationReport, precision: int = 4) -> str:
    """Text layout with one column per ``n`` and one block per loss."""
    losses = list(dict.fromkeys(r.loss for r in report.rows))
    ns = list(dict.fromkeys(r.n for r in report.rows))
    width = max(10, precision + 8)
    lines = [f"{'':<10}{'n':<8}" + "".join(f"{n:>{width}}" for n in ns)]
    labels = [("mu_os", "mu_os"), ("mean", "mean"), ("bias2", "bias^2"), ("var", "Var"),
              ("mse", "MSE"), ("reps", "reps")]
    for loss in losses:
        rows = {r.n: r for r in report.rows if r.loss == loss}
        lines.append("-" * len(lines[0]))
        for attr, label in labels:
            vals = [getattr(rows[n], attr) if n in rows else None for n in ns]
            if all(v is None for v in vals):
                continue
            cells = "".join(
                f"{'':>{width}}" if v is None else
                (f"{v:>{width}d}" if isinstance(v, int) else f"{v:>{width}.{precision}f}")
                for v in vals)
            lines.append(f"{loss:<10}{label:<8}{cells}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Monte Carlo estimates of the variance components, for any distribution


def mc_moment_components(specs: Sequence[DistributionSpec], p: Sequence[float], n: int,
                         loss: str = "squared", draws: int = 100_000, seed=0,
                         chunk: int = 2000) -> tuple[MomentComponents, MomentComponents]:
    """Estimate every moment component by simulation.

    Each draw generates a full dataset plus two fresh observations per
    source, and evaluates all loss terms the components need. Returns the
    estimates and their Monte Carlo standard errors.
    """
    loss_fn = get_loss(loss).evaluate
    sizes = allocate(n, p, strict=False)
    k = len(specs)
    rng = np.random.default_rng(seed)
    fresh1, fresh2, first = [], [], []   # each entry: (k, k, chunk) loss arrays
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        data = [spec.sample(rng, (m, int(s))) for spec, s in zip(specs, sizes)]
        f1 = [spec.sample(rng, m) for spec in specs]
        f2 = [spec.sample(rng, m) for spec in specs]
        means = [d.mean(axis=1) for d in data]
        a = np.full((k, k, m), np.nan)
        b = np.full((k, k, m), np.nan)
        c = np.full((k, k, m), np.nan)
        for j in range(k):
            for l in range(k):
                a[j, l] = loss_fn(f1[j], means[l])
                b[j, l] = loss_fn(f2[j], means[l])
                c[j, l] = loss_fn(data[j][:, 0], means[l])
        fresh1.append(a)
        fresh2.append(b)
        first.append(c)
        done += m
    A = np.concatenate(fresh1, axis=2)
    B = np.concatenate(fresh2, axis=2)
    X = np.concatenate(first, axis=2)

    def cov(x, y):
        xc = x - x.mean()
        yc = y - y.mean()
        prod = xc * yc
        return prod.sum() / (prod.size - 1), prod.std(ddof=1) / math.sqrt(prod.size)

    est, se = MomentComponents.empty(k), MomentComponents.empty(k)

    def put(name, idx, x, y):
        getattr(est, name)[idx], getattr(se, name)[idx] = cov(x, y)

    for j in range(k):
        for l in range(k):
            if l == j:
                continue
            put("v", (j, l), A[j, l], A[j, l])
            put("c_same", (j, l), A[j, l], B[j, l])
            put("c_mutual", (j, l), X[j, l], X[l, j])
            for q in range(k):
                if q in (j, l):
                    continue
                put("c_rule", (j, l, q), A[j, l], A[j, q])
                put("c_cross", (j, q, l), A[j, l], A[q, l])
                put("c_entangled", (j, q, l), X[j, l], A[q, j])
    return est, se

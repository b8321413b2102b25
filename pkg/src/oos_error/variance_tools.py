"""Limits of unbiased variance estimation, and a bootstrap fallback.

For exchangeable ``X_1..X_n`` with common mean ``mu``, variance ``sigma^2``
and covariance ``C``, a quadratic form ``sum a_j X_j^2 + sum b_jj' X_j X_j'``
has expectation ``a (sigma^2 + mu^2) + b (C + mu^2)`` where ``a`` and ``b``
are the coefficient totals. Only targets in that two-dimensional span are
estimable without bias. :func:`moment_feasibility` decides membership.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Sequence

import numpy as np

from . import kernels
from .core import MEAN, DecisionRule, LossFunction, MultiSourceDataset, get_loss, get_rule
from .estimator import oos_estimate
from .exceptions import (
    InvalidMoments,
    TooFewBootstrap,
    TooFewObservations,
    TooFewPerSource,
    TooFewReplicates,
)

FEASIBILITY_TOL = 1e-12


@dataclass(frozen=True)
class MomentTarget:
    """Target ``t_sigma * sigma^2 + t_C * C + t_mu * mu^2``."""

    t_sigma: float
    t_C: float
    t_mu: float


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    a: float | None = None
    b: float | None = None

    def estimate(self, xs) -> float:
        """Evaluate the witness estimator on one exchangeable sample.

        Weight ``a / n`` on every ``X_j^2`` and ``b / (n (n-1) / 2)`` on every
        product ``X_j X_j'`` with ``j < j'``.
        """
        if not self.feasible:
            raise InvalidMoments("no unbiased quadratic estimator exists for this target")
        xs = np.asarray(xs, dtype=float)
        n = xs.size
        if n < 2:
            raise TooFewObservations("need at least two observations")
        sq = float(np.sum(xs * xs))
        cross = (float(np.sum(xs)) ** 2 - sq) / 2.0
        return float(self.a) * sq / n + float(self.b) * cross / (n * (n - 1) / 2.0)


def moment_feasibility(target: MomentTarget) -> FeasibilityResult:
    """Decide whether ``target`` has an unbiased quadratic estimator.

    Exact when all three coefficients are rationals (``int`` or
    ``Fraction``); otherwise compared within ``FEASIBILITY_TOL``.
    """
    ts, tc, tm = target.t_sigma, target.t_C, target.t_mu
    if all(isinstance(t, Rational) for t in (ts, tc, tm)):
        ok = Fraction(tm) == Fraction(ts) + Fraction(tc)
    else:
        ok = abs(float(tm) - (float(ts) + float(tc))) <= FEASIBILITY_TOL
    if ok:
        return FeasibilityResult(True, ts, tc)
    return FeasibilityResult(False)


def sample_variance_s2(xs) -> float:
    xs = np.asarray(xs, dtype=float)
    if xs.size < 2:
        raise TooFewObservations("s^2 needs at least two observations")
    m = math.fsum(xs) / xs.size
    return math.fsum((xs - m) ** 2) / (xs.size - 1)


# ---------------------------------------------------------------------------
# heavy-tailed exchangeable sequence on which s^2 is not consistent


@dataclass(frozen=True, eq=False)
class DiscretePmf:
    support: np.ndarray
    probs: np.ndarray

    def moment(self, order: int, about: float = 0.0) -> float:
        return math.fsum(self.probs * (self.support - about) ** order)

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def var(self) -> float:
        return self.moment(2, self.mean)

    def sample(self, rng: np.random.Generator, size):
        return rng.choice(self.support, size=size, p=self.probs)


def _check_moments(sigma2, C):
    if not (0 < C < sigma2) or not math.isfinite(sigma2):
        raise InvalidMoments(f"need 0 < C < sigma2, got C={C}, sigma2={sigma2}")


def pathological_pmf(n: int, sigma2: float, C: float) -> DiscretePmf:
    """Symmetric four-point law with mass ``3/(8n^2-2)`` at ``+-n(sigma2-C)``.

    The remaining mass ``(n^2-1)/(2n^2-1/2)`` per point sits at
    ``+-sqrt(sigma2-C)/2``. Its variance is
    ``((n^2-1) D + 3 n^2 D^2) / (4n^2 - 1)`` with ``D = sigma2 - C``,
    which is not ``D`` in general; use :attr:`DiscretePmf.var`.
    """
    _check_moments(sigma2, C)
    if n < 2:
        raise TooFewObservations("n must be at least 2")
    d = sigma2 - C
    inner = math.sqrt(d) / 2.0
    outer = n * d
    p_in = (n * n - 1) / (2 * n * n - 0.5)
    p_out = 3.0 / (8 * n * n - 2)
    support = np.array([-outer, -inner, inner, outer])
    probs = np.array([p_out, p_in, p_in, p_out])
    return DiscretePmf(support, probs)


def pathological_sequence(n: int, sigma2: float, C: float, mu: float, seed,
                          size: int | None = None) -> np.ndarray:
    """``X_j = Y_j + eps`` with ``Y_j`` iid from :func:`pathological_pmf` and a
    shared ``eps ~ N(mu, C)``.

    With ``size`` given, returns ``size`` independent sequences as rows.
    """
    pmf = pathological_pmf(n, sigma2, C)
    rng = np.random.default_rng(seed)
    rows = 1 if size is None else size
    y = pmf.sample(rng, (rows, n))
    eps = rng.normal(mu, math.sqrt(C), size=(rows, 1))
    x = y + eps
    return x[0] if size is None else x


def s2_variance(pmf: DiscretePmf, n: int) -> float:
    """Exact ``Var(s^2)`` for an iid sample of size ``n`` from ``pmf``."""
    var = pmf.var
    mu4 = pmf.moment(4, pmf.mean)
    return mu4 / n - (n - 3) * var * var / (n * (n - 1))


def var_s2_study(n_grid: Sequence[int], reps: int, sigma2: float, C: float, mu: float,
                 seed, control: bool = False) -> list[tuple[int, float]]:
    """Empirical ``Var(s^2)`` across sample sizes.

    With ``control=True`` the data are iid ``N(0, 1)`` instead, for which
    ``Var(s^2) = 2/(n-1)`` shrinks with ``n``.
    """
    if reps < 100:
        raise TooFewReplicates(f"reps must be >= 100, got {reps}")
    if not control:
        _check_moments(sigma2, C)
    root = np.random.SeedSequence(seed)
    out = []
    for n, ss in zip(n_grid, root.spawn(len(n_grid))):
        if n < 2:
            raise TooFewObservations("every n must be at least 2")
        if control:
            x = np.random.default_rng(ss).standard_normal((reps, n))
        else:
            x = pathological_sequence(n, sigma2, C, mu, ss, size=reps)
        s2 = x.var(axis=1, ddof=1)
        out.append((int(n), float(s2.var(ddof=1))))
    return out


# ---------------------------------------------------------------------------
# bootstrap


def bootstrap_replicates(dataset: MultiSourceDataset, rule: DecisionRule | str = "mean",
                         loss: LossFunction | str = "squared", B: int = 1000, seed=None) -> np.ndarray:
    """OOS estimates on ``B`` stratified resamples.

    Each source is resampled with replacement at its own size. Sources are
    sorted first, so the result does not depend on the input order.
    """
    rule, loss = get_rule(rule), get_loss(loss)
    if B < 100:
        raise TooFewBootstrap(f"B must be >= 100, got {B}")
    if np.any(dataset.sizes < 2):
        raise TooFewPerSource("bootstrap needs at least two observations per source")
    rng = np.random.default_rng(seed)
    groups = [np.sort(g) for g in dataset.groups]
    draws = np.concatenate(
        [g[rng.integers(0, g.size, size=(B, g.size))] for g in groups], axis=1)
    if rule is MEAN and loss.name in kernels.LOSS_CODES and loss is get_loss(loss.name):
        return kernels.oos_rows(draws, dataset.sizes, loss.name)
    offsets = np.concatenate(([0], np.cumsum(dataset.sizes)))
    out = np.empty(B)
    for b in range(B):
        ds = MultiSourceDataset(dataset.labels, tuple(
            draws[b, offsets[j]:offsets[j + 1]] for j in range(dataset.k)))
        out[b] = oos_estimate(ds, rule, loss).total
    return out


def bootstrap_variance(dataset: MultiSourceDataset, rule: DecisionRule | str = "mean",
                       loss: LossFunction | str = "squared", B: int = 1000, seed=None) -> float:
    reps = bootstrap_replicates(dataset, rule, loss, B, seed)
    return max(float(np.var(reps, ddof=1)), 0.0)

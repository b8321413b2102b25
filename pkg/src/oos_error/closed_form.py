"""Normal-theory closed forms for the OOS error and its variance.

Every source ``j`` is ``N(mu_j, sigma_j^2)`` with proportion ``p_j`` and the
decision rule is the sample mean, so the training mean of source ``l`` is
``N(mu_l, sigma_l^2 / (n p_l))``. The loss terms are then squares (or
absolute values) of correlated normals, and Isserlis' theorem gives every
second moment in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Proportions
from .exceptions import IncompleteComponents, InvalidCovariance, InvalidParameters

_SQRT2 = math.sqrt(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def std_normal_cdf(x: float) -> float:
    # erfc keeps full relative accuracy in the lower tail
    return 0.5 * math.erfc(-x / _SQRT2)


@dataclass(frozen=True, eq=False)
class NormalSourceParams:
    means: np.ndarray
    variances: np.ndarray
    props: Proportions
    n: int

    def __post_init__(self):
        k = self.props.k
        if self.means.shape != (k,) or self.variances.shape != (k,):
            raise InvalidParameters(
                f"means ({self.means.size}), variances ({self.variances.size}) and "
                f"proportions ({k}) must have equal length")
        if not np.all(np.isfinite(self.means)):
            raise InvalidParameters("means must be finite")
        if not np.all(self.variances > 0) or not np.all(np.isfinite(self.variances)):
            raise InvalidParameters("variances must be positive and finite")
        if self.n < 1 or np.any(self.n * self.props.p < 1 - 1e-9):
            raise InvalidParameters("every source needs n * p_j >= 1")

    @classmethod
    def create(cls, means: Sequence[float], variances: Sequence[float],
               p: Sequence[float] | Proportions, n: int) -> "NormalSourceParams":
        props = p if isinstance(p, Proportions) else Proportions.from_vector(p)
        return cls(np.asarray(means, dtype=float), np.asarray(variances, dtype=float), props, int(n))

    @property
    def k(self) -> int:
        return self.props.k

    @property
    def sizes(self) -> np.ndarray:
        """Per-source sample sizes ``n p_j`` (not rounded)."""
        return self.n * self.props.p


@dataclass(frozen=True, eq=False)
class MomentComponents:
    """Second moments of the loss terms entering ``Var(mu_hat_os)``.

    Index conventions (all indices distinct unless stated):

    ``v[j, l]``
        Variance of ``L(Z, d_l)``, ``Z ~ F_j``.
    ``c_same[j, l]``
        Covariance of ``L(Z, d_l)`` and ``L(Z', d_l)``, ``Z, Z'`` iid ``F_j``.
    ``c_rule[j, l, l2]``
        Covariance of ``L(Z, d_l)`` and ``L(Z, d_l2)``.
    ``c_cross[j, j2, l]``
        Covariance of ``L(Z, d_l)`` and ``L(Z', d_l)``, ``Z ~ F_j``, ``Z' ~ F_j2``.
    ``c_entangled[j, j2, l]``
        Covariance of ``L(Z, d_l)`` and ``L(Z', d_j)`` where ``Z`` is one of
        the observations ``d_j`` was fitted on and ``Z' ~ F_j2``.
    ``c_mutual[j, j2]``
        Covariance of ``L(Z, d_j2)`` and ``L(Z', d_j)`` where ``Z`` is in
        source ``j`` and ``Z'`` in source ``j2``: each test point is part of
        the other term's training sample. May be ``None``.

    Undefined slots hold NaN.
    """

    v: np.ndarray
    c_same: np.ndarray
    c_rule: np.ndarray
    c_cross: np.ndarray
    c_entangled: np.ndarray
    c_mutual: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.v.shape[0]

    @classmethod
    def empty(cls, k: int, mutual: bool = True) -> "MomentComponents":
        nan2 = lambda: np.full((k, k), np.nan)
        nan3 = lambda: np.full((k, k, k), np.nan)
        return cls(nan2(), nan2(), nan3(), nan3(), nan3(), nan2() if mutual else None)

    @classmethod
    def zeros(cls, k: int) -> "MomentComponents":
        return cls(np.zeros((k, k)), np.zeros((k, k)), np.zeros((k, k, k)),
                   np.zeros((k, k, k)), np.zeros((k, k, k)), np.zeros((k, k)))

    def as_dict(self) -> dict:
        out = {}
        for name in ("v", "c_same", "c_rule", "c_cross", "c_entangled", "c_mutual"):
            arr = getattr(self, name)
            out[name] = None if arr is None else np.where(np.isnan(arr), None, arr).tolist()
        return out


def folded_normal_mean(mu: float, sigma: float) -> float:
    """``E|X|`` for ``X ~ N(mu, sigma^2)``."""
    if not sigma > 0:
        raise InvalidParameters("sigma must be positive")
    z = mu / sigma
    return mu * (1.0 - 2.0 * std_normal_cdf(-z)) + sigma * _SQRT_2_OVER_PI * math.exp(-0.5 * z * z)


def normal_pairwise_squared(params: NormalSourceParams) -> np.ndarray:
    """Matrix of expected squared losses ``e[j, l]`` (NaN diagonal)."""
    mu, s2, nl = params.means, params.variances, params.sizes
    e = s2[:, None] + (s2 / nl)[None, :] + (mu[:, None] - mu[None, :]) ** 2
    np.fill_diagonal(e, np.nan)
    return e


def normal_pairwise_absolute(params: NormalSourceParams) -> np.ndarray:
    mu, s2, nl = params.means, params.variances, params.sizes
    k = params.k
    e = np.full((k, k), np.nan)
    for j in range(k):
        for l in range(k):
            if l != j:
                e[j, l] = folded_normal_mean(mu[j] - mu[l], math.sqrt(s2[j] + s2[l] / nl[l]))
    return e


def _combine(pairwise: np.ndarray, props: Proportions) -> float:
    p, od = props.p, props.od
    k = p.size
    return math.fsum(od[j] * math.fsum(p[l] * pairwise[j, l] for l in range(k) if l != j)
                     for j in range(k))


def normal_oos_squared(params: NormalSourceParams) -> float:
    """OOS error under squared loss.

    Equals ``sum_j p_j s_j^2 + sum_j od_j sum_{l!=j} p_l (m_j - m_l)^2
    + (1/n) sum_j od_j sum_{l!=j} s_l^2``. The last term carries the
    training-source variance ``s_l^2``.
    """
    return _combine(normal_pairwise_squared(params), params.props)


def normal_oos_absolute(params: NormalSourceParams) -> float:
    return _combine(normal_pairwise_absolute(params), params.props)


def bivariate_square_cov(mu1: float, mu2: float, var1: float, var2: float, cov12: float) -> float:
    """``Cov(X1^2, X2^2)`` for a bivariate normal ``(X1, X2)``."""
    if not (var1 > 0 and var2 > 0):
        raise InvalidParameters("variances must be positive")
    if cov12 * cov12 > var1 * var2 * (1 + 1e-12):
        raise InvalidCovariance(f"|cov| = {abs(cov12)} exceeds sqrt(var1 * var2) = {math.sqrt(var1 * var2)}")
    return 2.0 * cov12 * (cov12 + 2.0 * mu1 * mu2)


def _cov_sq(m1, m2, c):
    # bivariate_square_cov without validation; callers build valid pairs
    return 2.0 * c * (c + 2.0 * m1 * m2)


def normal_components_squared(params: NormalSourceParams) -> MomentComponents:
    """Moment components under squared loss and the mean rule."""
    mu, s2, nl = params.means, params.variances, params.sizes
    k = params.k
    out = MomentComponents.empty(k)
    for j in range(k):
        for l in range(k):
            if l == j:
                continue
            d = mu[j] - mu[l]
            a = s2[j] + s2[l] / nl[l]
            out.v[j, l] = 2.0 * a * (a + 2.0 * d * d)
            out.c_same[j, l] = _cov_sq(d, d, s2[l] / nl[l])
            for m in range(k):
                if m in (j, l):
                    continue
                # m plays l' (second rule) in c_rule and j' (second test source) elsewhere
                out.c_rule[j, l, m] = _cov_sq(d, mu[j] - mu[m], s2[j])
                out.c_cross[j, m, l] = _cov_sq(d, mu[m] - mu[l], s2[l] / nl[l])
                out.c_entangled[j, m, l] = _cov_sq(d, mu[m] - mu[j], -s2[j] / nl[j])
            out.c_mutual[j, l] = _cov_sq(mu[j] - mu[l], mu[l] - mu[j], -s2[j] / nl[j] - s2[l] / nl[l])
    return out


def _require(values, what):
    vals = list(values)
    if not all(math.isfinite(x) for x in vals):
        raise IncompleteComponents(f"{what} has undefined entries needed by the variance")
    return vals


def theoretical_variance(components: MomentComponents, p: Sequence[float] | Proportions, n: int,
                         include_mutual: bool = True) -> float:
    """Exact ``Var(mu_hat_os)`` from the moment components.

    ``include_mutual=False`` drops the ``c_mutual`` contribution; the result
    then understates the variance whenever the mutual covariances are
    nonzero (always, for two sources with distinct means).
    """
    props = p if isinstance(p, Proportions) else Proportions.from_vector(p)
    p, od = props.p, props.od
    k = p.size
    if components.k != k:
        raise IncompleteComponents(f"components are for {components.k} sources, proportions for {k}")
    if include_mutual and components.c_mutual is None:
        raise IncompleteComponents("c_mutual is missing; pass include_mutual=False to omit it")
    v, cs, cr = components.v, components.c_same, components.c_rule
    cc, ce = components.c_cross, components.c_entangled
    terms = []
    for j in range(k):
        others = [l for l in range(k) if l != j]
        single = _require((p[l] ** 2 * (v[j, l] + n * (p[j] - 1.0 / n) * cs[j, l]) for l in others),
                          "v/c_same")
        paired = _require((p[l] * p[m] * cr[j, l, m] for l in others for m in others if m != l), "c_rule")
        terms.append(od[j] ** 2 / (n * p[j]) * math.fsum(single + paired))
    for j in range(k):
        for j2 in range(k):
            if j2 == j:
                continue
            shared = _require((p[l] * (p[l] * cc[j, j2, l] + 2.0 * p[j] * ce[j, j2, l])
                               for l in range(k) if l not in (j, j2)), "c_cross/c_entangled")
            terms.append(od[j] * od[j2] * math.fsum(shared))
            if include_mutual:
                (mut,) = _require([components.c_mutual[j, j2]], "c_mutual")
                terms.append(od[j] * od[j2] * p[j] * p[j2] * mut)
    return math.fsum(terms)


def normal_cvs_squared(params: NormalSourceParams) -> float:
    """Expected leave-one-source-out squared error with a pooled-complement mean."""
    mu, s2, nl = params.means, params.variances, params.sizes
    p = params.props.p
    total_n = nl.sum()
    terms = []
    for j in range(params.k):
        rest = [l for l in range(params.k) if l != j]
        m = total_n - nl[j]
        pool_mean = sum(nl[l] * mu[l] for l in rest) / m
        pool_var = sum(nl[l] * s2[l] for l in rest) / m ** 2
        terms.append(p[j] * (s2[j] + pool_var + (mu[j] - pool_mean) ** 2))
    return math.fsum(terms)

"""Least-squares conditional expectations on simulated states"""

import itertools
import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import RegressionError

logger = logging.getLogger(__name__)

# retained paths required per basis function
MIN_PATHS_PER_FUNCTION = 10
# spread of log-states below which an asset is treated as constant
DEGENERATE_SPREAD = 1e-12


@dataclass(frozen=True)
class RegressionBasis:
    """
    Polynomials of total degree ≤ p in the standardized log-states of the active assets,
    plus one linear term in each standardized asset level when p ≥ 1.
    """

    degree: int
    n_active: int

    @property
    def exponents(self) -> Tuple[Tuple[int, ...], ...]:
        powers = [
            e
            for e in itertools.product(range(self.degree + 1), repeat=self.n_active)
            if sum(e) <= self.degree
        ]
        return tuple(sorted(powers, key=lambda e: (sum(e), tuple(-x for x in e))))

    @property
    def n_level_terms(self) -> int:
        return self.n_active if self.degree >= 1 else 0

    @property
    def size(self) -> int:
        return len(self.exponents) + self.n_level_terms

    def design(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Design matrix from standardized log-states x and levels u (paths, active)"""
        columns = [np.prod(x ** np.asarray(e), axis=1) for e in self.exponents]
        columns += [u[:, j] for j in range(self.n_level_terms)]
        return np.column_stack(columns)

    def design_gradient(self, x: np.ndarray, j: int) -> np.ndarray:
        """∂design/∂x_j of the polynomial part (paths, n_poly)"""
        columns = []
        for e in self.exponents:
            if e[j] == 0:
                columns.append(np.zeros(x.shape[0]))
                continue
            lowered = list(e)
            lowered[j] -= 1
            columns.append(e[j] * np.prod(x ** np.asarray(lowered), axis=1))
        return np.column_stack(columns)


@dataclass(frozen=True, eq=False)
class RegressionFit:
    """Fitted conditional-expectation function of the asset state"""

    basis: RegressionBasis
    active: Tuple[int, ...]
    log_center: np.ndarray
    log_scale: np.ndarray
    level_center: np.ndarray
    level_scale: np.ndarray
    coefficients: np.ndarray
    n_assets: int

    @classmethod
    def constant(cls, value: float, n_assets: int) -> "RegressionFit":
        empty = np.zeros(0)
        return cls(
            basis=RegressionBasis(0, 0),
            active=(),
            log_center=empty,
            log_scale=empty,
            level_center=empty,
            level_scale=empty,
            coefficients=np.array([float(value)]),
            n_assets=n_assets,
        )

    @property
    def degree(self) -> int:
        return self.basis.degree

    def scaled(self, weight: float) -> "RegressionFit":
        return replace(self, coefficients=weight * self.coefficients)

    def shares_features(self, other: "RegressionFit") -> bool:
        """Same basis on the same standardized states, so coefficients can be added"""
        return (
            self.basis == other.basis
            and self.active == other.active
            and self.n_assets == other.n_assets
            and np.array_equal(self.log_center, other.log_center)
            and np.array_equal(self.log_scale, other.log_scale)
            and np.array_equal(self.level_center, other.level_center)
            and np.array_equal(self.level_scale, other.level_scale)
        )

    def combined(self, other: "RegressionFit") -> "RegressionFit":
        if not self.shares_features(other):
            raise RegressionError("fits on different features cannot be combined")
        return replace(self, coefficients=self.coefficients + other.coefficients)

    def _features(self, state: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        s = np.atleast_2d(state)[:, list(self.active)]
        x = (np.log(s) - self.log_center) / self.log_scale
        u = (s - self.level_center) / self.level_scale
        return x, u

    def __call__(self, state: np.ndarray) -> np.ndarray:
        state = np.atleast_2d(state)
        if not self.active:
            return np.full(state.shape[0], self.coefficients[0])
        x, u = self._features(state)
        return self.basis.design(x, u) @ self.coefficients

    def gradient(self, state: np.ndarray) -> np.ndarray:
        """∂fit/∂S^i per path (paths, assets); zero along inactive assets"""
        state = np.atleast_2d(state)
        out = np.zeros((state.shape[0], self.n_assets))
        if not self.active:
            return out
        x, _ = self._features(state)
        n_poly = len(self.basis.exponents)
        for j, asset in enumerate(self.active):
            d_poly = self.basis.design_gradient(x, j) @ self.coefficients[:n_poly]
            d_level = 0.0
            if self.basis.n_level_terms:
                d_level = self.coefficients[n_poly + j] / self.level_scale[j]
            out[:, asset] = d_poly / (self.log_scale[j] * state[:, asset]) + d_level
        return out


def regress(values: np.ndarray, state: np.ndarray, degree: int) -> RegressionFit:
    """
    Least-squares fit of values on the basis of the given degree.

    The degree is lowered while there are fewer than 10 retained paths per basis function
    or the design matrix is rank deficient; degree 0 is the cross-path mean.
    """
    values = np.asarray(values, dtype=float)
    state = np.atleast_2d(state)
    n_paths, n_assets = state.shape
    if n_paths == 0:
        raise RegressionError("no retained paths to regress on")

    logs = np.log(state)
    spread = logs.std(axis=0)
    active = tuple(int(i) for i in np.flatnonzero(spread > DEGENERATE_SPREAD))
    if not active or degree == 0:
        return RegressionFit.constant(float(np.mean(values)), n_assets)

    log_center = logs[:, active].mean(axis=0)
    log_scale = spread[list(active)]
    levels = state[:, active]
    level_center = levels.mean(axis=0)
    level_scale = levels.std(axis=0)
    x = (logs[:, active] - log_center) / log_scale
    u = (levels - level_center) / level_scale

    for p in range(degree, 0, -1):
        basis = RegressionBasis(p, len(active))
        if n_paths < MIN_PATHS_PER_FUNCTION * basis.size:
            continue
        design = basis.design(x, u)
        coefficients, _, rank, _ = np.linalg.lstsq(design, values, rcond=None)
        if rank < basis.size:
            logger.debug("rank %d < %d at degree %d, lowering degree", rank, basis.size, p)
            continue
        if p < degree:
            logger.debug("regression degree lowered from %d to %d", degree, p)
        return RegressionFit(
            basis=basis,
            active=active,
            log_center=log_center,
            log_scale=log_scale,
            level_center=level_center,
            level_scale=level_scale,
            coefficients=coefficients,
            n_assets=n_assets,
        )

    logger.warning("regression fell back to the cross-path mean on %d paths", n_paths)
    return RegressionFit.constant(float(np.mean(values)), n_assets)


def hedge_delta(fit: RegressionFit, state: np.ndarray) -> np.ndarray:
    """Pathwise ∂(fit)/∂S^i from the basis derivative"""
    return fit.gradient(state)


class PriceSurface:
    """
    Per-node fitted pre-default price P(t_k, S), held as a short sum of fits per node.

    At the origin every path shares one state, so the node-0 fit is a constant and the
    delta there is read from the node-1 fit. A damped update rescales the terms of both
    surfaces and merges terms that share their features, so repeated blending keeps one
    term per distinct basis and standardization.
    """

    def __init__(
        self,
        fits: Sequence[Optional[RegressionFit]] = (),
        terms: Optional[Sequence[Tuple[RegressionFit, ...]]] = None,
    ):
        if terms is None:
            terms = [() if fit is None else (fit,) for fit in fits]
        self._terms = tuple(tuple(node) for node in terms)

    @classmethod
    def zero(cls, n_nodes: int) -> "PriceSurface":
        return cls([None] * n_nodes)

    @property
    def n_nodes(self) -> int:
        return len(self._terms)

    def terms(self, k: int) -> Tuple[RegressionFit, ...]:
        return self._terms[k]

    def value(self, k: int, state: np.ndarray) -> np.ndarray:
        out = np.zeros(np.atleast_2d(state).shape[0])
        for fit in self._terms[k]:
            out = out + fit(state)
        return out

    def gradient(self, k: int, state: np.ndarray) -> np.ndarray:
        if k == 0 and self.n_nodes > 1:
            k = 1
        state = np.atleast_2d(state)
        out = np.zeros(state.shape)
        for fit in self._terms[k]:
            out = out + hedge_delta(fit, state)
        return out

    def blend(self, newer: "PriceSurface", damping: float) -> "PriceSurface":
        """Damped update: damping·newer + (1 − damping)·self"""
        if newer.n_nodes != self.n_nodes:
            raise RegressionError("surfaces to blend have different node counts")
        merged = []
        for k in range(self.n_nodes):
            scaled = [fit.scaled(1.0 - damping) for fit in self._terms[k]]
            scaled += [fit.scaled(damping) for fit in newer.terms(k)]
            node: List[RegressionFit] = []
            for fit in scaled:
                for j, kept in enumerate(node):
                    if kept.shares_features(fit):
                        node[j] = kept.combined(fit)
                        break
                else:
                    node.append(fit)
            merged.append(tuple(node))
        return PriceSurface(terms=merged)

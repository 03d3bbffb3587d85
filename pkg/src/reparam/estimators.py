"""Estimator-style wrappers: registration and moment-map centering.

Both learn a group element in ``fit`` and apply it by pullback in
``transform``, so they compose with scikit-learn tooling (``get_params``,
``clone``, pipelines of single-sample transforms).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import mobius
from .mapspace import DiscreteMap, MeshMismatch, SobolevParams, pullback
from .moment import VOLUME_FLOOR, center_map, pseudo_moment
from .properness import align

__all__ = ["check_map", "check_same_space", "MobiusRegistration", "MomentCentering"]


def check_map(X, name: str = "X") -> DiscreteMap:
    """Validate a discrete map argument."""
    if not isinstance(X, DiscreteMap):
        raise TypeError(f"{name} must be a DiscreteMap, got {type(X).__name__}")
    if not np.isfinite(X.values).all():
        raise ValueError(f"{name} has non-finite values")
    return X


def check_same_space(X: DiscreteMap, Y: DiscreteMap):
    if X.mesh.level != Y.mesh.level or X.target != Y.target:
        raise MeshMismatch("maps live on different meshes or targets")


class MobiusRegistration(TransformerMixin, BaseEstimator):
    """Find ``g`` such that ``X o g`` is close to ``y``.

    Parameters
    ----------
    k, p : Sobolev exponents of the distance being minimized; ``k=None``
        selects the C0 distance.
    budget : objective evaluations for the multi-start search.
    n_starts : number of starts (identity plus random elements of K_4).
    random_state : int seed.
    """

    def __init__(self, k=2, p=4.0, budget=2000, n_starts=6, random_state=0):
        self.k = k
        self.p = p
        self.budget = budget
        self.n_starts = n_starts
        self.random_state = random_state

    def _params(self):
        if self.k is None:
            return None
        return SobolevParams(self.k, self.p, strict=False)

    def fit(self, X, y):
        X = check_map(X)
        y = check_map(y, "y")
        check_same_space(X, y)
        g, res = align(X, y, self._params(), budget=self.budget, seed=self.random_state, n_starts=self.n_starts)
        self.g_ = g
        self.residual_ = res
        self.a_factor_ = mobius.a_factor(g)
        return self

    def transform(self, X):
        check_is_fitted(self, "g_")
        return pullback(check_map(X), self.g_)


class MomentCentering(TransformerMixin, BaseEstimator):
    """Pull a map back by the positive-definite element that zeroes its pseudo-moment."""

    def __init__(self, tol=None, max_iter=50, volume_floor=VOLUME_FLOOR):
        self.tol = tol
        self.max_iter = max_iter
        self.volume_floor = volume_floor

    def fit(self, X, y=None):
        X = check_map(X)
        res = center_map(X, tol=self.tol, max_iter=self.max_iter, volume_floor=self.volume_floor)
        self.g_ = res.g
        self.residual_ = res.residual
        self.converged_ = res.converged
        self.n_iter_ = res.iterations
        self.moment_ = np.asarray(pseudo_moment(X))
        return self

    def transform(self, X):
        check_is_fitted(self, "g_")
        return pullback(check_map(X), self.g_)

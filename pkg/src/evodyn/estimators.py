"""scikit-learn style front end for the finite mean dynamics.

Rows of ``X`` are initial population states on an ``n``-point grid. The
transformer maps each row to its state at ``t_end``; ``predict`` maps it to
the rest point the dynamics settle on.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .analysis import RESIDUAL_TOL, equilibrium_run
from .dynamics import IntegratorConfig, RK4Fixed, RK45Adaptive, Trajectory, integrate
from .games import kernel_from_dict
from .measures import grid_points
from .protocols import ReferenceMode, RevisionProtocol


def check_states(X, n_features=None, tol: float = 1e-9) -> np.ndarray:
    """Validate a 2-D array whose rows are simplex points."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} strategies, estimator was fitted with {n_features}")
    if X.min() < -1e-12:
        raise ValueError("states must be nonnegative")
    if np.any(np.abs(X.sum(axis=1) - 1.0) > tol):
        raise ValueError(f"every row of X must sum to 1 (tolerance {tol})")
    return X


class MeanDynamics(TransformerMixin, BaseEstimator):
    """Finite-strategy mean dynamics as a transformer.

    Parameters
    ----------
    game : {"anticoordination", "bump", "zero"}, default="anticoordination"
        Payoff kernel.
    width : float, default=0.1
        Bump width, used only when ``game="bump"``.
    protocol : {"replicator", "bnn", "smith"}, default="replicator"
    n : int or None, default=None
        Number of strategies. Inferred from ``X`` at ``fit`` when None.
    placement : {"endpoints", "midpoints"}, default="endpoints"
    t_end : float, default=10.0
        Horizon used by ``transform``.
    method : {"rk45", "rk4"}, default="rk45"
    dt : float, default=0.01
        Step of the fixed-step method.
    rel_tol, abs_tol, dt_max : float
        Adaptive step control.
    residual_tol : float, default=1e-10
        l1 velocity threshold used by ``predict``.
    t_max : float, default=1e6
        Time budget used by ``predict``.

    Attributes
    ----------
    support_ : ndarray of shape (n,)
        Grid points of the strategy space.
    kernel_, protocol_ : fitted game and protocol objects.
    lambda_ : ndarray of shape (n,) or None
        Fixed uniform reference measure, None for the replicator.
    n_features_in_ : int
    """

    def __init__(self, game="anticoordination", width=0.1, protocol="replicator", n=None,
                 placement="endpoints", t_end=10.0, method="rk45", dt=0.01, rel_tol=1e-8,
                 abs_tol=1e-10, dt_max=0.1, residual_tol=RESIDUAL_TOL, t_max=1e6):
        self.game = game
        self.width = width
        self.protocol = protocol
        self.n = n
        self.placement = placement
        self.t_end = t_end
        self.method = method
        self.dt = dt
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self.dt_max = dt_max
        self.residual_tol = residual_tol
        self.t_max = t_max

    def fit(self, X=None, y=None):
        n = self.n
        if X is not None:
            X = check_states(X)
            if n is not None and X.shape[1] != n:
                raise ValueError(f"X has {X.shape[1]} strategies but n={n}")
            n = X.shape[1]
        if n is None:
            raise ValueError("pass X or set n")
        spec = {"kind": self.game}
        if self.game == "bump":
            spec["width"] = self.width
        self.kernel_ = kernel_from_dict(spec)
        self.protocol_ = RevisionProtocol.named(self.protocol)
        self.support_ = grid_points(n, self.placement)
        self.lambda_ = None
        if self.protocol_.reference_mode is ReferenceMode.FIXED:
            self.lambda_ = np.full(n, 1.0 / n)
        self.n_features_in_ = n
        return self

    def _config(self, t_end, emit=2) -> IntegratorConfig:
        if self.method == "rk4":
            method = RK4Fixed(self.dt)
        elif self.method == "rk45":
            method = RK45Adaptive(self.rel_tol, self.abs_tol, self.dt_max)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        return IntegratorConfig(method=method, t_end=t_end, emit=emit)

    def simulate(self, x0, t_end=None, emit=200) -> Trajectory:
        """Full trajectory from one initial state."""
        check_is_fitted(self, "support_")
        x0 = check_states(np.atleast_2d(x0), self.n_features_in_)[0]
        cfg = self._config(self.t_end if t_end is None else t_end, emit)
        return integrate(self.kernel_, self.protocol_, self.support_, x0, self.lambda_, cfg)

    def transform(self, X):
        check_is_fitted(self, "support_")
        X = check_states(X, self.n_features_in_)
        cfg = self._config(self.t_end)
        return np.vstack([
            integrate(self.kernel_, self.protocol_, self.support_, x, self.lambda_, cfg).final_state
            for x in X
        ])

    def predict(self, X):
        """Rest point reached from each row; NaN rows where ``t_max`` ran out."""
        check_is_fitted(self, "support_")
        X = check_states(X, self.n_features_in_)
        out = np.empty_like(X)
        for k, x in enumerate(X):
            rep = equilibrium_run(self.kernel_, self.protocol_, self.support_, x, self.lambda_,
                                  self.residual_tol, self.t_max)
            out[k] = rep.final_state if rep.converged else math.nan
        return out

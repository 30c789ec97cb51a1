"""scikit-learn compatible wrapper around :func:`ampnnspl.amp.solve`.

The measurement matrix plays the role of the design matrix: ``fit(A, y)``
recovers the sparse coefficient vector into ``coef_`` and ``predict(A)``
returns ``A @ coef_``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .amp import Status, solve
from .learning import build_topology
from .model import LAMBDA_EPS, VAR_FLOOR, MeasurementModel, SolverConfig, TopologyKind


class AMPNNSPLRegressor(RegressorMixin, BaseEstimator):
    """Sparse linear regression by AMP with nearest-neighbor sparsity learning.

    Parameters
    ----------
    topology : {"nnspl1d", "nnspl2d", "fullset", "indep", "custom"}
        Neighborhood used to smooth the sparse ratios. ``"fullset"`` learns a
        single shared ratio and ``"indep"`` one ratio per coefficient.
    grid_shape : tuple of int, optional
        ``(rows, cols)`` of the coefficient image, required for ``"nnspl2d"``.
    adjacency : list of lists, optional
        Neighbor indices per coefficient, required for ``"custom"``.
    t_max : int
        Maximum number of AMP sweeps.
    eps_toc : float
        Relative change of the estimate below which iteration stops.
    damping : float
        Weight on the new estimate in each sweep; 1.0 means no damping.
    snr0 : float
        Initial SNR guess used to initialize the noise variance.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    mu0_, tau0_, noise_var_ : float
        Learned slab mean, slab variance and noise variance.
    sparse_ratios_ : ndarray of shape (n_features,)
    n_iter_ : int
    status_ : str
        ``"converged"``, ``"max_iterations"`` or ``"diverged"``.
    """

    def __init__(
        self,
        topology="nnspl1d",
        grid_shape=None,
        adjacency=None,
        t_max=200,
        eps_toc=1e-6,
        damping=1.0,
        snr0=100.0,
        lambda_eps=LAMBDA_EPS,
        var_floor=VAR_FLOOR,
    ):
        self.topology = topology
        self.grid_shape = grid_shape
        self.adjacency = adjacency
        self.t_max = t_max
        self.eps_toc = eps_toc
        self.damping = damping
        self.snr0 = snr0
        self.lambda_eps = lambda_eps
        self.var_floor = var_floor

    def _solver_config(self):
        return SolverConfig(
            t_max=self.t_max,
            eps_toc=self.eps_toc,
            topology=TopologyKind(self.topology),
            grid_shape=self.grid_shape,
            adjacency=self.adjacency,
            damping=self.damping,
            snr0=self.snr0,
            lambda_eps=self.lambda_eps,
            var_floor=self.var_floor,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        config = self._solver_config()
        topo = build_topology(config.topology, X.shape[1], config.grid_shape, config.adjacency)
        result = solve(MeasurementModel(X, y), config, topology=topo)
        self.coef_ = result.xhat
        self.mu0_ = result.hp_final.mu0
        self.tau0_ = result.hp_final.tau0
        self.noise_var_ = result.hp_final.delta0
        self.sparse_ratios_ = result.hp_final.lam
        self.n_iter_ = result.iterations
        self.status_ = result.status.value
        self.n_features_in_ = X.shape[1]
        self.result_ = result
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but {type(self).__name__} was fitted with {self.n_features_in_}"
            )
        return X @ self.coef_

    @property
    def converged_(self):
        check_is_fitted(self, "coef_")
        return self.status_ == Status.CONVERGED.value

    def support(self, tol=1e-4):
        """Indices of coefficients with magnitude at least ``tol``."""
        check_is_fitted(self, "coef_")
        return np.flatnonzero(np.abs(self.coef_) >= tol)

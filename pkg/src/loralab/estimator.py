"""Scikit-learn compatible wrapper around adapter training.

``LoraMLPRegressor`` freezes a random base MLP, attaches a low-rank adapter,
and fits only the adapter's trainable factors with projected SGD. It follows
the sklearn estimator contract (``get_params``/``set_params``, ``fit``
returning self, trailing-underscore fitted attributes), so it composes with
pipelines, grid search, and cloning.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .bounds import BoundConfig, BoundReport, generalization_bound
from .empirical import TrainConfig, empirical_risk, train_projected_sgd
from .network import Architecture, PretrainedNet, _forward, init_adapter, random_pretrained
from .rng import RngKey
from .validation import check_samples


class LoraMLPRegressor(BaseEstimator, RegressorMixin):
    """Frozen random MLP plus a trainable low-rank adapter, fit by projected SGD.

    Parameters mirror the training setup: ``hidden_width``/``depth`` shape the
    frozen base network, ``rank`` the adapter, ``box_bound`` the sup-norm
    projection box, ``init_scale`` the frozen-factor standard deviation.
    ``base_net`` may supply a pre-built :class:`PretrainedNet`; otherwise a
    random base is drawn from ``random_state``.
    """

    def __init__(self, hidden_width=16, depth=2, rank=4, activation="relu",
                 box_bound=2.0, init_scale=1.0, steps=2000, learning_rate=0.01,
                 batch_size=32, weight_scale=None, base_net=None, random_state=0):
        self.hidden_width = hidden_width
        self.depth = depth
        self.rank = rank
        self.activation = activation
        self.box_bound = box_bound
        self.init_scale = init_scale
        self.steps = steps
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.weight_scale = weight_scale
        self.base_net = base_net
        self.random_state = random_state

    def fit(self, X, y):
        X = check_samples(X, "X")
        y_arr = np.asarray(y, dtype=np.float64)
        self._y_was_1d = y_arr.ndim == 1
        Y = y_arr[:, None] if self._y_was_1d else y_arr
        Y = check_samples(Y, "y")
        if Y.shape[0] != X.shape[0]:
            raise ValueError("X and y sample counts differ")

        key = RngKey(int(self.random_state))
        arch = Architecture(d=X.shape[1], D=Y.shape[1], T=int(self.depth),
                            W=int(self.hidden_width), r=int(self.rank),
                            activation=self.activation)
        if self.base_net is not None:
            if self.base_net.arch.d != arch.d or self.base_net.arch.D != arch.D:
                raise ValueError("base_net input/output dimensions do not match the data")
            net = PretrainedNet(arch, self.base_net.weights, self.base_net.biases)
        else:
            net = random_pretrained(key.split(0), arch, weight_scale=self.weight_scale)
        adapter = init_adapter(key.split(1), arch, init_scale=self.init_scale,
                               box_bound=self.box_bound)
        cfg = TrainConfig(steps=int(self.steps), learning_rate=float(self.learning_rate),
                          batch_size=int(self.batch_size))
        trace = train_projected_sgd(net, adapter, X, Y, cfg, rng=key.split(2))

        self.net_ = net
        self.adapter_ = adapter
        self.loss_trace_ = trace
        self.n_features_in_ = X.shape[1]
        self.n_outputs_ = Y.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "adapter_"):
            raise RuntimeError("estimator is not fitted; call fit first")

    def predict(self, X):
        self._check_fitted()
        X = check_samples(X, "X", n_features=self.n_features_in_)
        out = _forward(self.net_, self.adapter_, X)
        return out[:, 0] if self._y_was_1d else out

    def risk(self, X, y) -> float:
        """Mean clipped distance loss on (X, y); the quantity the gap bound covers."""
        self._check_fitted()
        X = check_samples(X, "X", n_features=self.n_features_in_)
        y_arr = np.asarray(y, dtype=np.float64)
        Y = y_arr[:, None] if y_arr.ndim == 1 else y_arr
        return empirical_risk(lambda Z: _forward(self.net_, self.adapter_, Z), X, Y)

    def generalization_bound(self, n_samples: int, delta: float = 0.05,
                             depth_constant: float = 1.0) -> BoundReport:
        """Closed-form gap envelope for this estimator's configuration."""
        self._check_fitted()
        cfg = BoundConfig(arch=self.adapter_.arch, box_bound=float(self.box_bound),
                          init_scale=float(self.init_scale),
                          weight_sup=self.net_.max_abs_param,
                          n_samples=int(n_samples), delta=float(delta),
                          depth_constant=float(depth_constant))
        return generalization_bound(cfg)

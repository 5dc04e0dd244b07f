"""scikit-learn style wrapper around the trainer.

``fit`` trains a mask network against a seeded surrogate world (training codes
are sampled from the world, so ``X`` is not used). ``transform`` maps rows of
``[source | target]`` style codes to reenacted codes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .metrics import evaluate, mask_recovery
from .trainer import TrainConfig, train, world_for


class MaskMixReenactor(TransformerMixin, BaseEstimator):
    """Learn which style channels to take from the target face.

    Hyperparameters mirror :class:`~maskmix.trainer.TrainConfig`. After
    ``fit`` the estimator exposes ``world_``, ``checkpoint_``, ``log_`` and
    ``n_iter_``.
    """

    def __init__(self, layout="stylegan2-ffhq", iterations=70000, batch_size=6, learning_rate=1e-4,
                 hidden_width=None, lambda_x=1.0, lambda_id=1.0, cycle_enabled=True,
                 per_layer_network=True, entangle_seed=None, world_seed=7, world_sizes=None,
                 seed=0, desk_preset=False, log_every=100):
        self.layout = layout
        self.iterations = iterations
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.hidden_width = hidden_width
        self.lambda_x = lambda_x
        self.lambda_id = lambda_id
        self.cycle_enabled = cycle_enabled
        self.per_layer_network = per_layer_network
        self.entangle_seed = entangle_seed
        self.world_seed = world_seed
        self.world_sizes = world_sizes
        self.seed = seed
        self.desk_preset = desk_preset
        self.log_every = log_every

    def _config(self):
        params = self.get_params()
        params["world_sizes"] = dict(params["world_sizes"] or {})
        return TrainConfig(**params)

    def fit(self, X=None, y=None):
        config = self._config()
        result = train(config, world=world_for(config))
        self.world_ = result.world
        self.checkpoint_ = result.checkpoint
        self.log_ = result.rows
        self.n_iter_ = result.checkpoint.iteration
        self.n_features_in_ = 2 * self.world_.layout.total_dims
        return self

    def _split(self, X):
        check_is_fitted(self, "checkpoint_")
        X = check_array(X, dtype=np.float64)
        d = self.world_.layout.total_dims
        if X.shape[1] != 2 * d:
            raise ValueError(f"X has {X.shape[1]} features; expected {2 * d} ([source | target])")
        return X[:, :d], X[:, d:]

    def transform(self, X):
        s_s, s_t = self._split(X)
        s_r, _ = self.checkpoint_.reenactor().reenact(s_s, s_t)
        return s_r.data

    def predict_mask(self, X):
        s_s, s_t = self._split(X)
        return self.checkpoint_.reenactor().mask(s_s, s_t).data

    def evaluate(self, n_pairs=500, seed=0):
        check_is_fitted(self, "checkpoint_")
        return evaluate(self.checkpoint_, self.world_, n_pairs, seed)

    def score(self, X=None, y=None, n_pairs=200, seed=0):
        """Mask-recovery F1 against the world's hidden pose/expression channels."""
        check_is_fitted(self, "checkpoint_")
        return mask_recovery(self.checkpoint_, self.world_, n_pairs, seed).f1

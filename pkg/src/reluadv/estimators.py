"""scikit-learn compatible wrappers: a trainable ReLU classifier, an example
normalizer, and the gradient-flow attack as a transformer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets, unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, validate_data

from .attack import AttackConfig, gd_attack, gradient_flow_attack
from .datatrain import Dataset, TrainConfig, normalize_examples, train_sgd
from .exceptions import InvalidInputError
from .relunet import NetworkWeights, _value_and_gradient


class ReLUNetClassifier(ClassifierMixin, BaseEstimator):
    """Bias-free ReLU network with a scalar output, trained by mini-batch SGD
    on the logistic loss.

    The second entry of ``classes_`` corresponds to a positive network output.
    """

    def __init__(self, hidden_dims=(100,), epochs=10, learning_rate=0.05, batch_size=32, random_state=0):
        self.hidden_dims = hidden_dims
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.random_state = random_state

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.classifier_tags.multi_class = False
        return tags

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise InvalidInputError(
                f"Only binary classification is supported; got {len(self.classes_)} classes"
            )
        signs = np.where(y == self.classes_[1], 1, -1)
        cfg = TrainConfig(
            hidden_dims=tuple(self.hidden_dims),
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=min(self.batch_size, X.shape[0]),
            seed=int(self.random_state or 0),
        )
        res = train_sgd(cfg, Dataset(X, signs, "fit"))
        self.network_ = res.network
        self.train_accuracy_ = res.train_accuracy
        self.loss_curve_ = res.loss_curve
        return self

    @classmethod
    def from_network(cls, network: NetworkWeights, classes=(-1, 1)):
        """Wrap fixed weights (e.g. a random network) without training."""
        est = cls(hidden_dims=tuple(network.dims[1:-1]))
        est.network_ = network
        est.classes_ = np.asarray(classes)
        est.n_features_in_ = network.input_dim
        return est

    def decision_function(self, X):
        check_is_fitted(self, "network_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        a = X
        layers = self.network_.layers
        for W in layers[:-1]:
            a = np.maximum(a @ W.T, 0.0)
        return (a @ layers[-1].T)[:, 0]

    def predict(self, X):
        check_is_fitted(self, "network_")
        return self.classes_[(self.decision_function(X) > 0).astype(int)]

    def input_gradient(self, X):
        check_is_fitted(self, "network_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return np.vstack([_value_and_gradient(self.network_.layers, x)[1] for x in X])


class ExampleNormalizer(TransformerMixin, BaseEstimator):
    """Scale each row to a fixed Euclidean norm (``sqrt(n_features)`` by default)."""

    def __init__(self, target_norm=None):
        self.target_norm = target_norm

    def fit(self, X, y=None):
        X = validate_data(self, X, dtype=np.float64)
        self.target_norm_ = float(self.target_norm) if self.target_norm else float(np.sqrt(X.shape[1]))
        return self

    def transform(self, X):
        check_is_fitted(self, "target_norm_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        ds = Dataset(X, np.zeros(X.shape[0]), "transform")
        return normalize_examples(ds, self.target_norm_).examples


class GradientFlowAttack(TransformerMixin, BaseEstimator):
    """Map each example to the point where the attack flips the network's sign.

    ``network`` is a :class:`NetworkWeights` or a fitted
    :class:`ReLUNetClassifier`. ``method="flow"`` runs the arc-length
    gradient flow; ``method="gd"`` runs fixed-rate gradient descent with
    ``eta`` and ``max_steps``. Per-example diagnostics land in ``results_``
    after :meth:`transform`. Failed attacks return their last iterate.
    """

    def __init__(
        self,
        network=None,
        method="flow",
        step=None,
        max_arc_length=None,
        length_multiplier=20.0,
        gradient_floor=1e-12,
        crossing_tolerance=1e-9,
        eta=1e-3,
        max_steps=20_000,
    ):
        self.network = network
        self.method = method
        self.step = step
        self.max_arc_length = max_arc_length
        self.length_multiplier = length_multiplier
        self.gradient_floor = gradient_floor
        self.crossing_tolerance = crossing_tolerance
        self.eta = eta
        self.max_steps = max_steps

    def _resolve_network(self):
        net = self.network
        if isinstance(net, ReLUNetClassifier):
            check_is_fitted(net, "network_")
            net = net.network_
        if not isinstance(net, NetworkWeights):
            raise InvalidInputError("network must be NetworkWeights or a fitted ReLUNetClassifier")
        return net

    def fit(self, X=None, y=None):
        if self.method not in ("flow", "gd"):
            raise InvalidInputError(f"unknown method {self.method!r}")
        self.network_ = self._resolve_network()
        self.n_features_in_ = self.network_.input_dim
        if X is not None:
            check_array(X)
        return self

    def transform(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        cfg = AttackConfig(
            step=self.step,
            max_arc_length=self.max_arc_length,
            gradient_floor=self.gradient_floor,
            crossing_tolerance=self.crossing_tolerance,
            length_multiplier=self.length_multiplier,
        )
        results = []
        for x in X:
            if self.method == "flow":
                r = gradient_flow_attack(self.network_, x, cfg)
            else:
                r = gd_attack(
                    self.network_, x, self.eta, self.max_steps,
                    self.crossing_tolerance, self.gradient_floor,
                )
            results.append(r)
        self.results_ = results
        self.success_ = np.array([r.success for r in results])
        return np.vstack([r.x_adv for r in results])

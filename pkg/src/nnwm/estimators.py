"""scikit-learn style wrappers around the training, embedding and attack code.

Labels are class indices ``0..k-1``; ``classes_`` is always ``arange(k)``.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .attacks import AttackConfig, distill
from .data import WatermarkSpec, generate_carrier_set, random_bits
from .metrics import extract_watermark, normalize_wm_accuracy, watermark_accuracy_raw
from .nn import ForwardConfig, OptimizerConfig, TrainConfig, build_network, forward, parse_arch, predict
from .validation import check_images, check_images_labels
from .watermark import (EmbedConfig, embed_lsb_model, train_ingrained_classifier, train_ingrainer,
                        train_param_embedded, train_pcap)


class NetworkClassifier(ClassifierMixin, BaseEstimator):
    """Plain classifier on a layer list (dicts or LayerSpecs)."""

    def __init__(self, arch=None, n_classes=None, epochs=50, batch_size=64, optimizer="momentum",
                 learning_rate=0.05, momentum=0.9, image_shape=None, seed=0):
        self.arch = arch
        self.n_classes = n_classes
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.image_shape = image_shape
        self.seed = seed

    def _train_cfg(self, seed=None, epochs=None):
        opt = OptimizerConfig(self.optimizer, self.learning_rate, self.momentum)
        return TrainConfig(self.epochs if epochs is None else epochs, self.batch_size, opt,
                           self.seed if seed is None else seed)

    def _prepare(self, X, y):
        if self.arch is None:
            raise ValueError("arch must be set before fit")
        X, y = check_images_labels(X, y, self.image_shape, self.n_classes)
        if X.ndim == 2:
            X = X.reshape(len(X), 1, -1, 1)
        k = self.n_classes or int(y.max()) + 1
        self.classes_ = np.arange(k)
        self.arch_ = parse_arch(self.arch)
        return X, y

    def _fit_network(self, X, y):
        return train_pcap(X, y, None, self.arch_, self._train_cfg()).network

    def fit(self, X, y):
        X, y = self._prepare(X, y)
        self.network_ = self._fit_network(X, y)
        return self

    def predict_proba(self, X, temperature=1.0):
        check_is_fitted(self, "network_")
        X = check_images(X, self.image_shape)
        return forward(self.network_, X, ForwardConfig(temperature=temperature))

    def predict(self, X):
        check_is_fitted(self, "network_")
        return predict(self.network_, check_images(X, self.image_shape))


class _WatermarkMixin:
    """Shared extraction for wrappers that own a watermark spec."""

    def extract_watermark(self):
        """(extracted symbols, true symbols) read from the fitted network."""
        check_is_fitted(self, "embedded_")
        return extract_watermark(self.embedded_.network, self.embedded_.spec, self.embedded_.config,
                                 getattr(self, "carrier_", None))

    def watermark_score(self, normalized=True):
        got, truth = self.extract_watermark()
        raw = watermark_accuracy_raw(got, truth)
        if not normalized:
            return raw
        return normalize_wm_accuracy(raw, self.embedded_.config.chance_classes(self.embedded_.spec.k))


class CapacityAbuseWatermark(_WatermarkMixin, NetworkClassifier):
    """Train on D plus ``n_carriers`` random carriers labelled by the watermark."""

    def __init__(self, arch=None, n_carriers=100, wm_seed=0, carrier_kind="random_walk", n_classes=None,
                 epochs=50, batch_size=64, optimizer="momentum", learning_rate=0.05, momentum=0.9,
                 image_shape=None, seed=0):
        super().__init__(arch, n_classes, epochs, batch_size, optimizer, learning_rate, momentum, image_shape,
                         seed)
        self.n_carriers = n_carriers
        self.wm_seed = wm_seed
        self.carrier_kind = carrier_kind

    def _carriers(self, X):
        spec = WatermarkSpec.for_carriers(self.n_carriers, self.wm_seed, len(self.classes_),
                                          carrier_kind=self.carrier_kind, image_shape=X.shape[1:])
        self.carrier_ = generate_carrier_set(spec)
        return spec

    def fit(self, X, y):
        X, y = self._prepare(X, y)
        spec = self._carriers(X)
        self.embedded_ = train_pcap(X, y, self.carrier_, self.arch_, self._train_cfg(), spec)
        self.network_ = self.embedded_.network
        return self


class IngrainWatermark(CapacityAbuseWatermark):
    """Capacity abuse plus the ingrain loss towards an overfit ingrainer."""

    def __init__(self, arch=None, n_carriers=100, wm_seed=0, carrier_kind="random_walk", ingrain_lambda=2.0,
                 ingrain_temperature=10.0, ingrainer_epochs=300, ingrainer_seed=None, n_classes=None, epochs=50,
                 batch_size=64, optimizer="momentum", learning_rate=0.05, momentum=0.9, image_shape=None,
                 seed=0):
        super().__init__(arch, n_carriers, wm_seed, carrier_kind, n_classes, epochs, batch_size, optimizer,
                         learning_rate, momentum, image_shape, seed)
        self.ingrain_lambda = ingrain_lambda
        self.ingrain_temperature = ingrain_temperature
        self.ingrainer_epochs = ingrainer_epochs
        self.ingrainer_seed = ingrainer_seed

    def fit(self, X, y):
        X, y = self._prepare(X, y)
        spec = self._carriers(X)
        g_seed = self.seed if self.ingrainer_seed is None else self.ingrainer_seed
        self.ingrainer_ = train_ingrainer(self.carrier_, self.arch_,
                                          self._train_cfg(seed=g_seed, epochs=self.ingrainer_epochs))
        em = train_ingrained_classifier(X, y, self.carrier_, self.ingrainer_, self.arch_, self._train_cfg(),
                                        self.ingrain_lambda, self.ingrain_temperature, spec)
        self.embedded_ = em
        self.network_ = em.network
        return self


class ParameterWatermark(_WatermarkMixin, NetworkClassifier):
    """Parameter-space watermark: ``method`` is one of lsb, sgn, cor, sta."""

    def __init__(self, arch=None, method="sgn", n_bits=256, wm_seed=0, lambda_s=10.0, lambda_c=1.0,
                 lambda_sta=0.01, sta_key_seed=0, sta_layer=None, lsb_bits_per_param=1, n_classes=None,
                 epochs=50, batch_size=64, optimizer="momentum", learning_rate=0.05, momentum=0.9,
                 image_shape=None, seed=0):
        super().__init__(arch, n_classes, epochs, batch_size, optimizer, learning_rate, momentum, image_shape,
                         seed)
        self.method = method
        self.n_bits = n_bits
        self.wm_seed = wm_seed
        self.lambda_s = lambda_s
        self.lambda_c = lambda_c
        self.lambda_sta = lambda_sta
        self.sta_key_seed = sta_key_seed
        self.sta_layer = sta_layer
        self.lsb_bits_per_param = lsb_bits_per_param

    def fit(self, X, y):
        X, y = self._prepare(X, y)
        if self.method not in ("lsb", "sgn", "cor", "sta"):
            raise ValueError(f"ParameterWatermark handles lsb/sgn/cor/sta, not {self.method!r}")
        cfg = EmbedConfig(self.method, lambda_s=self.lambda_s, lambda_c=self.lambda_c, lambda_sta=self.lambda_sta,
                          sta_key_seed=self.sta_key_seed, sta_layer=self.sta_layer,
                          lsb_bits_per_param=self.lsb_bits_per_param)
        spec = WatermarkSpec(random_bits(self.n_bits, self.wm_seed), self.wm_seed, k=len(self.classes_),
                             image_shape=X.shape[1:])
        if self.method == "lsb":
            self.embedded_ = embed_lsb_model(self._fit_network(X, y), spec, cfg)
        else:
            net = build_network(self.arch_, self.seed)
            self.embedded_ = train_param_embedded(net, X, y, self._train_cfg(), cfg, spec)
        self.network_ = self.embedded_.network
        return self


class DistilledClassifier(NetworkClassifier):
    """Student fitted to a teacher's softened outputs on the data passed to ``fit``.

    ``teacher`` is a fitted NetworkClassifier (or subclass) or a bare Network.
    """

    def __init__(self, teacher=None, student_arch=None, temperature=10.0, alpha=0.5, epochs=60, batch_size=64,
                 optimizer="momentum", learning_rate=0.05, momentum=0.9, image_shape=None, seed=0):
        super().__init__(student_arch, None, epochs, batch_size, optimizer, learning_rate, momentum, image_shape,
                         seed)
        self.teacher = teacher
        self.student_arch = student_arch
        self.temperature = temperature
        self.alpha = alpha

    def fit(self, X, y):
        if self.teacher is None:
            raise ValueError("teacher must be set before fit")
        teacher = getattr(self.teacher, "network_", self.teacher)
        X, y = check_images_labels(X, y, self.image_shape, teacher.n_outputs)
        self.classes_ = np.arange(teacher.n_outputs)
        cfg = AttackConfig("distill", self.temperature, self.alpha, tuple(parse_arch(self.student_arch)))
        self.network_ = distill(teacher, X, y, cfg, self._train_cfg())
        return self

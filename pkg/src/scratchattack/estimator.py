"""scikit-learn style front end to the attack."""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .attack import attack_image, optimizer_seed, targeted_attack_image
from .exceptions import DomainError
from .metrics import compute_metrics
from .optimizers import STRATEGIES
from .scratch import AttackConfig, render_scratches
from .validation import check_images, check_region

__all__ = ["ScratchAttack"]


class ScratchAttack(TransformerMixin, BaseEstimator):
    """Turn a batch of images into scratch-perturbed adversarial images.

    ``fit`` only checks the inputs and records their shape; the oracle is
    queried in ``transform``, which needs the true labels ``y``. Images whose
    attack fails come back carrying the best candidate found; skipped or
    errored ones come back unchanged. Per-image outcomes are kept in
    ``records_``.

    >>> attack = ScratchAttack(oracle, scratch_count=3, per_scratch_l0=16, query_limit=500)
    >>> adversarial = attack.fit_transform(images, labels)
    >>> attack.fooling_rate_
    """

    def __init__(self, oracle=None, scratch_count=3, per_scratch_l0=133, bezier_order=2,
                 color_mode="polychrome-saturated", query_limit=10_000, strategy="ngo",
                 random_state=0, optimizer_options=None):
        self.oracle = oracle
        self.scratch_count = scratch_count
        self.per_scratch_l0 = per_scratch_l0
        self.bezier_order = bezier_order
        self.color_mode = color_mode
        self.query_limit = query_limit
        self.strategy = strategy
        self.random_state = random_state
        self.optimizer_options = optimizer_options

    def _config(self):
        return AttackConfig(
            scratch_count=self.scratch_count,
            per_scratch_l0=self.per_scratch_l0,
            bezier_order=self.bezier_order,
            color_mode=self.color_mode,
            query_limit=self.query_limit,
        )

    def fit(self, X, y=None):
        if self.oracle is None:
            raise DomainError("ScratchAttack needs an oracle")
        if self.strategy not in STRATEGIES:
            raise DomainError(f"unknown strategy {self.strategy!r}; choose from {sorted(STRATEGIES)}")
        self.config_ = self._config()
        X = check_images(X)
        self.image_shape_ = X.shape[1:]
        return self

    def transform(self, X, y=None, masks=None, target_labels=None):
        """Attack every image of ``X`` (untargeted unless ``target_labels`` is given).

        :param y: true labels, one per image.
        :param masks: optional boolean regions ``(N, H, W)``; ``None`` means
            the whole image.
        """
        check_is_fitted(self, "config_")
        X = check_images(X)
        if X.shape[1:] != self.image_shape_:
            raise DomainError(f"expected images of shape {self.image_shape_}, got {X.shape[1:]}")
        if y is None:
            raise DomainError("transform needs the true labels y")
        y = np.asarray(y)
        if y.shape != (len(X),):
            raise DomainError(f"need one label per image, got {y.shape} for {len(X)} images")
        if masks is not None and len(masks) != len(X):
            raise DomainError("need one mask per image")
        if target_labels is not None and len(target_labels) != len(X):
            raise DomainError("need one target label per image")
        seed = 0 if self.random_state is None else int(self.random_state)
        out, records = X.copy(), []
        for i, image in enumerate(X):
            region = check_region(None if masks is None else masks[i], image.shape)
            opts = dict(strategy=self.strategy, image_id=str(i), seed=seed,
                        optimizer_options=self.optimizer_options)
            opt_seed = optimizer_seed(seed, i)
            if target_labels is None:
                rec = attack_image(image, int(y[i]), region, self.config_, self.oracle, opt_seed, **opts)
            else:
                rec = targeted_attack_image(image, int(target_labels[i]), region, self.config_, self.oracle,
                                            opt_seed, true_label=int(y[i]), **opts)
            if rec.final_params:
                out[i], _, _, _ = render_scratches(image, rec.scratch_params(), self.config_.per_scratch_l0,
                                                   region, self.config_.color_mode)
            records.append(rec)
        self.records_ = records
        self.fooling_rate_ = compute_metrics(records).fooling_rate
        return out

    def fit_transform(self, X, y=None, **transform_params):
        return self.fit(X, y).transform(X, y, **transform_params)

import numpy as np
import pytest
from sklearn.base import clone

from scratchattack.estimator import ScratchAttack
from scratchattack.exceptions import DomainError
from scratchattack.oracle import StubOracle


def test_get_params_and_clone(toy_oracle):
    est = ScratchAttack(toy_oracle, scratch_count=2, per_scratch_l0=16, query_limit=100)
    params = est.get_params()
    assert params["scratch_count"] == 2 and params["strategy"] == "ngo"
    twin = clone(est)
    assert twin.get_params()["query_limit"] == 100 and twin is not est


def test_fit_transform_on_toy_images(toy_oracle, toy_manifest):
    loaded = [e.load() for e in toy_manifest[:4]]
    X = np.stack([img for img, _ in loaded])
    masks = np.stack([m for _, m in loaded])
    y = [e.label for e in toy_manifest[:4]]
    est = ScratchAttack(toy_oracle, scratch_count=3, per_scratch_l0=16, query_limit=500)
    adv = est.fit_transform(X, y, masks=masks)
    assert adv.shape == X.shape and est.fooling_rate_ == 1.0
    assert np.all(np.any(adv != X, axis=-1)[~masks] == False)  # noqa: E712
    labels = toy_oracle.predict(adv)
    assert np.all(labels != np.asarray(y))
    assert [r.image_id for r in est.records_] == ["0", "1", "2", "3"]


def test_input_validation(toy_oracle):
    X = np.zeros((2, 24, 24, 3))
    with pytest.raises(DomainError):
        ScratchAttack(None).fit(X)
    with pytest.raises(DomainError):
        ScratchAttack(toy_oracle, strategy="sgd").fit(X)
    est = ScratchAttack(toy_oracle).fit(X)
    with pytest.raises(DomainError):
        est.transform(X)
    with pytest.raises(DomainError):
        est.transform(X, [0])
    with pytest.raises(DomainError):
        est.transform(np.zeros((2, 10, 10, 3)), [0, 1])
    with pytest.raises(DomainError):
        ScratchAttack(toy_oracle).fit(np.full((1, 4, 4, 3), 2.0))


def test_unfitted_transform_raises(toy_oracle):
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        ScratchAttack(toy_oracle).transform(np.zeros((1, 24, 24, 3)), [0])


def test_targeted_transform():
    clean = np.full((1, 12, 12, 3), 0.5)

    def fn(img):
        return [1.0, 0.0, 0.0] if np.array_equal(img, clean[0]) else [0.0, 0.2, 0.8]

    est = ScratchAttack(StubOracle(fn), scratch_count=1, per_scratch_l0=5, query_limit=10)
    est.fit_transform(clean, [0], target_labels=[2])
    assert est.records_[0].success and est.records_[0].target_label == 2

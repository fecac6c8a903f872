"""Input-filtering defenses and the recovery rate of attacked images under them."""
import io
from dataclasses import dataclass
from enum import Enum

import numpy as np
from PIL import Image
from scipy.ndimage import median_filter
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DomainError
from .validation import check_image, check_images

__all__ = [
    "DefenseKind",
    "DefenseSpec",
    "JPEGCompression",
    "MedianFilter",
    "clean_accuracy_delta",
    "defend",
    "jpeg_roundtrip",
    "median3x3",
    "recovery_rate",
]


class DefenseKind(str, Enum):
    MEDIAN = "median3x3"
    JPEG = "jpeg"


@dataclass(frozen=True)
class DefenseSpec:
    kind: DefenseKind
    jpeg_quality: int = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", DefenseKind(self.kind))
        except ValueError:
            raise DomainError(f"unknown defense {self.kind!r}; use 'median3x3' or 'jpeg'") from None
        if self.kind is DefenseKind.JPEG:
            q = self.jpeg_quality
            if isinstance(q, bool) or not isinstance(q, (int, np.integer)) or not 1 <= q <= 100:
                raise DomainError(f"jpeg_quality must be an integer in [1, 100], got {q!r}")
        elif self.jpeg_quality is not None:
            raise DomainError("jpeg_quality only applies to the jpeg defense")

    @property
    def name(self):
        if self.kind is DefenseKind.JPEG:
            return f"jpeg(q={self.jpeg_quality})"
        return "median3x3"

    def to_dict(self):
        return {"kind": self.kind.value, "jpeg_quality": self.jpeg_quality}


def median3x3(image):
    """3x3 median of each channel separately, borders replicated.

    Every output value is one of the input values of its neighbourhood, so
    constant regions come out unchanged.
    """
    image = check_image(image)
    return median_filter(image, size=(3, 3, 1), mode="nearest")


def jpeg_roundtrip(image, quality):
    """Encode as baseline JPEG (8-bit, no chroma subsampling) and decode to ``[0, 1]``."""
    image = check_image(image)
    arr = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="JPEG", quality=int(quality), subsampling=0)
    buf.seek(0)
    with Image.open(buf) as img:
        return np.asarray(img.convert("RGB"), dtype=float) / 255.0


def defend(image, spec):
    """Apply the defense described by ``spec`` (a :class:`DefenseSpec` or its dict form)."""
    if isinstance(spec, dict):
        spec = DefenseSpec(**spec)
    if spec.kind is DefenseKind.MEDIAN:
        return median3x3(image)
    return jpeg_roundtrip(image, spec.jpeg_quality)


class _DefenseTransformer(TransformerMixin, BaseEstimator):
    """Stateless transformer over batches ``(N, H, W, 3)``."""

    def fit(self, X, y=None):
        check_images(X)
        return self

    def _spec(self):
        raise NotImplementedError

    def transform(self, X):
        spec = self._spec()
        return np.stack([defend(img, spec) for img in check_images(X)])


class MedianFilter(_DefenseTransformer):
    """3x3 per-channel median filter as a scikit-learn transformer."""

    def _spec(self):
        return DefenseSpec(DefenseKind.MEDIAN)


class JPEGCompression(_DefenseTransformer):
    """JPEG round trip at ``quality`` as a scikit-learn transformer."""

    def __init__(self, quality=75):
        self.quality = quality

    def _spec(self):
        return DefenseSpec(DefenseKind.JPEG, self.quality)


def recovery_rate(flags):
    """Share of successful attacks whose defended image gets the true label back.

    ``flags`` holds ``(clean_ok, attack_success, defended_ok)`` triples, where
    ``defended_ok`` means the defended adversarial image is classified as the
    true label (not merely as something other than the adversarial label).
    Triples without a clean-correct successful attack are ignored, and their
    ``defended_ok`` may be ``None``. Returns ``None`` when no triple counts.
    """
    counted = recovered = 0
    for clean_ok, success, defended_ok in flags:
        if success and not clean_ok:
            raise DomainError("a successful attack requires a correctly classified clean image")
        if clean_ok and success:
            counted += 1
            recovered += bool(defended_ok)
    return recovered / counted if counted else None


def clean_accuracy_delta(images, labels, oracle, spec):
    """``(clean_acc, defended_acc, defended_acc - clean_acc)`` on clean images."""
    labels = np.asarray(labels)
    images = list(images)
    if not images or len(images) != len(labels):
        raise DomainError("need as many labels as images, and at least one image")
    clean = np.mean([oracle.classify(img).label == y for img, y in zip(images, labels)])
    defended = np.mean([oracle.classify(defend(img, spec)).label == y for img, y in zip(images, labels)])
    return float(clean), float(defended), float(defended - clean)

"""Input validation helpers in the spirit of ``sklearn.utils.validation``."""
import numpy as np

from .exceptions import DomainError


def check_image(image, copy=False):
    """Return ``image`` as a float ``(H, W, 3)`` array with values in ``[0, 1]``."""
    arr = np.array(image, dtype=float, copy=copy) if copy else np.asarray(image, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DomainError(f"image must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DomainError(f"image must be non-empty, got {arr.shape}")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise DomainError("image values must be finite and lie in [0, 1]")
    return arr


def check_images(images):
    """Return a batch of images as an ``(N, H, W, 3)`` float array.

    A single ``(H, W, 3)`` image is promoted to a batch of one.
    """
    arr = np.asarray(images, dtype=float)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[3] != 3:
        raise DomainError(f"images must have shape (N, H, W, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)) or (arr.size and (arr.min() < 0.0 or arr.max() > 1.0)):
        raise DomainError("image values must be finite and lie in [0, 1]")
    return arr


def check_region(region, shape):
    """Boolean ``(H, W)`` target region; ``None`` means the whole image."""
    height, width = shape[:2]
    if region is None:
        return np.ones((height, width), dtype=bool)
    mask = np.asarray(region)
    if mask.shape != (height, width):
        raise DomainError(f"region shape {mask.shape} does not match image shape {(height, width)}")
    return mask.astype(bool)


def check_scores(scores):
    """1-D float score vector with at least two finite entries."""
    arr = np.asarray(scores, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise DomainError(f"a score vector needs at least two classes, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("scores must be finite")
    return arr


def check_label(label, n_classes, name="label"):
    if not (0 <= int(label) < n_classes) or int(label) != label:
        raise DomainError(f"{name} must be an integer in [0, {n_classes}), got {label!r}")
    return int(label)

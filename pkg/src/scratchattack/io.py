"""PNG images, masks, manifests and JSON-lines attack records."""
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .attack import AttackRecord
from .exceptions import DomainError, ManifestError
from .validation import check_image

__all__ = [
    "ManifestEntry",
    "load_manifest",
    "load_mask",
    "load_png",
    "read_records",
    "save_png",
    "write_records",
]


def load_png(path):
    """Decode an image file to float RGB in ``[0, 1]``."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=float) / 255.0


def load_mask(path):
    """Decode a mask file; any nonzero sample marks a perturbable pixel."""
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr.any(axis=2)
    return arr != 0


def to_uint8(image):
    return np.clip(np.rint(check_image(image) * 255.0), 0, 255).astype(np.uint8)


def save_png(path, image):
    Image.fromarray(to_uint8(image), mode="RGB").save(path, format="PNG")


def save_mask(path, mask):
    Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), mode="L").save(path)


@dataclass(frozen=True)
class ManifestEntry:
    """One labelled image; pixels are decoded on demand."""

    image_id: str
    image_path: str
    label: int
    mask_path: str = None
    target_label: int = None

    def load_image(self):
        try:
            return check_image(load_png(self.image_path))
        except (OSError, DomainError) as exc:
            raise ManifestError(f"entry {self.image_id!r}: cannot load image: {exc}") from None

    def load_region(self, shape=None):
        """Boolean target region; all ones when the entry has no mask."""
        if shape is None:
            shape = self.load_image().shape
        if self.mask_path is None:
            return np.ones(shape[:2], dtype=bool)
        try:
            mask = load_mask(self.mask_path)
        except OSError as exc:
            raise ManifestError(f"entry {self.image_id!r}: cannot load mask: {exc}") from None
        if mask.shape != tuple(shape[:2]):
            raise ManifestError(
                f"entry {self.image_id!r}: mask shape {mask.shape} does not match image {tuple(shape[:2])}"
            )
        return mask

    def load(self):
        image = self.load_image()
        return image, self.load_region(image.shape)

    def image_size(self):
        with Image.open(self.image_path) as img:
            return img.size[1], img.size[0]


def _int_field(doc, key, where, required):
    value = doc.get(key)
    if value is None:
        if required:
            raise ManifestError(f"{where}: missing field {key!r}")
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ManifestError(f"{where}: {key!r} must be a non-negative integer, got {value!r}")
    return value


def load_manifest(path, check_masks=True):
    """Read a manifest: a JSON array of
    ``{"image_id", "image_path", "label", "mask_path"?, "target_label"?}``.

    Relative paths are resolved against the manifest's directory. When
    ``check_masks`` is set, every mask's size is compared to its image by
    reading the file headers only.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestError(f"manifest {str(path)!r} not found") from None
    except (OSError, ValueError) as exc:
        raise ManifestError(f"manifest {str(path)!r} is not valid JSON: {exc}") from None
    if not isinstance(doc, list):
        raise ManifestError(f"manifest {str(path)!r} must be a JSON array")
    base = path.parent
    entries, seen = [], set()
    for i, item in enumerate(doc):
        where = f"manifest entry {i}"
        if not isinstance(item, dict):
            raise ManifestError(f"{where}: must be an object")
        unknown = set(item) - {"image_id", "image_path", "label", "mask_path", "target_label"}
        if unknown:
            raise ManifestError(f"{where}: unknown fields {sorted(unknown)}")
        if not isinstance(item.get("image_path"), str):
            raise ManifestError(f"{where}: missing field 'image_path'")
        image_id = str(item.get("image_id") or Path(item["image_path"]).stem)
        where = f"manifest entry {image_id!r}"
        if image_id in seen:
            raise ManifestError(f"{where}: duplicate image_id")
        seen.add(image_id)
        mask_path = item.get("mask_path")
        entry = ManifestEntry(
            image_id=image_id,
            image_path=str(base / item["image_path"]),
            label=_int_field(item, "label", where, True),
            mask_path=None if mask_path is None else str(base / mask_path),
            target_label=_int_field(item, "target_label", where, False),
        )
        if not os.path.exists(entry.image_path):
            raise ManifestError(f"{where}: image {entry.image_path!r} not found")
        if entry.mask_path is not None:
            if not os.path.exists(entry.mask_path):
                raise ManifestError(f"{where}: mask {entry.mask_path!r} not found")
            if check_masks:
                with Image.open(entry.mask_path) as m:
                    mask_size = (m.size[1], m.size[0])
                if mask_size != entry.image_size():
                    raise ManifestError(
                        f"{where}: mask shape {mask_size} does not match image {entry.image_size()}"
                    )
        entries.append(entry)
    return entries


def write_records(path, records):
    """Write one JSON document per line, sorted keys, in the given order."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def read_records(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(AttackRecord.from_dict(json.loads(line)))
            except (ValueError, TypeError) as exc:
                raise DomainError(f"{path}:{lineno}: invalid record: {exc}") from None
    return records

"""
Scratch parametrization, clipping to a target region and application to images.

A scratch of order ``n`` is described by ``2 (n + 1) + 3`` reals laid out as
``[x0, y0, x1, y1, ..., xn, yn, c0, c1, c2]``: control point coordinates in
image units (``x`` is the column, ``y`` the row) followed by three color
parameters in ``[0, 1]`` whose meaning depends on the :class:`ColorMode`.
"""
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .bezier import BezierCurve, PixelSupport, evaluate, subdivide, trace
from .exceptions import DomainError
from .validation import check_image, check_region

__all__ = [
    "AttackConfig",
    "ColorMode",
    "ScratchParams",
    "apply_scratches",
    "clip_scratch",
    "n_params",
    "render_scratches",
    "resolve_color",
    "search_bounds",
    "split_vector",
]


class ColorMode(str, Enum):
    POLYCHROME_SATURATED = "polychrome-saturated"
    MONOCHROME_SATURATED = "monochrome-saturated"
    POLYCHROME_GRAYSCALE = "polychrome-grayscale"
    POLYCHROME_IMAGE_COLOR = "polychrome-image-color"


def n_params(order):
    """Length of one scratch's parameter vector."""
    return 2 * (order + 1) + 3


@dataclass(frozen=True)
class ScratchParams:
    order: int
    coords: tuple
    color_params: tuple

    def __post_init__(self):
        coords = tuple(float(v) for v in self.coords)
        color = tuple(float(v) for v in self.color_params)
        if self.order < 1:
            raise DomainError(f"Bézier order must be >= 1, got {self.order}")
        if len(coords) != 2 * (self.order + 1):
            raise DomainError(
                f"order {self.order} needs {2 * (self.order + 1)} coordinates, got {len(coords)}"
            )
        if len(color) != 3:
            raise DomainError(f"need 3 color parameters, got {len(color)}")
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "color_params", color)

    @classmethod
    def from_vector(cls, vector, order):
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (n_params(order),):
            raise DomainError(f"expected a vector of {n_params(order)} values, got {vector.shape}")
        k = 2 * (order + 1)
        return cls(order, tuple(vector[:k]), tuple(vector[k:]))

    @classmethod
    def from_curve(cls, curve, color_params):
        rc = curve.control_points
        return cls(curve.order, tuple(rc[:, ::-1].ravel()), tuple(color_params))

    def to_vector(self):
        return np.array(self.coords + self.color_params)

    @property
    def curve(self):
        xy = np.asarray(self.coords).reshape(-1, 2)
        return BezierCurve(xy[:, ::-1])

    def to_list(self):
        return list(self.coords + self.color_params)


def split_vector(vector, order, n_scratches):
    """Cut an optimizer vector into ``n_scratches`` :class:`ScratchParams`."""
    vector = np.asarray(vector, dtype=float)
    size = n_params(order)
    if vector.shape != (size * n_scratches,):
        raise DomainError(
            f"expected {size * n_scratches} parameters for {n_scratches} scratches, got {vector.shape}"
        )
    return [ScratchParams.from_vector(chunk, order) for chunk in vector.reshape(n_scratches, size)]


def search_bounds(shape, order, n_scratches):
    """Box bounds of the optimizer vector for an image of ``shape = (H, W, ...)``."""
    height, width = shape[:2]
    lower = np.zeros(n_params(order))
    upper = np.empty(n_params(order))
    upper[0 : 2 * (order + 1) : 2] = width - 1
    upper[1 : 2 * (order + 1) : 2] = height - 1
    upper[2 * (order + 1) :] = 1.0
    return np.tile(lower, n_scratches), np.tile(upper, n_scratches)


@dataclass(frozen=True)
class AttackConfig:
    """Shape of the perturbation and the query budget of one attack."""

    scratch_count: int = 3
    per_scratch_l0: int = 133
    bezier_order: int = 2
    color_mode: ColorMode = ColorMode.POLYCHROME_SATURATED
    query_limit: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "color_mode", ColorMode(self.color_mode))
        if self.scratch_count < 1:
            raise DomainError(f"scratch_count must be >= 1, got {self.scratch_count}")
        if self.per_scratch_l0 < 1:
            raise DomainError(f"per_scratch_l0 must be >= 1, got {self.per_scratch_l0}")
        if self.bezier_order < 1:
            raise DomainError(f"bezier_order must be >= 1, got {self.bezier_order}")
        if self.query_limit < 1:
            raise DomainError(f"query_limit must be >= 1, got {self.query_limit}")

    @classmethod
    def from_total_l0(cls, total_l0, scratch_count, **kwargs):
        """Split a total pixel budget evenly, e.g. 400 over 3 scratches gives 133 each."""
        return cls(scratch_count=scratch_count, per_scratch_l0=total_l0 // scratch_count, **kwargs)

    @property
    def dim(self):
        return self.scratch_count * n_params(self.bezier_order)

    def to_dict(self):
        return {
            "scratch_count": self.scratch_count,
            "per_scratch_l0": self.per_scratch_l0,
            "bezier_order": self.bezier_order,
            "color_mode": self.color_mode.value,
            "query_limit": self.query_limit,
        }


def clip_scratch(params, k, region):
    """Clip a scratch to at most ``k`` pixels that all lie inside ``region``.

    The curve is walked in parameter order: the segment starts at the first
    pixel inside the region and stops before the first pixel outside it (image
    borders count as outside) or once ``k`` pixels are collected. The returned
    parameters describe exactly that sub-curve, obtained by subdivision between
    parameters strictly inside the first and last kept pixels; the color
    parameters are passed through. A scratch with no pixel in the region
    yields an empty support and unchanged parameters.

    :returns: ``(clipped_params, support)``
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    region = np.asarray(region, dtype=bool)
    curve = params.curve
    sup = trace(curve)
    rows, cols = sup.pixels[:, 0], sup.pixels[:, 1]
    height, width = region.shape
    inside = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
    inside[inside] = region[rows[inside], cols[inside]]
    if not inside.any():
        return params, PixelSupport.empty()
    start = int(np.argmax(inside))
    outside = np.flatnonzero(~inside[start:])
    length = int(outside[0]) if len(outside) else len(inside) - start
    length = min(length, k)
    stop = start + length
    mids = sup.midpoints()
    t0, t1 = float(mids[start]), float(mids[stop - 1])
    if t1 > t0:
        clipped_curve = subdivide(curve, t0, t1)
    else:
        point = evaluate(curve, t0)
        clipped_curve = BezierCurve(np.repeat(point[None], curve.order + 1, axis=0))
    support = PixelSupport(
        sup.pixels[start:stop], sup.params[start:stop], sup.params_end[start:stop]
    )
    return ScratchParams.from_curve(clipped_curve, params.color_params), support


def resolve_color(color_params, mode, image):
    """RGB color in ``[0, 1]`` encoded by ``color_params`` under ``mode``.

    Saturated modes threshold each channel at 0.5 (eight possible colors). In
    grayscale mode the first parameter is the gray level. In image-color mode
    the first two parameters select a pixel ``(row, col)`` of ``image``, scaled
    to its height and width. Monochrome sharing across scratches is done by
    the caller (see :func:`render_scratches`).
    """
    mode = ColorMode(mode)
    p = np.asarray(color_params, dtype=float)
    if mode in (ColorMode.POLYCHROME_SATURATED, ColorMode.MONOCHROME_SATURATED):
        return (p >= 0.5).astype(float)
    if mode is ColorMode.POLYCHROME_GRAYSCALE:
        return np.full(3, np.clip(p[0], 0.0, 1.0))
    height, width = image.shape[:2]
    row = int(np.clip(np.rint(p[0] * (height - 1)), 0, height - 1))
    col = int(np.clip(np.rint(p[1] * (width - 1)), 0, width - 1))
    return np.array(image[row, col], dtype=float)


def render_scratches(image, params_list, k_per_scratch, region, color_mode=ColorMode.POLYCHROME_SATURATED):
    """Clip every scratch and paint them in order onto a copy of ``image``.

    :returns: ``(perturbed, total_l0, clipped_params, supports)``
    """
    if not params_list:
        raise DomainError("params_list must not be empty")
    color_mode = ColorMode(color_mode)
    out = image.copy()
    clipped, supports = [], []
    shared = None
    if color_mode is ColorMode.MONOCHROME_SATURATED:
        shared = resolve_color(params_list[0].color_params, color_mode, image)
    for params in params_list:
        cp, sup = clip_scratch(params, k_per_scratch, region)
        clipped.append(cp)
        supports.append(sup)
        if len(sup) == 0:
            continue
        color = shared if shared is not None else resolve_color(params.color_params, color_mode, image)
        out[sup.pixels[:, 0], sup.pixels[:, 1]] = color
    total_l0 = int(np.count_nonzero(np.any(out != image, axis=-1)))
    return out, total_l0, clipped, supports


def apply_scratches(image, params_list, k_per_scratch, region=None, color_mode=ColorMode.POLYCHROME_SATURATED):
    """Apply clipped scratches in list order; later scratches overwrite earlier ones.

    ``total_l0`` is the number of pixels whose final value differs from the
    input. Pixels outside the clipped supports are left bit-identical.

    :returns: ``(perturbed, total_l0)``
    """
    image = check_image(image)
    region = check_region(region, image.shape)
    out, total_l0, _, _ = render_scratches(image, params_list, k_per_scratch, region, color_mode)
    return out, total_l0

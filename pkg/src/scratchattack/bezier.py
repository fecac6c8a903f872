"""
Bézier curves of arbitrary order: evaluation, exact sub-segment extraction and
1-pixel rasterization.

Coordinates are image coordinates ``(row, col)``: the first component of a
control point becomes the row index of the pixel it falls into, the second the
column index. Pixel centres sit on integer coordinates and a point is assigned
to a pixel by rounding each component to the nearest integer, ties away from
zero.

The rasterizer walks the curve in parameter order and produces the exact
sequence of pixels the continuous curve passes through (up to floating point
noise at pixel corners):

* the parameter range is sampled uniformly with ``max(64, 4 * L)`` points,
  where ``L`` is the length of the control polygon (an upper bound of the arc
  length),
* the parameters at which either coordinate reaches an extremum are added, so
  both coordinates are monotone between consecutive samples,
* intervals whose end pixels are not 4-neighbours are split until they are
  (a diagonal step survives only where the curve passes through a corner).
"""
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .exceptions import DomainError

__all__ = [
    "BezierCurve",
    "PixelSupport",
    "evaluate",
    "rasterize",
    "round_half_away",
    "subdivide",
    "trace",
]

_MIN_SAMPLES = 64
_SAMPLES_PER_PIXEL = 4
_MAX_REFINE = 64
_MIN_GAP = 1e-13


@dataclass(frozen=True)
class BezierCurve:
    """Bézier curve of order ``n`` defined by ``n + 1`` control points.

    :param control_points: array-like of shape ``(n + 1, 2)`` in ``(row, col)``
        image coordinates. Points may lie outside the image.
    """

    control_points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.control_points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise DomainError(
                f"control_points must have shape (n + 1, 2) with n >= 1, got {pts.shape}"
            )
        if not np.all(np.isfinite(pts)):
            raise DomainError("control points must be finite")
        pts.flags.writeable = False
        object.__setattr__(self, "control_points", pts)

    @property
    def order(self):
        return self.control_points.shape[0] - 1

    def __eq__(self, other):
        if not isinstance(other, BezierCurve):
            return NotImplemented
        return np.array_equal(self.control_points, other.control_points)

    def __hash__(self):
        return hash(self.control_points.tobytes())


@dataclass(frozen=True)
class PixelSupport:
    """Rasterized curve: pixels in parameter order.

    ``params[i]`` is the smallest sampled parameter that produced
    ``pixels[i]``; ``params_end[i]`` the largest one of the same run.
    Consecutive entries are never equal, but a self-intersecting curve can
    revisit a pixel later in the list.
    """

    pixels: np.ndarray
    params: np.ndarray
    params_end: np.ndarray

    def __len__(self):
        return len(self.pixels)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 2), dtype=np.int64), np.zeros(0), np.zeros(0))

    def as_set(self):
        return {(int(r), int(c)) for r, c in self.pixels}

    def midpoints(self):
        """A parameter strictly inside each pixel's run (robust to rounding noise)."""
        return 0.5 * (self.params + self.params_end)


def round_half_away(values):
    """Round to the nearest integer, ties away from zero."""
    values = np.asarray(values, dtype=float)
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


@lru_cache(maxsize=None)
def _binomials(n):
    return np.array([comb(n, i) for i in range(n + 1)], dtype=float)


def _bernstein(n, t):
    t = t[:, None]
    i = np.arange(n + 1)
    return _binomials(n) * np.power(t, i) * np.power(1.0 - t, n - i)


def _evaluate_many(points, t):
    return _bernstein(points.shape[0] - 1, t) @ points


def _horner(coeffs, t):
    # coeffs: power-basis coefficients, lowest degree first
    t = t[:, None]
    out = np.broadcast_to(coeffs[-1], (len(t), 2))
    for c in coeffs[-2::-1]:
        out = out * t + c
    return out


def evaluate(curve, t):
    """Point of ``curve`` at parameter ``t``.

    ``t`` may be a scalar (returns shape ``(2,)``) or an array of parameters
    (returns shape ``(m, 2)``). Every parameter must lie in ``[0, 1]``.
    """
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"curve parameter must lie in [0, 1], got {t!r}")
    out = _evaluate_many(curve.control_points, np.atleast_1d(arr))
    return out[0] if arr.ndim == 0 else out


def _blossom(points, args):
    pts = points
    for u in args:
        pts = (1.0 - u) * pts[:-1] + u * pts[1:]
    return pts[0]


def subdivide(curve, t0, t1):
    """Curve of the same order tracing ``curve`` over ``[t0, t1]``.

    The control points are the blossom values ``b(t0, ..., t0, t1, ..., t1)``,
    i.e. de Casteljau steps run with ``t0`` on the first levels and ``t1`` on
    the remaining ones. ``subdivide(c, 0, 1)`` returns ``c``'s control points
    bit for bit.
    """
    if not (0.0 <= t0 < t1 <= 1.0):
        raise DomainError(f"need 0 <= t0 < t1 <= 1, got t0={t0!r}, t1={t1!r}")
    pts = curve.control_points
    n = curve.order
    new = np.array([_blossom(pts, [t1] * i + [t0] * (n - i)) for i in range(n + 1)])
    return BezierCurve(new)


@lru_cache(maxsize=None)
def _bernstein_to_power(m):
    # mat[j, i]: contribution of Bernstein coefficient i to the power-basis coefficient of t**j
    mat = np.zeros((m + 1, m + 1))
    for i in range(m + 1):
        for j in range(i, m + 1):
            mat[j, i] = comb(m, i) * comb(m - i, j - i) * (-1) ** (j - i)
    return mat


def _extrema(points):
    """Parameters in (0, 1) where a coordinate's derivative vanishes."""
    n = points.shape[0] - 1
    if n < 2:
        return np.zeros(0)
    deriv = np.diff(points, axis=0)
    found = []
    for axis in range(2):
        d = deriv[:, axis]
        if n == 2:
            denom = d[0] - d[1]
            if denom != 0.0:
                found.append(d[0] / denom)
            continue
        coeffs = _bernstein_to_power(n - 1) @ d
        if not np.any(coeffs):
            continue
        roots = np.roots(coeffs[::-1])
        found.extend(r.real for r in roots if abs(r.imag) < 1e-12)
    ext = np.array(found, dtype=float)
    return ext[(ext > 0.0) & (ext < 1.0)]


def _refine(coeffs, t, xy, pix):
    """One round of splitting intervals whose end pixels are not 4-neighbours.

    A diagonal step means both coordinates cross a pixel boundary inside the
    interval; the new sample is placed half-way between the two (secant
    estimated) crossings, which lands in the intermediate pixel unless the
    curve passes very close to the corner. Longer jumps are bisected.
    """
    step = np.diff(pix, axis=0)
    jump = np.abs(step).sum(axis=1)
    bad = (jump > 1) & (np.diff(t) > _MIN_GAP)
    if not bad.any():
        return t, xy, pix, False
    idx = np.nonzero(bad)[0]
    frac = np.full(len(idx), 0.5)
    diag = (jump[idx] == 2) & np.all(np.abs(step[idx]) == 1, axis=1)
    if diag.any():
        i = idx[diag]
        boundary = 0.5 * (pix[i] + pix[i + 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = (boundary - xy[i]) / (xy[i + 1] - xy[i])
        frac[diag] = np.clip(np.nan_to_num(tau.mean(axis=1), nan=0.5), 0.05, 0.95)
    new_t = t[idx] + frac * (t[idx + 1] - t[idx])
    new_xy = _horner(coeffs, new_t)
    new_pix = round_half_away(new_xy).astype(np.int64)
    return (
        np.insert(t, idx + 1, new_t),
        np.insert(xy, idx + 1, new_xy, axis=0),
        np.insert(pix, idx + 1, new_pix, axis=0),
        True,
    )


def trace(curve):
    """Rasterize ``curve`` without any image bounds (pixels may be negative)."""
    pts = curve.control_points
    perimeter = float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))
    if perimeter == 0.0:
        pix = round_half_away(pts[:1]).astype(np.int64)
        return PixelSupport(pix, np.zeros(1), np.ones(1))
    n_samples = max(_MIN_SAMPLES, int(np.ceil(_SAMPLES_PER_PIXEL * perimeter)))
    t = np.linspace(0.0, 1.0, n_samples)
    ext = _extrema(pts)
    if len(ext):
        t = np.sort(np.concatenate([t, ext]))
    coeffs = _bernstein_to_power(curve.order) @ pts
    xy = _horner(coeffs, t)
    pix = round_half_away(xy).astype(np.int64)
    for _ in range(_MAX_REFINE):
        t, xy, pix, changed = _refine(coeffs, t, xy, pix)
        if not changed:
            break
    change = np.any(pix[1:] != pix[:-1], axis=1)
    starts = np.r_[0, np.nonzero(change)[0] + 1]
    ends = np.r_[starts[1:] - 1, len(t) - 1]
    return PixelSupport(pix[starts], t[starts], t[ends])


def rasterize(curve, bounds):
    """1-pixel support of ``curve`` restricted to an ``H x W`` image.

    Pixels outside ``[0, H) x [0, W)`` are dropped. For curves entirely inside
    the bounds consecutive pixels differ by at most one in each coordinate.
    """
    height, width = bounds
    if height < 1 or width < 1:
        raise DomainError(f"bounds must be positive, got {bounds!r}")
    sup = trace(curve)
    rows, cols = sup.pixels[:, 0], sup.pixels[:, 1]
    keep = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
    if keep.all():
        return sup
    pix, t0, t1 = sup.pixels[keep], sup.params[keep], sup.params_end[keep]
    if len(pix) == 0:
        return PixelSupport.empty()
    # leaving and re-entering through the same pixel leaves a repeated entry
    first = np.r_[True, np.any(pix[1:] != pix[:-1], axis=1)]
    starts = np.nonzero(first)[0]
    ends = np.r_[starts[1:] - 1, len(pix) - 1]
    return PixelSupport(pix[starts], t0[starts], t1[ends])

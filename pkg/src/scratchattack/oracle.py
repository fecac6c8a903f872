"""
Score-based black-box classifiers behind one interface, and query accounting.

Three kinds of oracle are provided:

* :class:`ModelOracle` runs a small feed-forward network stored as JSON (the
  bundled toy model or any file of the same format),
* :class:`HTTPOracle` posts PNG bytes to a remote endpoint,
* :class:`StubOracle` wraps an arbitrary Python callable, mostly for tests.

Network file format::

    {"input_shape": [H, W, C],
     "layers": [{"type": "conv", "weights": [[[[...]]]], "bias": [...],
                 "stride": 1, "padding": 0},
                {"type": "relu"}, {"type": "flatten"},
                {"type": "dense", "weights": [[...]], "bias": [...]},
                {"type": "softmax"}]}

Activations are kept channels-last; ``conv`` weights are ``(out, in, kh, kw)``,
``dense`` weights ``(out, in)`` and ``flatten`` unrolls an ``(H, W, C)`` map in
row-major order. ``softmax`` is optional and turns logits into probabilities.
"""
import io
import json
import logging
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image

from .exceptions import ContractError, DomainError, OracleProtocolError, OracleTransportError
from .validation import check_image, check_images, check_scores

logger = logging.getLogger(__name__)

__all__ = [
    "ConstantOracle",
    "HTTPOracle",
    "ModelOracle",
    "Network",
    "Oracle",
    "Prediction",
    "QueryLedger",
    "StubOracle",
    "load_network",
    "toy_oracle",
]


class Prediction(NamedTuple):
    label: int
    scores: np.ndarray


@dataclass
class QueryLedger:
    """Counts oracle evaluations charged to one attack; never exceeds ``limit``."""

    limit: int
    count: int = 0

    def charge(self):
        if self.count >= self.limit:
            raise ContractError(f"query budget of {self.limit} exhausted")
        self.count += 1
        return self.count

    @property
    def remaining(self):
        return self.limit - self.count


class Oracle:
    """Base class: subclasses implement :meth:`scores` for a single image."""

    #: whether :meth:`scores` may be called from several threads at once
    concurrent_safe = True

    def scores(self, image):
        raise NotImplementedError

    def classify(self, image):
        scores = check_scores(self.scores(image))
        return Prediction(int(np.argmax(scores)), scores)

    def predict_proba(self, images):
        return np.stack([check_scores(self.scores(img)) for img in check_images(images)])

    def predict(self, images):
        return np.argmax(self.predict_proba(images), axis=1)


class StubOracle(Oracle):
    """Oracle answering ``fn(image)``."""

    def __init__(self, fn):
        self.fn = fn

    def scores(self, image):
        return np.asarray(self.fn(image), dtype=float)


class ConstantOracle(StubOracle):
    """Oracle returning the same score vector for every input."""

    def __init__(self, scores):
        fixed = check_scores(scores).copy()
        super().__init__(lambda image: fixed)


def _as_array(value, ndim, what):
    arr = np.asarray(value, dtype=float)
    if arr.ndim != ndim:
        raise DomainError(f"{what} must be a {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} contains non-finite values")
    return arr


class Network:
    """Feed-forward network evaluated with numpy on batches ``(N, H, W, C)``."""

    LAYER_TYPES = ("conv", "dense", "relu", "flatten", "softmax")

    def __init__(self, input_shape, layers):
        self.input_shape = tuple(int(d) for d in input_shape)
        if len(self.input_shape) != 3:
            raise DomainError(f"input_shape must be (H, W, C), got {input_shape!r}")
        self.layers = []
        shape = self.input_shape
        for i, spec in enumerate(layers):
            kind = spec.get("type")
            if kind not in self.LAYER_TYPES:
                raise DomainError(f"layer {i}: unknown type {kind!r}")
            layer = {"type": kind}
            if kind == "conv":
                w = _as_array(spec["weights"], 4, f"layer {i} weights")
                b = _as_array(spec.get("bias", np.zeros(w.shape[0])), 1, f"layer {i} bias")
                stride, pad = int(spec.get("stride", 1)), int(spec.get("padding", 0))
                if len(shape) != 3 or w.shape[1] != shape[2] or b.shape[0] != w.shape[0]:
                    raise DomainError(f"layer {i}: conv weights {w.shape} do not fit input {shape}")
                h = (shape[0] + 2 * pad - w.shape[2]) // stride + 1
                wd = (shape[1] + 2 * pad - w.shape[3]) // stride + 1
                if h < 1 or wd < 1 or stride < 1:
                    raise DomainError(f"layer {i}: kernel larger than its input")
                layer.update(weights=w, bias=b, stride=stride, padding=pad)
                shape = (h, wd, w.shape[0])
            elif kind == "dense":
                w = _as_array(spec["weights"], 2, f"layer {i} weights")
                b = _as_array(spec.get("bias", np.zeros(w.shape[0])), 1, f"layer {i} bias")
                if len(shape) != 1 or w.shape[1] != shape[0] or b.shape[0] != w.shape[0]:
                    raise DomainError(f"layer {i}: dense weights {w.shape} do not fit input {shape}")
                layer.update(weights=w, bias=b)
                shape = (w.shape[0],)
            elif kind == "flatten":
                shape = (int(np.prod(shape)),)
            self.layers.append(layer)
        if len(shape) != 1 or shape[0] < 2:
            raise DomainError(f"network must end in a vector of >= 2 scores, got shape {shape}")
        self.n_classes = shape[0]

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(doc["input_shape"], doc["layers"])
        except KeyError as exc:
            raise DomainError(f"network description lacks field {exc}") from None

    def to_dict(self):
        layers = []
        for layer in self.layers:
            out = {}
            for key, value in layer.items():
                out[key] = value.tolist() if isinstance(value, np.ndarray) else value
            layers.append(out)
        return {"input_shape": list(self.input_shape), "layers": layers}

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[1:] != self.input_shape:
            raise DomainError(f"expected inputs of shape {self.input_shape}, got {x.shape[1:]}")
        for layer in self.layers:
            kind = layer["type"]
            if kind == "conv":
                x = _conv(x, layer["weights"], layer["bias"], layer["stride"], layer["padding"])
            elif kind == "dense":
                x = x @ layer["weights"].T + layer["bias"]
            elif kind == "relu":
                x = np.maximum(x, 0.0)
            elif kind == "flatten":
                x = x.reshape(len(x), -1)
            else:
                z = np.exp(x - x.max(axis=1, keepdims=True))
                x = z / z.sum(axis=1, keepdims=True)
        return x


def _conv(x, weights, bias, stride, padding):
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    kh, kw = weights.shape[2:]
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    return np.tensordot(win, weights, axes=([3, 4, 5], [1, 2, 3])) + bias


def load_network(path):
    with open(path, encoding="utf-8") as fh:
        return Network.from_dict(json.load(fh))


class ModelOracle(Oracle):
    """Local oracle around a :class:`Network`; deterministic and thread-safe."""

    def __init__(self, network):
        self.network = network

    @classmethod
    def from_file(cls, path):
        return cls(load_network(path))

    def scores(self, image):
        return self.network.forward(np.asarray(image, dtype=float)[None])[0]

    def predict_proba(self, images):
        return self.network.forward(check_images(images))


def toy_oracle():
    """Oracle for the toy classifier bundled with the package."""
    ref = resources.files("scratchattack") / "data" / "toy_model.json"
    with ref.open("r", encoding="utf-8") as fh:
        return ModelOracle(Network.from_dict(json.load(fh)))


def encode_png(image):
    arr = np.clip(np.rint(check_image(image) * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


class HTTPOracle(Oracle):
    """Remote oracle: POSTs the image as PNG and reads back JSON.

    The response must be ``{"scores": [...]}`` or
    ``{"confidence": <float>, "caption": <str>}``. Network failures, timeouts,
    HTTP 429 and 5xx answers are retried with exponential backoff up to
    ``max_retries`` times; other non-2xx answers fail immediately. With
    ``min_interval > 0`` requests are serialized and spaced by at least that
    many seconds. Proxy settings are taken from the usual environment
    variables.
    """

    def __init__(self, url, timeout=10.0, min_interval=0.0, max_retries=3, backoff=0.5):
        self.url = url
        self.timeout = timeout
        self.min_interval = min_interval
        self.max_retries = max_retries
        self.backoff = backoff
        self._lock = threading.Lock()
        self._last = 0.0

    @property
    def concurrent_safe(self):
        return self.min_interval <= 0

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_lock"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._lock = threading.Lock()

    def _post(self, body):
        req = urllib.request.Request(
            self.url, data=body, method="POST", headers={"Content-Type": "image/png"}
        )
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return resp.read()

    def _throttled_post(self, body):
        if self.min_interval <= 0:
            return self._post(body)
        with self._lock:
            wait = self._last + self.min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            try:
                return self._post(body)
            finally:
                self._last = time.monotonic()

    def query(self, image):
        """Send one image and return the decoded JSON document."""
        body = encode_png(image)
        delay = None
        for attempt in range(1, self.max_retries + 2):
            try:
                raw = self._throttled_post(body)
                break
            except urllib.error.HTTPError as exc:
                retryable = exc.code == 429 or exc.code >= 500
                if not retryable or attempt > self.max_retries:
                    raise OracleTransportError(
                        f"{self.url} answered HTTP {exc.code}", attempts=attempt,
                        retry_after=delay, status=exc.code,
                    ) from None
            except (urllib.error.URLError, TimeoutError, OSError) as exc:
                if attempt > self.max_retries:
                    raise OracleTransportError(
                        f"{self.url} unreachable: {exc}", attempts=attempt, retry_after=delay
                    ) from None
            delay = self.backoff * 2 ** (attempt - 1)
            logger.warning("oracle request failed (attempt %d), retrying in %.2fs", attempt, delay)
            time.sleep(delay)
        try:
            doc = json.loads(raw)
        except (ValueError, UnicodeDecodeError) as exc:
            raise OracleProtocolError(f"response is not JSON: {exc}") from None
        if not isinstance(doc, dict) or not ("scores" in doc or "confidence" in doc):
            raise OracleProtocolError("response needs a 'scores' or 'confidence' field")
        return doc

    def scores(self, image):
        doc = self.query(image)
        if "scores" not in doc:
            raise OracleProtocolError("response carries no 'scores' field")
        try:
            return check_scores(doc["scores"])
        except (DomainError, TypeError, ValueError) as exc:
            raise OracleProtocolError(f"malformed scores: {exc}") from None

    def confidence(self, image):
        """``(confidence, caption)`` for captioning-style endpoints."""
        doc = self.query(image)
        try:
            conf = float(doc["confidence"])
        except (KeyError, TypeError, ValueError):
            raise OracleProtocolError("response carries no numeric 'confidence' field") from None
        if not np.isfinite(conf):
            raise OracleProtocolError("confidence must be finite")
        return conf, doc.get("caption")

import json
import math
import pickle
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scratchattack.exceptions import ContractError, DomainError, OracleProtocolError, OracleTransportError
from scratchattack.losses import confidence_loss, margin_loss, targeted_cross_entropy
from scratchattack.oracle import (
    ConstantOracle,
    HTTPOracle,
    ModelOracle,
    Network,
    QueryLedger,
    StubOracle,
)

score_vectors = st.lists(st.floats(-50, 50), min_size=2, max_size=8)


def naive_forward(doc, image):
    """Loop-based forward pass over the JSON description, channels-last."""
    x = np.asarray(image, dtype=float)
    for layer in doc["layers"]:
        kind = layer["type"]
        if kind == "conv":
            w, b = np.asarray(layer["weights"]), np.asarray(layer["bias"])
            s, p = layer.get("stride", 1), layer.get("padding", 0)
            x = np.pad(x, ((p, p), (p, p), (0, 0)))
            out_h = (x.shape[0] - w.shape[2]) // s + 1
            out_w = (x.shape[1] - w.shape[3]) // s + 1
            y = np.zeros((out_h, out_w, w.shape[0]))
            for o in range(w.shape[0]):
                for r in range(out_h):
                    for c in range(out_w):
                        patch = x[r * s : r * s + w.shape[2], c * s : c * s + w.shape[3], :]
                        y[r, c, o] = np.sum(patch.transpose(2, 0, 1) * w[o]) + b[o]
            x = y
        elif kind == "relu":
            x = np.maximum(x, 0)
        elif kind == "flatten":
            x = x.reshape(-1)
        elif kind == "dense":
            x = np.asarray(layer["weights"]) @ x + np.asarray(layer["bias"])
        elif kind == "softmax":
            e = np.exp(x - x.max())
            x = e / e.sum()
    return x


# --- losses -----------------------------------------------------------------

def test_margin_examples():
    assert margin_loss([0.6, 0.3, 0.1], 0) == pytest.approx(0.3)
    assert margin_loss([0.2, 0.5, 0.3], 0) == pytest.approx(-0.3)
    assert margin_loss([0.5, 0.5], 0) == 0.0


def test_margin_errors():
    with pytest.raises(DomainError):
        margin_loss([1.0], 0)
    with pytest.raises(DomainError):
        margin_loss([0.2, 0.8], 2)


@given(score_vectors, st.data())
def test_margin_sign_matches_argmax(scores, data):
    y = data.draw(st.integers(0, len(scores) - 1))
    m = margin_loss(scores, y)
    others = [s for i, s in enumerate(scores) if i != y]
    if m < 0:
        assert scores[y] < max(others)
    elif m > 0:
        assert int(np.argmax(scores)) == y
    else:
        assert scores[y] == max(others)


@given(score_vectors, st.floats(0.01, 100))
def test_margin_scales_with_scores(scores, lam):
    m = margin_loss(scores, 0)
    scaled = margin_loss([lam * s for s in scores], 0)
    assert scaled == pytest.approx(lam * m, rel=1e-9, abs=1e-9)
    assert np.sign(scaled) == np.sign(m) or abs(m) < 1e-12


def test_targeted_cross_entropy_examples():
    eps = 1e-12
    assert targeted_cross_entropy([1 - 2 * eps, eps, eps], 0) == pytest.approx(0.0, abs=1e-9)
    expected = -math.log(1 / 3) - 2 * math.log(2 / 3)
    assert expected == pytest.approx(1.9095425, abs=1e-6)
    assert targeted_cross_entropy([1 / 3, 1 / 3, 1 / 3], 0) == pytest.approx(expected, abs=1e-12)


def test_targeted_cross_entropy_is_finite_at_extremes():
    assert np.isfinite(targeted_cross_entropy([0.0, 1.0], 0))


@given(st.floats(0.01, 0.98), st.floats(0.001, 0.998))
def test_targeted_cross_entropy_decreases_with_target_probability(p, q):
    lo, hi = sorted((p, min(p + 0.01, 0.99)))
    # remaining mass split between two other classes in the ratio q : 1 - q
    def loss(pt):
        rest = 1 - pt
        return targeted_cross_entropy([pt, q * rest, (1 - q) * rest], 0)
    assert loss(lo) > loss(hi)


def test_confidence_loss_is_identity():
    assert confidence_loss(0.512) == 0.512
    assert confidence_loss(0) == 0
    assert confidence_loss(0.219) == 0.219
    with pytest.raises(DomainError):
        confidence_loss(float("nan"))


# --- oracles ----------------------------------------------------------------

def test_toy_model_all_ones_is_class_2(toy_oracle):
    doc = toy_oracle.network.to_dict()
    ones = np.ones(tuple(doc["input_shape"]))
    reference = naive_forward(doc, ones)
    assert int(np.argmax(reference)) == 2
    pred = toy_oracle.classify(ones)
    assert pred.label == 2
    np.testing.assert_allclose(pred.scores, reference, atol=1e-10)


def test_toy_model_matches_naive_forward_on_fixtures(toy_oracle, toy_manifest):
    doc = toy_oracle.network.to_dict()
    for entry in toy_manifest[:3]:
        img = entry.load_image()
        np.testing.assert_allclose(toy_oracle.scores(img), naive_forward(doc, img), atol=1e-10)


def test_local_oracle_is_deterministic_and_batched(toy_oracle, toy_manifest):
    img = toy_manifest[0].load_image()
    np.testing.assert_array_equal(toy_oracle.scores(img), toy_oracle.scores(img.copy()))
    batch = np.stack([e.load_image() for e in toy_manifest[:4]])
    np.testing.assert_allclose(toy_oracle.predict_proba(batch)[2], toy_oracle.scores(batch[2]), atol=1e-12)
    assert toy_oracle.predict(batch).shape == (4,)


def test_constant_oracle():
    oracle = ConstantOracle([0.1, 0.7, 0.2])
    pred = oracle.classify(np.zeros((3, 3, 3)))
    assert pred.label == 1
    np.testing.assert_array_equal(pred.scores, [0.1, 0.7, 0.2])


def test_argmax_ties_pick_lowest_index():
    assert StubOracle(lambda img: [0.4, 0.4, 0.2]).classify(np.zeros((2, 2, 3))).label == 0


def test_network_round_trip_and_shape_checks(tmp_path):
    doc = {
        "input_shape": [4, 4, 3],
        "layers": [
            {"type": "conv", "weights": np.ones((2, 3, 3, 3)).tolist(), "bias": [0, 1], "stride": 1, "padding": 1},
            {"type": "relu"},
            {"type": "flatten"},
            {"type": "dense", "weights": np.eye(3, 32).tolist(), "bias": [0, 0, 0]},
        ],
    }
    net = Network.from_dict(doc)
    path = tmp_path / "net.json"
    path.write_text(json.dumps(net.to_dict()))
    img = np.random.default_rng(0).random((4, 4, 3))
    oracle = ModelOracle.from_file(path)
    np.testing.assert_allclose(oracle.scores(img), naive_forward(doc, img), atol=1e-12)
    bad = json.loads(json.dumps(doc))
    bad["layers"][3]["weights"] = np.eye(3, 31).tolist()
    with pytest.raises(DomainError):
        Network.from_dict(bad)
    with pytest.raises(DomainError):
        Network.from_dict({"input_shape": [4, 4, 3], "layers": [{"type": "pool"}]})
    with pytest.raises(DomainError):
        Network.from_dict({"layers": []})


def test_query_ledger():
    ledger = QueryLedger(2)
    ledger.charge()
    ledger.charge()
    assert ledger.count == 2 and ledger.remaining == 0
    with pytest.raises(ContractError):
        ledger.charge()


# --- HTTP oracle ------------------------------------------------------------

class _Handler(BaseHTTPRequestHandler):
    script = []  # list of (status, body) answered in turn, last one repeated
    seen = []

    def do_POST(self):
        body = self.rfile.read(int(self.headers["Content-Length"]))
        type(self).seen.append((self.headers["Content-Type"], body[:8]))
        status, payload = self.script[min(len(self.seen) - 1, len(self.script) - 1)]
        data = payload.encode() if isinstance(payload, str) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    _Handler.seen = []
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield srv, f"http://127.0.0.1:{srv.server_address[1]}/classify"
    srv.shutdown()
    srv.server_close()


IMG = np.full((5, 5, 3), 0.25)


def test_http_scores(server):
    _, url = server
    _Handler.script = [(200, {"scores": [0.1, 0.9]})]
    oracle = HTTPOracle(url)
    pred = oracle.classify(IMG)
    assert pred.label == 1
    ctype, head = _Handler.seen[0]
    assert ctype == "image/png" and head == b"\x89PNG\r\n\x1a\n"


def test_http_confidence(server):
    _, url = server
    _Handler.script = [(200, {"confidence": 0.512, "caption": "a stop sign"})]
    assert HTTPOracle(url).confidence(IMG) == (0.512, "a stop sign")


def test_http_retries_server_errors(server):
    _, url = server
    _Handler.script = [(503, {}), (429, {}), (200, {"scores": [1, 0]})]
    oracle = HTTPOracle(url, max_retries=3, backoff=0.001)
    assert oracle.classify(IMG).label == 0
    assert len(_Handler.seen) == 3


def test_http_gives_up_with_retry_metadata(server):
    _, url = server
    _Handler.script = [(500, {})]
    with pytest.raises(OracleTransportError) as info:
        HTTPOracle(url, max_retries=2, backoff=0.001).scores(IMG)
    assert info.value.attempts == 3 and info.value.status == 500
    assert len(_Handler.seen) == 3


def test_http_client_errors_are_not_retried(server):
    _, url = server
    _Handler.script = [(400, {})]
    with pytest.raises(OracleTransportError):
        HTTPOracle(url, max_retries=3, backoff=0.001).scores(IMG)
    assert len(_Handler.seen) == 1


@pytest.mark.parametrize("payload", ["not json", {"scores": [1.0]}, {"label": 3}, {"scores": "abc"}])
def test_http_malformed_payloads(server, payload):
    _, url = server
    _Handler.script = [(200, payload)]
    with pytest.raises(OracleProtocolError):
        HTTPOracle(url).scores(IMG)


def test_http_unreachable():
    with pytest.raises(OracleTransportError):
        HTTPOracle("http://127.0.0.1:9/none", timeout=0.5, max_retries=1, backoff=0.001).scores(IMG)


def test_http_rate_limit_spacing(server):
    import time

    _, url = server
    _Handler.script = [(200, {"scores": [0, 1]})]
    oracle = HTTPOracle(url, min_interval=0.05)
    assert not oracle.concurrent_safe
    t = time.monotonic()
    for _ in range(3):
        oracle.scores(IMG)
    assert time.monotonic() - t >= 0.1
    clone = pickle.loads(pickle.dumps(oracle))
    assert clone.url == url and clone.min_interval == 0.05

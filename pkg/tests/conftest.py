import json
from importlib import resources
from math import comb

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = resources.files("scratchattack") / "data"


def bernstein_point(points, t):
    """Direct Bernstein sum, independent of the package's evaluators."""
    n = len(points) - 1
    acc = np.zeros(2)
    for i, p in enumerate(points):
        acc = acc + comb(n, i) * (1 - t) ** (n - i) * t**i * np.asarray(p, dtype=float)
    return acc


def dense_pixels(points, n=10_000):
    """Round-half-away pixels of the curve at ``n`` uniform parameters, consecutive repeats removed."""
    pts = np.asarray(points, dtype=float)
    t = np.linspace(0.0, 1.0, n)
    deg = len(pts) - 1
    basis = np.stack([comb(deg, i) * (1 - t) ** (deg - i) * t**i for i in range(deg + 1)], axis=1)
    xy = basis @ pts
    pix = (np.sign(xy) * np.floor(np.abs(xy) + 0.5)).astype(int)
    out = [tuple(pix[0])]
    for p in map(tuple, pix[1:]):
        if p != out[-1]:
            out.append(p)
    return out


@pytest.fixture(scope="session")
def toy_oracle():
    from scratchattack.oracle import toy_oracle as load

    return load()


@pytest.fixture(scope="session")
def toy_manifest():
    from scratchattack.cli import toy_manifest_path
    from scratchattack.io import load_manifest

    return load_manifest(toy_manifest_path())


@pytest.fixture(scope="session")
def toy_certificates():
    with (DATA / "toy" / "certificates.json").open("r", encoding="utf-8") as fh:
        return {c["image_id"]: c for c in json.load(fh)}


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)

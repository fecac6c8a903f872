"""
Regenerate the bundled toy classifier, the 20-image fixture set, the
attackability certificates and the JPEG gradient fixture.

    python scripts/build_fixtures.py [--out src/scratchattack/data]

The classifier is a fixed filter bank (colour pass-through plus per-channel
centre-surround detectors, both signs) followed by 11x11 average pooling into
2x2 cells and a dense layer fitted with logistic regression on synthetic
"signs": a disk on a smooth background, coloured red, blue or white, or
textured with noise. A fixture is certified when an exhaustive search over a
coarse grid of single straight scratches finds one that flips the label.
"""
import argparse
import itertools
import json
from pathlib import Path

import numpy as np
from sklearn.linear_model import LogisticRegression

from scratchattack.io import save_mask, save_png
from scratchattack.losses import margin_loss
from scratchattack.oracle import ModelOracle, Network
from scratchattack.scratch import ScratchParams, apply_scratches

SIZE = 24
CLASSES = ("red", "blue", "white", "textured")
N_FIXTURES = 20
CERT_K = 16


def filter_bank():
    w = np.zeros((9, 3, 3, 3))
    for c in range(3):
        w[c, c, 1, 1] = 1.0
        surround = np.full((3, 3), -1.0 / 8.0)
        surround[1, 1] = 1.0
        w[3 + c, c] = surround
        w[6 + c, c] = -surround
    return w


def pooling(channels, cell):
    w = np.zeros((channels, channels, cell, cell))
    for c in range(channels):
        w[c, c] = 1.0 / cell**2
    return w


def feature_layers():
    return [
        {"type": "conv", "weights": filter_bank().tolist(), "bias": [0.0] * 9, "stride": 1, "padding": 0},
        {"type": "relu"},
        {"type": "conv", "weights": pooling(9, 11).tolist(), "bias": [0.0] * 9, "stride": 11, "padding": 0},
        {"type": "flatten"},
    ]


def disk_mask(center, radius):
    rr, cc = np.mgrid[:SIZE, :SIZE]
    return (rr - center[0]) ** 2 + (cc - center[1]) ** 2 <= radius**2


def make_sign(rng, cls):
    top, bottom = rng.uniform(0.15, 0.6, 3), rng.uniform(0.15, 0.6, 3)
    ramp = np.linspace(0.0, 1.0, SIZE)[:, None, None]
    img = np.broadcast_to(top + (bottom - top) * ramp, (SIZE, SIZE, 3)).copy()
    center = SIZE / 2 - 0.5 + rng.uniform(-1.5, 1.5, 2)
    mask = disk_mask(center, rng.uniform(7.0, 9.5))
    if cls == 0:
        color = [rng.uniform(0.75, 1.0), rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.3)]
    elif cls == 1:
        color = [rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.35), rng.uniform(0.75, 1.0)]
    elif cls == 2:
        color = rng.uniform(0.85, 1.0) - rng.uniform(0.0, 0.08, 3)
    else:
        color = rng.uniform(0.2, 0.8, 3)
    img[mask] = color
    if cls == 3:
        amp = rng.uniform(0.12, 0.3)
        img[mask] += amp * rng.choice([-1.0, 1.0], size=(mask.sum(), 3))
    img += rng.normal(0.0, 0.02, img.shape)
    img = np.rint(np.clip(img, 0.0, 1.0) * 255.0) / 255.0
    return img, mask


def train_model(rng, per_class=300, C=1.0):
    feats = Network([SIZE, SIZE, 3], feature_layers())
    X, y = [], []
    for cls in range(len(CLASSES)):
        for _ in range(per_class):
            X.append(make_sign(rng, cls)[0])
            y.append(cls)
    F = feats.forward(np.stack(X))
    clf = LogisticRegression(C=C, max_iter=5000).fit(F, y)
    layers = feature_layers() + [
        {"type": "dense", "weights": clf.coef_.tolist(), "bias": clf.intercept_.tolist()},
        {"type": "softmax"},
    ]
    return Network([SIZE, SIZE, 3], layers), clf.score(F, y)


def coarse_scratches():
    """Straight quadratic scratches between grid points, all 8 saturated colours."""
    grid = np.linspace(1.0, SIZE - 2.0, 6)
    points = list(itertools.product(grid, grid))
    colors = list(itertools.product([0.0, 1.0], repeat=3))
    for (a, b) in itertools.combinations(points, 2):
        mid = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
        for col in colors:
            yield ScratchParams(2, (*a, *mid, *b), col)


def certify(oracle, image, label, region):
    """First coarse single scratch (with ``k = CERT_K``) that flips the label, or None."""
    batch, params = [], []
    for p in coarse_scratches():
        adv, _ = apply_scratches(image, [p], CERT_K, region)
        batch.append(adv)
        params.append(p)
        if len(batch) == 256:
            hit = _first_hit(oracle, batch, params, label)
            if hit is not None:
                return hit
            batch, params = [], []
    return _first_hit(oracle, batch, params, label) if batch else None


def _first_hit(oracle, batch, params, label):
    scores = oracle.network.forward(np.stack(batch))
    for s, p in zip(scores, params):
        if margin_loss(s, label) < 0:
            return p
    return None


def gradient_fixture():
    rr, cc = np.mgrid[:64, :64] / 63.0
    img = np.stack([rr, cc, 0.5 + 0.4 * np.sin(3.0 * (rr + cc))], axis=2)
    return np.rint(np.clip(img, 0, 1) * 255.0) / 255.0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src/scratchattack/data"))
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--min-margin", type=float, default=0.55,
                    help="smallest clean margin of a fixture; keeps the set from being trivially easy")
    args = ap.parse_args(argv)
    out = Path(args.out)
    rng = np.random.default_rng(args.seed)

    network, train_acc = train_model(rng)
    oracle = ModelOracle(network)
    print(f"train accuracy {train_acc:.3f}")
    if oracle.classify(np.ones((SIZE, SIZE, 3))).label != 2:
        raise SystemExit("all-ones image is not classified as white; retune")

    fixtures, tried = [], 0
    while len(fixtures) < N_FIXTURES:
        cls = len(fixtures) % 3
        img, disk = make_sign(rng, cls)
        tried += 1
        if margin_loss(oracle.scores(img), cls) < args.min_margin:
            continue
        with_mask = len(fixtures) % 2 == 1
        region = disk if with_mask else np.ones_like(disk)
        cert = certify(oracle, img, cls, region)
        if cert is None:
            continue
        fixtures.append((img, cls, disk if with_mask else None, cert))
    print(f"certified {len(fixtures)} of {tried} generated signs")

    (out / "toy").mkdir(parents=True, exist_ok=True)
    with open(out / "toy_model.json", "w", encoding="utf-8") as fh:
        json.dump(network.to_dict(), fh)
    manifest, certificates = [], []
    for i, (img, cls, mask, cert) in enumerate(fixtures):
        image_id = f"sign_{i:02d}"
        save_png(out / "toy" / f"{image_id}.png", img)
        entry = {"image_id": image_id, "image_path": f"{image_id}.png", "label": cls}
        if mask is not None:
            save_mask(out / "toy" / f"{image_id}_mask.png", mask)
            entry["mask_path"] = f"{image_id}_mask.png"
        manifest.append(entry)
        certificates.append({"image_id": image_id, "per_scratch_l0": CERT_K, "scratch": cert.to_list()})
    with open(out / "toy" / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    with open(out / "toy" / "certificates.json", "w", encoding="utf-8") as fh:
        json.dump(certificates, fh, indent=1)
    save_png(out / "gradient.png", gradient_fixture())


if __name__ == "__main__":
    main()

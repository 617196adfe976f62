#!/usr/bin/env python3
"""Build IDX files for the bundled MNIST digits.

The `mnist` npm package (MIT licensed) ships 10,000 MNIST digits as JSON
arrays of 784 floats each, quantized from the original bytes to three
decimals. This script unpacks the package, recovers the bytes with
round(x * 255), shuffles with a fixed seed and writes an 8000/2000
train/test split in the big-endian IDX format.

Usage: python3 tools/fetch_mnist.py [--out data/mnist] [--tarball mnist-1.1.0.tgz]
"""

import argparse
import json
import random
import struct
import subprocess
import tarfile
import tempfile
from pathlib import Path

ROWS = COLS = 28
TRAIN_COUNT = 8000
SHUFFLE_SEED = 20190607


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), ROWS, COLS))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def load_digits(package_dir):
    samples = []
    for digit in range(10):
        raw = json.loads((package_dir / "src" / "digits" / f"{digit}.json").read_text())["data"]
        size = ROWS * COLS
        assert len(raw) % size == 0
        for start in range(0, len(raw), size):
            pixels = [min(255, max(0, round(v * 255))) for v in raw[start:start + size]]
            samples.append((pixels, digit))
    return samples


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "mnist"))
    parser.add_argument("--tarball", default=None, help="pre-downloaded mnist npm tarball")
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        tarball = Path(args.tarball) if args.tarball else None
        if tarball is None:
            subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=tmp, check=True, capture_output=True)
            tarball = tmp / "mnist-1.1.0.tgz"
        with tarfile.open(tarball) as tar:
            tar.extractall(tmp)
        samples = load_digits(tmp / "package")

    random.Random(SHUFFLE_SEED).shuffle(samples)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train, test = samples[:TRAIN_COUNT], samples[TRAIN_COUNT:]
    write_images(out / "train-images.idx3-ubyte", [s[0] for s in train])
    write_labels(out / "train-labels.idx1-ubyte", [s[1] for s in train])
    write_images(out / "test-images.idx3-ubyte", [s[0] for s in test])
    write_labels(out / "test-labels.idx1-ubyte", [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test images to {out}")


if __name__ == "__main__":
    main()

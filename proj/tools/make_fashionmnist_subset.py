#!/usr/bin/env python3
"""Build the desk-scale FashionMNIST subset used by the acceptance suite.

Source: the `fashion-mnist` npm package (MIT), which ships all 70,000
FashionMNIST images as per-class JSON arrays of 784 uint8 pixels:

    npm pack fashion-mnist && tar xzf fashion-mnist-*.tgz
    python3 tools/make_fashionmnist_subset.py package/src/clothes tests/data/fashionmnist_subset

Train: images [0, 200) of every class. Test: images [6900, 7000) of every
class. The two sets are disjoint. Sample order is a fixed-seed shuffle.
"""
import gzip
import json
import random
import struct
import sys
from pathlib import Path


def write_idx(path, dims, payload):
    header = bytes([0, 0, 0x08, len(dims)]) + b"".join(struct.pack(">I", d) for d in dims)
    # mtime=0 keeps the archive bytes reproducible
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as gz:
        gz.write(header + bytes(payload))


def build(samples, out_dir, stem, seed):
    random.Random(seed).shuffle(samples)
    pixels = bytearray()
    labels = bytearray()
    for label, image in samples:
        pixels.extend(image)
        labels.append(label)
    write_idx(out_dir / f"{stem}-images-idx3-ubyte.gz", [len(samples), 28, 28], pixels)
    write_idx(out_dir / f"{stem}-labels-idx1-ubyte.gz", [len(samples)], labels)


def main():
    src, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for label in range(10):
        data = json.loads((src / f"{label}.json").read_text())["data"]
        train += [(label, data[i]) for i in range(0, 200)]
        test += [(label, data[i]) for i in range(6900, 7000)]
    build(train, out_dir, "train", 2024)
    build(test, out_dir, "t10k", 2025)


if __name__ == "__main__":
    main()

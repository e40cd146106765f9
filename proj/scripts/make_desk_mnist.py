#!/usr/bin/env python3
"""Build the desk-scale MNIST IDX files from the digits bundled in the npm `mnist` package.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/make_desk_mnist.py package/src/digits data/mnist-desk

The package ships 10,000 MNIST digits as JSON arrays of pixel/255 values. They are
rounded back to bytes, shuffled with a fixed seed, and split 8000/2000 into the
standard train/t10k IDX file pairs.
"""
import argparse
import json
import pathlib
import struct

import numpy as np


def write_images(path, images):
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, rows, cols))
        f.write(images.astype(np.uint8).tobytes())


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--test", type=int, default=2000)
    args = ap.parse_args()

    images, labels = [], []
    for digit in range(10):
        raw = json.loads((pathlib.Path(args.digits_dir) / f"{digit}.json").read_text())["data"]
        arr = np.rint(np.asarray(raw, dtype=np.float64) * 255.0).clip(0, 255).astype(np.uint8)
        arr = arr.reshape(-1, 28, 28)
        images.append(arr)
        labels.append(np.full(len(arr), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)

    perm = np.random.default_rng(args.seed).permutation(len(images))
    images, labels = images[perm], labels[perm]
    n_train = len(images) - args.test

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "train-images-idx3-ubyte", images[:n_train])
    write_labels(out / "train-labels-idx1-ubyte", labels[:n_train])
    write_images(out / "t10k-images-idx3-ubyte", images[n_train:])
    write_labels(out / "t10k-labels-idx1-ubyte", labels[n_train:])
    print(f"wrote {n_train} train / {args.test} test examples to {out}")


if __name__ == "__main__":
    main()

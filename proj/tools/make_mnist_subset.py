#!/usr/bin/env python3
"""Build IDX files from the 10,000 MNIST digits bundled in the npm `mnist` package.

The package stores each digit as 784 floats rounded to three decimals
(byte / 255), grouped by class. Bytes are recovered exactly with
round(v * 255). Digits are shuffled with a fixed seed and split into a
train and a test part, then written as gzipped big-endian IDX files.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist
"""
import argparse
import gzip
import json
import os
import struct

import numpy as np


def write_idx_images(path, images):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("digits_dir")
    parser.add_argument("out_dir")
    parser.add_argument("--test", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=20151121)
    args = parser.parse_args()

    images, labels = [], []
    for digit in range(10):
        with open(os.path.join(args.digits_dir, f"{digit}.json")) as f:
            flat = np.asarray(json.load(f)["data"], dtype=np.float64)
        pixels = np.rint(flat * 255.0)
        assert np.all(np.abs(flat * 255.0 - pixels) < 0.2), "not byte/255 data"
        pixels = pixels.reshape(-1, 784)
        images.append(pixels)
        labels.append(np.full(len(pixels), digit))
    images = np.concatenate(images)
    labels = np.concatenate(labels)

    order = np.random.default_rng(args.seed).permutation(len(labels))
    images, labels = images[order], labels[order]
    n_train = len(labels) - args.test

    os.makedirs(args.out_dir, exist_ok=True)
    write_idx_images(os.path.join(args.out_dir, "train-images-idx3-ubyte.gz"), images[:n_train])
    write_idx_labels(os.path.join(args.out_dir, "train-labels-idx1-ubyte.gz"), labels[:n_train])
    write_idx_images(os.path.join(args.out_dir, "t10k-images-idx3-ubyte.gz"), images[n_train:])
    write_idx_labels(os.path.join(args.out_dir, "t10k-labels-idx1-ubyte.gz"), labels[n_train:])
    print(f"train {n_train}, test {len(labels) - n_train}")


if __name__ == "__main__":
    main()

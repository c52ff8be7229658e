"""Write the 5,000-image MNIST subset bundled with mlxtend as IDX files.

Produces a class-stratified 4,000/1,000 train/test split under
data/mnist5k/. Only needed to regenerate the committed files:

    pip install mlxtend && python scripts/make_mnist_subset.py
"""

import argparse
from pathlib import Path

import numpy as np

from nnwm import rng
from nnwm.data import write_idx_images, write_idx_labels


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=Path(__file__).resolve().parent.parent / "data" / "mnist5k", type=Path)
    ap.add_argument("--test-per-class", type=int, default=100)
    ap.add_argument("--seed", type=int, default=2019)
    args = ap.parse_args()

    from mlxtend.data import mnist_data

    x, y = mnist_data()
    x = x.astype(np.uint8).reshape(-1, 28, 28)
    gen = rng.stream(args.seed, "split")
    train_idx, test_idx = [], []
    for c in range(10):
        rows = np.flatnonzero(y == c)
        rows = rows[gen.permutation(len(rows))]
        test_idx.append(rows[:args.test_per_class])
        train_idx.append(rows[args.test_per_class:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)
    train_idx = train_idx[gen.permutation(len(train_idx))]
    test_idx = test_idx[gen.permutation(len(test_idx))]

    args.out.mkdir(parents=True, exist_ok=True)
    write_idx_images(args.out / "train-images-idx3-ubyte.gz", x[train_idx])
    write_idx_labels(args.out / "train-labels-idx1-ubyte.gz", y[train_idx])
    write_idx_images(args.out / "t10k-images-idx3-ubyte.gz", x[test_idx])
    write_idx_labels(args.out / "t10k-labels-idx1-ubyte.gz", y[test_idx])
    print(f"wrote {len(train_idx)} train / {len(test_idx)} test images to {args.out}")


if __name__ == "__main__":
    main()

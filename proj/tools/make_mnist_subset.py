#!/usr/bin/env python3
"""Write a small MNIST subset as IDX files.

Source is the 5000-digit sample shipped inside the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz: 784 pixel columns then the label).

    pip download mlxtend==0.24.0 --no-deps -d /tmp/pd
    python3 tools/make_mnist_subset.py /tmp/pd/mlxtend-0.24.0-py3-none-any.whl data/mnist
"""

import argparse
import gzip
import io
import pathlib
import struct
import zipfile

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_source(path: pathlib.Path) -> tuple[np.ndarray, np.ndarray]:
    if path.suffix == ".whl":
        with zipfile.ZipFile(path) as zf:
            raw = zf.read(MEMBER)
    else:
        raw = path.read_bytes()
    table = np.loadtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",", dtype=np.int64)
    if table.shape[1] != 785:
        raise SystemExit(f"expected 785 columns, got {table.shape[1]}")
    return table[:, :784].astype(np.uint8), table[:, 784].astype(np.uint8)


def write_images(path: pathlib.Path, images: np.ndarray) -> None:
    with path.open("wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        f.write(images.tobytes())


def write_labels(path: pathlib.Path, labels: np.ndarray) -> None:
    with path.open("wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(labels.tobytes())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("source", type=pathlib.Path, help="mlxtend wheel or mnist_5k.csv.gz")
    ap.add_argument("out", type=pathlib.Path)
    ap.add_argument("--train", type=int, default=1000)
    ap.add_argument("--test", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    images, labels = read_source(args.source)
    if args.train + args.test > len(images):
        raise SystemExit(f"only {len(images)} digits available")
    order = np.random.default_rng(args.seed).permutation(len(images))
    train = order[: args.train]
    test = order[args.train : args.train + args.test]

    args.out.mkdir(parents=True, exist_ok=True)
    write_images(args.out / "train-images-idx3-ubyte", images[train])
    write_labels(args.out / "train-labels-idx1-ubyte", labels[train])
    write_images(args.out / "test-images-idx3-ubyte", images[test])
    write_labels(args.out / "test-labels-idx1-ubyte", labels[test])
    print(f"wrote {len(train)} train and {len(test)} test digits to {args.out}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Write a small MNIST subset in IDX format (gzip) from the 5000-digit CSV
shipped inside the mlxtend wheel.

    pip download mlxtend==0.24.0 --no-deps -d /tmp/mlx
    python3 tools/make_mnist_subset.py /tmp/mlx/mlxtend-0.24.0-py3-none-any.whl data/mnist

The CSV is sorted by digit, so the split is stratified: the first 80% of each
digit goes to train-*, the rest to t10k-*, and both sets are shuffled with a
fixed seed.
"""

import argparse
import gzip
import io
import struct
import zipfile
from pathlib import Path

import numpy as np

CSV_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def write_idx(path: Path, array: np.ndarray) -> None:
    # magic: two zero bytes, dtype 0x08 (ubyte), number of dims
    header = struct.pack(">HBB", 0, 0x08, array.ndim)
    header += b"".join(struct.pack(">I", n) for n in array.shape)
    # fixed mtime keeps the archives byte-reproducible
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
        f.write(header + array.astype(np.uint8).tobytes())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("wheel", type=Path)
    ap.add_argument("out", type=Path)
    ap.add_argument("--train-fraction", type=float, default=0.8)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    with zipfile.ZipFile(args.wheel) as z:
        text = gzip.decompress(z.read(CSV_MEMBER)).decode()
    rows = np.loadtxt(io.StringIO(text), delimiter=",", dtype=np.int64)
    # pixels first, label in the last column
    labels, images = rows[:, -1], rows[:, :-1].reshape(-1, 28, 28)
    if images.min() < 0 or images.max() > 255:
        raise SystemExit("unexpected pixel range")

    args.out.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for digit in range(10):
        idx = np.flatnonzero(labels == digit)
        cut = int(round(args.train_fraction * len(idx)))
        train.extend(idx[:cut])
        test.extend(idx[cut:])
    rng = np.random.default_rng(args.seed)
    for prefix, idx in (("train", rng.permutation(train)), ("t10k", rng.permutation(test))):
        write_idx(args.out / f"{prefix}-images-idx3-ubyte.gz", images[idx])
        write_idx(args.out / f"{prefix}-labels-idx1-ubyte.gz", labels[idx])
        counts = np.bincount(labels[idx], minlength=10)
        print(f"{prefix}: {len(idx)} samples, per class {counts.tolist()}")


if __name__ == "__main__":
    main()

"""Write a seeded 2,000/1,000 train/test MNIST subset as IDX files.

Input is the 5,000-sample `mnist_5k.csv.gz` shipped with the mlxtend
package (784 pixel columns 0-255, label in the last column):

    python scripts/make_mnist_subset.py path/to/mnist_5k.csv.gz data/mnist-subset
"""

import gzip
import struct
import sys
from pathlib import Path

import numpy as np

N_TRAIN = 2000
N_TEST = 1000
SEED = 0


def write_idx(path, array):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(">BBBB", 0, 0, 0x08, array.ndim)
    header += b"".join(struct.pack(">I", d) for d in array.shape)
    path.write_bytes(header + array.tobytes())


def main(src, dst):
    with gzip.open(src, "rt") as f:
        rows = np.loadtxt(f, delimiter=",", dtype=np.int64)
    assert rows.shape == (5000, 785), rows.shape
    order = np.random.default_rng(SEED).permutation(len(rows))
    pixels = rows[order, :-1].reshape(-1, 28, 28)
    labels = rows[order, -1]
    dst = Path(dst)
    dst.mkdir(parents=True, exist_ok=True)
    splits = {"train": slice(0, N_TRAIN), "t10k": slice(N_TRAIN, N_TRAIN + N_TEST)}
    for prefix, s in splits.items():
        write_idx(dst / f"{prefix}-images-idx3-ubyte", pixels[s])
        write_idx(dst / f"{prefix}-labels-idx1-ubyte", labels[s])
        counts = np.bincount(labels[s], minlength=10)
        print(prefix, len(labels[s]), "per class:", counts.tolist())


if __name__ == "__main__":
    main(*sys.argv[1:3])

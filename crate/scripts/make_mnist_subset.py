"""Build the 2k/1k MNIST subset in IDX format.

Source: `mnist_5k.csv.gz` shipped inside the mlxtend wheel (500 images per
digit, 784 pixel columns then the label). Per digit the first 200 rows go to
train and the next 100 to test; each split is then shuffled with a fixed seed.

    python3 scripts/make_mnist_subset.py [path/to/mlxtend.whl | mnist_5k.csv.gz] [out_dir]

Without a path the wheel is fetched with `pip download mlxtend`.
"""

import glob
import gzip
import struct
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_csv_gz(src: Path) -> bytes:
    if src.suffix == ".whl":
        with zipfile.ZipFile(src) as z:
            return gzip.decompress(z.read(MEMBER))
    return gzip.decompress(src.read_bytes())


def fetch_wheel(tmp: str) -> Path:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "mlxtend", "--no-deps", "-q", "-d", tmp],
        check=True,
    )
    return Path(glob.glob(f"{tmp}/mlxtend-*.whl")[0])


def write_idx(out: Path, name: str, images: np.ndarray, labels: np.ndarray) -> None:
    n = len(labels)
    with open(out / f"{name}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        f.write(images.astype(np.uint8).tobytes())
    with open(out / f"{name}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    out = Path(sys.argv[2] if len(sys.argv) > 2 else "data/mnist-subset")
    with tempfile.TemporaryDirectory() as tmp:
        src = Path(sys.argv[1]) if len(sys.argv) > 1 else fetch_wheel(tmp)
        text = read_csv_gz(src).decode()
    rows = np.array([[int(float(v)) for v in line.split(",")] for line in text.strip().splitlines()])
    pixels, labels = rows[:, :-1], rows[:, -1]
    assert pixels.shape == (5000, 784) and pixels.min() >= 0 and pixels.max() <= 255

    train, test = [], []
    for digit in range(10):
        idx = np.flatnonzero(labels == digit)
        train.extend(idx[:200])
        test.extend(idx[200:300])
    rng = np.random.default_rng(0)
    train = rng.permutation(train)
    test = rng.permutation(test)

    out.mkdir(parents=True, exist_ok=True)
    write_idx(out, "train", pixels[train], labels[train])
    write_idx(out, "test", pixels[test], labels[test])
    print(f"wrote {len(train)} train / {len(test)} test to {out}")


if __name__ == "__main__":
    main()

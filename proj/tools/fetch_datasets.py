#!/usr/bin/env python3
"""Materialize the benchmark datasets used by the acceptance suite.

No network access beyond a PyPI mirror is assumed, so the data is pulled out
of two wheels that ship it:

  * mlxtend      -> mlxtend/data/data/mnist_5k.csv.gz  (5000 MNIST digits, 500/class)
  * ucr-datasets -> ucr_datasets/data/ECG200_{TRAIN,TEST}.tsv

MNIST is shuffled with a fixed seed (the CSV is sorted by class) and written
as gzip'd IDX files: a 4000-record "train" file and a 1000-record "test" file.
ECG200 TSVs are copied verbatim.

Usage: tools/fetch_datasets.py [--out DIR]   (default: $MNODE_DATA_DIR or ./data)
"""
import argparse
import gzip
import os
import random
import struct
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

MNIST_MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"
ECG_MEMBERS = ["ucr_datasets/data/ECG200_TRAIN.tsv", "ucr_datasets/data/ECG200_TEST.tsv"]
SHUFFLE_SEED = 20240607
N_TRAIN = 4000


def download_wheel(package, dest):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", package, "-d", dest],
        check=True,
    )
    name = package.split("==")[0].replace("-", "_").lower()
    for f in os.listdir(dest):
        if f.lower().startswith(name) and f.endswith(".whl"):
            return os.path.join(dest, f)
    raise RuntimeError(f"wheel for {package} not found in {dest}")


def write_idx_images(path, rows):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for pixels, _ in rows:
            f.write(bytes(pixels))


def write_idx_labels(path, rows):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(rows)))
        f.write(bytes(label for _, label in rows))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.environ.get("MNODE_DATA_DIR", "data"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with tempfile.TemporaryDirectory() as tmp:
        mlx = zipfile.ZipFile(download_wheel("mlxtend", tmp))
        text = gzip.decompress(mlx.read(MNIST_MEMBER)).decode().splitlines()
        rows = []
        for line in text:
            vals = [int(float(v)) for v in line.split(",")]
            rows.append((vals[:-1], vals[-1]))
        random.Random(SHUFFLE_SEED).shuffle(rows)
        train, test = rows[:N_TRAIN], rows[N_TRAIN:]
        write_idx_images(out / "mnist5k-train-images-idx3-ubyte.gz", train)
        write_idx_labels(out / "mnist5k-train-labels-idx1-ubyte.gz", train)
        write_idx_images(out / "mnist5k-test-images-idx3-ubyte.gz", test)
        write_idx_labels(out / "mnist5k-test-labels-idx1-ubyte.gz", test)

        ucr = zipfile.ZipFile(download_wheel("ucr-datasets", tmp))
        for member in ECG_MEMBERS:
            (out / Path(member).name).write_bytes(ucr.read(member))

    for p in sorted(out.iterdir()):
        print(f"{p}  {p.stat().st_size} bytes")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Convert the digit/clothing JSON bundles shipped in the npm packages `mnist`
and `fashion-mnist` into gzipped IDX files (the standard MNIST container).

    npm pack mnist fashion-mnist
    tar xzf mnist-1.1.0.tgz -C mnist && tar xzf fashion-mnist-1.1.0.tgz -C fashion
    python3 tools/prepare_data.py --mnist mnist/package --fashion fashion/package --out data

Each dataset is reduced to `--per-class` images per class and split into a
train part and a test part (`--test-per-class`), interleaved by class so the
files are stratified. The split is deterministic.
"""
import argparse
import gzip
import json
import os
import struct


def write_idx(path, images, labels):
    with gzip.GzipFile(path + "-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with gzip.GzipFile(path + "-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def load_classes(directory, scaled):
    classes = []
    for k in range(10):
        with open(os.path.join(directory, f"{k}.json")) as f:
            data = json.load(f)["data"]
        if scaled:
            flat = data
            imgs = [flat[i:i + 784] for i in range(0, len(flat) - 783, 784)]
            # values were rounded to three decimals, so round-to-nearest recovers the byte
            imgs = [[int(round(v * 255.0)) for v in img] for img in imgs]
        else:
            imgs = [list(map(int, img)) for img in data]
        classes.append(imgs)
    return classes


def split_and_write(classes, per_class, test_per_class, prefix):
    train, test = [], []
    for i in range(per_class):
        for k in range(10):
            if i >= len(classes[k]):
                continue
            (test if i < test_per_class else train).append((classes[k][i], k))
    write_idx(prefix + "/train", [x for x, _ in train], [y for _, y in train])
    write_idx(prefix + "/t10k", [x for x, _ in test], [y for _, y in test])
    print(prefix, "train", len(train), "test", len(test))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mnist")
    ap.add_argument("--fashion")
    ap.add_argument("--out", default="data")
    ap.add_argument("--per-class", type=int, default=1000)
    ap.add_argument("--test-per-class", type=int, default=200)
    args = ap.parse_args()
    if args.mnist:
        os.makedirs(args.out + "/mnist", exist_ok=True)
        split_and_write(load_classes(args.mnist + "/src/digits", True),
                        args.per_class, args.test_per_class, args.out + "/mnist")
    if args.fashion:
        os.makedirs(args.out + "/fashion", exist_ok=True)
        split_and_write(load_classes(args.fashion + "/src/clothes", False),
                        args.per_class, args.test_per_class, args.out + "/fashion")


if __name__ == "__main__":
    main()

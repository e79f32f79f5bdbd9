#!/usr/bin/env python3
# Copyright 2026 The PAS Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Convert the 10k MNIST digits bundled in the npm `mnist` package to IDX.

Usage: mnist_from_npm.py <unpacked npm package dir> <output dir>

Obtain the package with `npm pack mnist && tar xzf mnist-*.tgz`. Digits are
written in class order; the ingest step shuffles them by seed.
"""
import gzip
import json
import pathlib
import struct
import sys


def main() -> int:
    src = pathlib.Path(sys.argv[1]) / "src" / "digits"
    out = pathlib.Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    pixels = bytearray()
    labels = bytearray()
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        pixels.extend(min(255, max(0, round(v * 255))) for v in data)
        labels.extend([digit] * (len(data) // 784))
    n = len(labels)
    with gzip.GzipFile(out / "t10k-images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x803, n, 28, 28))
        f.write(bytes(pixels))
    with gzip.GzipFile(out / "t10k-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x801, n))
        f.write(bytes(labels))
    print(f"wrote {n} examples to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

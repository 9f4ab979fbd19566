#!/usr/bin/env python3
# Copyright 2026 The lddscan Authors.
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
"""Builds an IDX image file (magic 0x00000803) from the digit JSON files
shipped in the `mnist` npm package (src/digits/{0..9}.json).

Pixel intensities in that package are stored as x/255 rounded to three
decimals, so round(x * 255) recovers the original byte exactly.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_idx.py package/src/digits data/mnist-images-idx3-ubyte
"""
import argparse
import json
import pathlib
import struct


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("digits_dir", type=pathlib.Path)
    ap.add_argument("out", type=pathlib.Path)
    args = ap.parse_args()

    pixels = bytearray()
    count = 0
    for digit in range(10):
        data = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        if len(data) % 784:
            raise SystemExit(f"{digit}.json: {len(data)} values is not a multiple of 784")
        pixels.extend(min(255, max(0, round(v * 255))) for v in data)
        count += len(data) // 784

    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, count, 28, 28))
        f.write(pixels)
    print(f"wrote {count} images to {args.out}")


if __name__ == "__main__":
    main()

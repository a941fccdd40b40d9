#!/usr/bin/env python3
"""Convert the UCI agaricus-lepiota table into a LibSVM-format `mushrooms` file.

Every nominal attribute is one-hot expanded in the value order listed in the
UCI attribute description and values that never occur are skipped. The one
attribute with missing entries (stalk-root) is left out entirely, which gives
the usual 112 binary features. Edible rows get label +1, poisonous rows -1.

usage: mushrooms_from_uci.py agaricus-lepiota.fmap agaricus-lepiota.data > mushrooms
"""
import re
import sys


def attribute_values(fmap_path):
    specs = []
    for line in open(fmap_path):
        m = re.match(r"\s*\d+\.\s+[\w?-]+:\s+(.*)", line)
        if m:
            specs.append(m.group(1).strip())
        elif line.strip() and specs:
            specs[-1] += line.strip()
    return [[kv.split("=")[1] for kv in s.strip(",").split(",")] for s in specs]


def main():
    attrs = attribute_values(sys.argv[1])
    rows = [l.strip().split(",") for l in open(sys.argv[2]) if l.strip()]
    present = [set(r[j + 1] for r in rows) for j in range(len(attrs))]
    index = {}
    for j, values in enumerate(attrs):
        if "?" in present[j]:
            continue
        for v in values:
            if v in present[j]:
                index[(j, v)] = len(index) + 1
    out = sys.stdout
    for r in rows:
        label = "+1" if r[0] == "e" else "-1"
        feats = sorted(index[(j, v)] for j, v in enumerate(r[1:]) if (j, v) in index)
        out.write(label + "".join(f" {i}:1" for i in feats) + "\n")
    print(f"{len(rows)} rows, {len(index)} features", file=sys.stderr)


if __name__ == "__main__":
    main()

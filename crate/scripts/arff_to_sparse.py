#!/usr/bin/env python3
"""Convert a MULAN-style ARFF file to the sparse multi-label text format.

The last NUM_LABELS attributes are taken as labels. String attributes (such
as identifiers) are dropped, nominal attributes become the index of their
value, and missing values become 0.
Empty label sets are rejected because the format forbids them.

    scripts/arff_to_sparse.py genbase.arff 27 > data/genbase.txt
    scripts/arff_to_sparse.py medical.arff 45 > data/medical.txt
"""

import csv
import re
import sys


def parse_attribute(line):
    m = re.match(r"@attribute\s+('(?:[^'\\]|\\.)*'|\"[^\"]*\"|\S+)\s+(.*)$", line, re.I)
    if not m:
        raise ValueError(f"bad attribute line: {line}")
    spec = m.group(2).strip()
    if spec.startswith("{"):
        values = next(csv.reader([spec.strip("{} ")], skipinitialspace=True, quotechar="'"))
        return ("nominal", [v.strip() for v in values])
    kind = spec.split()[0].lower()
    if kind in ("numeric", "real", "integer"):
        return ("numeric", None)
    if kind == "string":
        return ("string", None)
    raise ValueError(f"unsupported attribute type: {spec}")


def to_number(attr, raw):
    # Cells left out of a sparse row are zero, i.e. the first nominal value.
    if raw is None:
        return 0.0
    raw = raw.strip().strip("'\"")
    if raw == "?":
        return 0.0
    kind, values = attr
    if kind == "nominal":
        return float(values.index(raw))
    return float(raw)


def rows(lines, attrs):
    for line in lines:
        line = line.strip()
        if not line or line.startswith("%"):
            continue
        if line.startswith("{"):
            cells = {}
            for item in next(csv.reader([line.strip("{}")], skipinitialspace=True, quotechar="'")):
                if item.strip():
                    idx, val = item.strip().split(None, 1)
                    cells[int(idx)] = val
            yield [cells.get(i) for i in range(len(attrs))]
        else:
            yield next(csv.reader([line], skipinitialspace=True, quotechar="'"))


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    path, num_labels = sys.argv[1], int(sys.argv[2])
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    attrs, start = [], None
    for i, line in enumerate(lines):
        low = line.strip().lower()
        if low.startswith("@attribute"):
            attrs.append(parse_attribute(line.strip()))
        elif low.startswith("@data"):
            start = i + 1
            break
    if start is None:
        sys.exit("no @data section")
    features = [i for i, a in enumerate(attrs[:-num_labels]) if a[0] != "string"]
    label_ids = range(len(attrs) - num_labels, len(attrs))

    out = []
    for n, cells in enumerate(rows(lines[start:], attrs)):
        labels = [str(j) for j, a in enumerate(label_ids) if to_number(attrs[a], cells[a]) != 0.0]
        if not labels:
            sys.exit(f"instance {n} has no labels")
        feats = []
        for f, a in enumerate(features):
            v = to_number(attrs[a], cells[a])
            if v != 0.0:
                feats.append(f"{f}:{v!r}")
        out.append(" ".join([",".join(labels)] + feats))
    print(f"#{len(out)} {len(features)} {num_labels}")
    print("\n".join(out))


if __name__ == "__main__":
    main()

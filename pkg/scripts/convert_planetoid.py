#!/usr/bin/env python3
"""Convert a pickled Planetoid-distribution citation dataset to the CSV layout.

Input: a directory holding the eight standard files of one dataset, e.g.

    ind.cora.x  ind.cora.y  ind.cora.tx  ind.cora.ty
    ind.cora.allx  ind.cora.ally  ind.cora.graph  ind.cora.test.index

Output: ``edges.csv``, ``features.csv``, ``labels.csv``, ``split.csv`` in the
chosen output directory, reproducing the standard transductive split (the
labeled training block, the next 500 nodes for validation, and the listed
test indices). Nodes that appear only as padding inside a gapped test-index
range (isolated nodes in the citeseer distribution) get the -1 label and no
split assignment.

Usage:
    python scripts/convert_planetoid.py --raw /path/to/planetoid/data \
        --name cora --out datasets/cora

The raw files are available offline from the Planetoid distribution that
ships with the reference graph-convolution codebase; no network access is
needed here.
"""

import argparse
import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp


def _load_pickle(path):
    with open(path, "rb") as f:
        return pickle.load(f, encoding="latin1")


def load_planetoid(raw_dir: str, name: str):
    """Assemble (features, onehot_labels, graph_dict, train/val/test indices)."""
    parts = {}
    for suffix in ("x", "y", "tx", "ty", "allx", "ally", "graph"):
        parts[suffix] = _load_pickle(os.path.join(raw_dir, f"ind.{name}.{suffix}"))
    with open(os.path.join(raw_dir, f"ind.{name}.test.index")) as f:
        test_idx_reorder = np.array([int(line.strip()) for line in f if line.strip()])
    test_idx_range = np.sort(test_idx_reorder)

    x, y = parts["x"], parts["y"]
    tx, ty = parts["tx"], parts["ty"]
    allx, ally = parts["allx"], parts["ally"]
    graph = parts["graph"]

    span = int(test_idx_range.max()) - int(test_idx_range.min()) + 1
    if span > len(test_idx_reorder):
        # Gapped test range: pad missing (isolated) nodes with zero rows.
        offset = int(test_idx_range.min())
        tx_extended = sp.lil_matrix((span, x.shape[1]), dtype=np.float64)
        tx_extended[test_idx_range - offset, :] = tx
        tx = tx_extended.tocsr()
        ty_extended = np.zeros((span, y.shape[1]), dtype=ty.dtype)
        ty_extended[test_idx_range - offset, :] = ty
        ty = ty_extended

    features = sp.vstack((allx, tx)).tolil()
    features[test_idx_reorder, :] = features[test_idx_range, :]
    features = np.asarray(features.todense(), dtype=np.float64)

    onehot = np.vstack((ally, ty))
    onehot[test_idx_reorder, :] = onehot[test_idx_range, :]

    idx_train = np.arange(len(y))
    idx_val = np.arange(len(y), len(y) + 500)
    idx_test = test_idx_range

    return features, onehot, graph, idx_train, idx_val, idx_test


def write_csv_dataset(out_dir, features, onehot, graph, idx_train, idx_val, idx_test):
    os.makedirs(out_dir, exist_ok=True)
    n = features.shape[0]

    labels = np.where(onehot.sum(axis=1) > 0, np.argmax(onehot, axis=1), -1)

    split = np.full(n, "none", dtype=object)
    split[idx_train] = "train"
    split[np.asarray(idx_val)[np.asarray(idx_val) < n]] = "val"
    split[idx_test] = "test"
    split[labels < 0] = "none"  # padded isolated nodes never enter a split

    pairs = set()
    for i, neighbors in graph.items():
        for j in neighbors:
            if i != j and 0 <= i < n and 0 <= j < n:
                pairs.add((min(i, j), max(i, j)))

    with open(os.path.join(out_dir, "edges.csv"), "w", newline="\n") as f:
        for i, j in sorted(pairs):
            f.write(f"{i},{j}\n")
    with open(os.path.join(out_dir, "features.csv"), "w", newline="\n") as f:
        for row in features:
            f.write(",".join(f"{v:.17g}" for v in row))
            f.write("\n")
    with open(os.path.join(out_dir, "labels.csv"), "w", newline="\n") as f:
        for v in labels:
            f.write(f"{int(v)}\n")
    with open(os.path.join(out_dir, "split.csv"), "w", newline="\n") as f:
        for token in split:
            f.write(f"{token}\n")
    return n, len(pairs), int(labels.max()) + 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--raw", required=True, help="directory with ind.<name>.* files")
    parser.add_argument("--name", required=True, choices=("cora", "citeseer", "pubmed"))
    parser.add_argument("--out", required=True, help="output dataset directory")
    args = parser.parse_args(argv)

    loaded = load_planetoid(args.raw, args.name)
    n, edges, k = write_csv_dataset(args.out, *loaded)
    print(f"wrote {args.out}: n={n} undirected_edges={edges} classes={k}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

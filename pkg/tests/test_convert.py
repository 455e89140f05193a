"""The offline conversion script, exercised on tiny synthetic raw fixtures.

The fixtures replicate the pickled citation-distribution layout: sparse
feature blocks for labeled/unlabeled/test nodes, one-hot label blocks, a
neighbor-list dict, and a shuffled test-index file (with and without gaps).
Feature rows carry the node id so the stack-then-permute assembly is checked
entry by entry.
"""

import os
import pickle
import sys

import numpy as np
import pytest
import scipy.sparse as sp

from gcnjem.data import load_dataset

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "scripts"))
import convert_planetoid  # noqa: E402


def _dump(path, obj):
    with open(path, "wb") as f:
        pickle.dump(obj, f)


def write_raw_fixture(raw_dir, gapped: bool):
    """Nine nodes, two classes; node i's feature row starts with i + 1."""
    os.makedirs(raw_dir, exist_ok=True)

    def feat(ids):
        rows = np.zeros((len(ids), 3))
        rows[:, 0] = [i + 1 for i in ids]
        return sp.csr_matrix(rows)

    def onehot(classes):
        return np.eye(2, dtype=np.int32)[classes]

    all_ids = list(range(6))
    all_classes = [0, 1, 0, 1, 0, 1]
    if gapped:
        test_order = [8, 6]     # node 7 exists only as a gap in the range
        test_classes = [0, 1]
    else:
        test_order = [7, 8, 6]
        test_classes = [1, 0, 1]

    graph = {0: [1, 2], 1: [0], 2: [0, 3], 3: [2], 4: [5],
             5: [4, 6], 6: [5], 7: [8], 8: [7]}

    name = "toy"
    _dump(os.path.join(raw_dir, f"ind.{name}.x"), feat(all_ids[:2]))
    _dump(os.path.join(raw_dir, f"ind.{name}.y"), onehot(all_classes[:2]))
    _dump(os.path.join(raw_dir, f"ind.{name}.allx"), feat(all_ids))
    _dump(os.path.join(raw_dir, f"ind.{name}.ally"), onehot(all_classes))
    _dump(os.path.join(raw_dir, f"ind.{name}.tx"), feat(test_order))
    _dump(os.path.join(raw_dir, f"ind.{name}.ty"), onehot(test_classes))
    _dump(os.path.join(raw_dir, f"ind.{name}.graph"), graph)
    with open(os.path.join(raw_dir, f"ind.{name}.test.index"), "w") as f:
        for i in test_order:
            f.write(f"{i}\n")
    return name


class TestConversion:
    def test_contiguous_test_range(self, tmp_path):
        raw = tmp_path / "raw"
        out = tmp_path / "out"
        name = write_raw_fixture(raw, gapped=False)
        loaded = convert_planetoid.load_planetoid(str(raw), name)
        convert_planetoid.write_csv_dataset(str(out), *loaded)

        ds = load_dataset(out)
        assert ds.n == 9 and ds.num_classes == 2
        # the stack-then-permute assembly must place node i's row at i
        np.testing.assert_array_equal(ds.features[:, 0], np.arange(1.0, 10.0))
        np.testing.assert_array_equal(
            ds.labels, [0, 1, 0, 1, 0, 1, 1, 1, 0])
        assert set(np.nonzero(ds.train_mask)[0]) == {0, 1}
        assert set(np.nonzero(ds.val_mask)[0]) == {2, 3, 4, 5}
        assert set(np.nonzero(ds.test_mask)[0]) == {6, 7, 8}
        assert ds.adjacency.edge_set() == {(0, 1), (0, 2), (2, 3), (4, 5),
                                           (5, 6), (7, 8)}

    def test_gapped_test_range(self, tmp_path):
        raw = tmp_path / "raw"
        out = tmp_path / "out"
        name = write_raw_fixture(raw, gapped=True)
        loaded = convert_planetoid.load_planetoid(str(raw), name)
        convert_planetoid.write_csv_dataset(str(out), *loaded)

        ds = load_dataset(out)
        assert ds.n == 9
        np.testing.assert_array_equal(ds.features[6, 0], 7.0)
        np.testing.assert_array_equal(ds.features[8, 0], 9.0)
        # the padded node has no features, no label, and no split
        assert ds.features[7].sum() == 0.0
        assert ds.labels[7] == -1
        assert not ds.train_mask[7] and not ds.val_mask[7] and not ds.test_mask[7]
        assert set(np.nonzero(ds.test_mask)[0]) == {6, 8}
        assert ds.labels[6] == 1 and ds.labels[8] == 0

    def test_cli_rejects_unknown_name(self, tmp_path):
        raw = tmp_path / "raw"
        write_raw_fixture(raw, gapped=False)
        with pytest.raises(SystemExit):
            convert_planetoid.main(["--raw", str(raw), "--name", "toy",
                                    "--out", str(tmp_path / "out")])

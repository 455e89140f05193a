import os

import numpy as np
import pytest

from gcnjem import model as md
from gcnjem.cli import main
from gcnjem.data import SbmSpec, generate_sbm, save_checkpoint, save_dataset
from gcnjem.graph import SparseAdjacency


@pytest.fixture
def toy_dir(tmp_path):
    ds = generate_sbm(SbmSpec(blocks=((15, 0), (15, 1)), p_in=0.3, p_out=0.05,
                              feature_dim=6, seed=3))
    path = tmp_path / "toy"
    save_dataset(ds, path)
    return str(path)


def k3_dataset_dir(tmp_path):
    adjacency = SparseAdjacency.from_edges(3, [(0, 1), (0, 2), (1, 2)])
    from gcnjem.data import Dataset
    ds = Dataset(adjacency=adjacency, features=np.eye(3), labels=np.array([0, 1, 0]),
                 train_mask=np.array([True, True, False]),
                 val_mask=np.array([False, False, False]),
                 test_mask=np.array([False, False, True]), num_classes=2)
    path = tmp_path / "k3"
    save_dataset(ds, path)
    return str(path)


FAST = ["--set", "epochs=3", "--set", "batch_size=4", "--set", "steps=2",
        "--set", "hidden_dim=6"]


class TestTrainCommand:
    def test_deterministic_epoch_logs(self, toy_dir, tmp_path, capsys):
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run
            code = main(["train", "--dataset", toy_dir, "--out", str(out),
                         "--seed", "7", *FAST])
            assert code == 0
            outs.append((out / "epoch_log.csv").read_bytes())
        assert outs[0] == outs[1]
        printed = capsys.readouterr().out
        assert "test_accuracy" in printed

    def test_gcn_mode(self, toy_dir, tmp_path):
        out = tmp_path / "gcn"
        code = main(["train", "--dataset", toy_dir, "--out", str(out),
                     "--mode", "gcn", "--seed", "1", *FAST])
        assert code == 0
        header, first = (out / "epoch_log.csv").read_text().strip().split("\n")[:2]
        assert header.startswith("epoch,l_clf,l_gen")
        fields = first.split(",")
        assert float(fields[2]) == 0.0  # no generative loss
        assert os.path.isfile(out / "params.bin")
        assert os.path.isfile(out / "adjacency.csv")
        assert os.path.isfile(out / "generated_features.csv")

    def test_repeats_write_per_seed_dirs(self, toy_dir, tmp_path, capsys):
        out = tmp_path / "multi"
        code = main(["train", "--dataset", toy_dir, "--out", str(out),
                     "--seed", "3", "--repeats", "2", *FAST])
        assert code == 0
        assert os.path.isdir(out / "seed3") and os.path.isdir(out / "seed4")
        printed = capsys.readouterr().out
        assert "mean_test_accuracy" in printed

    def test_config_file(self, toy_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs=2\nbatch_size=4\nsteps=2\nhidden_dim=6\n")
        out = tmp_path / "cfgrun"
        code = main(["train", "--dataset", toy_dir, "--out", str(out),
                     "--config", str(cfg), "--seed", "5"])
        assert code == 0
        lines = (out / "epoch_log.csv").read_text().strip().split("\n")
        assert len(lines) == 3  # header + 2 epochs


class TestEvalAndCalibration:
    def _train(self, toy_dir, out):
        assert main(["train", "--dataset", toy_dir, "--out", str(out),
                     "--seed", "2", *FAST]) == 0

    def test_eval(self, toy_dir, tmp_path, capsys):
        out = tmp_path / "run"
        self._train(toy_dir, out)
        capsys.readouterr()
        assert main(["eval", "--dataset", toy_dir, "--out", str(out),
                     "--split", "val"]) == 0
        assert capsys.readouterr().out.startswith("accuracy,val,")

    def test_calibration_and_bucket_override(self, toy_dir, tmp_path, capsys):
        out = tmp_path / "run"
        self._train(toy_dir, out)
        capsys.readouterr()
        assert main(["calibration", "--dataset", toy_dir, "--out", str(out),
                     "--split", "test", "--buckets", "7"]) == 0
        assert capsys.readouterr().out.startswith("ece,test,")
        lines = (out / "calibration_test.csv").read_text().strip().split("\n")
        assert len(lines) == 1 + 7 + 1  # header, buckets, trailing ece

    def test_perfect_fixture_checkpoint(self, tmp_path, capsys):
        # A hand-built checkpoint whose confidences are exactly calibrated.
        ds = generate_sbm(SbmSpec(blocks=((3, 0), (3, 1)), p_in=1.0, p_out=0.0,
                                  feature_dim=4, seed=0))
        ds_dir = tmp_path / "sep"
        save_dataset(ds, ds_dir)
        # Zero weights give uniform confidence 1/2 on a 2-class problem;
        # the dataset is half class 0, half class 1, and argmax ties break
        # to class 0, so accuracy over all nodes is exactly 1/2 too.
        params = md.GcnParams(w0=np.zeros((4, 6)), w1=np.zeros((6, 2)))
        out = tmp_path / "ck"
        save_checkpoint(params, ds.adjacency, out)
        test_labels = ds.labels[ds.test_mask]
        if (test_labels == 0).sum() * 2 != len(test_labels):
            pytest.skip("seeded split is not label-balanced on test")
        assert main(["calibration", "--dataset", str(ds_dir), "--out", str(out),
                     "--split", "test", "--buckets", "10"]) == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert float(lines[0].split(",")[2]) == 0.0
        assert any(ln.startswith("ece_sensitivity") for ln in lines[1:])

    def test_missing_checkpoint_exit_3(self, toy_dir, tmp_path):
        assert main(["eval", "--dataset", toy_dir,
                     "--out", str(tmp_path / "nowhere")]) == 3


class TestAnalysis:
    def test_k3_closed_paths(self, tmp_path, capsys):
        ds_dir = k3_dataset_dir(tmp_path)
        out = tmp_path / "an"
        assert main(["analyze-adjacency", "--dataset", ds_dir,
                     "--out", str(out)]) == 0
        printed = capsys.readouterr().out.strip().split("\n")
        by_length = {int(ln.split(",")[1]): ln.split(",")[2:] for ln in printed}
        assert float(by_length[3][0]) == pytest.approx(6.0, abs=1e-9)
        assert float(by_length[3][2]) == 0.0  # before == after without artifacts
        assert os.path.isfile(out / "adjacency_spectrum_before.csv")
        assert os.path.isfile(out / "adjacency_spectrum_compare.csv")

    def test_adjacency_after_artifact(self, toy_dir, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["train", "--dataset", toy_dir, "--out", str(out), "--seed", "2",
                     "--set", "energy_threshold=1000", "--set", "edge_update_interval=2",
                     *FAST]) == 0
        capsys.readouterr()
        assert main(["analyze-adjacency", "--dataset", toy_dir,
                     "--out", str(out)]) == 0
        printed = capsys.readouterr().out.strip().split("\n")
        deltas = {int(ln.split(",")[1]): float(ln.split(",")[4]) for ln in printed
                  if ln.startswith("closed_paths")}
        assert deltas[2] > 0  # edges were added, so 2-walks increased

    def test_features_before_equals_after(self, toy_dir, tmp_path, capsys):
        out = tmp_path / "an2"
        assert main(["analyze-features", "--dataset", toy_dir,
                     "--out", str(out)]) == 0
        printed = capsys.readouterr().out.strip().split("\n")
        assert all(float(ln.split(",")[4]) == 0.0 for ln in printed)


class TestSynthAndErrors:
    def test_synth_roundtrip(self, tmp_path, capsys):
        out = tmp_path / "synthds"
        assert main(["synth", "--out", str(out), "--num-blocks", "2",
                     "--block-size", "10", "--p-in", "0.4", "--p-out", "0.05",
                     "--feature-dim", "5", "--seed", "1"]) == 0
        from gcnjem.data import load_dataset
        ds = load_dataset(out)
        assert ds.n == 20 and ds.num_classes == 2
        assert capsys.readouterr().out.startswith("synth,nodes=20")

    def test_bad_config_key_exit_2(self, toy_dir, tmp_path):
        assert main(["train", "--dataset", toy_dir, "--out", str(tmp_path / "x"),
                     "--set", "bogus=1"]) == 2

    def test_bad_config_value_exit_2(self, toy_dir, tmp_path):
        assert main(["train", "--dataset", toy_dir, "--out", str(tmp_path / "x"),
                     "--set", "learning_rate=0"]) == 2

    def test_missing_dataset_exit_3(self, tmp_path):
        assert main(["train", "--dataset", str(tmp_path / "absent"),
                     "--out", str(tmp_path / "x")]) == 3

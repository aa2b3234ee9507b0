"""Tests for the probability exporter.

Real benchmark archives and release checkpoints are multi-megabyte
downloads, so these tests build structurally identical miniature npz files
and randomly initialized checkpoints. Split-size validation is exercised
both ways: against a shrunken registry entry for success paths and against
the real registry for the mismatch error.
"""

import logging
import subprocess
import sys

import numpy as np
import pytest
import torch

from medexport.datasets import (
    DatasetInfo,
    ExportError,
    REGISTRY,
    dataset_info,
    load_split,
    normalize_split,
)
from medexport.export import ExportSpec, export_probabilities, sha256_of
from medexport.resnet import build_model, load_checkpoint, resnet18_28

SMALL_DERMA = DatasetInfo("derma", "dermamnist.npz", 7, 3, n_val=12, n_test=20)


def make_npz(path, info, n_val, n_test, seed=0):
    rng = np.random.default_rng(seed)
    shape = (28, 28) if info.channels == 1 else (28, 28, info.channels)
    np.savez(
        path,
        val_images=rng.integers(0, 256, size=(n_val, *shape), dtype=np.uint8),
        val_labels=rng.integers(0, info.n_classes, size=(n_val, 1)),
        test_images=rng.integers(0, 256, size=(n_test, *shape), dtype=np.uint8),
        test_labels=rng.integers(0, info.n_classes, size=(n_test, 1)),
    )
    return path


def make_checkpoint(path, info, seed=0, wrapper="net", prefix=""):
    torch.manual_seed(seed)
    model = resnet18_28(info.channels, info.n_classes)
    state = {prefix + k: v for k, v in model.state_dict().items()}
    torch.save({wrapper: state} if wrapper else state, path)
    return path


@pytest.fixture()
def small_derma(monkeypatch, tmp_path):
    monkeypatch.setitem(REGISTRY, "derma", SMALL_DERMA)
    npz = make_npz(tmp_path / "dermamnist.npz", SMALL_DERMA, 12, 20)
    ckpt = make_checkpoint(tmp_path / "resnet18.pth", SMALL_DERMA)
    return tmp_path, npz, ckpt


def spec_for(tmp_path, npz, ckpt, **overrides):
    base = dict(
        dataset="derma", split="val", weights=ckpt, data=npz,
        out_dir=tmp_path / "out",
    )
    base.update(overrides)
    return ExportSpec(**base)


class TestRegistry:
    def test_known_datasets_and_shapes(self):
        assert dataset_info("derma").n_classes == 7
        assert dataset_info("derma").n_val == 1003
        assert dataset_info("blood") == REGISTRY["blood"]
        assert dataset_info("organa").n_test == 17778
        with pytest.raises(ExportError, match="unknown dataset"):
            dataset_info("mnist")

    def test_split_aliases(self):
        assert normalize_split("validation") == "val"
        assert normalize_split("VAL") == "val"
        assert normalize_split("test") == "test"
        with pytest.raises(ExportError):
            normalize_split("train")


class TestLoadSplit:
    def test_row_count_mismatch_vs_official_sizes(self, tmp_path):
        info = dataset_info("derma")  # real registry: expects 1003 val rows
        npz = make_npz(tmp_path / "d.npz", info, n_val=10, n_test=20)
        with pytest.raises(ExportError, match="expected 1003"):
            load_split(npz, info, "val")

    def test_channel_mismatch(self, tmp_path, monkeypatch):
        monkeypatch.setitem(REGISTRY, "derma", SMALL_DERMA)
        gray = DatasetInfo("derma", "dermamnist.npz", 7, 1, 12, 20)
        npz = make_npz(tmp_path / "d.npz", gray, 12, 20)
        with pytest.raises(ExportError, match="channel"):
            load_split(npz, SMALL_DERMA, "val")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ExportError, match="not found"):
            load_split(tmp_path / "absent.npz", dataset_info("derma"), "val")

    def test_missing_arrays(self, tmp_path):
        path = tmp_path / "d.npz"
        np.savez(path, something=np.zeros(3))
        with pytest.raises(ExportError, match="missing arrays"):
            load_split(path, dataset_info("derma"), "val")


class TestCheckpoint:
    @pytest.mark.parametrize("wrapper,prefix", [
        ("net", ""), ("", ""), ("model", "module."), ("state_dict", ""),
    ])
    def test_accepted_layouts(self, tmp_path, wrapper, prefix):
        ckpt = make_checkpoint(tmp_path / "w.pth", SMALL_DERMA,
                               wrapper=wrapper, prefix=prefix)
        model = build_model(28, 3, 7)
        load_checkpoint(model, ckpt)

    def test_wrong_shape_is_fatal(self, tmp_path):
        five_classes = DatasetInfo("derma", "x", 5, 3, 1, 1)
        ckpt = make_checkpoint(tmp_path / "w.pth", five_classes)
        model = build_model(28, 3, 7)
        with pytest.raises(ExportError, match="does not fit"):
            load_checkpoint(model, ckpt)

    def test_missing_weights(self, tmp_path):
        with pytest.raises(ExportError, match="not found"):
            load_checkpoint(build_model(28, 3, 7), tmp_path / "absent.pth")

    def test_garbage_file(self, tmp_path):
        path = tmp_path / "w.pth"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ExportError, match="cannot read"):
            load_checkpoint(build_model(28, 3, 7), path)


class TestExport:
    def test_export_writes_valid_probability_file(self, small_derma, caplog):
        tmp_path, npz, ckpt = small_derma
        with caplog.at_level(logging.INFO):
            out = export_probabilities(spec_for(tmp_path, npz, ckpt))
        assert out.name == "derma_val.csv"
        lines = out.read_text().splitlines()
        assert lines[0] == "7,12"
        assert len(lines) == 13
        for line in lines[1:]:
            fields = line.split(",")
            assert len(fields) == 8
            row = np.array([float(v) for v in fields[:7]])
            assert abs(row.sum() - 1.0) < 1e-6
            assert (row >= 0).all()
            assert 1 <= int(fields[7]) <= 7
        assert "top-1 accuracy" in caplog.text

    def test_sidecar_records_digest_and_checkpoint(self, small_derma):
        tmp_path, npz, ckpt = small_derma
        out = export_probabilities(spec_for(tmp_path, npz, ckpt))
        sidecar = out.with_name(out.name + ".sha256")
        content = sidecar.read_text().splitlines()
        assert content[0].split()[0] == sha256_of(out)
        assert ckpt.name in content[1]
        assert sha256_of(ckpt) in content[1]

    def test_deterministic(self, small_derma):
        tmp_path, npz, ckpt = small_derma
        a = export_probabilities(spec_for(tmp_path, npz, ckpt)).read_bytes()
        b = export_probabilities(spec_for(tmp_path, npz, ckpt)).read_bytes()
        assert a == b

    def test_test_split_and_batching(self, small_derma):
        # conv kernels reduce in a batch-size-dependent order, so across
        # batch sizes rows agree numerically rather than byte-for-byte
        tmp_path, npz, ckpt = small_derma
        big = export_probabilities(
            spec_for(tmp_path, npz, ckpt, split="test", batch_size=256)
        )
        small = export_probabilities(
            spec_for(tmp_path, npz, ckpt, split="test",
                     out_dir=tmp_path / "out2", batch_size=3)
        )
        parse = lambda p: np.array(
            [[float(v) for v in line.split(",")[:7]]
             for line in p.read_text().splitlines()[1:]]
        )
        assert np.allclose(parse(big), parse(small), atol=1e-5)
        assert len(big.read_text().splitlines()) == 21

    def test_weights_checksum_mismatch(self, small_derma):
        tmp_path, npz, ckpt = small_derma
        with pytest.raises(ExportError, match="sha256 mismatch"):
            export_probabilities(
                spec_for(tmp_path, npz, ckpt, weights_sha256="0" * 64)
            )

    def test_weights_checksum_match(self, small_derma):
        tmp_path, npz, ckpt = small_derma
        out = export_probabilities(
            spec_for(tmp_path, npz, ckpt, weights_sha256=sha256_of(ckpt))
        )
        assert out.exists()

    def test_input_size_224_variant(self, small_derma):
        tmp_path, npz, _ = small_derma
        torch.manual_seed(1)
        from medexport.resnet import resnet18_224

        model = resnet18_224(3, 7)
        ckpt224 = tmp_path / "r224.pth"
        torch.save(model.state_dict(), ckpt224)
        out = export_probabilities(
            spec_for(tmp_path, npz, ckpt224, input_size=224, batch_size=8)
        )
        assert len(out.read_text().splitlines()) == 13


class TestCli:
    def test_cli_export_and_error_paths(self, small_derma, capsys):
        from medexport.cli import main

        tmp_path, npz, ckpt = small_derma
        code = main([
            "export", "--dataset", "derma", "--split", "val",
            "--weights", str(ckpt), "--data", str(npz),
            "--out", str(tmp_path / "cli_out"),
        ])
        assert code == 0
        assert (tmp_path / "cli_out" / "derma_val.csv").exists()
        code = main([
            "export", "--dataset", "derma", "--split", "val",
            "--weights", str(tmp_path / "absent.pth"), "--data", str(npz),
            "--out", str(tmp_path / "cli_out"),
        ])
        assert code == 2
        assert "error" in capsys.readouterr().err


class TestPrimaryIntegration:
    def test_exports_feed_the_conformal_benchmark(self, small_derma):
        # the exported files must be consumable through the toolkit's
        # public surface: its file format and CLI, nothing internal
        tmp_path, npz, ckpt = small_derma
        export_probabilities(spec_for(tmp_path, npz, ckpt, split="val"))
        export_probabilities(spec_for(tmp_path, npz, ckpt, split="test"))
        out_dir = tmp_path / "out"
        result = subprocess.run(
            [
                sys.executable, "-m", "rrcp.cli", "benchmark",
                "--alpha", "0.25", "--B", "50",
                "--cali", str(out_dir / "derma_val.csv"),
                "--test", str(out_dir / "derma_test.csv"),
                "--format", "structured",
                "--out", str(tmp_path / "bench.json"),
            ],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0, result.stderr
        assert "verified checksum" in result.stdout
        assert (tmp_path / "bench.json").exists()

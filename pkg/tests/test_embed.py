import os
import stat
import sys
import textwrap

import numpy as np
import pytest

from callfinder.embed import (
    EmbeddingVector,
    baseline_embed,
    external_embed,
    fit_pca,
    format_embedding_line,
    parse_embeddings_text,
    project,
    project_raw,
    read_embeddings_file,
    write_embeddings_file,
    write_manifest,
)
from callfinder.errors import BridgeError, ParameterError
from callfinder.preprocess import MelSpectrogram


def grid(values):
    freq = np.linspace(50.0, 11000.0, 227)
    times = np.linspace(0.0, 2.0, 227)
    return MelSpectrogram(values, freq, times)


def vectors_from(X, provider="p"):
    return [EmbeddingVector(row, provider, f"seg-{i}") for i, row in enumerate(X)]


class TestBaselineEmbed:
    def test_constant_grid_gives_zero_vector(self):
        vec = baseline_embed(grid(np.full((227, 227), -17.5)))
        assert vec.values.shape == (256,)
        assert np.allclose(vec.values, 0.0)

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        values = rng.normal(-20, 5, (227, 227))
        a = baseline_embed(grid(values))
        b = baseline_embed(grid(values.copy()))
        assert np.array_equal(a.values, b.values)

    def test_top_left_energy_maps_to_first_coordinate(self):
        values = np.full((227, 227), -40.0)
        values[:14, :14] = 0.0
        vec = baseline_embed(grid(values))
        assert int(np.argmax(vec.values)) == 0

    def test_standardized(self):
        rng = np.random.default_rng(2)
        vec = baseline_embed(grid(rng.normal(-20, 5, (227, 227))))
        assert vec.values.mean() == pytest.approx(0.0, abs=1e-12)
        assert vec.values.std() == pytest.approx(1.0, rel=1e-12)

    def test_wrong_shape_rejected(self):
        freq = np.linspace(0, 11000, 100)
        times = np.linspace(0, 2, 100)
        with pytest.raises(ParameterError):
            baseline_embed(MelSpectrogram(np.zeros((100, 100)), freq, times))


class TestExchangeFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        vecs = vectors_from(rng.normal(size=(4, 7)))
        path = tmp_path / "emb.tsv"
        write_embeddings_file(vecs, path)
        back = read_embeddings_file(path, "p")
        assert [v.segment_ref for v in back] == [v.segment_ref for v in vecs]
        for a, b in zip(vecs, back):
            assert np.allclose(a.values, b.values, rtol=1e-8)

    def test_line_format(self):
        line = format_embedding_line("seg-1", np.array([0.5, -1.25]))
        assert line == "seg-1\t2\t0.5,-1.25"

    def test_nine_significant_digits(self):
        line = format_embedding_line("s", np.array([1.0 / 3.0]))
        assert line.split("\t")[2] == "0.333333333"

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(BridgeError):
            parse_embeddings_text("a\t3\t1.0,2.0\n", "p")

    def test_dimension_drift_rejected(self):
        text = "a\t2\t1.0,2.0\nb\t3\t1.0,2.0,3.0\n"
        with pytest.raises(BridgeError, match="drift"):
            parse_embeddings_text(text, "p")

    def test_duplicate_segment_rejected(self):
        text = "a\t1\t1.0\na\t1\t2.0\n"
        with pytest.raises(BridgeError, match="duplicate"):
            parse_embeddings_text(text, "p")

    def test_malformed_line_rejected(self):
        with pytest.raises(BridgeError):
            parse_embeddings_text("nonsense line\n", "p")

    def test_manifest_layout(self, tmp_path):
        path = tmp_path / "manifest.tsv"
        write_manifest([("s1", "/a/b.wav"), ("s2", "/c/d.wav")], path)
        lines = path.read_text().splitlines()
        assert lines[0] == "s1\t/a/b.wav"
        assert lines[1] == "s2\t/c/d.wav"


def fake_bridge(tmp_path, body):
    """Write an executable stand-in bridge script and return its command."""
    script = tmp_path / "fake_bridge.py"
    script.write_text(textwrap.dedent(body))
    return [sys.executable, str(script)]


ECHO_BRIDGE = """
    import argparse, hashlib
    p = argparse.ArgumentParser()
    p.add_argument("--manifest"); p.add_argument("--out"); p.add_argument("--model")
    a = p.parse_args()
    lines = open(a.manifest).read().splitlines()
    with open(a.out, "w") as out:
        for line in lines:
            seg, _ = line.split("\\t")
            h = int(hashlib.sha256(seg.encode()).hexdigest()[:8], 16)
            vals = ",".join(f"{(h % (i + 7)) / 7:.9g}" for i in range(4))
            out.write(f"{seg}\\t4\\t{vals}\\n")
"""


class TestExternalEmbed:
    def test_empty_manifest_empty_result(self, tmp_path):
        cmd = fake_bridge(tmp_path, ECHO_BRIDGE)
        assert external_embed([], "m", cmd) == []

    def test_bijection(self, tmp_path):
        cmd = fake_bridge(tmp_path, ECHO_BRIDGE)
        entries = [(f"seg-{i}", f"/tmp/s{i}.wav") for i in range(3)]
        vecs = external_embed(entries, "m", cmd)
        assert [v.segment_ref for v in vecs] == [e[0] for e in entries]
        assert all(v.values.shape == (4,) for v in vecs)

    def test_incomplete_response_names_missing_segment(self, tmp_path):
        body = ECHO_BRIDGE.replace("for line in lines:", "for line in lines[:-1]:")
        cmd = fake_bridge(tmp_path, body)
        entries = [(f"seg-{i}", f"/tmp/s{i}.wav") for i in range(3)]
        with pytest.raises(BridgeError, match="seg-2"):
            external_embed(entries, "m", cmd)

    def test_nonzero_exit_reported(self, tmp_path):
        cmd = fake_bridge(tmp_path, "import sys; sys.exit(3)")
        with pytest.raises(BridgeError, match="status 3"):
            external_embed([("s", "/tmp/s.wav")], "m", cmd)

    def test_missing_bridge_binary(self):
        with pytest.raises(BridgeError):
            external_embed([("s", "/tmp/s.wav")], "m", ["/no/such/bridge"])

    def test_no_bridge_command(self):
        with pytest.raises(BridgeError):
            external_embed([("s", "/tmp/s.wav")], "m", [])


class TestFitPca:
    def test_rank_two_plane_in_ten_dims(self):
        rng = np.random.default_rng(5)
        basis = np.linalg.qr(rng.normal(size=(10, 2)))[0].T
        X = rng.normal(size=(30, 2)) @ basis + rng.normal(size=10)
        pca = fit_pca(vectors_from(X), variance_target=0.95)
        assert pca.n_components == 2
        assert pca.explained_variance_ratio.sum() == pytest.approx(1.0, abs=1e-9)

    def test_isotropic_gaussian_needs_all_components(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(5000, 3))
        pca = fit_pca(vectors_from(X), variance_target=0.95)
        assert pca.n_components == 3
        # Oracle: eigenvalues of the sample covariance.
        cov = np.cov(X, rowvar=False)
        eig = np.sort(np.linalg.eigvalsh(cov))[::-1]
        assert np.allclose(
            pca.explained_variance_ratio, eig / eig.sum(), rtol=1e-9
        )

    def test_duplicated_dataset_same_components(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(20, 6)) * np.array([5, 3, 2, 1, 0.5, 0.1])
        a = fit_pca(vectors_from(X), 0.95)
        b = fit_pca(vectors_from(np.vstack([X, X])), 0.95)
        assert a.n_components == b.n_components
        for ca, cb in zip(a.components, b.components):
            # Sign canonicalization makes them equal, not just up-to-sign.
            assert np.allclose(ca, cb, atol=1e-9)

    def test_components_orthonormal(self):
        rng = np.random.default_rng(11)
        pca = fit_pca(vectors_from(rng.normal(size=(40, 12))), 0.95)
        gram = pca.components @ pca.components.T
        assert np.allclose(gram, np.eye(pca.n_components), atol=1e-6)

    def test_sign_canonicalized(self):
        rng = np.random.default_rng(13)
        pca = fit_pca(vectors_from(rng.normal(size=(25, 8))), 0.99)
        for row in pca.components:
            assert row[np.argmax(np.abs(row))] > 0

    def test_minimum_count_for_target(self):
        rng = np.random.default_rng(15)
        X = rng.normal(size=(200, 5)) * np.array([10, 1, 1, 1, 1])
        pca = fit_pca(vectors_from(X), variance_target=0.5)
        assert pca.n_components == 1

    def test_few_shot_cap(self):
        rng = np.random.default_rng(17)
        X = rng.normal(size=(4, 64))
        pca = fit_pca(vectors_from(X), variance_target=1.0)
        assert pca.n_components == 3

    def test_too_few_samples(self):
        with pytest.raises(ParameterError):
            fit_pca(vectors_from(np.ones((1, 4))))

    def test_zero_variance(self):
        with pytest.raises(ParameterError):
            fit_pca(vectors_from(np.ones((5, 4))))

    def test_mixed_dimensions(self):
        vecs = [
            EmbeddingVector(np.ones(3), "p", "a"),
            EmbeddingVector(np.ones(4), "p", "b"),
        ]
        with pytest.raises(ParameterError):
            fit_pca(vecs)


class TestProject:
    def fitted(self):
        rng = np.random.default_rng(19)
        X = rng.normal(size=(30, 10)) * np.linspace(5, 0.1, 10)
        return fit_pca(vectors_from(X), 0.99), X

    def test_basis_alignment(self):
        pca, _ = self.fitted()
        v = EmbeddingVector(pca.mean + pca.components[0], "p", "x")
        out = project(pca, v)
        expected = np.zeros(pca.n_components)
        expected[0] = 1.0
        assert np.allclose(out.values, expected, atol=1e-9)

    def test_unit_norm(self):
        pca, X = self.fitted()
        for row in X[:5]:
            out = project(pca, EmbeddingVector(row, "p", "x"))
            assert np.linalg.norm(out.values) == pytest.approx(1.0, abs=1e-6)

    def test_mean_is_degenerate(self):
        pca, _ = self.fitted()
        with pytest.raises(ParameterError, match="degenerate"):
            project(pca, EmbeddingVector(pca.mean.copy(), "p", "x"))

    def test_dimension_mismatch(self):
        pca, _ = self.fitted()
        with pytest.raises(ParameterError):
            project(pca, EmbeddingVector(np.ones(3), "p", "x"))

    def test_rank_k_reconstruction(self):
        rng = np.random.default_rng(21)
        basis = np.linalg.qr(rng.normal(size=(12, 4)))[0].T
        X = rng.normal(size=(25, 4)) @ basis + 3.0
        pca = fit_pca(vectors_from(X), 0.999)
        assert pca.n_components == 4
        for row in X[:6]:
            raw = project_raw(pca, row)
            recon = pca.components.T @ raw
            centered = row - pca.mean
            assert np.allclose(recon, centered, atol=1e-6 * np.linalg.norm(centered) + 1e-12)

import struct
import zlib

import numpy as np
import pytest

from oracles import standard_tableaux_count
from schur_shadows.basis import (
    BasisCacheError,
    SchurBasis,
    build_q_bases,
    change_of_basis,
    load_basis,
    save_basis,
    schur_block_probabilities,
    schur_projective_measure,
    verify_nice_basis,
)
from schur_shadows.qudit import (
    PureState,
    RngStream,
    apply_local_unitary,
    encode_basis,
    haar_unitary,
)
from schur_shadows.young import Partition, partitions_of
from test_young import dense_symmetrizer


class TestQBases:
    def test_symmetric_block_d2_n2(self):
        weights, vectors = build_q_bases(2, 2)[Partition((2,))]
        assert weights == [(2, 0), (1, 1), (0, 2)]
        dense = [v.to_dense(4) for v in vectors]
        assert np.allclose(dense[0], [1, 0, 0, 0])
        assert np.allclose(dense[1], [0, 1 / np.sqrt(2), 1 / np.sqrt(2), 0])
        assert np.allclose(dense[2], [0, 0, 0, 1])

    def test_singlet_block_d2_n2(self):
        weights, vectors = build_q_bases(2, 2)[Partition((1, 1))]
        assert weights == [(1, 1)]
        dense = vectors[0].to_dense(4)
        assert np.allclose(dense, [0, 1 / np.sqrt(2), -1 / np.sqrt(2), 0])

    def test_hook_block_d2_n3(self):
        weights, vectors = build_q_bases(2, 3)[Partition((2, 1))]
        assert len(vectors) == 2
        first = vectors[0].to_dense(8)
        expect = np.zeros(8)
        expect[encode_basis((0, 0, 1), 2)] = 2
        expect[encode_basis((0, 1, 0), 2)] = -1
        expect[encode_basis((1, 0, 0), 2)] = -1
        assert np.allclose(first, expect / np.sqrt(6))

    @pytest.mark.parametrize("d,n", [(2, 3), (2, 4), (3, 3)])
    def test_dim_q_matches_symmetrizer_rank(self, d, n):
        seeds = build_q_bases(d, n)
        for lam in partitions_of(n, d):
            mat = dense_symmetrizer(lam, d)
            svals = np.linalg.svd(mat, compute_uv=False)
            rank = int(np.sum(svals > 1e-9 * svals[0]))
            assert len(seeds[lam][1]) == rank

    def test_vectors_lie_in_symmetrizer_image(self):
        d, n = 2, 4
        seeds = build_q_bases(d, n)
        for lam in partitions_of(n, d):
            mat = dense_symmetrizer(lam, d)
            proj = mat @ np.linalg.pinv(mat)  # projector onto the column space
            for vec in seeds[lam][1]:
                dense = vec.to_dense(d**n)
                assert np.linalg.norm(proj @ dense - dense) < 1e-9


class TestCompletion:
    @pytest.mark.parametrize(
        "d,n,expect",
        [
            (2, 2, {(2,): (3, 1), (1, 1): (1, 1)}),
            (2, 3, {(3,): (4, 1), (2, 1): (2, 2)}),
            (3, 3, {(3,): (10, 1), (2, 1): (8, 2), (1, 1, 1): (1, 1)}),
        ],
    )
    def test_dimensions(self, basis_for, d, n, expect):
        basis = basis_for(d, n)
        got = {lam.parts: (b.dim_q, b.dim_p) for lam, b in basis.blocks.items()}
        assert got == expect
        assert sum(q * p for q, p in got.values()) == d**n

    @pytest.mark.parametrize("d,n", [(2, 4), (2, 5), (3, 4)])
    def test_dim_p_matches_tableau_count(self, basis_for, d, n):
        basis = basis_for(d, n)
        for lam, block in basis.blocks.items():
            assert block.dim_p == standard_tableaux_count(lam.parts)

    @pytest.mark.parametrize("d,n", [(2, 3), (2, 4), (3, 3), (3, 4)])
    def test_orthonormal_and_weight_pure(self, basis_for, d, n):
        basis = basis_for(d, n)
        assert basis.gram_deviation() < 1e-9
        from schur_shadows.young import weight_of

        for lam, block in basis.blocks.items():
            for (i, _j), vec in block.vectors.items():
                want = block.weight_of_i[i]
                for idx in vec.indices:
                    digits = []
                    v = int(idx)
                    for _ in range(n):
                        digits.append(v % d)
                        v //= d
                    assert weight_of(tuple(digits[::-1]), d) == want

    def test_base_case_weights_differ(self, basis_for):
        # vector (0, 0) owns its weight: no other i shares it
        for d, n in [(2, 4), (3, 3), (3, 4)]:
            basis = basis_for(d, n)
            for block in basis.blocks.values():
                w0 = block.weight_of_i[0]
                assert all(w != w0 for w in block.weight_of_i[1:])

    def test_verify_report_clean(self, basis_for):
        report = verify_nice_basis(basis_for(2, 3), RngStream(31), trials=20)
        assert report["gram_deviation"] < 1e-9
        assert report["vector_count_ok"]
        assert report["weight_purity_violation"] == 0.0
        assert report["u_closure_residual"] < 1e-9
        assert report["pi_closure_residual"] < 1e-9
        # the scan legitimately stops early on permutation-invariant blocks
        assert isinstance(report["early_stopped"], list)

    def test_identity_maps_give_zero_residual(self, basis_for):
        # identity U and identity permutation leave every block fixed
        basis = basis_for(2, 3)
        mat = basis.dense_matrix()
        for lam, block in basis.blocks.items():
            for j in range(block.dim_p):
                cols = mat[:, basis.block_slice(lam, j)]
                for i in range(block.dim_q):
                    vec = block.vectors[(i, j)].to_dense(8)
                    assert np.linalg.norm(vec - cols @ (cols.conj().T @ vec)) < 1e-12


class TestSchurMeasurement:
    def test_all_zeros_is_symmetric(self, basis_for):
        basis = basis_for(2, 2)
        probs = schur_block_probabilities(basis, PureState.from_digits((0, 0), 2))
        assert probs[(Partition((2,)), 0)] == pytest.approx(1.0, abs=1e-12)
        lam, j, post = schur_projective_measure(basis, PureState.from_digits((0, 0), 2), RngStream(1))
        assert lam.parts == (2,) and j == 0
        assert np.allclose(post.amplitudes, PureState.from_digits((0, 0), 2).amplitudes)

    def test_singlet(self, basis_for):
        basis = basis_for(2, 2)
        amps = np.zeros(4, dtype=complex)
        amps[1] = 1 / np.sqrt(2)
        amps[2] = -1 / np.sqrt(2)
        probs = schur_block_probabilities(basis, PureState(2, 2, amps))
        assert probs[(Partition((1, 1)), 0)] == pytest.approx(1.0, abs=1e-12)

    def test_01_splits_evenly(self, basis_for):
        basis = basis_for(2, 2)
        probs = schur_block_probabilities(basis, PureState.from_digits((0, 1), 2))
        assert probs[(Partition((2,)), 0)] == pytest.approx(0.5, abs=1e-12)
        assert probs[(Partition((1, 1)), 0)] == pytest.approx(0.5, abs=1e-12)

    def test_probabilities_sum_to_one(self, basis_for):
        basis = basis_for(3, 3)
        gen = RngStream(32).gen
        amps = gen.standard_normal(27) + 1j * gen.standard_normal(27)
        state = PureState(3, 3, amps / np.linalg.norm(amps))
        probs = schur_block_probabilities(basis, state)
        assert sum(probs.values()) == pytest.approx(1.0, abs=1e-9)

    def test_measurement_statistics(self, basis_for):
        # empirical (lam, j) frequencies over 1e5 repeats within 4 sigma
        basis = basis_for(2, 3)
        gen = RngStream(33).gen
        amps = gen.standard_normal(8) + 1j * gen.standard_normal(8)
        state = PureState(2, 3, amps / np.linalg.norm(amps))
        probs = schur_block_probabilities(basis, state)
        rng = RngStream(34)
        counts = {key: 0 for key in probs}
        repeats = 100_000
        for _ in range(repeats):
            lam, j, _post = schur_projective_measure(basis, state, rng)
            counts[(lam, j)] += 1
        for key, p in probs.items():
            se = np.sqrt(p * (1 - p) / repeats)
            assert abs(counts[key] / repeats - p) <= 4 * se + 1e-12

    def test_post_state_in_block(self, basis_for):
        basis = basis_for(2, 3)
        gen = RngStream(35).gen
        amps = gen.standard_normal(8) + 1j * gen.standard_normal(8)
        state = PureState(2, 3, amps / np.linalg.norm(amps))
        lam, j, post = schur_projective_measure(basis, state, RngStream(36))
        cols = basis.dense_matrix()[:, basis.block_slice(lam, j)]
        coeff = cols.conj().T @ post.amplitudes
        assert np.linalg.norm(post.amplitudes - cols @ coeff) < 1e-10
        assert abs(post.norm - 1) < 1e-10


class TestChangeOfBasis:
    def test_j_zero_is_identity(self, basis_for):
        basis = basis_for(2, 3)
        lam = Partition((2, 1))
        vec = basis.vector(lam, 1, 0).to_dense(8)
        out = change_of_basis(basis, lam, 0, PureState(2, 3, vec))
        assert np.allclose(out.amplitudes, vec)

    def test_maps_j_block_to_base_block(self, basis_for):
        basis = basis_for(2, 3)
        lam = Partition((2, 1))
        vec = basis.vector(lam, 0, 1).to_dense(8)
        out = change_of_basis(basis, lam, 1, PureState(2, 3, vec))
        assert np.allclose(out.amplitudes, basis.vector(lam, 0, 0).to_dense(8))

    def test_preserves_coefficients(self, basis_for):
        basis = basis_for(2, 3)
        lam = Partition((2, 1))
        gen = RngStream(37).gen
        coeff = gen.standard_normal(2) + 1j * gen.standard_normal(2)
        coeff /= np.linalg.norm(coeff)
        state = coeff[0] * basis.vector(lam, 0, 1).to_dense(8) + coeff[1] * basis.vector(
            lam, 1, 1
        ).to_dense(8)
        out = change_of_basis(basis, lam, 1, PureState(2, 3, state))
        expect = coeff[0] * basis.vector(lam, 0, 0).to_dense(8) + coeff[1] * basis.vector(
            lam, 1, 0
        ).to_dense(8)
        assert np.max(np.abs(out.amplitudes - expect)) < 1e-10
        assert abs(out.norm - 1) < 1e-10

    def test_rejects_state_outside_block(self, basis_for):
        basis = basis_for(2, 3)
        with pytest.raises(ValueError):
            change_of_basis(basis, Partition((2, 1)), 1, PureState.from_digits((0, 0, 0), 2))

    def test_commutes_with_collective_unitaries(self, basis_for):
        # U^{x n} then swap equals swap then U^{x n} on the measured block
        basis = basis_for(2, 3)
        lam = Partition((2, 1))
        gen = RngStream(38).gen
        rng = RngStream(39)
        for trial in range(20):
            coeff = gen.standard_normal(2) + 1j * gen.standard_normal(2)
            coeff /= np.linalg.norm(coeff)
            state = PureState(
                2,
                3,
                coeff[0] * basis.vector(lam, 0, 1).to_dense(8)
                + coeff[1] * basis.vector(lam, 1, 1).to_dense(8),
            )
            u = haar_unitary(2, rng.child(trial))
            a = change_of_basis(basis, lam, 1, apply_local_unitary(u, state))
            b = apply_local_unitary(u, change_of_basis(basis, lam, 1, state))
            assert np.max(np.abs(a.amplitudes - b.amplitudes)) < 1e-8


class TestPersistence:
    def test_roundtrip_bit_exact(self, basis_for, tmp_path):
        basis = basis_for(2, 3)
        path = tmp_path / "b.schb"
        save_basis(basis, path)
        loaded = load_basis(path)
        assert loaded.d == 2 and loaded.n == 3
        for lam, block in basis.blocks.items():
            other = loaded.blocks[lam]
            assert other.dim_q == block.dim_q and other.dim_p == block.dim_p
            assert other.weight_of_i == block.weight_of_i
            for key, vec in block.vectors.items():
                assert np.array_equal(other.vectors[key].indices, vec.indices)
                assert np.array_equal(other.vectors[key].amplitudes, vec.amplitudes)

    def test_truncated_file_fails_checksum(self, basis_for, tmp_path):
        path = tmp_path / "b.schb"
        save_basis(basis_for(2, 3), path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 9])
        with pytest.raises(BasisCacheError, match="checksum|truncated"):
            load_basis(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.schb"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(BasisCacheError, match="magic"):
            load_basis(path)

    def test_version_mismatch(self, basis_for, tmp_path):
        path = tmp_path / "b.schb"
        save_basis(basis_for(2, 2), path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(raw))
        with pytest.raises(BasisCacheError, match="version"):
            load_basis(path)

    def test_vector_count_mismatch(self, tmp_path):
        # d=2, n=2 header, but the single block claims 5 basis vectors
        body = bytearray()
        body += struct.pack("<I", 1)  # partition (2)
        body += struct.pack("<I", 2)
        body += struct.pack("<II", 5, 1)  # dim_q = 5, dim_p = 1
        for _ in range(5):
            body += struct.pack("<II", 1, 1)  # weights (1, 1)
        for i in range(5):
            body += struct.pack("<Q", 1)
            body += struct.pack("<Qdd", i % 4, 1.0, 0.0)
        header = b"SCHB" + struct.pack("<IIIII", 1, 2, 2, 1, zlib.crc32(bytes(body)))
        path = tmp_path / "bad.schb"
        path.write_bytes(header + bytes(body))
        with pytest.raises(BasisCacheError, match="count mismatch"):
            load_basis(path)

    def test_perturbed_amplitude_detected_by_verify(self, basis_for, tmp_path):
        # a re-checksummed perturbation loads fine but fails verification
        basis = basis_for(2, 2)
        lam = Partition((2,))
        block = basis.blocks[lam]
        vec = block.vectors[(1, 0)]
        tampered = type(vec)(vec.indices, vec.amplitudes + np.array([1e-3, 0]))
        block_vectors = dict(block.vectors)
        block_vectors[(1, 0)] = tampered
        blocks = dict(basis.blocks)
        blocks[lam] = type(block)(lam, block.dim_q, block.dim_p, block.weight_of_i, block_vectors)
        hacked = SchurBasis(2, 2, blocks)
        path = tmp_path / "tampered.schb"
        save_basis(hacked, path)
        report = verify_nice_basis(load_basis(path), RngStream(40), trials=2)
        assert report["gram_deviation"] > 1e-4

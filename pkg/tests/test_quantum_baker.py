"""Tests for the quantized open baker map.

Oracle: the dense matrix assembled directly from the kernel definition
(full-size inverse kernel times block-diagonal strip kernels), built
with plain matrix algebra and no FFT.  The FFT-structured apply path
must reproduce it to 1e-12.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from openmaps.baker_classical import BakerSpec
from openmaps.errors import BadDimension, DimensionCap, DimensionMismatch
from openmaps.quantum_baker import (
    OpenMapOperator,
    QuantumState,
    apply,
    build,
    dense,
    read_dense,
    state_from_csv,
    state_to_csv,
    write_dense,
)

SPEC32 = BakerSpec(3, (0, 2))
CLOSED2 = BakerSpec(2, (0, 1))


def kernel_matrix(M, theta):
    """Definition of the offset Fourier kernel, no FFT involved."""
    idx = np.arange(M) + theta
    return np.exp(-2j * np.pi * np.outer(idx, idx) / M) / math.sqrt(M)


def dense_from_kernels(spec, N, theta):
    """Oracle assembly: G_N^{-1} @ blockdiag(G_{N/a} on allowed strips)."""
    na = N // spec.a
    blocks = np.zeros((N, N), dtype=np.complex128)
    small = kernel_matrix(na, theta)
    for j in spec.alphabet:
        blocks[j * na : (j + 1) * na, j * na : (j + 1) * na] = small
    return np.linalg.inv(kernel_matrix(N, theta)) @ blocks


def rand_state(N, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.normal(size=N) + 1j * rng.normal(size=N)
    return QuantumState(N, v / np.linalg.norm(v))


class TestKernel:
    @pytest.mark.parametrize("theta", [0.0, 0.5])
    def test_kernel_unitary(self, theta):
        G = kernel_matrix(12, theta)
        assert np.max(np.abs(G @ G.conj().T - np.eye(12))) < 1e-12

    @pytest.mark.parametrize("theta", [0.0, 0.5])
    def test_fft_path_matches_kernel_definition(self, theta):
        from openmaps.quantum_baker import _fourier_apply, _fourier_inverse_apply

        G = kernel_matrix(16, theta)
        v = rand_state(16, 1).amps
        assert np.max(np.abs(_fourier_apply(v, theta) - G @ v)) < 1e-12
        assert np.max(
            np.abs(_fourier_inverse_apply(v, theta) - np.linalg.inv(G) @ v)
        ) < 1e-12


class TestBuild:
    def test_indivisible_dimension_rejected(self):
        with pytest.raises(BadDimension):
            build(SPEC32, 10)

    def test_walsh_needs_power(self):
        with pytest.raises(BadDimension):
            build(SPEC32, 18, variant="WALSH")

    def test_bad_variant_and_theta(self):
        with pytest.raises(ValueError):
            build(SPEC32, 9, variant="DCT")
        with pytest.raises(ValueError):
            build(SPEC32, 9, theta=0.3)

    def test_closed_baker_unitary(self):
        op = build(CLOSED2, 8)
        M = dense(op)
        assert np.max(np.abs(M.conj().T @ M - np.eye(8))) <= 1e-12

    def test_open_baker_rank_by_svd(self):
        # blocks kill one strip of three: six singular values 1, three 0
        op = build(SPEC32, 9)
        s = np.linalg.svd(dense(op), compute_uv=False)
        assert np.sum(s > 0.5) == 6
        assert np.max(np.abs(np.sort(s)[-6:] - 1.0)) < 1e-12
        assert np.max(np.sort(s)[:3]) < 1e-12

    def test_smallest_open_case_hand_assembly(self):
        # N=3 at offset 0: the strip blocks are the 1x1 identity, so the
        # matrix is exactly G_3^{-1} diag(1, 0, 1)
        op = build(SPEC32, 3, theta=0.0)
        expect = np.linalg.inv(kernel_matrix(3, 0.0)) @ np.diag([1.0, 0.0, 1.0])
        assert np.max(np.abs(dense(op) - expect)) < 1e-12


class TestApply:
    def test_dimension_mismatch(self):
        op = build(SPEC32, 9)
        with pytest.raises(DimensionMismatch):
            apply(op, rand_state(12, 0))

    @pytest.mark.parametrize("theta", [0.0, 0.5])
    def test_matches_kernel_oracle(self, theta):
        op = build(SPEC32, 81, theta=theta)
        M = dense_from_kernels(SPEC32, 81, theta)
        psi = rand_state(81, 3)
        out = apply(op, psi).amps
        assert np.max(np.abs(out - M @ psi.amps)) < 1e-12

    def test_dense_column_assembly_matches_oracle(self):
        op = build(SPEC32, 27)
        assert np.max(np.abs(dense(op) - dense_from_kernels(SPEC32, 27, 0.5))) < 1e-12

    def test_closed_map_preserves_norm(self):
        op = build(CLOSED2, 64)
        psi = rand_state(64, 5)
        assert apply(op, psi).norm() == pytest.approx(1.0, abs=1e-12)

    def test_excluded_strip_is_kernel(self):
        op = build(SPEC32, 27)
        amps = np.zeros(27, dtype=np.complex128)
        amps[9:18] = rand_state(9, 7).amps  # middle strip, not in alphabet
        assert apply(op, QuantumState(27, amps)).norm() <= 1e-12

    def test_adjoint_consistency(self):
        op = build(SPEC32, 27)
        M = dense(op)
        Mstar = dense(op, adjoint=True)
        assert np.max(np.abs(Mstar - M.conj().T)) < 1e-12

    def test_norm_nonincreasing(self):
        op = build(SPEC32, 81)
        for seed in range(5):
            psi = rand_state(81, seed)
            assert apply(op, psi).norm() <= 1.0 + 1e-10

    def test_subunitarity_singular_values(self):
        for spec, N in [(SPEC32, 27), (BakerSpec(4, (1, 2)), 32), (CLOSED2, 16)]:
            s = np.linalg.svd(dense(build(spec, N)), compute_uv=False)
            assert s.max() <= 1.0 + 1e-10

    @given(st.integers(0, 10**6))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, seed):
        op = build(SPEC32, 27)
        u = rand_state(27, seed)
        v = rand_state(27, seed + 1)
        lhs = apply(op, QuantumState(27, 0.7 * u.amps + 2j * v.amps)).amps
        rhs = 0.7 * apply(op, u).amps + 2j * apply(op, v).amps
        assert np.max(np.abs(lhs - rhs)) < 1e-12


class TestWalsh:
    def test_walsh_closed_unitary(self):
        op = build(CLOSED2, 8, variant="WALSH")
        M = dense(op)
        assert np.max(np.abs(M.conj().T @ M - np.eye(8))) <= 1e-12

    def test_walsh_rank_matches_fft_rank(self):
        fft_s = np.linalg.svd(dense(build(SPEC32, 27)), compute_uv=False)
        wal_s = np.linalg.svd(
            dense(build(SPEC32, 27, variant="WALSH")), compute_uv=False
        )
        # both variants have rank N·m/a = 18
        assert np.sum(fft_s > 0.5) == np.sum(wal_s > 0.5) == 18
        assert wal_s.max() <= 1.0 + 1e-10

    def test_walsh_excluded_strip_is_kernel(self):
        op = build(SPEC32, 27, variant="WALSH")
        amps = np.zeros(27, dtype=np.complex128)
        amps[9:18] = rand_state(9, 2).amps
        assert apply(op, QuantumState(27, amps)).norm() <= 1e-12


class TestDenseCap:
    def test_cap_enforced(self):
        op = build(SPEC32, 3**9)
        with pytest.raises(DimensionCap):
            dense(op)

    def test_cache_reused(self):
        op = build(SPEC32, 9)
        first = dense(op)
        assert dense(op) is first


class TestSerialization:
    def test_matrix_round_trip(self, tmp_path):
        M = dense(build(SPEC32, 9))
        path = tmp_path / "m.oqm"
        write_dense(M, path)
        back = read_dense(path)
        assert np.array_equal(back, M)
        with open(path, "rb") as fh:
            assert fh.read(4) == b"OQM1"

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.oqm"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError):
            read_dense(path)

    def test_state_csv_round_trip(self):
        psi = rand_state(27, 9)
        back = state_from_csv(state_to_csv(psi))
        assert np.array_equal(back.amps, psi.amps)

    def test_h_is_derived(self):
        psi = rand_state(27, 0)
        assert psi.h * TWO_PI_N(27) == pytest.approx(1.0, abs=0)


def TWO_PI_N(N):
    return 2 * math.pi * N

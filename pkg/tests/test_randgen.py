from __future__ import annotations

import numpy as np
import pytest

from acttomo.qcore import QubitStructure, numerical_rank
from acttomo.randgen import (
    PAULI_EIGENBASES,
    PauliExhaustedError,
    RngStream,
    haar_unitary,
    local_rh_basis,
    pauli_basis_for_label,
    random_pauli_basis,
    random_state_hs,
    rh_basis,
    rs_basis,
)


class TestRngStream:
    def test_same_key_same_draws(self):
        a = RngStream(3, 5).generator().standard_normal(4)
        b = RngStream(3, 5).generator().standard_normal(4)
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = RngStream(3, 0).generator().standard_normal(4)
        b = RngStream(3, 1).generator().standard_normal(4)
        assert not np.array_equal(a, b)

    def test_substream(self):
        assert RngStream(3, 5).substream(2) == RngStream(3, 7)


class TestHaarUnitary:
    def test_unitary(self):
        u = haar_unitary(6, RngStream(1).generator())
        assert np.allclose(u.conj().T @ u, np.eye(6), atol=1e-12)

    def test_deterministic(self):
        u1 = haar_unitary(4, RngStream(2).generator())
        u2 = haar_unitary(4, RngStream(2).generator())
        assert np.array_equal(u1, u2)

    def test_rejects_trivial_dim(self):
        with pytest.raises(ValueError):
            haar_unitary(1, RngStream(0).generator())

    def test_column_moment(self):
        # E|U_00|^2 = 1/d under the Haar measure
        rng = RngStream(4).generator()
        vals = [abs(haar_unitary(3, rng)[0, 0]) ** 2 for _ in range(2000)]
        assert np.mean(vals) == pytest.approx(1 / 3, abs=0.02)


class TestRandomBases:
    def test_rh_basis_valid(self):
        b = rh_basis(5, RngStream(1).generator())
        assert b.dim == 5

    def test_rs_basis_valid(self):
        b = rs_basis(5, RngStream(1).generator())
        assert np.allclose(b.unitary.conj().T @ b.unitary, np.eye(5),
                           atol=1e-10)

    def test_rs_differs_from_rh(self):
        rh = rh_basis(4, RngStream(9).generator())
        rs = rs_basis(4, RngStream(9).generator())
        assert not np.allclose(rh.unitary, rs.unitary)


class TestRandomState:
    def test_rank(self):
        rng = RngStream(5).generator()
        for r in (1, 2, 4):
            rho = random_state_hs(4, r, rng)
            assert numerical_rank(rho) == r

    def test_rank_out_of_range(self):
        rng = RngStream(0).generator()
        with pytest.raises(ValueError):
            random_state_hs(4, 5, rng)
        with pytest.raises(ValueError):
            random_state_hs(4, 0, rng)

    def test_mean_is_maximally_mixed(self):
        # the full-rank HS ensemble is unitarily invariant
        rng = RngStream(6).generator()
        acc = np.zeros((3, 3), dtype=complex)
        n = 1500
        for _ in range(n):
            acc += random_state_hs(3, 3, rng).data
        assert np.allclose(acc / n, np.eye(3) / 3, atol=0.02)


class TestPauliBases:
    def test_label_basis_tensor_structure(self):
        b = pauli_basis_for_label(("x", "z"))
        expect = np.kron(PAULI_EIGENBASES["x"], PAULI_EIGENBASES["z"])
        assert np.allclose(b.unitary, expect)

    def test_draw_without_replacement(self):
        structure = QubitStructure(1)
        rng = RngStream(2).generator()
        history = set()
        labels = []
        for _ in range(3):
            _, label = random_pauli_basis(structure, rng, history)
            history.add(label)
            labels.append(label)
        assert len(set(labels)) == 3

    def test_exhaustion(self):
        structure = QubitStructure(1)
        history = {("x",), ("y",), ("z",)}
        with pytest.raises(PauliExhaustedError):
            random_pauli_basis(structure, RngStream(0).generator(), history)


class TestLocalRhBasis:
    def test_unitary_and_dim(self):
        b = local_rh_basis(QubitStructure(2), RngStream(3).generator())
        assert b.dim == 4

    def test_product_structure(self):
        # a product unitary maps computational kets to product kets: every
        # column must have Schmidt rank 1 across the 2x2 split
        b = local_rh_basis(QubitStructure(2), RngStream(3).generator())
        for j in range(4):
            m = b.ket(j).reshape(2, 2)
            s = np.linalg.svd(m, compute_uv=False)
            assert s[1] < 1e-12

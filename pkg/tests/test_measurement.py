from __future__ import annotations

import numpy as np
import pytest

from acttomo.measurement import (
    INFINITE,
    Dataset,
    FrequencyRecord,
    ml_probabilities,
    simulate_record,
)
from acttomo.qcore import (
    DensityMatrix,
    DimensionMismatchError,
    VonNeumannBasis,
    born_probabilities,
    fidelity,
)
from acttomo.randgen import RngStream, random_state_hs, rh_basis


class TestFrequencyRecord:
    def test_valid(self):
        rec = FrequencyRecord(VonNeumannBasis.computational(2),
                              np.array([0.5, 0.5]))
        assert rec.noiseless

    def test_negative_frequency_rejected(self):
        with pytest.raises(ValueError):
            FrequencyRecord(VonNeumannBasis.computational(2),
                            np.array([1.1, -0.1]))

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            FrequencyRecord(VonNeumannBasis.computational(2),
                            np.array([0.5, 0.4]))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            FrequencyRecord(VonNeumannBasis.computational(3),
                            np.array([0.5, 0.5]))

    def test_bad_n_copies_rejected(self):
        with pytest.raises(ValueError):
            FrequencyRecord(VonNeumannBasis.computational(2),
                            np.array([0.5, 0.5]), n_copies=0)

    def test_finite_copies_not_noiseless(self):
        rec = FrequencyRecord(VonNeumannBasis.computational(2),
                              np.array([0.5, 0.5]), n_copies=10)
        assert not rec.noiseless


class TestDataset:
    def test_append_and_len(self):
        ds = Dataset(2)
        ds.append(FrequencyRecord(VonNeumannBasis.computational(2),
                                  np.array([1.0, 0.0])))
        assert len(ds) == 1
        assert ds.noiseless

    def test_dim_mismatch(self):
        ds = Dataset(3)
        with pytest.raises(DimensionMismatchError):
            ds.append(FrequencyRecord(VonNeumannBasis.computational(2),
                                      np.array([1.0, 0.0])))


class TestSimulateRecord:
    def test_infinite_copies_exact(self):
        rng = RngStream(1).generator()
        rho = random_state_hs(4, 2, rng)
        basis = rh_basis(4, rng)
        rec = simulate_record(rho, basis)
        assert np.allclose(rec.nu, born_probabilities(rho, basis))

    def test_finite_copies_multinomial(self):
        rng = RngStream(2).generator()
        rho = random_state_hs(3, 3, rng)
        basis = rh_basis(3, rng)
        rec = simulate_record(rho, basis, n_copies=100, rng=rng)
        assert rec.n_copies == 100
        counts = rec.nu * 100
        assert np.allclose(counts, np.round(counts))
        assert rec.nu.sum() == pytest.approx(1.0)

    def test_finite_copies_need_rng(self):
        rho = DensityMatrix.maximally_mixed(2)
        with pytest.raises(ValueError):
            simulate_record(rho, VonNeumannBasis.computational(2),
                            n_copies=10)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            simulate_record(DensityMatrix.maximally_mixed(2),
                            VonNeumannBasis.computational(3))


class TestMlProbabilities:
    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            ml_probabilities(Dataset(2))

    def test_noiseless_returns_frequencies(self):
        rng = RngStream(3).generator()
        rho = random_state_hs(4, 2, rng)
        ds = Dataset(4)
        for _ in range(3):
            ds.append(simulate_record(rho, rh_basis(4, rng)))
        ml = ml_probabilities(ds)
        for vec, rec in zip(ml.vectors, ds.records):
            assert np.array_equal(vec, rec.nu)
        # the ML state reproduces the data
        for rec in ds.records:
            p = born_probabilities(ml.ml_state, rec.basis)
            assert np.allclose(p, rec.nu, atol=1e-6)

    def test_noiseless_full_data_recovers_state(self):
        rng = RngStream(4).generator()
        rho = random_state_hs(3, 1, rng)
        ds = Dataset(3)
        for _ in range(5):
            ds.append(simulate_record(rho, rh_basis(3, rng)))
        ml = ml_probabilities(ds)
        assert fidelity(ml.ml_state, rho) >= 0.999

    def test_finite_copies_vectors_physical(self):
        rng = RngStream(5).generator()
        rho = random_state_hs(3, 2, rng)
        ds = Dataset(3)
        for _ in range(4):
            ds.append(simulate_record(rho, rh_basis(3, rng),
                                      n_copies=200, rng=rng))
        ml = ml_probabilities(ds)
        for vec, rec in zip(ml.vectors, ds.records):
            assert vec.min() >= 0.0
            assert vec.sum() == pytest.approx(1.0, abs=1e-9)
            # physical smoothing keeps vectors near the raw frequencies
            assert np.abs(vec - rec.nu).max() < 0.2
        # vectors are exactly the Born probabilities of one common state
        for vec, rec in zip(ml.vectors, ds.records):
            p = born_probabilities(ml.ml_state, rec.basis)
            assert np.allclose(vec, p / p.sum(), atol=1e-9)

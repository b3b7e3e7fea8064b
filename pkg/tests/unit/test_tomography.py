import pytest
import math
import numpy as np

from qsup.qstate import DensityMatrix, basis_ket, fidelity, purity, random_density_matrix, random_ket, trace_distance
from qsup.schemas import BasisLabel, CountRecord
from qsup.tomography import (
    PROJECTION_BASES, TomographyResult, count_vector, group_by_acquisition, loss_rate, mle_fit,
    mle_reconstruct, read_counts_csv, simulate_counts, summarize, write_counts_csv,
)


def _exact(rho: DensityMatrix):
    return [rho.probability(basis.ket) for basis in PROJECTION_BASES]


def test_bases_are_complete_pairs():
    """Test that H/V, D/A and L/R each resolve the identity"""
    projectors = [basis.ket.projector().entries for basis in PROJECTION_BASES]
    for plus, minus in ((0, 1), (2, 3), (4, 5)):
        assert np.allclose(projectors[plus] + projectors[minus], np.eye(2), atol=1e-15)
    assert [basis.label for basis in PROJECTION_BASES] == list(BasisLabel)


def test_simulate_counts_orthogonal_basis_is_zero():
    """Test that |H><H| never clicks in V"""
    records = simulate_counts(basis_ket(0.0).density_matrix(), 1e4, 5, seed=1)
    assert all(r.counts == 0 for r in records if r.basis == BasisLabel.V)
    assert len(records) == 5 * 6


def test_simulate_counts_mixed_state_scale():
    """Test the Poisson means of the maximally mixed state"""
    records = simulate_counts(DensityMatrix.maximally_mixed(2), 1e6, 1, seed=2)
    for r in records:
        assert abs(r.counts - 5e5) / 5e5 < 0.01
        assert abs(r.monitor - 1e6) / 1e6 < 0.01


def test_simulate_counts_trace_scaling():
    """Test that a half-trace state gives about half the H+V counts"""
    full = simulate_counts(DensityMatrix.maximally_mixed(2), 1e6, 1, seed=3)
    half = simulate_counts(DensityMatrix.maximally_mixed(2).scaled(0.5), 1e6, 1, seed=4)

    def hv(records):
        return sum(r.counts for r in records if r.basis in (BasisLabel.H, BasisLabel.V))

    assert hv(half) / hv(full) == pytest.approx(0.5, rel=0.01)


def test_simulate_counts_is_deterministic():
    """Test identical seeds give identical records and different seeds do not"""
    rho = DensityMatrix.maximally_mixed(2)
    assert simulate_counts(rho, 1e3, 4, seed=9, k=2) == simulate_counts(rho, 1e3, 4, seed=9, k=2)
    assert simulate_counts(rho, 1e3, 4, seed=9, k=2) != simulate_counts(rho, 1e3, 4, seed=10, k=2)


def test_simulate_counts_streams_are_independent_of_order():
    """Test that one repetition does not depend on how many precede it"""
    rho = random_density_matrix(np.random.default_rng(0))
    many = simulate_counts(rho, 1e4, 5, seed=11, k=3, stream=(2,))
    few = simulate_counts(rho, 1e4, 2, seed=11, k=3, stream=(2,))
    assert many[:len(few)] == few


def test_simulate_counts_validation():
    """Test argument checks"""
    rho = DensityMatrix.maximally_mixed(2)
    with pytest.raises(ValueError):
        simulate_counts(rho, 0.0, 3, seed=1)
    with pytest.raises(ValueError):
        simulate_counts(rho, 1e3, 0, seed=1)


def test_mle_exact_pure_states(rng):
    """Test that exact probabilities recover random pure states"""
    for _ in range(20):
        state = random_ket(rng)
        result = mle_fit(_exact(state.density_matrix()))
        assert fidelity(result.rho_hat, state) >= 1 - 1e-8
        assert result.converged


def test_mle_exact_mixed_state(rng):
    """Test that exact probabilities of a mixed state are reproduced"""
    rho = random_density_matrix(rng)
    result = mle_fit(_exact(rho))
    assert trace_distance(result.rho_hat, rho) <= 1e-8


def test_mle_rank_deficient_data():
    """Test that only-H counts reconstruct |H><H|"""
    result = mle_reconstruct([
        CountRecord(k=0, repetition=1, basis=basis.label, counts=1000 if basis.label == BasisLabel.H else 0, monitor=1)
        for basis in PROJECTION_BASES
    ])
    assert np.allclose(result.rho_hat.entries, np.diag([1.0, 0.0]), atol=1e-6)


def test_mle_mixed_purity_at_scale():
    """Test that the maximally mixed state reconstructs with purity 0.5 at 10^6 shots"""
    records = simulate_counts(DensityMatrix.maximally_mixed(2), 1e6, 1, seed=5)
    assert purity(mle_reconstruct(records).rho_hat) == pytest.approx(0.5, abs=2e-3)


def test_mle_likelihood_is_monotone(rng):
    """Test that the log-likelihood never decreases from a maximally mixed start"""
    rho = basis_ket(0.4).density_matrix()
    records = simulate_counts(rho, 500, 1, seed=6)
    result = mle_fit(count_vector(records), initial=DensityMatrix.maximally_mixed(2))
    history = np.array(result.history)
    assert len(history) >= 2
    assert np.all(np.diff(history) >= -1e-9)
    assert result.rho_hat.is_normalized(1e-10)


def test_mle_non_convergence_is_reported():
    """Test that a capped iteration returns converged=False instead of raising"""
    counts = [600, 400, 550, 450, 520, 480]
    result = mle_fit(counts, initial=DensityMatrix.maximally_mixed(2), max_iterations=1)
    assert result.iterations == 1
    assert not result.converged


def test_mle_rejects_empty_data():
    """Test that all-zero counts are refused"""
    with pytest.raises(ValueError):
        mle_fit([0, 0, 0, 0, 0, 0])
    with pytest.raises(ValueError):
        mle_fit([1, 2, 3])


def test_mle_error_shrinks_with_shots(rng):
    """Test the 1/sqrt(shots) scaling of the reconstruction error"""
    states = [random_density_matrix(rng) for _ in range(20)]

    def mean_error(shots, seed):
        return np.mean([
            trace_distance(mle_reconstruct(simulate_counts(rho, shots, 1, seed=seed, stream=(i,))).rho_hat, rho)
            for i, rho in enumerate(states)
        ])

    low, high = mean_error(1e3, 1), mean_error(1e5, 2)
    ratio = low / high
    assert 10 / 3 <= ratio <= 10 * 3


def test_fidelity_estimator_is_unbiased():
    """Test that 200 reconstructions at 10^5 shots average to the true fidelity within 3 standard errors"""
    target = basis_ket(0.3)
    rho = DensityMatrix(0.8 * target.projector().entries + 0.1 * np.eye(2))
    records = simulate_counts(rho, 1e5, 200, seed=11)
    acquisitions = group_by_acquisition(records)[0]
    results = [mle_reconstruct(acquisitions[rep]) for rep in sorted(acquisitions)]
    summary = summarize(results, target, records, loss_rate(records))
    assert abs(summary.F_mean - fidelity(rho, target)) <= 3 * summary.F_stderr
    assert fidelity(rho, target) == pytest.approx(0.9, abs=1e-12)


def test_count_vector_requires_all_bases():
    """Test that missing or duplicated bases are refused"""
    records = simulate_counts(DensityMatrix.maximally_mixed(2), 1e3, 2, seed=1)
    with pytest.raises(ValueError):
        count_vector(records[:5])
    with pytest.raises(ValueError):
        count_vector(records)
    with pytest.raises(ValueError):
        count_vector(records[:6] + records[:1])


def test_group_by_acquisition():
    """Test grouping into k -> repetition -> six records"""
    records = simulate_counts(DensityMatrix.maximally_mixed(2), 1e3, 3, seed=1, k=2)
    grouped = group_by_acquisition(records)
    assert list(grouped) == [2]
    assert sorted(grouped[2]) == [1, 2, 3]
    assert all(len(reps) == 6 for reps in grouped[2].values())


def test_loss_rate_ratio_of_means():
    """Test L_k as the sum of mean counts over mean monitor counts"""
    records = [
        CountRecord(k=1, repetition=1, basis=BasisLabel.H, counts=10, monitor=100),
        CountRecord(k=1, repetition=2, basis=BasisLabel.H, counts=30, monitor=300),
        CountRecord(k=1, repetition=1, basis=BasisLabel.V, counts=5, monitor=50),
        CountRecord(k=1, repetition=2, basis=BasisLabel.V, counts=5, monitor=150),
    ]
    assert loss_rate(records) == pytest.approx(20 / 200 + 5 / 100, abs=1e-15)


def _result(population: float) -> TomographyResult:
    return TomographyResult(DensityMatrix(np.diag([population, 1 - population])), 0.0, 1, True)


def _records(k: int, scale: int = 1):
    return [
        CountRecord(k=k, repetition=rep, basis=basis.label, counts=scale * (100 + rep + i), monitor=1000)
        for rep in (1, 2, 3) for i, basis in enumerate(PROJECTION_BASES)
    ]


def test_summarize_hand_computed():
    """Test means and standard errors on a three-repetition fixture"""
    results = [_result(p) for p in (0.9, 0.8, 0.7)]
    summary = summarize(results, basis_ket(0.0), _records(0), loss_rate(_records(0)))
    assert summary.F_mean == pytest.approx(0.8, abs=1e-12)
    assert summary.F_stderr == pytest.approx(0.1 / math.sqrt(3), abs=1e-12)
    purities = [0.82, 0.68, 0.58]
    P_mean = sum(purities) / 3
    assert summary.P_mean == pytest.approx(P_mean, abs=1e-12)
    assert summary.P_stderr == pytest.approx(
        math.sqrt(sum((p - P_mean) ** 2 for p in purities) / 6), abs=1e-12)
    assert summary.p_sur_hat == 1.0
    assert summary.k == 0


def test_summarize_identical_results_have_zero_stderr():
    """Test zero spread for identical reconstructions"""
    summary = summarize([_result(0.6)] * 4, basis_ket(0.0), _records(1), 1.0)
    assert summary.F_stderr == 0.0
    assert summary.P_stderr == 0.0


def test_summarize_clips_and_validates():
    """Test clipping of p_sur_hat and the N_T and L_0 checks"""
    reference = loss_rate(_records(0))
    summary = summarize([_result(0.9)] * 2, basis_ket(0.0), _records(1, scale=2), reference)
    assert summary.p_sur_hat == 1.0
    with pytest.raises(ValueError):
        summarize([_result(0.9)], basis_ket(0.0), _records(1), reference)
    with pytest.raises(ValueError):
        summarize([_result(0.9)] * 2, basis_ket(0.0), _records(1), 0.0)
    with pytest.raises(ValueError):
        summarize([_result(0.9)] * 2, basis_ket(0.0), _records(0) + _records(1), reference)


def test_counts_csv_round_trip(tmp_path):
    """Test that count records survive a CSV round trip exactly"""
    records = simulate_counts(random_density_matrix(np.random.default_rng(3)), 1e4, 3, seed=8, k=4)
    path = str(tmp_path / "counts.csv")
    write_counts_csv(records, path)
    assert read_counts_csv(path) == records
    with open(path) as f:
        assert f.readline().strip() == "k,repetition,basis,counts,monitor"


def test_counts_csv_rejects_malformed_rows(tmp_path):
    """Test header and row validation"""
    bad_header = tmp_path / "header.csv"
    bad_header.write_text("k,rep,basis,counts,monitor\n")
    with pytest.raises(ValueError):
        read_counts_csv(str(bad_header))
    bad_row = tmp_path / "row.csv"
    bad_row.write_text("k,repetition,basis,counts,monitor\n0,1,X,5,10\n")
    with pytest.raises(ValueError, match=":2:"):
        read_counts_csv(str(bad_row))
    zero_monitor = tmp_path / "monitor.csv"
    zero_monitor.write_text("k,repetition,basis,counts,monitor\n0,1,H,5,0\n")
    with pytest.raises(ValueError):
        read_counts_csv(str(zero_monitor))

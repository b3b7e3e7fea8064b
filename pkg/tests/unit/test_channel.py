import pytest
import math
import numpy as np

from qsup.channel import (
    ANCILLA_A, ANCILLA_B, JointState, ancilla_state, decoherence_block, dephasing_kraus, prepare,
    prepare_state, qze_kraus, reduce_qubit, reverse_swap, run_channel, survival_product, swap_embed,
    swap_unitary, zeno_project,
)
from qsup.environment import GaussianSuperposition, OverlapKernel
from qsup.qstate import (
    Ket, apply_kraus, basis_ket, fidelity, purity, random_density_matrix, random_ket, tensor,
)
from qsup.schemas import ChannelConfig


def _config(**overrides) -> ChannelConfig:
    values = dict(psi=math.pi / 4, xi=math.pi / 4, phi=0.0, d_per_block=1.07, n_blocks=4)
    values.update(overrides)
    return ChannelConfig(**values)


def test_unprotected_45_degrees_k4(d_over_sigma):
    """Test the unprotected endpoint against (1 + G)/2 and (1 + G^2)/2"""
    out = run_channel(_config(d_per_block=d_over_sigma))
    G = math.exp(-(4 * d_over_sigma) ** 2 / 8)
    rho = out.rho_out.normalized()
    assert fidelity(rho, basis_ket(math.pi / 4)) == pytest.approx((1 + G) / 2, abs=1e-12)
    assert purity(rho) == pytest.approx((1 + G ** 2) / 2, abs=1e-12)
    assert fidelity(rho, basis_ket(math.pi / 4)) <= 0.56
    assert out.survival_probability == pytest.approx(1.0, abs=1e-12)


def test_no_blocks_is_identity():
    """Test that k = 0 returns the input state in both modes"""
    for protected in (False, True):
        out = run_channel(_config(psi=0.35, xi=1.1, n_blocks=0, protected=protected))
        assert fidelity(out.rho_out, basis_ket(0.35)) == pytest.approx(1.0, abs=1e-12)
        assert out.survival_probability == pytest.approx(1.0, abs=1e-12)


def test_coupling_eigenstate_unaffected():
    """Test that |phi> itself does not decohere"""
    out = run_channel(_config(psi=0.0, n_blocks=6, d_per_block=2.0))
    assert purity(out.rho_out) == pytest.approx(1.0, abs=1e-12)


def test_protected_output_restores_input(d_over_sigma):
    """Test QSUP at xi = 45 deg, k = 4: the normalized output is the input, survival < 1"""
    config = _config(psi=math.radians(20), xi=math.radians(45), d_per_block=d_over_sigma, protected=True)
    out = run_channel(config)
    rho = out.rho_out.normalized()
    assert fidelity(rho, basis_ket(math.radians(20))) >= 1 - 1e-9
    assert purity(rho) >= 1 - 1e-9
    assert 0.73 <= out.survival_probability < 1.0
    assert out.survival_probability == pytest.approx(survival_product(config).value, abs=1e-10)


def test_protected_is_state_independent(rng):
    """Test that protection restores random inputs for random xi and phi"""
    for _ in range(50):
        psi, xi, phi = rng.uniform(0, math.pi, size=3)
        out = run_channel(_config(psi=psi, xi=xi, phi=phi, protected=True))
        rho = out.rho_out.normalized()
        assert fidelity(rho, basis_ket(psi)) >= 1 - 1e-9
        assert purity(rho) >= 1 - 1e-9


def test_survival_product_matches_joint_norm(rng):
    """Test the product formula against the JointState bookkeeping on random configurations"""
    for _ in range(100):
        psi, xi, phi = rng.uniform(0, math.pi, size=3)
        config = _config(
            psi=psi, xi=xi, phi=phi, d_per_block=float(rng.uniform(0, 3)),
            n_blocks=int(rng.integers(0, 7)), protected=True, use_ancilla=bool(rng.integers(0, 2)),
            project_after_last_block=bool(rng.integers(0, 2)),
        )
        assert abs(run_channel(config).survival_probability - survival_product(config).value) <= 1e-10


def test_survival_first_step_formula():
    """Test that one projection gives 1 - 2|d'|^2|e'|^2 (1 - G(0, d))"""
    config = _config(xi=0.3, n_blocks=1, d_per_block=1.5, protected=True)
    w = math.cos(0.3) ** 2
    expected = 1 - 2 * w * (1 - w) * (1 - math.exp(-1.5 ** 2 / 8))
    assert survival_product(config).value == pytest.approx(expected, abs=1e-14)


def test_survival_product_requires_protection():
    """Test that survival_product refuses unprotected configurations"""
    with pytest.raises(ValueError):
        survival_product(_config())


def test_worst_case_xi_is_45_degrees(d_over_sigma):
    """Test that survival is minimal at xi = 45 deg for k = 1..4"""
    for k in range(1, 5):
        survival = [
            survival_product(_config(psi=math.radians(x), xi=math.radians(x), n_blocks=k,
                                     d_per_block=d_over_sigma, protected=True)).value
            for x in range(91)
        ]
        assert int(np.argmin(survival)) == 45


def test_more_projections_increase_survival(d_over_sigma):
    """Test the Zeno trend at fixed total displacement"""
    total = 4 * d_over_sigma
    previous = 0.0
    for n in (1, 2, 4, 8, 16, 32, 64, 128, 256):
        p = survival_product(_config(n_blocks=n, d_per_block=total / n, protected=True)).value
        assert p > previous
        assert n * (1 - p) <= total ** 2 / 16 + 1e-12
        previous = p
    assert previous >= 0.995


def test_passive_transmission_applies_to_both_modes():
    """Test t^k scaling of the output trace"""
    for protected in (False, True):
        config = _config(n_blocks=3, passive_transmission_per_element=0.9, protected=protected)
        lossless = run_channel(config.model_copy(update={"passive_transmission_per_element": 1.0}))
        lossy = run_channel(config)
        assert lossy.survival_probability == pytest.approx(0.9 ** 3 * lossless.survival_probability, abs=1e-12)


def test_no_projection_after_last_block_leaves_residual_dephasing():
    """Test that skipping the final projection gives a non-pure output"""
    config = _config(protected=True, project_after_last_block=False, use_ancilla=False)
    rho = run_channel(config).rho_out.normalized()
    assert purity(rho) < 1 - 1e-3
    assert len(run_channel(config).trajectory) == 4


def test_dephasing_kraus_matches_dilation(rng):
    """Test the two-operator Kraus map against the partial-traced joint evolution"""
    for _ in range(20):
        qubit = random_ket(rng)
        phi = float(rng.uniform(0, math.pi))
        d = float(rng.uniform(0, 3))
        state = prepare_state(qubit, phi, 1.0)
        for k in range(7):
            if k:
                state = decoherence_block(state, d)
            kraus = dephasing_kraus(OverlapKernel(1.0)(0.0, k * d), phi)
            expected = apply_kraus(kraus, qubit.density_matrix())
            assert np.max(np.abs(expected.entries - reduce_qubit(state).entries)) <= 1e-10


def test_dephasing_kraus_on_mixed_input(rng):
    """Test equivalence on mixed inputs through linearity over their eigenvectors"""
    rho = random_density_matrix(rng)
    weights, vectors = np.linalg.eigh(rho.entries)
    phi, d, k = 0.4, 1.2, 3
    dilated = np.zeros((2, 2), dtype=complex)
    for weight, vector in zip(weights, vectors.T):
        state = prepare_state(Ket(vector), phi, 1.0)
        for _ in range(k):
            state = decoherence_block(state, d)
        dilated += weight * reduce_qubit(state).entries
    kraus = apply_kraus(dephasing_kraus(OverlapKernel(1.0)(0.0, k * d), phi), rho)
    assert np.allclose(kraus.entries, dilated, atol=1e-10)


def test_dephasing_kraus_edge_cases():
    """Test identity at c = 1, full dephasing at c = 0, rejection of |c| > 1"""
    rho = basis_ket(math.pi / 4).density_matrix()
    assert np.allclose(apply_kraus(dephasing_kraus(1.0, 0.0), rho).entries, rho.entries, atol=1e-12)
    assert np.allclose(apply_kraus(dephasing_kraus(0.0, 0.0), rho).entries, np.eye(2) / 2, atol=1e-12)
    with pytest.raises(ValueError):
        dephasing_kraus(1.5, 0.0)


def test_dephasing_kraus_complex_overlap():
    """Test that the coherence picks up the complex overlap c"""
    rho = basis_ket(math.pi / 4).density_matrix()
    c = 0.6 * np.exp(0.7j)
    out = apply_kraus(dephasing_kraus(c, 0.0), rho)
    assert out.entries[1, 0] == pytest.approx(0.5 * c, abs=1e-12)
    assert out.entries[0, 1] == pytest.approx(0.5 * np.conj(c), abs=1e-12)


def test_qze_kraus_single_operator():
    """Test that the Zeno map is sqrt(p_sur) times the projector onto the protected state"""
    config = _config(psi=0.3, xi=0.3, protected=True, use_ancilla=False)
    kraus = qze_kraus(config)
    assert len(kraus.operators) == 1
    out = apply_kraus(kraus, basis_ket(0.3).density_matrix())
    assert out.trace == pytest.approx(survival_product(config).value, abs=1e-12)
    assert np.allclose(out.entries, run_channel(config).rho_out.entries, atol=1e-10)


def test_swap_embeds_input_in_ancilla(rng):
    """Test SWAP(|psi>|A>) = |xi> (x) (alpha|A> + beta|B>) and its reversal"""
    for _ in range(10):
        psi = random_ket(rng)
        xi = float(rng.uniform(0, math.pi))
        embedded = swap_embed(psi, xi)
        alpha, beta = psi.amplitudes
        expected = tensor(basis_ket(xi), ANCILLA_A.scaled(alpha)).amplitudes + \
            tensor(basis_ket(xi), ANCILLA_B.scaled(beta)).amplitudes
        assert np.allclose(embedded.amplitudes, expected, atol=1e-12)
        assert np.allclose(ancilla_state(embedded, xi).amplitudes, [alpha, beta], atol=1e-12)
        assert np.allclose(reverse_swap(embedded, xi).amplitudes, tensor(psi, ANCILLA_A).amplitudes, atol=1e-12)


def test_swap_unitary_is_unitary():
    """Test unitarity of the swap for several xi"""
    for xi in (0.0, 0.3, math.pi / 4, 2.0):
        U = swap_unitary(xi).entries
        assert np.allclose(U.conj().T @ U, np.eye(4), atol=1e-12)


def test_zeno_projection_lands_on_target():
    """Test that the reduced state after a projection is proportional to the target"""
    target = basis_ket(0.6)
    state = decoherence_block(prepare(_config(psi=0.6, xi=0.6)), 1.5)
    projected = zeno_project(state, target)
    rho = reduce_qubit(projected)
    assert np.allclose(rho.normalized().entries, target.density_matrix().entries, atol=1e-12)
    assert projected.norm_squared < state.norm_squared


def test_orthogonal_projection_vanishes():
    """Test that projecting onto an orthogonal state yields a vanished state, not an error"""
    state = prepare_state(basis_ket(0.0), 0.0, 1.0)
    projected = zeno_project(state, basis_ket(math.pi / 2))
    assert projected.vanished
    assert projected.norm_squared == 0.0
    assert reduce_qubit(projected).trace == 0.0


def test_nearly_orthogonal_projection_survives():
    """Test that a small but physical overlap is kept, not flagged as vanished"""
    state = prepare_state(basis_ket(0.0), 0.0, 1.0)
    projected = zeno_project(state, basis_ket(math.pi / 2 - 1e-6))
    assert not projected.vanished
    assert projected.norm_squared == pytest.approx(1e-12, rel=1e-6)


def test_joint_state_rejects_mixed_widths():
    """Test that both branches share one width"""
    with pytest.raises(ValueError):
        JointState(0.0, GaussianSuperposition.single(1.0), GaussianSuperposition.single(2.0))


def test_trajectory_records_bare_overlaps(d_over_sigma):
    """Test that the unprotected trajectory holds G(0, kd)"""
    out = run_channel(_config(d_per_block=d_over_sigma))
    for record in out.trajectory:
        assert record.overlap.real == pytest.approx(math.exp(-(record.k * d_over_sigma) ** 2 / 8), abs=1e-12)


def test_config_rejects_bad_values():
    """Test ChannelConfig validation"""
    with pytest.raises(ValueError):
        _config(psi=float("nan"))
    with pytest.raises(ValueError):
        _config(n_blocks=-1)
    with pytest.raises(ValueError):
        _config(sigma=0.0)


def test_qze_kraus_one_block_example():
    """Test K = sqrt((1 + c)/2) Pi_xi at xi = 45 deg after one block"""
    config = _config(n_blocks=1, protected=True)
    c = math.exp(-1.07 ** 2 / 8)
    K = qze_kraus(config).operators[0].entries
    assert np.allclose(K, math.sqrt((1 + c) / 2) * basis_ket(math.pi / 4).projector().entries, atol=1e-12)


def test_swap_embed_examples():
    """Test the single-branch and balanced ancilla cases"""
    xi = 0.9
    assert np.allclose(swap_embed(basis_ket(0.0), xi).amplitudes, tensor(basis_ket(xi), ANCILLA_A).amplitudes)
    balanced = ancilla_state(swap_embed(basis_ket(math.pi / 4), xi), xi)
    assert np.allclose(balanced.amplitudes, [1 / math.sqrt(2), 1 / math.sqrt(2)])


def test_prepare_weights():
    """Test the branch weights of prepared states"""
    state = prepare(_config(psi=math.radians(20)))
    assert state.env_phi.norm_squared == pytest.approx(math.cos(math.radians(20)) ** 2, abs=1e-14)
    eigen = prepare(_config(psi=0.0))
    assert eigen.env_perp.norm_squared == 0.0


def test_projection_onto_current_direction_is_noop():
    """Test that projecting a product state onto its own qubit direction keeps the norm"""
    state = prepare(_config(psi=0.5))
    assert zeno_project(state, basis_ket(0.5)).norm_squared == pytest.approx(1.0, abs=1e-14)

"""
Joint qubit-environment evolution through discrete decoherence blocks.

The qubit couples to the transverse mode through H = gamma (Pi_phi (x) P_x): the
branch attached to |phi> is displaced by d per block, the |phi_perp> branch is left
alone. A protected run interleaves Zeno projections onto a known state; with the
path ancilla (QSUP) the unknown input is swapped out before the channel and swapped
back afterwards, so the projections never see it.
"""
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple
import math
import cmath

import numpy as np
from loguru import logger

from .environment import GaussianSuperposition, displace, overlap
from .qstate import (
    DensityMatrix, Ket, KrausMap, Operator, OperatorKind,
    basis_ket, partial_trace, tensor, STRUCTURE_TOL,
)
from .schemas import ChannelConfig

# projections keeping less than this fraction of the incoming norm^2 annihilate the state
VANISHED_FRACTION = 1e-20
OVERLAP_MAGNITUDE_TOL = 1e-12

# Path ancilla basis |A>, |B> (right tensor factor)
ANCILLA_A = Ket(np.array([1.0, 0.0]))
ANCILLA_B = Ket(np.array([0.0, 1.0]))


@dataclass(frozen=True, eq=False)
class JointState:
    """
    |Psi> = |phi> (x) |E_phi> + |phi_perp> (x) |E_perp>, qubit amplitudes absorbed into
    the branch weights. The squared norm is the survival probability of every
    projection applied so far.
    """
    coupling_angle: float
    env_phi: GaussianSuperposition
    env_perp: GaussianSuperposition

    def __post_init__(self):
        if not math.isfinite(self.coupling_angle):
            raise ValueError(f"coupling angle must be finite, got {self.coupling_angle}")
        if self.env_phi.sigma != self.env_perp.sigma:
            raise ValueError("Both environment branches must share one wavepacket width")
        if __debug__ and self.norm_squared > 1.0 + STRUCTURE_TOL:
            raise ValueError(f"JointState norm^2 {self.norm_squared:.12f} exceeds 1")

    @property
    def sigma(self) -> float:
        return self.env_phi.sigma

    @property
    def norm_squared(self) -> float:
        return self.env_phi.norm_squared + self.env_perp.norm_squared

    @property
    def vanished(self) -> bool:
        """True once a projection has annihilated the state"""
        return self.norm_squared == 0.0

    @property
    def basis(self) -> Tuple[Ket, Ket]:
        return basis_ket(self.coupling_angle, "plus"), basis_ket(self.coupling_angle, "perp")


class BlockRecord(NamedTuple):
    """One decoherence block: bare branch overlap <E_phi|E_perp> and the survival factor of the projection after it"""
    k: int
    overlap: Optional[complex]
    step_factor: float


@dataclass(frozen=True, eq=False)
class ChannelOutput:
    rho_out: DensityMatrix
    survival_probability: float
    trajectory: Tuple[BlockRecord, ...]

    def __post_init__(self):
        if abs(self.rho_out.trace - self.survival_probability) > STRUCTURE_TOL:
            raise ValueError(
                f"Output trace {self.rho_out.trace:.12f} differs from survival probability "
                f"{self.survival_probability:.12f}"
            )


class SurvivalProduct(NamedTuple):
    value: float
    factors: Tuple[float, ...]
    overlaps: Tuple[complex, ...]


def _decompose(qubit: Ket, phi: float) -> Tuple[complex, complex]:
    """(<phi|q>, <phi_perp|q>)"""
    return basis_ket(phi, "plus").inner(qubit), basis_ket(phi, "perp").inner(qubit)


def prepare_state(qubit: Ket, phi: float, sigma: float) -> JointState:
    """Product state |q> (x) |g_0>, split onto the coupling basis"""
    if qubit.dim != 2:
        raise ValueError(f"qubit must have dimension 2, got {qubit.dim}")
    delta, eta = _decompose(qubit, phi)
    return JointState(
        phi,
        GaussianSuperposition.single(sigma, 0.0, delta),
        GaussianSuperposition.single(sigma, 0.0, eta),
    )


def prepare(config: ChannelConfig) -> JointState:
    """Initial joint state of the input qubit |psi> with the undisplaced wavepacket"""
    return prepare_state(basis_ket(config.psi), config.phi, config.sigma)


def decoherence_block(state: JointState, d: float) -> JointState:
    """One birefringent block: the |phi> branch walks off by d"""
    if not (d >= 0 and math.isfinite(d)):
        raise ValueError(f"block displacement must be finite and non-negative, got {d}")
    return JointState(state.coupling_angle, displace(state.env_phi, d), state.env_perp)


def zeno_project(state: JointState, target: Ket) -> JointState:
    """Apply Pi_target (x) 1_E; the qubit ends exactly in |target>"""
    if target.dim != 2 or not target.is_normalized():
        raise ValueError("Zeno projection target must be a normalized qubit ket")
    plus, perp = state.basis
    collapsed = state.env_phi.scaled(target.inner(plus)).combined(
        state.env_perp.scaled(target.inner(perp))
    )
    delta, eta = _decompose(target, state.coupling_angle)
    projected = JointState(state.coupling_angle, collapsed.scaled(delta), collapsed.scaled(eta))
    if projected.norm_squared <= VANISHED_FRACTION * state.norm_squared:
        projected = JointState(state.coupling_angle, collapsed.scaled(0.0), collapsed.scaled(0.0))
    if projected.vanished:
        logger.warning("Zeno projection annihilated the joint state (target orthogonal to the qubit support)")
    return projected


def reduce_qubit(state: JointState) -> DensityMatrix:
    """Tr_E |Psi><Psi| in the {H, V} basis (unnormalized, trace = norm^2)"""
    branches = (state.env_phi, state.env_perp)
    rho_coupling = np.array([[overlap(branches[j], branches[i]) for j in range(2)] for i in range(2)])
    plus, perp = state.basis
    change = np.column_stack([plus.amplitudes, perp.amplitudes])
    rho = change @ rho_coupling @ change.conj().T
    return DensityMatrix(0.5 * (rho + rho.conj().T))


def _bare_overlap(state: JointState, amplitudes: Tuple[complex, complex]) -> Optional[complex]:
    """<E_phi|E_perp> of the branches with the qubit amplitudes and norms divided out"""
    delta, eta = amplitudes
    if abs(delta) == 0.0 or abs(eta) == 0.0 or state.vanished:
        return None
    e_phi = state.env_phi.scaled(1.0 / delta)
    e_perp = state.env_perp.scaled(1.0 / eta)
    return overlap(e_phi.normalized(), e_perp.normalized())


def survival_product(config: ChannelConfig) -> SurvivalProduct:
    """
    Product formula prod_k [1 - 2|d'|^2 |e'|^2 (1 - Re<E_phi^(k)|E_perp^(k)>)].

    Evaluated on the renormalized environment carried between projections; this is
    independent of the JointState bookkeeping in `run_channel`, which must agree with it.
    """
    if not config.protected:
        raise ValueError("survival_product needs a protected configuration")
    target = basis_ket(config.projected_state_angle)
    delta, eta = _decompose(target, config.phi)
    w_phi, w_perp = abs(delta) ** 2, abs(eta) ** 2
    env = GaussianSuperposition.single(config.sigma)
    factors, overlaps = [], []
    for _ in range(config.n_projections):
        e_phi = displace(env, config.d_per_block)
        c = overlap(e_phi, env)
        factor = 1.0 - 2.0 * w_phi * w_perp * (1.0 - c.real)
        factors.append(factor)
        overlaps.append(c)
        if factor <= VANISHED_FRACTION:
            logger.warning("Survival factor vanished; remaining steps contribute zero")
            factors.extend([0.0] * (config.n_projections - len(factors)))
            break
        env = e_phi.scaled(w_phi).combined(env.scaled(w_perp)).scaled(1.0 / math.sqrt(factor))
    value = float(np.prod(factors)) if factors else 1.0
    return SurvivalProduct(value, tuple(factors), tuple(overlaps))


def _require_overlap(overlap_c: complex) -> float:
    magnitude = abs(overlap_c)
    if not math.isfinite(magnitude) or magnitude > 1.0 + OVERLAP_MAGNITUDE_TOL:
        raise ValueError(f"|overlap| must be at most 1, got {magnitude}")
    return min(magnitude, 1.0)


def dephasing_kraus(overlap_c: complex, basis_angle: float) -> KrausMap:
    """Trace-preserving two-operator map that multiplies the |phi_perp><phi| coherence by c"""
    magnitude = _require_overlap(overlap_c)
    plus, perp = basis_ket(basis_angle, "plus"), basis_ket(basis_angle, "perp")
    change = np.column_stack([plus.amplitudes, perp.amplitudes])
    phase = cmath.exp(-1j * cmath.phase(overlap_c)) if magnitude > 0 else 1.0
    rotation = change @ np.diag([phase, 1.0]) @ change.conj().T
    z_phi = change @ np.diag([1.0, -1.0]) @ change.conj().T
    operators = (
        Operator(math.sqrt((1.0 + magnitude) / 2.0) * rotation, OperatorKind.kraus),
        Operator(math.sqrt((1.0 - magnitude) / 2.0) * z_phi @ rotation, OperatorKind.kraus),
    )
    return KrausMap(operators, trace_preserving=True)


def qze_kraus(config: ChannelConfig) -> KrausMap:
    """Single Kraus operator sqrt(p_sur) |xi><xi| of the Zeno-protected channel"""
    p_sur = survival_product(config).value
    projector = basis_ket(config.projected_state_angle).projector()
    return KrausMap((Operator(math.sqrt(p_sur) * projector.entries, OperatorKind.kraus),), trace_preserving=False)


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def swap_unitary(xi: float) -> Operator:
    """
    Polarization-path swap onto the known state |xi>.

    A PBS couples polarization to path (|V,A> <-> |V,B>), then a rotation in each arm
    takes the surviving polarization to |xi>.
    """
    pbs = np.eye(4)
    pbs[[2, 3]] = pbs[[3, 2]]
    arm_a = ANCILLA_A.projector().entries
    arm_b = ANCILLA_B.projector().entries
    rotations = np.kron(_rotation(xi), arm_a) + np.kron(_rotation(xi - math.pi / 2), arm_b)
    return Operator(rotations @ pbs, OperatorKind.unitary)


def swap_embed(qubit: Ket, xi: float) -> Ket:
    """SWAP (|q> (x) |A>) = |xi> (x) (alpha|A> + beta|B>)"""
    if qubit.dim != 2 or not qubit.is_normalized():
        raise ValueError("swap_embed needs a normalized qubit ket")
    return swap_unitary(xi).apply(tensor(qubit, ANCILLA_A))


def reverse_swap(embedded: Ket, xi: float) -> Ket:
    return swap_unitary(xi).dagger().apply(embedded)


def ancilla_state(embedded: Ket, xi: float) -> Ket:
    """(<xi| (x) 1) on an embedded state: the path superposition carrying the qubit"""
    grid = embedded.amplitudes.reshape(2, 2)
    return Ket(basis_ket(xi).amplitudes.conj() @ grid)


def run_channel(config: ChannelConfig) -> ChannelOutput:
    """Unprotected dephasing, or Zeno protection with or without the path-ancilla swap"""
    transmission = config.passive_transmission
    trajectory = []

    if not config.protected:
        qubit = basis_ket(config.psi)
        amplitudes = _decompose(qubit, config.phi)
        state = prepare(config)
        for k in range(1, config.n_blocks + 1):
            state = decoherence_block(state, config.d_per_block)
            trajectory.append(BlockRecord(k, _bare_overlap(state, amplitudes), 1.0))
        rho_out = reduce_qubit(state).scaled(transmission)
        return ChannelOutput(rho_out, rho_out.trace, tuple(trajectory))

    target = basis_ket(config.projected_state_angle)
    amplitudes = _decompose(target, config.phi)
    state = prepare_state(target, config.phi, config.sigma)
    for k in range(1, config.n_blocks + 1):
        state = decoherence_block(state, config.d_per_block)
        bare = _bare_overlap(state, amplitudes)
        factor = 1.0
        if k < config.n_blocks or config.project_after_last_block:
            before = state.norm_squared
            state = zeno_project(state, target)
            factor = state.norm_squared / before if before > 0 else 0.0
        trajectory.append(BlockRecord(k, bare, factor))
        logger.debug(f"Block {k}: overlap={bare}, step factor={factor:.12f}")

    rho_system = reduce_qubit(state)
    if config.use_ancilla:
        embedded = swap_embed(basis_ket(config.psi), config.xi)
        joint = tensor(rho_system, ancilla_state(embedded, config.xi).density_matrix())
        restored = swap_unitary(config.xi).dagger().sandwich(joint)
        rho_qubit = partial_trace(restored, (2, 2), keep="left")
    else:
        rho_qubit = rho_system
    survival = state.norm_squared * transmission
    rho_out = rho_qubit.scaled(transmission)
    return ChannelOutput(rho_out, survival, tuple(trajectory))

"""
Six-basis polarization tomography: shot-noise count simulation, maximum-likelihood
reconstruction and the mean fidelity / purity / survival-probability statistics.
"""
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
import csv
import math

import numpy as np
from loguru import logger
from pydantic import ValidationError

from .qstate import DensityMatrix, Ket, fidelity, purity
from .schemas import BasisLabel, CountRecord, RunSummary

CSV_COLUMNS = ["k", "repetition", "basis", "counts", "monitor"]
MLE_TOL = 1e-10
MLE_MAX_ITERATIONS = 10_000
MIN_DILUTION = 1e-8

_SQRT_HALF = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ProjectionBasis:
    label: BasisLabel
    ket: Ket


PROJECTION_BASES: Tuple[ProjectionBasis, ...] = (
    ProjectionBasis(BasisLabel.H, Ket(np.array([1.0, 0.0]))),
    ProjectionBasis(BasisLabel.V, Ket(np.array([0.0, 1.0]))),
    ProjectionBasis(BasisLabel.D, Ket(np.array([_SQRT_HALF, _SQRT_HALF]))),
    ProjectionBasis(BasisLabel.A, Ket(np.array([_SQRT_HALF, -_SQRT_HALF]))),
    ProjectionBasis(BasisLabel.L, Ket(np.array([_SQRT_HALF, 1j * _SQRT_HALF]))),
    ProjectionBasis(BasisLabel.R, Ket(np.array([_SQRT_HALF, -1j * _SQRT_HALF]))),
)
BASIS_INDEX = {basis.label: i for i, basis in enumerate(PROJECTION_BASES)}

# Complete pairs, in Bloch-axis order x (D/A), y (L/R), z (H/V)
BLOCH_PAIRS = ((2, 3), (4, 5), (0, 1))
PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)

_PROJECTORS = np.array([np.outer(b.ket.amplitudes, b.ket.amplitudes.conj()) for b in PROJECTION_BASES])


@dataclass(frozen=True, eq=False)
class TomographyResult:
    rho_hat: DensityMatrix
    log_likelihood: float
    iterations: int
    converged: bool
    history: Tuple[float, ...] = ()

    def __post_init__(self):
        if not self.rho_hat.is_normalized(1e-10):
            raise ValueError(f"Reconstructed state has trace {self.rho_hat.trace:.12f}")


def _counter_stream(seed: int, key: Sequence[int]) -> np.random.Generator:
    """Counter-based generator for one (stream..., k, repetition, basis) window"""
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(int(x) for x in key))
    return np.random.Generator(np.random.Philox(sequence))


def simulate_counts(
    rho: DensityMatrix,
    shots_mean: float,
    n_repetitions: int,
    seed: int,
    k: int = 0,
    monitor_fraction: float = 1.0,
    stream: Sequence[int] = (),
) -> List[CountRecord]:
    """
    Poisson counts for every repetition and basis.

    rho may be unnormalized: its trace is transmission times survival. Each window
    draws from its own stream keyed by (stream, k, repetition, basis), so parallel and
    serial callers get identical counts.
    """
    if not shots_mean > 0:
        raise ValueError(f"shots_mean must be positive, got {shots_mean}")
    if n_repetitions < 1:
        raise ValueError(f"n_repetitions must be at least 1, got {n_repetitions}")
    if rho.dim != 2:
        raise ValueError(f"Tomography is single-qubit, got dimension {rho.dim}")
    records = []
    for repetition in range(1, n_repetitions + 1):
        for index, basis in enumerate(PROJECTION_BASES):
            rng = _counter_stream(seed, tuple(stream) + (k, repetition, index))
            expected = shots_mean * max(rho.probability(basis.ket), 0.0)
            counts = int(rng.poisson(expected))
            # M > 0 is required by the loss estimator
            monitor = max(int(rng.poisson(shots_mean * monitor_fraction)), 1)
            records.append(CountRecord(k=k, repetition=repetition, basis=basis.label, counts=counts, monitor=monitor))
    logger.debug(f"Simulated {len(records)} count windows for k={k} (trace {rho.trace:.6f})")
    return records


def _probabilities(rho: np.ndarray) -> np.ndarray:
    return np.einsum("kij,ji->k", _PROJECTORS, rho).real


def _log_likelihood(rho: np.ndarray, counts: np.ndarray, mask: np.ndarray) -> float:
    p = _probabilities(rho)[mask]
    if np.any(p <= 0):
        return -math.inf
    return float(np.sum(counts[mask] * np.log(p / 3.0)))


def linear_inversion_seed(counts: np.ndarray) -> np.ndarray:
    """Bloch vector from the three complete pairs, pulled onto the unit ball"""
    bloch = np.zeros(3)
    for axis, (plus, minus) in enumerate(BLOCH_PAIRS):
        total = counts[plus] + counts[minus]
        if total > 0:
            bloch[axis] = (counts[plus] - counts[minus]) / total
    length = np.linalg.norm(bloch)
    if length > 1.0:
        bloch /= length
    return 0.5 * (np.eye(2) + np.einsum("a,aij->ij", bloch, PAULI))


def mle_fit(
    counts: Sequence[float],
    initial: Optional[DensityMatrix] = None,
    max_iterations: int = MLE_MAX_ITERATIONS,
    tol: float = MLE_TOL,
) -> TomographyResult:
    """
    Diluted R rho R maximum-likelihood fit on per-basis counts ordered as PROJECTION_BASES.

    Counts may be real-valued weights (exact probabilities work). Without a starting
    state the iteration begins at the physical linear-inversion estimate, which is
    already the fixed point for noise-free data inside the Bloch ball.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.shape != (len(PROJECTION_BASES),):
        raise ValueError(f"Need one count per basis ({len(PROJECTION_BASES)}), got shape {counts.shape}")
    if np.any(counts < 0) or not np.all(np.isfinite(counts)):
        raise ValueError("counts must be finite and non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("At least one basis needs a nonzero count")
    mask = counts > 0

    rho = initial.normalized().entries.copy() if initial is not None else linear_inversion_seed(counts)
    log_likelihood = _log_likelihood(rho, counts, mask)
    if not math.isfinite(log_likelihood):
        rho = 0.999 * rho + 0.0005 * np.eye(2)
        log_likelihood = _log_likelihood(rho, counts, mask)
    history = [log_likelihood]

    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        p = _probabilities(rho)
        weights = np.where(mask, counts / (total * np.where(mask, p, 1.0)), 0.0)
        R = np.einsum("k,kij->ij", weights, _PROJECTORS)
        candidate = R @ rho @ R
        candidate = 0.5 * (candidate + candidate.conj().T)
        candidate /= np.trace(candidate).real
        candidate_ll = _log_likelihood(candidate, counts, mask)

        epsilon = 1.0
        while candidate_ll < log_likelihood and epsilon > MIN_DILUTION:
            epsilon *= 0.5
            diluted = (1.0 - epsilon) * rho + epsilon * candidate
            diluted_ll = _log_likelihood(diluted, counts, mask)
            if diluted_ll >= log_likelihood:
                candidate, candidate_ll = diluted, diluted_ll
                logger.debug(f"Diluted R rho R step accepted at epsilon={epsilon:.3g}")
                break
        if candidate_ll < log_likelihood:
            # no ascent left along the R rho R direction
            converged = True
            break

        update = float(np.max(np.abs(candidate - rho)))
        rho, log_likelihood = candidate, candidate_ll
        history.append(log_likelihood)
        if update < tol:
            converged = True
            break

    if not converged:
        logger.warning(f"MLE did not converge in {max_iterations} iterations")
    return TomographyResult(DensityMatrix(rho), log_likelihood, iterations, converged, tuple(history))


def count_vector(records: Iterable[CountRecord]) -> np.ndarray:
    """Counts of one acquisition ordered as PROJECTION_BASES; every basis exactly once"""
    records = list(records)
    keys = {(r.k, r.repetition) for r in records}
    if len(keys) != 1:
        raise ValueError(f"Records must come from a single (k, repetition), got {sorted(keys)}")
    counts = np.full(len(PROJECTION_BASES), -1.0)
    for record in records:
        index = BASIS_INDEX[record.basis]
        if counts[index] >= 0:
            raise ValueError(f"Basis {record.basis.value} appears twice")
        counts[index] = record.counts
    missing = [PROJECTION_BASES[i].label.value for i in range(len(counts)) if counts[i] < 0]
    if missing:
        raise ValueError(f"Missing projection bases: {', '.join(missing)}")
    return counts


def mle_reconstruct(records: Sequence[CountRecord]) -> TomographyResult:
    """Maximum-likelihood state of one (k, repetition) acquisition"""
    result = mle_fit(count_vector(records))
    logger.debug(
        f"Reconstructed k={records[0].k} repetition={records[0].repetition} "
        f"in {result.iterations} iterations (converged={result.converged})"
    )
    return result


def group_by_acquisition(records: Iterable[CountRecord]) -> Dict[int, Dict[int, List[CountRecord]]]:
    """k -> repetition -> records"""
    grouped: Dict[int, Dict[int, List[CountRecord]]] = defaultdict(lambda: defaultdict(list))
    for record in records:
        grouped[record.k][record.repetition].append(record)
    return {k: dict(reps) for k, reps in sorted(grouped.items())}


def loss_rate(records: Iterable[CountRecord]) -> float:
    """L_k = sum over bases of mean counts / mean monitor counts across repetitions"""
    counts: Dict[BasisLabel, List[int]] = defaultdict(list)
    monitor: Dict[BasisLabel, List[int]] = defaultdict(list)
    for record in records:
        counts[record.basis].append(record.counts)
        monitor[record.basis].append(record.monitor)
    if not counts:
        raise ValueError("loss_rate needs at least one record")
    return float(sum(np.mean(counts[b]) / np.mean(monitor[b]) for b in counts))


def summarize(
    results: Sequence[TomographyResult],
    target: Ket,
    records: Sequence[CountRecord],
    reference_loss: float,
) -> RunSummary:
    """Mean fidelity and purity with standard errors, and p_sur = L_k / L_0"""
    n_trials = len(results)
    if n_trials < 2:
        raise ValueError(f"Need at least 2 repetitions for a standard error, got {n_trials}")
    if not reference_loss > 0:
        raise ValueError(f"reference_loss must be positive, got {reference_loss}")
    ks = {record.k for record in records}
    if len(ks) != 1:
        raise ValueError(f"Records must share one block count, got {sorted(ks)}")

    fidelities = np.array([fidelity(result.rho_hat, target) for result in results])
    purities = np.array([purity(result.rho_hat) for result in results])
    p_sur_hat = loss_rate(records) / reference_loss
    if p_sur_hat > 1.0:
        logger.warning(f"p_sur estimate {p_sur_hat:.6f} exceeds 1 through shot noise; clipped")
    return RunSummary(
        k=ks.pop(),
        F_mean=float(fidelities.mean()),
        F_stderr=float(fidelities.std(ddof=1) / math.sqrt(n_trials)),
        P_mean=float(purities.mean()),
        P_stderr=float(purities.std(ddof=1) / math.sqrt(n_trials)),
        p_sur_hat=float(min(max(p_sur_hat, 0.0), 1.0)),
    )


def write_counts_csv(records: Iterable[CountRecord], path: str) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([r.k, r.repetition, r.basis.value, r.counts, r.monitor])
    logger.info(f"Count records written to {path}")


def read_counts_csv(path: str) -> List[CountRecord]:
    """Parse a counts CSV; malformed rows raise ValueError naming the line"""
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != CSV_COLUMNS:
            raise ValueError(f"{path}: header must be {','.join(CSV_COLUMNS)}, got {header}")
        records = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(CSV_COLUMNS):
                raise ValueError(f"{path}:{line}: expected {len(CSV_COLUMNS)} columns, got {len(row)}")
            try:
                records.append(CountRecord(**dict(zip(CSV_COLUMNS, row))))
            except ValidationError as e:
                raise ValueError(f"{path}:{line}: {e.errors()[0]['loc'][0]}: {e.errors()[0]['msg']}")
    logger.info(f"Read {len(records)} count records from {path}")
    return records

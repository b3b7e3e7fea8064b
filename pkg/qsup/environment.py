"""
Analytic model of the environment: the photon's transverse spatial mode.

A component centred at ``c`` is the normalized Gaussian

    g_c(x) = (2 pi sigma^2)^(-1/4) exp(-(x - c)^2 / (4 sigma^2))

so that |g_c|^2 has standard deviation sigma and <g_a|g_b> = exp(-(a-b)^2 / (8 sigma^2)).
Displacement is exact on this representation: after k blocks of walk-off d every
branch lives in the span of Gaussians centred on {0, d, ..., kd}.
"""
from dataclasses import dataclass
from typing import Iterable, List, Tuple
import math

import numpy as np
from loguru import logger
from scipy.integrate import trapezoid

MERGE_FRACTION = 1e-12    # components closer than this many sigmas are merged
ORACLE_MARGIN_SIGMAS = 8.0
ORACLE_MIN_POINTS = 2048


@dataclass(frozen=True)
class OverlapKernel:
    """G(a, b) = exp(-(a - b)^2 / (8 sigma^2))"""
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")

    def __call__(self, a: float, b: float) -> float:
        return math.exp(-((a - b) ** 2) / (8.0 * self.sigma ** 2))

    def matrix(self, centers_a: np.ndarray, centers_b: np.ndarray) -> np.ndarray:
        delta = np.subtract.outer(np.asarray(centers_a, dtype=float), np.asarray(centers_b, dtype=float))
        return np.exp(-(delta ** 2) / (8.0 * self.sigma ** 2))


def _canonical(sigma: float, centers: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sort by center, merge near-coincident centers, drop exact-zero weights"""
    order = np.argsort(centers, kind="stable")
    centers, weights = centers[order], weights[order]
    threshold = MERGE_FRACTION * sigma
    merged_centers: List[float] = []
    merged_weights: List[complex] = []
    for center, weight in zip(centers, weights):
        if merged_centers and abs(center - merged_centers[-1]) < threshold:
            merged_weights[-1] += weight
        else:
            merged_centers.append(float(center))
            merged_weights.append(complex(weight))
    keep = [i for i, w in enumerate(merged_weights) if w != 0]
    if not keep:
        # the zero vector still carries one component
        keep = [0]
    return np.array([merged_centers[i] for i in keep]), np.array([merged_weights[i] for i in keep], dtype=complex)


@dataclass(frozen=True, eq=False)
class GaussianSuperposition:
    """Finite superposition of equal-width displaced Gaussians, kept in canonical form."""
    sigma: float
    centers: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")
        centers = np.array(self.centers, dtype=float).reshape(-1)
        weights = np.array(self.weights, dtype=complex).reshape(-1)
        if centers.size == 0:
            raise ValueError("GaussianSuperposition needs at least one component")
        if centers.size != weights.size:
            raise ValueError(f"{centers.size} centers but {weights.size} weights")
        if not (np.all(np.isfinite(centers)) and np.all(np.isfinite(weights))):
            raise ValueError("centers and weights must be finite")
        centers, weights = _canonical(float(self.sigma), centers, weights)
        centers.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def single(cls, sigma: float, center: float = 0.0, weight: complex = 1.0) -> "GaussianSuperposition":
        return cls(sigma, np.array([center]), np.array([weight]))

    @classmethod
    def from_components(cls, sigma: float, components: Iterable[Tuple[float, complex]]) -> "GaussianSuperposition":
        components = list(components)
        return cls(sigma, np.array([c for c, _ in components]), np.array([w for _, w in components]))

    @property
    def components(self) -> List[Tuple[float, complex]]:
        return [(float(c), complex(w)) for c, w in zip(self.centers, self.weights)]

    @property
    def kernel(self) -> OverlapKernel:
        return OverlapKernel(self.sigma)

    @property
    def norm_squared(self) -> float:
        value = overlap(self, self).real
        if value < -1e-12:
            raise ValueError(f"Negative squared norm {value:.3e}: kernel lost positive definiteness")
        return max(value, 0.0)

    def scaled(self, factor: complex) -> "GaussianSuperposition":
        return GaussianSuperposition(self.sigma, self.centers, self.weights * factor)

    def normalized(self) -> "GaussianSuperposition":
        norm_squared = self.norm_squared
        if norm_squared == 0.0:
            raise ValueError("Cannot normalize a zero-norm superposition")
        return self.scaled(1.0 / math.sqrt(norm_squared))

    def combined(self, other: "GaussianSuperposition") -> "GaussianSuperposition":
        """Vector sum of two superpositions of the same width"""
        _require_same_width(self, other)
        return GaussianSuperposition(
            self.sigma,
            np.concatenate([self.centers, other.centers]),
            np.concatenate([self.weights, other.weights]),
        )

    def amplitude(self, x: np.ndarray) -> np.ndarray:
        """Wavefunction sampled on a grid"""
        x = np.asarray(x, dtype=float)
        prefactor = (2.0 * math.pi * self.sigma ** 2) ** -0.25
        profiles = np.exp(-(np.subtract.outer(x, self.centers) ** 2) / (4.0 * self.sigma ** 2))
        return prefactor * profiles @ self.weights


def _require_same_width(a: GaussianSuperposition, b: GaussianSuperposition) -> None:
    if a.sigma != b.sigma:
        raise ValueError(f"Wavepacket widths differ ({a.sigma} vs {b.sigma}); unequal widths are not supported")


def displace(env: GaussianSuperposition, d: float) -> GaussianSuperposition:
    """Rigid translation by d, the action of exp(-i gamma t P_x)"""
    if not math.isfinite(d):
        raise ValueError(f"displacement must be finite, got {d}")
    return GaussianSuperposition(env.sigma, env.centers + d, env.weights)


def overlap(a: GaussianSuperposition, b: GaussianSuperposition) -> complex:
    """<a|b>, antilinear in a"""
    _require_same_width(a, b)
    gram = a.kernel.matrix(a.centers, b.centers)
    return complex(a.weights.conj() @ gram @ b.weights)


@dataclass(frozen=True)
class GridSpec:
    """Uniform integration grid for the numerical oracle"""
    x_min: float
    x_max: float
    n_points: int

    @classmethod
    def covering(cls, *envs: GaussianSuperposition, margin_sigmas: float = 10.0,
                 n_points: int = 4096) -> "GridSpec":
        sigma = envs[0].sigma
        lo = min(float(env.centers.min()) for env in envs)
        hi = max(float(env.centers.max()) for env in envs)
        return cls(lo - margin_sigmas * sigma, hi + margin_sigmas * sigma, n_points)


def grid_oracle_overlap(a: GaussianSuperposition, b: GaussianSuperposition, grid: GridSpec) -> complex:
    """Trapezoidal integral of conj(a(x)) b(x); an independent check on `overlap`"""
    _require_same_width(a, b)
    if grid.n_points < ORACLE_MIN_POINTS:
        raise ValueError(f"grid needs at least {ORACLE_MIN_POINTS} points, got {grid.n_points}")
    lo = min(a.centers.min(), b.centers.min()) - ORACLE_MARGIN_SIGMAS * a.sigma
    hi = max(a.centers.max(), b.centers.max()) + ORACLE_MARGIN_SIGMAS * a.sigma
    if grid.x_min > lo or grid.x_max < hi:
        raise ValueError(
            f"grid [{grid.x_min}, {grid.x_max}] does not cover [{lo}, {hi}] "
            f"({ORACLE_MARGIN_SIGMAS:g} sigma beyond the extreme centers)"
        )
    x = np.linspace(grid.x_min, grid.x_max, grid.n_points)
    integrand = np.conj(a.amplitude(x)) * b.amplitude(x)
    value = complex(trapezoid(integrand, x))
    logger.debug(f"Grid oracle overlap on {grid.n_points} points: {value:.12g}")
    return value

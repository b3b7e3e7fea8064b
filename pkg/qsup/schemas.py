from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Optional, Dict, Any, List
from enum import Enum
import math


class BasisLabel(str, Enum):
    """The six tomographic projection settings"""
    H = "H"
    V = "V"
    D = "D"
    A = "A"
    L = "L"
    R = "R"


class RunMode(str, Enum):
    unprotected = "unprotected"
    protected = "protected"


def _finite(name: str, value: float) -> float:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite")
    return value


class ChannelConfig(BaseModel):
    """One run through the decoherence channel. Angles in radians."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    psi: float = Field(..., description="Input state angle")
    xi: float = Field(..., description="Protected (known) state angle")
    phi: float = Field(0.0, description="Coupling basis angle")
    d_per_block: float = Field(..., ge=0.0, description="Walk-off displacement per decoherence block")
    sigma: float = Field(1.0, gt=0.0, description="Wavepacket width")
    n_blocks: int = Field(..., ge=0, description="Number of decoherence blocks")
    protected: bool = Field(False, description="Interleave Zeno projections")
    project_after_last_block: bool = Field(True, description="Project after the final block too")
    passive_transmission_per_element: float = Field(1.0, gt=0.0, le=1.0, description="Optical transmission per block")
    use_ancilla: bool = Field(True, description="Swap into the path ancilla (QSUP) or project onto psi directly")

    @field_validator('psi', 'xi', 'phi', 'd_per_block', 'sigma')
    def validate_finite(cls, v, info):
        return _finite(info.field_name, v)

    @property
    def projected_state_angle(self) -> float:
        """Angle of the state the Zeno projections are aimed at"""
        return self.xi if self.use_ancilla else self.psi

    @property
    def n_projections(self) -> int:
        if not self.protected or self.n_blocks == 0:
            return 0
        return self.n_blocks if self.project_after_last_block else self.n_blocks - 1

    @property
    def passive_transmission(self) -> float:
        return self.passive_transmission_per_element ** self.n_blocks


class CountRecord(BaseModel):
    """Counts of one basis setting in one 1-second acquisition window"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    k: int = Field(..., ge=0)
    repetition: int = Field(..., ge=1)
    basis: BasisLabel
    counts: int = Field(..., ge=0)
    monitor: int = Field(..., gt=0)


class RunSummary(BaseModel):
    k: int = Field(..., ge=0)
    F_mean: float = Field(..., ge=0.0, le=1.0)
    F_stderr: float = Field(..., ge=0.0)
    P_mean: float = Field(..., ge=0.0, le=1.0)
    P_stderr: float = Field(..., ge=0.0)
    p_sur_hat: float = Field(..., ge=0.0, le=1.0)


class FigureRow(BaseModel):
    mode: RunMode
    psi_deg: float
    xi_deg: Optional[float] = Field(None, description="Empty for unprotected rows")
    k: int
    F_mean: float
    F_stderr: float
    P_mean: float
    P_stderr: float
    p_sur_hat: float
    p_sur_analytic: float


FIGURE_COLUMNS = list(FigureRow.model_fields)


class FigureTable(BaseModel):
    rows: List[FigureRow] = Field(default_factory=list)

    def cell(self, mode: RunMode, psi_deg: float, xi_deg: Optional[float], k: int) -> FigureRow:
        for row in self.rows:
            if row.mode == mode and row.psi_deg == psi_deg and row.xi_deg == xi_deg and row.k == k:
                return row
        raise KeyError(f"No row for ({mode.value}, psi={psi_deg}, xi={xi_deg}, k={k})")


class ZenoRow(BaseModel):
    xi_deg: float
    n_steps: int
    d_per_step: float
    p_sur: float
    loss_bound: float


class SweepSpec(BaseModel):
    """Flat run configuration; angles in degrees."""
    model_config = ConfigDict(extra="forbid")

    psi_list: List[float] = Field(..., description="Input state angles (deg)")
    xi_list: List[float] = Field(..., description="Protected state angles (deg)")
    phi_deg: float = Field(0.0, description="Coupling basis angle (deg)")
    k_max: int = Field(4, ge=0)
    d_over_sigma: float = Field(..., ge=0.0, description="Walk-off per block in units of the wavepacket width")
    n_repetitions: int = Field(30, ge=2)
    shots_mean: float = Field(5e4, gt=0.0, description="Mean heralded counts per 1 s window")
    seed: int = Field(0, ge=0)
    protected: bool = Field(True, description="Also sweep the protected mode")
    project_after_last_block: bool = True
    passive_transmission_per_element: float = Field(1.0, gt=0.0, le=1.0)
    monitor_fraction: float = Field(1.0, gt=0.0)
    workers: int = Field(1, ge=1)
    use_ancilla: bool = True
    zeno_steps: List[int] = Field(default_factory=lambda: [2 ** i for i in range(9)])
    output_dir: str = "results"

    @field_validator('psi_list', 'xi_list')
    def validate_angle_list(cls, v, info):
        if not v:
            raise ValueError(f'{info.field_name} must not be empty')
        for angle in v:
            _finite(info.field_name, angle)
        return v

    @field_validator('zeno_steps')
    def validate_zeno_steps(cls, v):
        if not v or any(n < 1 for n in v):
            raise ValueError('zeno_steps must be a non-empty list of positive integers')
        return sorted(set(v))

    @property
    def sigma(self) -> float:
        return 1.0

    @property
    def modes(self) -> List[RunMode]:
        if self.protected:
            return [RunMode.unprotected, RunMode.protected]
        return [RunMode.unprotected]

    def channel_config(self, mode: RunMode, psi_deg: float, xi_deg: Optional[float], k: int) -> ChannelConfig:
        """Convert one sweep cell into a ChannelConfig (degrees to radians here)"""
        xi = xi_deg if xi_deg is not None else psi_deg
        return ChannelConfig(
            psi=math.radians(psi_deg),
            xi=math.radians(xi),
            phi=math.radians(self.phi_deg),
            d_per_block=self.d_over_sigma * self.sigma,
            sigma=self.sigma,
            n_blocks=k,
            protected=mode == RunMode.protected,
            project_after_last_block=self.project_after_last_block,
            passive_transmission_per_element=self.passive_transmission_per_element,
            use_ancilla=self.use_ancilla,
        )


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: Dict[str, Any] = Field(default_factory=dict)


class AcceptanceReport(BaseModel):
    passed: bool
    seed: int
    elapsed_seconds: float
    checks: List[CheckResult]

    @model_validator(mode='after')
    def validate_passed(self):
        if self.passed != all(check.passed for check in self.checks):
            raise ValueError('passed must equal the conjunction of the checks')
        return self

"""
Sweep orchestration: protected and unprotected runs over (psi, xi, k), their
closed-form counterparts, the Zeno-limit study and the table writers.
"""
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple
import csv
import io
import json
import math
import os
import time

from loguru import logger
from pydantic import BaseModel

from .channel import run_channel, survival_product
from .qstate import basis_ket, fidelity, purity
from .schemas import (
    ChannelConfig, FigureRow, FigureTable, RunMode, SweepSpec, ZenoRow, FIGURE_COLUMNS,
)
from .tomography import group_by_acquisition, loss_rate, mle_reconstruct, simulate_counts, summarize, write_counts_csv

ZENO_COLUMNS = list(ZenoRow.model_fields)

# One series is every k for a fixed (mode, psi, xi)
Series = Tuple[RunMode, float, Optional[float]]


class SweepCellError(RuntimeError):
    """A sweep cell failed; carries the cell identity"""

    def __init__(self, mode: RunMode, psi_deg: float, xi_deg: Optional[float], k: int, cause: Exception):
        self.mode = mode
        self.psi_deg = psi_deg
        self.xi_deg = xi_deg
        self.k = k
        self.cause = cause
        super().__init__(f"Cell (mode={mode.value}, psi={psi_deg}, xi={xi_deg}, k={k}) failed: {cause}")


def sweep_series(spec: SweepSpec) -> List[Series]:
    """Series in output order; unprotected (and ancilla-free protected) series have no xi"""
    series: List[Series] = []
    for mode in spec.modes:
        for psi_deg in spec.psi_list:
            if mode == RunMode.protected and spec.use_ancilla:
                series.extend((mode, psi_deg, xi_deg) for xi_deg in spec.xi_list)
            else:
                series.append((mode, psi_deg, None))
    return series


def analytic_survival(config: ChannelConfig) -> float:
    """Closed-form output trace: projection survival times passive transmission"""
    if config.protected:
        return survival_product(config).value * config.passive_transmission
    return config.passive_transmission


def _run_series(spec: SweepSpec, index: int, series: Series, counts_dir: Optional[str] = None) -> List[FigureRow]:
    mode, psi_deg, xi_deg = series
    target = basis_ket(math.radians(psi_deg))
    rows = []
    reference_loss = None
    all_records = []
    for k in range(spec.k_max + 1):
        try:
            config = spec.channel_config(mode, psi_deg, xi_deg, k)
            output = run_channel(config)
            records = simulate_counts(
                output.rho_out, spec.shots_mean, spec.n_repetitions, spec.seed,
                k=k, monitor_fraction=spec.monitor_fraction, stream=(index,),
            )
            acquisitions = group_by_acquisition(records)[k]
            results = [mle_reconstruct(acquisitions[rep]) for rep in sorted(acquisitions)]
            if k == 0:
                reference_loss = loss_rate(records)
            summary = summarize(results, target, records, reference_loss)
        except Exception as e:
            logger.error(f"Sweep cell ({mode.value}, psi={psi_deg}, xi={xi_deg}, k={k}) failed: {str(e)}")
            raise SweepCellError(mode, psi_deg, xi_deg, k, e) from e
        all_records.extend(records)
        rows.append(FigureRow(
            mode=mode, psi_deg=psi_deg, xi_deg=xi_deg, k=k,
            F_mean=summary.F_mean, F_stderr=summary.F_stderr,
            P_mean=summary.P_mean, P_stderr=summary.P_stderr,
            p_sur_hat=summary.p_sur_hat, p_sur_analytic=analytic_survival(config),
        ))
    if counts_dir is not None:
        write_counts_csv(all_records, os.path.join(counts_dir, counts_filename(series)))
    logger.info(f"Series {mode.value} psi={psi_deg} xi={xi_deg} done ({spec.k_max + 1} cells)")
    return rows


def counts_filename(series: Series) -> str:
    mode, psi_deg, xi_deg = series
    xi_part = f"{xi_deg:g}" if xi_deg is not None else "none"
    return f"counts_{mode.value}_psi{psi_deg:g}_xi{xi_part}.csv"


def run_sweep(spec: SweepSpec, workers: Optional[int] = None, counts_dir: Optional[str] = None) -> FigureTable:
    """
    Monte Carlo sweep: run_channel, simulate_counts, mle_reconstruct and summarize per cell.

    Each series owns the counter stream keyed by its position, so the table does not
    depend on the worker count.
    """
    workers = workers or spec.workers
    series = sweep_series(spec)
    if counts_dir is not None:
        os.makedirs(counts_dir, exist_ok=True)
    logger.info(f"Starting sweep: {len(series)} series x {spec.k_max + 1} blocks, {workers} worker(s), seed {spec.seed}")
    start = time.time()
    if workers == 1:
        results = [_run_series(spec, i, s, counts_dir) for i, s in enumerate(series)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_run_series, spec, i, s, counts_dir) for i, s in enumerate(series)]
            results = [future.result() for future in futures]
    table = FigureTable(rows=[row for rows in results for row in rows])
    logger.info(f"Sweep finished: {len(table.rows)} cells in {time.time() - start:.2f}s")
    return table


def analytic_report(spec: SweepSpec) -> FigureTable:
    """Same table shape as run_sweep from exact channel outputs; no shot noise, no MLE"""
    rows = []
    for mode, psi_deg, xi_deg in sweep_series(spec):
        target = basis_ket(math.radians(psi_deg))
        for k in range(spec.k_max + 1):
            config = spec.channel_config(mode, psi_deg, xi_deg, k)
            rho = run_channel(config).rho_out.normalized()
            p_sur = analytic_survival(config)
            rows.append(FigureRow(
                mode=mode, psi_deg=psi_deg, xi_deg=xi_deg, k=k,
                F_mean=fidelity(rho, target), F_stderr=0.0,
                P_mean=purity(rho), P_stderr=0.0,
                p_sur_hat=p_sur, p_sur_analytic=p_sur,
            ))
    logger.info(f"Analytic report: {len(rows)} cells")
    return FigureTable(rows=rows)


def zeno_limit_study(spec: SweepSpec) -> List[ZenoRow]:
    """
    Survival at fixed total walk-off D = k_max * d split into n equal steps, each
    followed by a projection, with the first-order bound 4|d'e'|^2 D^2 / (16 sigma^2 n).
    """
    total = spec.k_max * spec.d_over_sigma * spec.sigma
    phi = math.radians(spec.phi_deg)
    rows = []
    for xi_deg in spec.xi_list:
        xi = math.radians(xi_deg)
        weight = math.cos(xi - phi) ** 2
        for n in spec.zeno_steps:
            config = ChannelConfig(
                psi=xi, xi=xi, phi=phi, d_per_block=total / n, sigma=spec.sigma,
                n_blocks=n, protected=True, project_after_last_block=True,
            )
            p_sur = survival_product(config).value
            bound = 4.0 * weight * (1.0 - weight) * total ** 2 / (16.0 * spec.sigma ** 2 * n)
            rows.append(ZenoRow(xi_deg=xi_deg, n_steps=n, d_per_step=total / n, p_sur=p_sur, loss_bound=bound))
        logger.debug(f"Zeno-limit study for xi={xi_deg}: {len(spec.zeno_steps)} step counts")
    return rows


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, RunMode):
        return value.value
    return repr(value) if isinstance(value, float) else str(value)


def format_csv(rows: Sequence[BaseModel], columns: Sequence[str]) -> str:
    """Header row plus one line per model; floats keep their shortest round-trip repr"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(getattr(row, column)) for column in columns])
    return buffer.getvalue()


def format_json(rows: Sequence[BaseModel]) -> str:
    return json.dumps([row.model_dump(mode="json") for row in rows], indent=2) + "\n"


def write_table(rows: Sequence[BaseModel], columns: Sequence[str], out_dir: str, stem: str, fmt: str = "csv") -> str:
    """Write rows to <out_dir>/<stem>.<fmt> and return the path"""
    if fmt not in ("csv", "json"):
        raise ValueError(f"Unknown output format: {fmt}")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{stem}.{fmt}")
    text = format_csv(rows, columns) if fmt == "csv" else format_json(rows)
    with open(path, "w", newline="") as f:
        f.write(text)
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def write_figure_table(table: FigureTable, out_dir: str, stem: str = "figure_table", fmt: str = "csv") -> str:
    return write_table(table.rows, FIGURE_COLUMNS, out_dir, stem, fmt)


def write_zeno_table(rows: List[ZenoRow], out_dir: str, fmt: str = "csv") -> str:
    return write_table(rows, ZENO_COLUMNS, out_dir, "zeno_limit", fmt)

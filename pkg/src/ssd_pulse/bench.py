"""Wall-time scaling of the three SSD formulations."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ssd_pulse.ssd import PathwayInputs, SsdConfig, ssd_chunked, ssd_quadratic, ssm_recurrence_scan

LENGTHS = (512, 1024, 2048, 4096)
FORMULATIONS = ("recurrence", "quadratic", "chunked")
MAX_CHUNKED_RATIO = 12.0
MIN_QUADRATIC_RATIO = 30.0
EQUIVALENCE_TOL = 1e-4


@dataclass
class BenchRow:
    formulation: str
    length: int
    wall_ns: int


@dataclass
class BenchResult:
    rows: list[BenchRow]
    max_rel_err: dict[int, float]
    chunked_ratio: float
    quadratic_ratio: float

    @property
    def equivalent(self) -> bool:
        return all(e < EQUIVALENCE_TOL for e in self.max_rel_err.values())

    @property
    def passed(self) -> bool:
        return (
            self.equivalent
            and self.chunked_ratio <= MAX_CHUNKED_RATIO
            and self.quadratic_ratio >= MIN_QUADRATIC_RATIO
        )


def random_inputs(length: int, config: SsdConfig, rng: np.random.Generator, decay_low: float = 0.0) -> PathwayInputs:
    """Random pathway inputs; queries/keys scaled by ``1/sqrt(N)``, decay uniform in ``(decay_low, 1]``."""
    h, n, p = config.n_heads, config.d_state, config.d_head
    scale = 1.0 / np.sqrt(n)
    return PathwayInputs(
        q=rng.standard_normal((h, length, n)) * scale,
        k=rng.standard_normal((h, length, n)) * scale,
        v=rng.standard_normal((h, length, p)),
        decay=1.0 - rng.uniform(0.0, 1.0 - decay_low, size=(h, length)),
    )


def rel_err(x: np.ndarray, ref: np.ndarray) -> float:
    """Max abs difference relative to the reference's max magnitude."""
    denom = float(np.max(np.abs(ref.astype(np.float64))))
    diff = float(np.max(np.abs(x.astype(np.float64) - ref.astype(np.float64))))
    return diff / denom if denom > 0 else diff


def _time(fn, repeats: int) -> int:
    best = None
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        dt = time.perf_counter_ns() - t0
        best = dt if best is None else min(best, dt)
    return best


def run_bench(lengths=LENGTHS, repeats: int = 3, seed: int = 0, config: SsdConfig | None = None) -> BenchResult:
    """Cross-check all formulations at each length, then time them (best of ``repeats``)."""
    config = config or SsdConfig()
    rng = np.random.default_rng(seed)
    rows: list[BenchRow] = []
    errs: dict[int, float] = {}
    for length in lengths:
        inputs = random_inputs(length, config, rng, decay_low=0.5)
        fns = {
            "recurrence": lambda: ssm_recurrence_scan(inputs),
            "quadratic": lambda: ssd_quadratic(inputs),
            "chunked": lambda: ssd_chunked(inputs, config.chunk_size),
        }
        ref = fns["recurrence"]()
        errs[length] = max(rel_err(fns[name](), ref) for name in ("quadratic", "chunked"))
        for name in FORMULATIONS:
            rows.append(BenchRow(name, length, _time(fns[name], repeats)))
    wall = {(r.formulation, r.length): r.wall_ns for r in rows}
    lo, hi = min(lengths), max(lengths)
    return BenchResult(
        rows,
        errs,
        chunked_ratio=wall[("chunked", hi)] / wall[("chunked", lo)],
        quadratic_ratio=wall[("quadratic", hi)] / wall[("quadratic", lo)],
    )


def rows_to_csv(rows: list[BenchRow]) -> str:
    lines = ["formulation,T,wall_ns"]
    lines += [f"{r.formulation},{r.length},{r.wall_ns}" for r in rows]
    return "\n".join(lines) + "\n"

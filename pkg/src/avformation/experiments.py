"""Experiment runners: parameter sweeps, scale studies and CSV output.

Each grid cell is independent, so sweeps run under a process pool when
threads > 1; records are assembled in grid order (alpha outer, beta middle,
s* inner) regardless of completion order, and floats are serialized with 9
significant digits so identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, NumericsError
from .search import brute_force, classify, evaluate
from .traffic import (
    Formation,
    HdvParams,
    PerformanceWeights,
    linearize,
    string_stability_index,
)

DEFAULT_OVM = {"v_max": 30.0, "s_st": 5.0, "s_go": 35.0}
DEFAULT_WEIGHTS = PerformanceWeights(gamma_s=0.01, gamma_v=0.05, gamma_u=0.1)

SWEEP_HEADER = (
    "alpha,beta,s_star,xi,best_class,worst_class,"
    "best_J,worst_J,best_formation,worst_formation"
)

# Parameter rows of the published three-example study (n=12, k=4).
TABLE1_ROWS = ((1.4, 1.8, 10.0), (0.6, 0.9, 20.0), (0.9, 1.3, 16.0))


def fmt(x: float) -> str:
    """Fixed float formatting for reproducible CSV diffs."""
    return format(x, ".9g")


def closed_grid(lo: float, hi: float, count: int) -> tuple[float, ...]:
    if count < 1:
        raise ConfigError("grid count must be >= 1")
    if count == 1:
        return (0.5 * (lo + hi),)
    step = (hi - lo) / (count - 1)
    return tuple(lo + i * step for i in range(count))


def interior_grid(lo: float, hi: float, count: int) -> tuple[float, ...]:
    """Evenly spaced points strictly inside (lo, hi); used for the default
    equilibrium-spacing grid, whose endpoints have zero ramp slope."""
    if count < 1:
        raise ConfigError("grid count must be >= 1")
    return tuple(lo + (hi - lo) * (i + 1) / (count + 1) for i in range(count))


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 12
    k: int = 4
    gamma_s: float = 0.01
    gamma_v: float = 0.05
    gamma_u: float = 0.1
    v_max: float = 30.0
    s_st: float = 5.0
    s_go: float = 35.0
    alpha_grid: tuple[float, ...] = field(default_factory=lambda: closed_grid(0.1, 1.5, 8))
    beta_grid: tuple[float, ...] = field(default_factory=lambda: closed_grid(0.1, 1.5, 8))
    s_star_grid: tuple[float, ...] = field(default_factory=lambda: interior_grid(5.0, 35.0, 7))
    seed: int = 0
    threads: int = 1
    out: str | None = None

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ConfigError(f"need 1 <= k <= n, got k={self.k}, n={self.n}")
        for name in ("alpha_grid", "beta_grid", "s_star_grid"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be nonempty")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")

    @property
    def weights(self) -> PerformanceWeights:
        return PerformanceWeights(self.gamma_s, self.gamma_v, self.gamma_u)

    def hdv(self, alpha: float, beta: float) -> HdvParams:
        return HdvParams(alpha, beta, self.v_max, self.s_st, self.s_go)


_CONFIG_KEYS = {
    "n", "k", "gamma_s", "gamma_v", "gamma_u", "v_max", "s_st", "s_go",
    "alpha_grid", "beta_grid", "s_star_grid", "seed", "threads", "out",
}


def _parse_grid(value, name: str) -> tuple[float, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    if isinstance(value, dict):
        extra = set(value) - {"min", "max", "count"}
        if extra:
            raise ConfigError(f"{name}: unknown grid keys {sorted(extra)}")
        return closed_grid(float(value["min"]), float(value["max"]), int(value["count"]))
    raise ConfigError(f"{name} must be a list of values or {{min, max, count}}")


def load_config(path) -> ExperimentConfig:
    """Read a JSON config file; unknown keys are rejected."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(raw)
    for name in ("alpha_grid", "beta_grid", "s_star_grid"):
        if name in kwargs:
            kwargs[name] = _parse_grid(kwargs[name], name)
    try:
        return ExperimentConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


@dataclass(frozen=True)
class SweepRecord:
    alpha: float
    beta: float
    s_star: float
    xi: float
    best_class: str
    worst_class: str
    best_j: float
    worst_j: float
    best_formation: str
    worst_formation: str
    error: str | None = None

    def csv_row(self) -> str:
        if self.error is not None:
            return ",".join(
                [fmt(self.alpha), fmt(self.beta), fmt(self.s_star), fmt(self.xi),
                 "error", "error", "nan", "nan", "", ""]
            )
        return ",".join(
            [fmt(self.alpha), fmt(self.beta), fmt(self.s_star), fmt(self.xi),
             self.best_class, self.worst_class, fmt(self.best_j), fmt(self.worst_j),
             self.best_formation, self.worst_formation]
        )


def _sweep_cell(args) -> SweepRecord:
    cfg, alpha, beta, s_star = args
    hdv = cfg.hdv(alpha, beta)
    xi = string_stability_index(hdv, s_star)
    try:
        coeffs = linearize(hdv, s_star)
        result = brute_force(cfg.n, cfg.k, coeffs, cfg.weights)
    except (ConfigError, NumericsError) as exc:
        return SweepRecord(
            alpha=alpha, beta=beta, s_star=s_star, xi=xi,
            best_class="error", worst_class="error",
            best_j=float("nan"), worst_j=float("nan"),
            best_formation="", worst_formation="",
            error=str(exc),
        )
    return SweepRecord(
        alpha=alpha, beta=beta, s_star=s_star, xi=xi,
        best_class=classify(result.best).value,
        worst_class=classify(result.worst).value,
        best_j=result.best_value, worst_j=result.worst_value,
        best_formation=result.best.label(),
        worst_formation=result.worst.label(),
    )


def run_sweep(cfg: ExperimentConfig) -> list[SweepRecord]:
    """Brute-force formation search over the (alpha, beta, s*) grid."""
    cells = [
        (cfg, alpha, beta, s_star)
        for alpha in cfg.alpha_grid
        for beta in cfg.beta_grid
        for s_star in cfg.s_star_grid
    ]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            return list(pool.map(_sweep_cell, cells, chunksize=4))
    return [_sweep_cell(cell) for cell in cells]


def write_sweep_csv(records: list[SweepRecord], path) -> None:
    with open(path, "w") as fh:
        fh.write(SWEEP_HEADER + "\n")
        for record in records:
            fh.write(record.csv_row() + "\n")


@dataclass(frozen=True)
class Table1Row:
    alpha: float
    beta: float
    s_star: float
    best: Formation
    best_class: str
    best_j: float
    worst: Formation
    worst_class: str
    worst_j: float


def run_table1(
    n: int = 12,
    k: int = 4,
    weights: PerformanceWeights = DEFAULT_WEIGHTS,
    rows=TABLE1_ROWS,
) -> list[Table1Row]:
    """Reproduce the three-row optimal-formation study."""
    out = []
    for alpha, beta, s_star in rows:
        hdv = HdvParams(alpha, beta, **DEFAULT_OVM)
        result = brute_force(n, k, linearize(hdv, s_star), weights)
        out.append(
            Table1Row(
                alpha=alpha, beta=beta, s_star=s_star,
                best=result.best, best_class=classify(result.best).value,
                best_j=result.best_value,
                worst=result.worst, worst_class=classify(result.worst).value,
                worst_j=result.worst_value,
            )
        )
    return out


def platoon_formation(n: int, k: int) -> Formation:
    """The contiguous placement 1..k."""
    return Formation(n, tuple(range(1, k + 1)))


def most_even_formation(n: int, k: int) -> Formation:
    """Placement with gaps as equal as possible (exactly even when k | n)."""
    return Formation(n, tuple(sorted(int(i * n / k) + 1 for i in range(k))))


@dataclass(frozen=True)
class ScaleRow:
    n: int
    j_platoon: float
    j_uniform: float

    @property
    def gap(self) -> float:
        return self.j_uniform - self.j_platoon


def run_scale(
    n_list,
    k: int,
    hdv: HdvParams,
    s_star: float,
    weights: PerformanceWeights = DEFAULT_WEIGHTS,
) -> list[ScaleRow]:
    """Platoon vs most-even placement across ring sizes."""
    coeffs = linearize(hdv, s_star)
    rows = []
    for n in n_list:
        if k > n:
            raise ConfigError(f"k={k} exceeds n={n}")
        j_plat = evaluate(platoon_formation(n, k), coeffs, weights)
        j_unif = evaluate(most_even_formation(n, k), coeffs, weights)
        rows.append(ScaleRow(n=n, j_platoon=j_plat, j_uniform=j_unif))
    return rows


def write_scale_csv(rows: list[ScaleRow], path) -> None:
    with open(path, "w") as fh:
        fh.write("n,J_platoon,J_uniform,gap\n")
        for row in rows:
            fh.write(
                f"{row.n},{fmt(row.j_platoon)},{fmt(row.j_uniform)},{fmt(row.gap)}\n"
            )

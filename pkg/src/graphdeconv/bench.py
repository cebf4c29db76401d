"""Monte Carlo experiment runner.

Every ``(m, trial)`` pair gets its own child seed,
``SeedSequence(seed, spawn_key=(crc32(scenario), m, trial))``, from which the
graph, the signal, the filter, the sampling set and the known inputs are
drawn in that order.  All surrogates of a config run on the same draw, so
their comparison is paired; configs sharing a scenario name and seed share
their draws too.
"""

from __future__ import annotations

import csv
import json
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .blind import BlindProblem, MMOptions, blind_recover, metric_rmse_blind
from .errors import ConfigError, GraphDeconvError
from .filter_id import exponential_weights
from .graph import GraphFilter, filter_matrix, generate_graph, generate_problem_instance, lifted_operator_p, random_dictionary
from .recovery import KnownFilterProblem, ObservationModel, recover_reweighted
from .sampling import SelectionSet, greedy_sample, random_sample

RECOVERY_THRESHOLD = 1e-5
SCENARIOS = (
    "known-filter",
    "known-filter-greedy",
    "blind-sparse",
    "blind-double-sparse",
    "blind-subspace",
    "topologies",
)
KNOWN_FILTER = ("known-filter", "known-filter-greedy")
SURROGATES = {"known": ("log", "l1"), "blind": ("logdet", "nuclear")}
TRIAL_FIELDS = ["scenario", "surrogate", "m", "trial", "seed", "rmse", "recovered", "iterations", "status"]
SUMMARY_FIELDS = ["scenario", "surrogate", "m", "median_rmse", "recovery_prob", "trials"]


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    n: int
    l: int
    m_grid: tuple[int, ...]
    graph: dict = field(default_factory=lambda: {"model": "er", "p": 0.1})
    s_x: int = 8
    s_h: Optional[int] = None
    d_s: Optional[int] = None
    k: int = 0
    tau_x: float = 0.0
    tau_h: float = 0.0
    beta: Optional[float] = None
    trials: int = 200
    seed: int = 0
    surrogates: tuple[str, ...] = ()
    sampling: str = "random"
    eps0: float = 1e-3
    mm: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        grid = tuple(int(m) for m in self.m_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("m_grid must be a nonempty strictly increasing list")
        if grid[0] < 1 or grid[-1] > self.n:
            raise ConfigError(f"m_grid values must lie in [1, {self.n}]")
        object.__setattr__(self, "m_grid", grid)
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.sampling not in ("random", "greedy"):
            raise ConfigError(f"unknown sampling {self.sampling!r}")
        family = "known" if self.scenario in KNOWN_FILTER else "blind"
        surr = tuple(self.surrogates) or (SURROGATES[family][0],)
        bad = [s for s in surr if s not in SURROGATES[family]]
        if bad:
            raise ConfigError(f"surrogates {bad} do not apply to {self.scenario}")
        object.__setattr__(self, "surrogates", surr)
        if "model" not in self.graph:
            raise ConfigError("graph needs a model")
        if self.scenario == "blind-subspace" and not self.d_s:
            raise ConfigError("blind-subspace needs d_s")
        if self.scenario == "blind-double-sparse" and self.beta is None:
            raise ConfigError("blind-double-sparse needs beta")
        try:
            MMOptions(**self.mm)
        except TypeError as exc:
            raise ConfigError(f"bad mm options: {exc}") from None

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config fields {sorted(extra)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc)

    @property
    def blind(self) -> bool:
        return self.scenario not in KNOWN_FILTER


@dataclass(frozen=True)
class TrialRecord:
    scenario: str
    surrogate: str
    m: int
    trial: int
    seed: int
    rmse: float
    recovered: bool
    iterations: int
    status: str = "ok"
    wall_time: float = field(default=0.0, compare=False)
    history: tuple[float, ...] = field(default=(), compare=False)


def child_seed(master: int, scenario: str, m: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master, spawn_key=(zlib.crc32(scenario.encode()), m, trial))


def _seed_id(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class _Draw:
    shift: object
    x: np.ndarray
    h: np.ndarray
    y: np.ndarray
    sampling: SelectionSet
    known: Optional[SelectionSet]
    x_k: Optional[np.ndarray]
    alpha: Optional[np.ndarray] = None
    dictionary: object = None


def draw_trial(cfg: ExperimentConfig, m: int, rng: np.random.Generator) -> _Draw:
    params = {k: v for k, v in cfg.graph.items() if k != "model"}
    shift = generate_graph(cfg.graph["model"], cfg.n, int(rng.integers(2**32)), **params)
    dictionary = None
    if cfg.scenario == "blind-subspace":
        dictionary = random_dictionary(cfg.n, cfg.d_s, rng)
        sig, filt = generate_problem_instance(shift, cfg.l, cfg.d_s, rng, "subspace", dictionary, cfg.s_h)
    else:
        sig, filt = generate_problem_instance(shift, cfg.l, cfg.s_x, rng, s_h=cfg.s_h)
    if cfg.sampling == "greedy":
        rows = filter_matrix(shift, filt) if not cfg.blind else lifted_operator_p(shift, cfg.l)
        sampling = greedy_sample(rows, m) if m >= 2 else random_sample(cfg.n, m, rng)
    else:
        sampling = random_sample(cfg.n, m, rng)
    known = x_k = None
    if cfg.k:
        # sparse inputs reveal values on their support; dense inputs anywhere
        pool = np.asarray(sig.support) if dictionary is None else np.arange(cfg.n)
        if cfg.k > pool.size:
            raise ConfigError("k exceeds the number of candidate known inputs")
        known = SelectionSet.of(rng.choice(pool, size=cfg.k, replace=False), cfg.n)
        x_k = sig.x[known.array]
    return _Draw(shift, sig.x, filt.h, sig.y, sampling, known, x_k, sig.alpha, dictionary)


def _run_known(cfg, d: _Draw, surrogate):
    obs = ObservationModel(d.sampling, d.y[d.sampling.array], d.known, d.x_k)
    prob = KnownFilterProblem(d.shift, GraphFilter(d.h), obs)
    res = recover_reweighted(prob, eps0=cfg.eps0, max_iters=1 if surrogate == "l1" else 10)
    return float(np.linalg.norm(res.x_hat - d.x) / cfg.n), res.iterations, res.history


def _run_blind(cfg, d: _Draw, surrogate):
    weights = exponential_weights(cfg.l, cfg.beta) if cfg.beta is not None else None
    prob = BlindProblem(
        d.shift,
        cfg.l,
        d.sampling,
        d.y[d.sampling.array],
        known=d.known,
        x_k=d.x_k,
        tau_x=cfg.tau_x,
        tau_h=cfg.tau_h,
        weights=weights,
        dictionary=d.dictionary,
        mm=MMOptions(**{**cfg.mm, "surrogate": surrogate}),
    )
    res = blind_recover(prob)
    if d.dictionary is not None:
        rmse = metric_rmse_blind((d.alpha, d.h), (res.alpha_hat, res.h_hat), cfg.k)
    else:
        rmse = metric_rmse_blind((d.x, d.h), (res.x_hat, res.h_hat), cfg.k)
    return rmse, res.iterations, res.history


def run_trial(cfg: ExperimentConfig, m: int, trial: int) -> list[TrialRecord]:
    """All surrogates of ``cfg`` on the draw of ``(m, trial)``."""
    ss = child_seed(cfg.seed, cfg.scenario, m, trial)
    seed = _seed_id(ss)
    out = []
    try:
        draw = draw_trial(cfg, m, np.random.default_rng(ss))
    except GraphDeconvError as exc:
        return [
            TrialRecord(cfg.scenario, s, m, trial, seed, float("inf"), False, 0, type(exc).__name__)
            for s in cfg.surrogates
        ]
    runner = _run_blind if cfg.blind else _run_known
    for surrogate in cfg.surrogates:
        t0 = time.perf_counter()
        try:
            rmse, iters, hist = runner(cfg, draw, surrogate)
            status = "ok"
        except (GraphDeconvError, np.linalg.LinAlgError) as exc:
            rmse, iters, hist, status = float("inf"), 0, (), type(exc).__name__
        out.append(
            TrialRecord(
                cfg.scenario,
                surrogate,
                m,
                trial,
                seed,
                rmse,
                bool(rmse <= RECOVERY_THRESHOLD),
                iters,
                status,
                wall_time=time.perf_counter() - t0,
                history=tuple(hist),
            )
        )
    return out


def _run_star(args):
    return run_trial(*args)


def run_experiment(cfg: ExperimentConfig, workers: int = 1, progress=None) -> list[TrialRecord]:
    """Run every ``(m, trial)`` of the config; failed trials are recorded, never raised.

    Records come back sorted by ``(surrogate order, m, trial)`` whatever the
    number of workers.
    """
    jobs = [(cfg, m, t) for m in cfg.m_grid for t in range(cfg.trials)]
    records: list[TrialRecord] = []
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            for recs in pool.map(_run_star, jobs, chunksize=4):
                records.extend(recs)
                if progress:
                    progress(recs)
    else:
        for job in jobs:
            recs = run_trial(*job)
            records.extend(recs)
            if progress:
                progress(recs)
    order = {s: i for i, s in enumerate(cfg.surrogates)}
    return sorted(records, key=lambda r: (order[r.surrogate], r.m, r.trial))


def lower_median(values) -> float:
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        return float("nan")
    return float(np.percentile(v, 50, method="lower"))


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    surrogate: str
    m: int
    median_rmse: float
    recovery_prob: float
    trials: int


def aggregate(records: Iterable[TrialRecord]) -> list[SummaryRow]:
    """Lower median RMSE and recovery fraction per ``(scenario, surrogate, m)``."""
    groups: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        groups.setdefault((r.scenario, r.surrogate, r.m), []).append(r)
    rows = []
    for (scen, surr, m), recs in groups.items():
        rows.append(
            SummaryRow(
                scen,
                surr,
                m,
                lower_median(r.rmse for r in recs),
                sum(r.recovered for r in recs) / len(recs),
                len(recs),
            )
        )
    return rows


def curve(rows: Iterable[SummaryRow], surrogate: Optional[str] = None, key: str = "recovery_prob"):
    """``{m: value}`` for one surrogate of a summary."""
    return {r.m: getattr(r, key) for r in rows if surrogate is None or r.surrogate == surrogate}


# -- persistence ---------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def emit(records: list[TrialRecord], out_dir, formats=("csv", "json")) -> list[Path]:
    """Write ``trials`` and ``summary`` files; returns the written paths.

    Wall times are kept out of ``trials.csv`` so that the file depends only on
    the config; they are in ``trials.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = aggregate(records)
    written = []
    if "csv" in formats:
        p = out / "trials.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRIAL_FIELDS)
            for r in records:
                w.writerow([_cell(getattr(r, f)) for f in TRIAL_FIELDS])
        written.append(p)
        p = out / "summary.csv"
        with open(p, "w", newline="") as fh:
            fh.write("# median_rmse uses the lower median; recovered means rmse <= 1e-05\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_FIELDS)
            for r in summary:
                w.writerow([_cell(getattr(r, f)) for f in SUMMARY_FIELDS])
        written.append(p)
    if "json" in formats:
        p = out / "trials.json"
        p.write_text(json.dumps([_jsonable(asdict(r)) for r in records], indent=1))
        written.append(p)
        p = out / "summary.json"
        p.write_text(json.dumps([_jsonable(asdict(r)) for r in summary], indent=1))
        written.append(p)
    return written


def _jsonable(doc: dict) -> dict:
    out = {}
    for k, v in doc.items():
        if isinstance(v, float) and not np.isfinite(v):
            v = repr(v)  # "inf" / "nan" are not JSON
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def read_trials(path) -> list[TrialRecord]:
    """Read back a ``trials.csv`` (wall times and histories are not stored there)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        return [
            TrialRecord(
                scenario=row["scenario"],
                surrogate=row["surrogate"],
                m=int(row["m"]),
                trial=int(row["trial"]),
                seed=int(row["seed"]),
                rmse=float(row["rmse"]),
                recovered=row["recovered"] == "true",
                iterations=int(row["iterations"]),
                status=row["status"],
            )
            for row in reader
        ]

"""
Experiment runner.

Builds problem instances from the configuration, expands step size, weight step
size, sparsity and seed sweeps into runs, executes them (optionally in parallel)
and writes one CSV row per recorded iteration.
"""
import csv
import hashlib
import json
import math
import os
import threading
import time
import traceback
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from tqdm import tqdm

from errors import ConfigError, ConvergenceError, InvalidArgumentError, ParseError
from iht import IhtConfig, iht_solve
from instances import (gen_frobenius_instance, gen_hard_instance, gen_planted_quadratic, gen_recovery_instance,
                       gen_sensing_instance, load_dataset)
from lowrank import local_search_solve
from objectives import LeastSquares, RidgeLogistic, dense_optimum, preprocess_design, smoothness_estimate
from regiht import RegIhtConfig, c_for_preset, proof_s_prime, regiht_solve, theory_params, weight_mass_report
from utils import ConfigManager

CSV_HEADER = ['run_id', 'algo', 'seed', 'eta', 'c', 'iter', 'f', 'excess', 'g', 'support', 'weight_mass', 'branch']
SUMMARY_HEADER = ['algo', 's', 'eta', 'c', 'n_seeds', 'mean_f', 'stderr', 'flagged', 'relative_excess']
ALGOS = ('iht', 'regiht', 'lowrank')
LOWRANK_MAX_DIM = 128
# Fields that change where results go but not what is computed.
OUTPUT_FIELDS = ('out', 'workers', 'progress_bar')


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = 'ls'
    algos: Tuple[str, ...] = ('regiht',)
    seeds: Tuple[int, ...] = (0,)
    source: str = 'recovery'
    path: Optional[str] = None
    m: int = 100
    n: int = 800
    kappa: float = 20.0
    delta: float = 1e-3
    start: str = 'zero'
    s_values: Tuple[int, ...] = (10,)
    s_prime: Optional[int] = None
    eta_spec: str = 'fixed'
    eta: Optional[float] = None
    c_spec: str = 's_prime_over_T'
    c: Optional[float] = None
    c_values: Tuple[float, ...] = ()
    iters: int = 240
    rho: float = 0.1
    revert: bool = False
    theory_mode: bool = False
    eps: float = 1e-6
    round_th: float = 0.5
    step_form: str = 'algorithm'
    early_stop: bool = False
    pow2_min: int = 0
    pow2_max: int = 8
    mult_count: int = 20
    lowrank_objective: str = 'frobenius'
    lowrank_m: int = 32
    lowrank_n: int = 32
    lowrank_r: int = 1
    lowrank_r_prime: int = 256
    lowrank_kappa: float = 1.0
    lowrank_measurements: int = 2048
    lowrank_eps: float = 1e-6
    lowrank_max_iters: int = 500
    lowrank_step_form: str = 'lemma'
    out: Optional[str] = None
    workers: int = 1
    progress_bar: bool = False

    @classmethod
    def from_config(cls) -> 'ExperimentConfig':
        """Build and validate the configuration held by ConfigManager."""
        ConfigManager.validate()
        get = ConfigManager.get_config_value
        algos = get('experiment', 'algos') or [get('experiment', 'algo')]
        s_values = get('sweep', 's_values') or [get('solver', 's')]
        lowrank = ConfigManager.get_config_section('lowrank')
        cfg = cls(
            task=get('experiment', 'task'),
            algos=tuple(algos),
            seeds=tuple(get('experiment', 'seeds') or []),
            source=get('data', 'source'),
            path=get('data', 'path'),
            m=get('data', 'm'),
            n=get('data', 'n'),
            kappa=float(get('data', 'kappa')),
            delta=float(get('data', 'delta')),
            start=get('data', 'start'),
            s_values=tuple(s_values),
            s_prime=get('solver', 's_prime'),
            eta_spec=get('solver', 'eta_spec'),
            eta=get('solver', 'eta'),
            c_spec=get('solver', 'c_spec'),
            c=get('solver', 'c'),
            c_values=tuple(float(c) for c in get('sweep', 'c_values') or []),
            iters=get('solver', 'iters'),
            rho=float(get('solver', 'rho')),
            revert=get('solver', 'revert'),
            theory_mode=get('solver', 'theory_mode'),
            eps=float(get('solver', 'eps')),
            round_th=float(get('solver', 'round_th')),
            step_form=get('solver', 'step_form'),
            early_stop=get('solver', 'early_stop'),
            pow2_min=get('sweep', 'pow2_min'),
            pow2_max=get('sweep', 'pow2_max'),
            mult_count=get('sweep', 'mult_count'),
            lowrank_objective=lowrank['objective'],
            lowrank_m=lowrank['m'],
            lowrank_n=lowrank['n'],
            lowrank_r=lowrank['r'],
            lowrank_r_prime=lowrank['r_prime'],
            lowrank_kappa=float(lowrank['kappa']),
            lowrank_measurements=lowrank['measurements'],
            lowrank_eps=float(lowrank['eps']),
            lowrank_max_iters=lowrank['max_iters'],
            lowrank_step_form=lowrank['step_form'],
            out=get('output', 'out'),
            workers=get('misc', 'workers'),
            progress_bar=bool(get('misc', 'progress_bar')),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.algos or any(a not in ALGOS for a in self.algos):
            raise ConfigError(f'algos must be a non-empty subset of {ALGOS}, got {list(self.algos)}')
        if not self.seeds or any(isinstance(s, bool) or not isinstance(s, int) for s in self.seeds):
            raise ConfigError(f'seeds must be a non-empty list of integers, got {list(self.seeds)}')
        if self.source == 'svmlight' and not self.path:
            raise ConfigError("data source 'svmlight' needs a data path")
        if self.path and self.source != 'svmlight':
            raise ConfigError(f"a data path was given together with the generator '{self.source}'")
        if self.start == 'bad' and self.source != 'hard':
            raise ConfigError("start 'bad' is only defined for the hard instance")
        if self.task == 'logistic' and self.source != 'svmlight' and set(self.algos) - {'lowrank'}:
            raise ConfigError('the logistic task needs a classification dataset (svmlight source)')
        if self.source == 'hard' and self.kappa != int(self.kappa):
            raise ConfigError(f'the hard instance needs an integer kappa, got {self.kappa}')
        if any(isinstance(s, bool) or not isinstance(s, int) or s < 1 for s in self.s_values):
            raise ConfigError(f'sparsity levels must be positive integers, got {list(self.s_values)}')
        if self.s_prime is not None and self.s_prime < 1:
            raise ConfigError(f"s' must be at least 1, got {self.s_prime}")
        if self.eta is not None and not self.eta > 0:
            raise ConfigError(f'eta must be positive, got {self.eta}')
        if self.eta_spec == 'pow2' and self.pow2_min > self.pow2_max:
            raise ConfigError(f'empty power-of-two sweep [{self.pow2_min}, {self.pow2_max}]')
        if self.eta_spec == 'mult1.2' and self.mult_count < 1:
            raise ConfigError(f'mult_count must be at least 1, got {self.mult_count}')
        if self.c_spec == 'fixed' and not self.c_values and self.c is None:
            raise ConfigError("c_spec 'fixed' needs a value for c")
        if any(not c > 0 for c in self.c_values) or (self.c is not None and not self.c > 0):
            raise ConfigError('weight step sizes must be positive')
        if self.iters < 0:
            raise ConfigError(f'iters must be non-negative, got {self.iters}')
        if self.workers < 1:
            raise ConfigError(f'workers must be at least 1, got {self.workers}')
        if 'lowrank' in self.algos:
            if not (1 <= self.lowrank_m <= LOWRANK_MAX_DIM and 1 <= self.lowrank_n <= LOWRANK_MAX_DIM):
                raise ConfigError(f'low-rank dimensions must lie in [1, {LOWRANK_MAX_DIM}], '
                                  f'got {self.lowrank_m} x {self.lowrank_n}')
            if not 1 <= self.lowrank_r <= min(self.lowrank_m, self.lowrank_n):
                raise ConfigError(f'low-rank target rank must lie in [1, min(m, n)], got {self.lowrank_r}')

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every field that affects the results."""
        payload = {k: v for k, v in asdict(self).items() if k not in OUTPUT_FIELDS}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode('utf-8')).hexdigest()

    @property
    def n_steps(self) -> int:
        if self.theory_mode or self.eta_spec == 'fixed':
            return 1
        if self.eta_spec == 'pow2':
            return self.pow2_max - self.pow2_min + 1
        return self.mult_count


class CsvRow(NamedTuple):
    run_id: str
    algo: str
    seed: int
    eta: Optional[float]
    c: Optional[float]
    iter: int
    f: float
    excess: Optional[float]
    g: Optional[float]
    support: int
    weight_mass: Optional[float]
    branch: str


@dataclass
class RunRecord:
    run_id: str
    algo: str
    seed: int
    s: int
    s_prime: Optional[int] = None
    eta: Optional[float] = None
    c: Optional[float] = None
    config_hash: str = ''
    rows: List[CsvRow] = field(default_factory=list)
    status: str = 'complete'
    error: Optional[str] = None
    wall_time: float = 0.0
    branch_counts: Dict[str, int] = field(default_factory=dict)
    weight_mass_ok: Optional[bool] = None
    dichotomy_violations: Optional[int] = None
    reverts: int = 0

    @property
    def failed(self) -> bool:
        return self.status == 'failed'

    @property
    def final_f(self) -> float:
        return self.rows[-1].f if self.rows else math.nan

    @property
    def initial_f(self) -> float:
        return self.rows[0].f if self.rows else math.nan

    @property
    def best_f(self) -> float:
        return min((r.f for r in self.rows), default=math.nan)

    @property
    def final_excess(self) -> Optional[float]:
        return self.rows[-1].excess if self.rows else None


@dataclass
class Problem:
    """A built instance plus everything the runs on it share."""
    objective: object
    x0: Optional[np.ndarray]
    f0: float
    f_base: Optional[float]
    beta: float
    step_base: float
    s_prime: int
    S_star: Optional[np.ndarray] = None
    f_star: Optional[float] = None
    f_target: Optional[float] = None


class Job(NamedTuple):
    run_id: str
    algo: str
    s: int
    seed: int
    eta_index: int
    c_index: int


class CsvWriter:
    """Appends CSV rows under a lock so that concurrent runs never interleave."""

    def __init__(self, path: str):
        self._lock = threading.Lock()
        self._file = open(path, 'w', newline='')
        self._writer = csv.writer(self._file)
        self._writer.writerow(CSV_HEADER)

    def write_rows(self, rows: List[CsvRow]) -> None:
        with self._lock:
            self._writer.writerows([_format(v) for v in row] for row in rows)
            self._file.flush()

    def close(self) -> None:
        with self._lock:
            self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _format(value) -> str:
    if value is None:
        return ''
    if isinstance(value, (float, np.floating)):
        return f'{float(value):.17g}'
    return str(value)


def _opt_float(text: str) -> Optional[float]:
    return None if text == '' else float(text)


def write_csv(path: str, rows: List[CsvRow]) -> None:
    with CsvWriter(path) as writer:
        writer.write_rows(rows)


def read_csv(path: str) -> List[CsvRow]:
    with open(path, 'r', newline='') as file:
        reader = csv.reader(file)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ParseError(f'unexpected header {header}', 1, 1)
        rows = []
        for line_no, cells in enumerate(reader, start=2):
            if len(cells) != len(CSV_HEADER):
                raise ParseError(f'expected {len(CSV_HEADER)} fields, got {len(cells)}', line_no, 1)
            try:
                rows.append(CsvRow(cells[0], cells[1], int(cells[2]), _opt_float(cells[3]), _opt_float(cells[4]),
                                   int(cells[5]), float(cells[6]), _opt_float(cells[7]), _opt_float(cells[8]),
                                   int(cells[9]), _opt_float(cells[10]), cells[11]))
            except ValueError as e:
                raise ParseError(str(e), line_no, 1)
        return rows


class ExperimentRunner:
    """Plans and executes the runs of one ExperimentConfig."""

    def __init__(self, cfg: ExperimentConfig):
        cfg.validate()
        self.cfg = cfg
        self.config_hash = cfg.config_hash()
        self._lock = threading.Lock()
        self._problems: Dict[tuple, Problem] = {}
        self._dataset = None

    def plan(self) -> List[Job]:
        cfg = self.cfg
        prefix = self.config_hash[:8]
        jobs = []

        def add(algo, s, seed, eta_index=0, c_index=0):
            jobs.append(Job(f'{prefix}-{len(jobs):04d}', algo, s, seed, eta_index, c_index))

        n_c = 1 if cfg.theory_mode or not cfg.c_values else len(cfg.c_values)
        for s in cfg.s_values:
            for seed in cfg.seeds:
                for algo in cfg.algos:
                    if algo == 'lowrank':
                        continue
                    for i in range(cfg.n_steps):
                        for j in range(n_c if algo == 'regiht' else 1):
                            add(algo, s, seed, i, j)
        if 'lowrank' in cfg.algos:
            for seed in cfg.seeds:
                add('lowrank', cfg.lowrank_r, seed)
        return jobs

    def run(self) -> List[RunRecord]:
        cfg = self.cfg
        jobs = self.plan()
        ConfigManager.console_print(f'Experiment {self.config_hash[:12]}: {len(jobs)} run(s)')
        records = []
        writer = CsvWriter(cfg.out) if cfg.out else None
        bar = tqdm(total=len(jobs), desc='runs', disable=not cfg.progress_bar)
        try:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                futures = [pool.submit(self.execute, job) for job in jobs]
                for future in as_completed(futures):
                    record = future.result()
                    records.append(record)
                    if writer is not None:
                        writer.write_rows(record.rows)
                    bar.update(1)
        finally:
            bar.close()
            if writer is not None:
                writer.close()
        records.sort(key=lambda r: r.run_id)
        if cfg.out:
            write_summary(summary_path(cfg.out), records)
        failed = sum(r.failed for r in records)
        ConfigManager.console_print(f'Finished {len(records)} run(s), {failed} failed')
        return records

    def problem(self, s: int, seed: int) -> Problem:
        key = (s, seed) if self.cfg.source in ('recovery', 'planted') else (s,)
        with self._lock:
            if key not in self._problems:
                self._problems[key] = self._build_problem(s, seed)
            return self._problems[key]

    def _load_dataset(self):
        if self._dataset is None:
            data = load_dataset(self.cfg.path, self.cfg.task)
            obj = self._vector_objective(data.A, data.b, None)
            self._dataset = (data, _dense_baseline(obj))
        return self._dataset

    def _vector_objective(self, A, b, beta):
        if self.cfg.task == 'logistic':
            return RidgeLogistic(A, b, self.cfg.rho)
        return LeastSquares(A, b, beta=beta)

    def _build_problem(self, s: int, seed: int) -> Problem:
        cfg = self.cfg
        s_prime = cfg.s_prime if cfg.s_prime is not None else s
        if cfg.source == 'svmlight':
            data, f_base = self._load_dataset()
            beta = smoothness_estimate(s_prime)
            obj = self._vector_objective(data.A, data.b, beta)
            return Problem(obj, None, obj.value(np.zeros(obj.dim)), f_base, beta, 1.0 / s, s_prime)
        if cfg.source == 'recovery':
            inst = gen_recovery_instance(cfg.m, cfg.n, s, seed)
            beta = smoothness_estimate(s_prime)
            # b is centered with the columns so the rescaled x_true still fits exactly
            obj = LeastSquares(preprocess_design(inst.A), inst.b - inst.b.mean(), beta=beta)
            return Problem(obj, None, obj.value(np.zeros(obj.dim)), _dense_baseline(obj), beta, 1.0 / s, s_prime)
        if cfg.source == 'hard':
            inst = gen_hard_instance(int(cfg.kappa), s, s_prime, cfg.delta)
            obj = inst.objective()
            x0 = inst.x_bad.copy() if cfg.start == 'bad' else None
            # A is invertible, so the dense optimum fits b exactly
            return Problem(obj, x0, obj.value(np.zeros(inst.n)), 0.0, inst.kappa, 1.0 / inst.kappa, s_prime,
                           np.arange(s), obj.value(inst.x_star))
        obj, x_star, S_star = gen_planted_quadratic(cfg.n, s, cfg.kappa, seed)
        beta = obj.beta_estimate
        return Problem(obj, None, obj.value(np.zeros(cfg.n)), 0.0, beta, 1.0 / beta, s_prime, S_star, 0.0)

    def step_sizes(self, problem: Problem) -> List[float]:
        """
        The eta values of a sweep, as written to the `eta` CSV column.

        'pow2' gives base * 2^i for i in [pow2_min, pow2_max] and 'mult1.2' gives base * 1.2^i
        for i in [0, mult_count). The base is 1/s on preprocessed data (recovery and svmlight
        files) and 1/beta on generated instances. On the hard instance beta = kappa, so its
        pow2 sweep covers 2^i / kappa rather than 2^i / s.
        'fixed' gives eta, or 1/beta when eta is unset.
        """
        cfg = self.cfg
        if cfg.eta_spec == 'pow2':
            return [problem.step_base * 2.0 ** i for i in range(cfg.pow2_min, cfg.pow2_max + 1)]
        if cfg.eta_spec == 'mult1.2':
            return [problem.step_base * 1.2 ** i for i in range(cfg.mult_count)]
        return [cfg.eta if cfg.eta is not None else 1.0 / problem.beta]

    def _parameters(self, job: Job, problem: Problem) -> Tuple[int, float, Optional[float], int]:
        """(s', eta, c, T) of a sparse run."""
        cfg = self.cfg
        x0 = problem.x0 if problem.x0 is not None else np.zeros(problem.objective.dim)
        if cfg.theory_mode:
            kappa = problem.objective.kappa
            if kappa is None:
                raise InvalidArgumentError('theory mode needs a strong convexity estimate of the objective')
            f_x0 = problem.objective.value(x0)
            f_ref = problem.f_star if problem.f_star is not None else problem.f_base
            if f_ref is None:
                raise InvalidArgumentError('theory mode needs f(x*) or a dense baseline')
            tp = theory_params(kappa, problem.beta, job.s, f_x0 - f_ref, cfg.eps * f_x0,
                               s_prime=proof_s_prime(kappa, job.s))
            return tp.s_prime, tp.eta, tp.c, tp.T
        eta = self.step_sizes(problem)[job.eta_index]
        if job.algo != 'regiht':
            return problem.s_prime, eta, None, cfg.iters
        if cfg.c_values:
            c = cfg.c_values[job.c_index]
        else:
            c = c_for_preset(cfg.c_spec, problem.s_prime, cfg.iters, cfg.c)
        return problem.s_prime, eta, c, cfg.iters

    def execute(self, job: Job) -> RunRecord:
        """Run one job; any error is captured in the record instead of propagating."""
        record = RunRecord(job.run_id, job.algo, job.seed, job.s, config_hash=self.config_hash)
        start = time.perf_counter()
        try:
            if job.algo == 'lowrank':
                self._run_lowrank(job, record)
            else:
                self._run_sparse(job, record)
        except Exception as e:
            traceback.print_exc()
            record.status = 'failed'
            record.error = f'{type(e).__name__}: {e}'
            ConfigManager.console_print(f'Run {job.run_id} ({job.algo}, s={job.s}, seed={job.seed}) failed: {e}')
        record.wall_time = time.perf_counter() - start
        return record

    def _run_sparse(self, job: Job, record: RunRecord) -> None:
        cfg = self.cfg
        problem = self.problem(job.s, job.seed)
        obj = problem.objective
        s_prime, eta, c, T = self._parameters(job, problem)
        record.s_prime, record.eta, record.c = s_prime, eta, c
        x0 = problem.x0 if problem.x0 is not None else np.zeros(obj.dim)
        if job.algo == 'iht':
            _, trace = iht_solve(obj, x0, IhtConfig(s_prime, eta, T, cfg.early_stop))
        else:
            rcfg = RegIhtConfig(s_prime, eta, c, T, cfg.revert, cfg.round_th, cfg.step_form)
            diagnose = cfg.theory_mode and problem.S_star is not None and problem.f_star is not None
            _, trace = regiht_solve(obj, x0, rcfg,
                                    S_star=problem.S_star if diagnose else None,
                                    f_star=problem.f_star if diagnose else None,
                                    beta=problem.beta, theory_mode=cfg.theory_mode, s=job.s)
            record.reverts = trace.reverts
            if not rcfg.experimental:
                record.weight_mass_ok = weight_mass_report(trace.weights_initial, trace.weights_final, c, T).holds
            if diagnose:
                record.dichotomy_violations = sum(not d.any_holds for d in trace.dichotomy)
        record.status = trace.status
        record.rows = [self._row(job, record, r, problem.f0, problem.f_base) for r in trace]

    def _run_lowrank(self, job: Job, record: RunRecord) -> None:
        cfg = self.cfg
        if cfg.lowrank_objective == 'sensing':
            obj, _ = gen_sensing_instance(cfg.lowrank_m, cfg.lowrank_n, cfg.lowrank_r, cfg.lowrank_measurements,
                                          job.seed)
        else:
            obj = gen_frobenius_instance(cfg.lowrank_m, cfg.lowrank_n, cfg.lowrank_r, cfg.lowrank_kappa, job.seed)
        f0 = obj.value(np.zeros(obj.shape))
        eta = 1.0 / (2.0 * obj.beta_estimate)
        record.eta, record.s_prime = eta, cfg.lowrank_r_prime
        # the planted target is an exact minimizer with value 0
        _, trace = local_search_solve(obj, cfg.lowrank_r, cfg.lowrank_r_prime, 0.0, cfg.lowrank_eps * f0,
                                      cfg.lowrank_max_iters, eta=eta, theory_mode=cfg.theory_mode,
                                      step_form=cfg.lowrank_step_form)
        record.status = trace.status
        record.branch_counts = dict(trace.branch_counts)
        record.rows = [self._row(job, record, r, f0, 0.0) for r in trace]

    @staticmethod
    def _row(job: Job, record: RunRecord, r, f0: float, f_base: Optional[float]) -> CsvRow:
        excess = (r.f_value - f_base) / f0 if f_base is not None and f0 > 0 else None
        return CsvRow(job.run_id, job.algo, job.seed, record.eta, record.c, r.iter, r.f_value, excess,
                      r.g_value, r.support_size, r.weight_mass, r.branch)


def _dense_baseline(obj) -> Optional[float]:
    """f(x**) of the dense minimizer; the best iterate is used if the solver hits its cap."""
    try:
        return obj.value(dense_optimum(obj))
    except ConvergenceError as e:
        ConfigManager.console_print(f'Dense baseline did not converge ({e}); using the best iterate')
        return obj.value(e.best) if e.best is not None else None


def run_experiment(cfg: ExperimentConfig) -> List[RunRecord]:
    """Run every job of `cfg`; failed runs are recorded with status 'failed' and never abort the batch."""
    return ExperimentRunner(cfg).run()


class SummaryRow(NamedTuple):
    algo: str
    s: int
    eta: Optional[float]
    c: Optional[float]
    n_seeds: int
    mean_f: float
    stderr: Optional[float]
    flagged: bool


def stderr_bands(records: List[RunRecord], by_step: bool = True) -> List[SummaryRow]:
    """
    Mean and standard error (sample std / sqrt(n)) of the final f per group.

    Groups are (algo, s, eta, c), or (algo, s) with by_step=False. A group with a single
    seed has no band: stderr is None and the row is flagged.
    """
    groups: Dict[tuple, List[float]] = {}
    for rec in records:
        if rec.failed or not rec.rows:
            continue
        key = (rec.algo, rec.s, rec.eta, rec.c) if by_step else (rec.algo, rec.s, None, None)
        groups.setdefault(key, []).append(rec.final_f)
    rows = []
    for (algo, s, eta, c), values in sorted(groups.items(), key=lambda kv: _sort_key(kv[0])):
        v = np.asarray(values)
        if v.size >= 2:
            rows.append(SummaryRow(algo, s, eta, c, v.size, float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)),
                                   False))
        else:
            ConfigManager.console_print(f'Group {algo} s={s} has a single seed; no error band')
            rows.append(SummaryRow(algo, s, eta, c, v.size, float(v.mean()), None, True))
    return rows


def _sort_key(key: tuple) -> tuple:
    algo, s, eta, c = key
    return algo, s, -math.inf if eta is None else eta, -math.inf if c is None else c


def best_records(records: List[RunRecord]) -> List[RunRecord]:
    """Per (algo, s, seed, c), the run whose step size reached the lowest final f."""
    best: Dict[tuple, RunRecord] = {}
    for rec in records:
        if rec.failed or not rec.rows or not math.isfinite(rec.final_f):
            continue
        key = (rec.algo, rec.s, rec.seed, rec.c if rec.algo == 'regiht' else None)
        if key not in best or rec.final_f < best[key].final_f:
            best[key] = rec
    return sorted(best.values(), key=lambda r: r.run_id)


def relative_excess(records: List[RunRecord]) -> Dict[int, Optional[float]]:
    """e_regiht / e_iht per sparsity level, from the mean final excess loss of the best-step runs."""
    per_s: Dict[int, Dict[str, List[float]]] = {}
    for rec in best_records(records):
        if rec.algo in ('iht', 'regiht') and rec.final_excess is not None:
            per_s.setdefault(rec.s, {}).setdefault(rec.algo, []).append(rec.final_excess)
    out = {}
    for s, by_algo in sorted(per_s.items()):
        if 'iht' in by_algo and 'regiht' in by_algo and np.mean(by_algo['iht']) > 0:
            out[s] = float(np.mean(by_algo['regiht']) / np.mean(by_algo['iht']))
        else:
            out[s] = None
    return out


def summary_path(out: str) -> str:
    root, ext = os.path.splitext(out)
    return f'{root}.summary{ext or ".csv"}'


def write_summary(path: str, records: List[RunRecord]) -> None:
    """Error bands over the best-step runs, one row per (algo, s), with the relative excess on regiht rows."""
    ratios = relative_excess(records)
    with open(path, 'w', newline='') as file:
        writer = csv.writer(file)
        writer.writerow(SUMMARY_HEADER)
        for row in stderr_bands(best_records(records), by_step=False):
            ratio = ratios.get(row.s) if row.algo == 'regiht' else None
            writer.writerow([_format(v) for v in row] + [_format(ratio)])

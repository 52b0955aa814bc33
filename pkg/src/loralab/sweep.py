"""Teacher-student gap sweeps over (rank, sample-size) grids.

Each cell of a sweep draws fresh training data, initializes and trains an
adapter, measures the train/holdout gap against a large holdout set, and
evaluates the closed-form envelope at the matching configuration. Cells are
independent jobs keyed by (seed, r, N); their random streams derive from
those keys alone, so results are identical no matter how many workers run
them or in which order.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .bounds import BoundConfig, generalization_bound
from .empirical import TrainConfig, TrainingDiverged, empirical_risk, train_projected_sgd
from .network import Architecture, LoraAdapter, PretrainedNet, _forward, init_adapter, random_pretrained
from .rng import RngKey, ensure_generator
from .validation import check_non_negative, check_positive, check_positive_int


def nested_adapter_init(key: RngKey, arch: Architecture, init_scale: float,
                        box_bound: float) -> LoraAdapter:
    """Zero-trainable adapter whose frozen columns come from per-column streams.

    Column j of layer t is drawn from the (t, j) substream of ``key``, so
    adapters of different ranks built from the same key share their leading
    columns. Marginally every entry stays i.i.d. Gaussian; the coupling only
    pairs rank comparisons within a sweep seed.
    """
    outs, ins = [], []
    for t, (dout, din) in enumerate(arch.layer_shapes()):
        cols = [init_scale * key.split(t, j).generator().standard_normal(dout)
                for j in range(arch.r)]
        outs.append(np.column_stack(cols))
        ins.append(np.zeros((arch.r, din)))
    return LoraAdapter(arch, outs, ins, box_bound=box_bound, init_scale=init_scale)

CSV_HEADER = ("seed,r,N,q_formula,q_exact,M,nu,delta,train_risk,holdout_risk,"
              "gap,G_star,R,A_term,L_lora,wallclock_ms,status")

INPUT_LAWS = ("uniform", "bernoulli")


@dataclass
class SyntheticTask:
    """Data generator: inputs on the unit cube, labels from a hidden adapted teacher."""

    net: PretrainedNet
    target_adapter: LoraAdapter
    noise_std: float
    input_law: str = "uniform"

    def __post_init__(self):
        check_non_negative(self.noise_std, "noise_std")
        if self.input_law not in INPUT_LAWS:
            raise ValueError(f"input_law must be one of {INPUT_LAWS}, got {self.input_law!r}")

    def sample(self, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
        n = check_positive_int(n, "n")
        gen = ensure_generator(rng)
        d = self.net.arch.d
        if self.input_law == "uniform":
            X = gen.uniform(0.0, 1.0, size=(n, d))
        else:
            X = gen.integers(0, 2, size=(n, d)).astype(np.float64)
        Y = _forward(self.net, self.target_adapter, X)
        if self.noise_std > 0.0:
            Y = Y + self.noise_std * gen.standard_normal(Y.shape)
        return X, Y


def make_teacher_task(rng, arch: Architecture, teacher_rank: int, teacher_scale: float,
                      noise_std: float, input_law: str = "uniform",
                      weight_scale: float | None = None) -> SyntheticTask:
    """Teacher sharing the student's base network plus a hidden rank-limited adapter.

    ``teacher_scale`` sets the magnitude of the hidden trainable factors and
    thereby how far the target sits from the bare base network.
    """
    check_positive(teacher_scale, "teacher_scale")
    gen = ensure_generator(rng)
    teacher_arch = replace(arch, r=teacher_rank)
    net = random_pretrained(gen, teacher_arch, weight_scale=weight_scale)
    target = init_adapter(gen, teacher_arch, init_scale=1.0 / np.sqrt(teacher_arch.W),
                          box_bound=max(teacher_scale, 1.0))
    for a in target.trainable_factors:
        a[...] = gen.uniform(-teacher_scale, teacher_scale, size=a.shape)
    return SyntheticTask(net=net, target_adapter=target, noise_std=noise_std,
                         input_law=input_law)


@dataclass(frozen=True)
class ExperimentRecord:
    """One sweep cell in CSV column order."""

    seed: int
    r: int
    N: int
    q_formula: int
    q_exact: int
    M: float
    nu: float
    delta: float
    train_risk: float
    holdout_risk: float
    gap: float
    G_star: float
    R: float
    A_term: float
    L_lora: float
    wallclock_ms: int
    status: str

    def csv_row(self) -> str:
        return ",".join([
            str(self.seed), str(self.r), str(self.N), str(self.q_formula),
            str(self.q_exact), repr(self.M), repr(self.nu), repr(self.delta),
            repr(self.train_risk), repr(self.holdout_risk), repr(self.gap),
            repr(self.G_star), repr(self.R), repr(self.A_term), repr(self.L_lora),
            str(self.wallclock_ms), self.status,
        ])


def run_cell(task: SyntheticTask, rank: int, n_train: int, seed: int,
             train_cfg: TrainConfig, box_bound: float, init_scale: float,
             delta: float, depth_constant: float = 1.0, holdout_size: int = 10_000,
             record_timing: bool = True, return_model: bool = False):
    """Train one adapter on fresh data and compare its measured gap to the envelope.

    Each cell reproduces bit-identically in isolation: its streams are pure
    functions of (seed, rank, n_train). Cells differing only in rank share
    their data, holdout, minibatch, and leading frozen-factor columns
    (common random numbers with nested initializations), so rank comparisons
    within a seed are paired rather than independent. With ``return_model``
    the trained network and adapter are returned alongside the record.
    """
    started = time.perf_counter()
    base_arch = task.net.arch
    arch = replace(base_arch, r=rank)
    shared_key = RngKey(seed).split(0, n_train)

    X, Y = task.sample(n_train, shared_key.split(0))
    adapter = nested_adapter_init(shared_key.split(2), arch, init_scale=init_scale,
                                  box_bound=box_bound)
    student_net = PretrainedNet(arch, task.net.weights, task.net.biases)
    status = "ok"
    try:
        train_projected_sgd(student_net, adapter, X, Y, train_cfg, rng=shared_key.split(3))
    except TrainingDiverged:
        status = "diverged"

    predict = lambda Z: _forward(student_net, adapter, Z)
    train_risk = empirical_risk(predict, X, Y)
    Xh, Yh = task.sample(holdout_size, shared_key.split(1))
    holdout_risk = empirical_risk(predict, Xh, Yh)
    gap = abs(holdout_risk - train_risk)

    report = generalization_bound(BoundConfig(
        arch=arch, box_bound=box_bound, init_scale=init_scale,
        weight_sup=task.net.max_abs_param, n_samples=n_train, delta=delta,
        depth_constant=depth_constant))

    elapsed_ms = int(round((time.perf_counter() - started) * 1000)) if record_timing else 0
    record = ExperimentRecord(
        seed=seed, r=rank, N=n_train, q_formula=report.q_formula,
        q_exact=report.q_exact, M=box_bound, nu=init_scale, delta=delta,
        train_risk=train_risk, holdout_risk=holdout_risk, gap=gap,
        G_star=report.G_star, R=report.R, A_term=report.A, L_lora=report.L_lora,
        wallclock_ms=elapsed_ms, status=status)
    if return_model:
        return record, student_net, adapter
    return record


def gap_sweep(task: SyntheticTask, r_values, n_values, seeds, train_cfg: TrainConfig,
              box_bound: float, init_scale: float, delta: float,
              depth_constant: float = 1.0, holdout_size: int = 10_000,
              n_jobs: int = 1, record_timing: bool = True) -> list:
    """Run every (r, N, seed) cell and return records sorted by (r, N, seed).

    Cells run independently (optionally in a thread pool); a diverged
    training run produces a ``status="diverged"`` row instead of raising.
    """
    r_values = [check_positive_int(r, "r") for r in r_values]
    n_values = [check_positive_int(n, "N") for n in n_values]
    seeds = [int(s) for s in seeds]
    if not r_values or not n_values or not seeds:
        raise ValueError("r_values, n_values, and seeds must be non-empty")
    cells = [(r, n, s) for r in r_values for n in n_values for s in seeds]

    def work(cell):
        r, n, s = cell
        return run_cell(task, r, n, s, train_cfg, box_bound=box_bound,
                        init_scale=init_scale, delta=delta,
                        depth_constant=depth_constant, holdout_size=holdout_size,
                        record_timing=record_timing)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(work, cells))
    else:
        records = [work(c) for c in cells]
    records.sort(key=lambda rec: (rec.r, rec.N, rec.seed))
    return records


def records_to_csv(records) -> str:
    lines = [CSV_HEADER]
    lines.extend(rec.csv_row() for rec in records)
    return "\n".join(lines) + "\n"


def write_records_csv(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(records_to_csv(records))

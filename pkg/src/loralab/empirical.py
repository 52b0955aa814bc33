"""Empirical side of the gap analysis.

Losses and risks, projected-SGD training of the trainable factor, Monte Carlo
estimation of empirical Rademacher complexity, greedy function-space covers,
finite-difference probes contrasting one- and two-factor parameterizations,
and the frozen-factor diameter event.

The risk statistics reported here are pointwise surrogates: the worst-case
gap over the whole adapter class is not computable, so every estimate below
is a lower witness that the closed-form envelope must dominate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import LoraAdapter, PretrainedNet, forward_lora, _backward_trainable, _forward
from .bounds import perturbation_radius
from .rng import ensure_generator
from .validation import check_positive, check_positive_int, check_samples


def clipped_distance_loss(y_pred, y_true) -> float:
    """min(1, ||y_pred - y_true||_2): 1-Lipschitz in the prediction, valued in [0, 1]."""
    yp = np.asarray(y_pred, dtype=np.float64).ravel()
    yt = np.asarray(y_true, dtype=np.float64).ravel()
    if yp.shape != yt.shape:
        raise ValueError(f"prediction and target lengths differ: {yp.shape} vs {yt.shape}")
    return float(min(1.0, np.linalg.norm(yp - yt)))


def clipped_losses(Y_pred, Y_true) -> np.ndarray:
    """Row-wise clipped distance losses for (n, D) prediction/target batches."""
    Yp = np.atleast_2d(np.asarray(Y_pred, dtype=np.float64))
    Yt = np.atleast_2d(np.asarray(Y_true, dtype=np.float64))
    if Yp.shape != Yt.shape:
        raise ValueError(f"prediction and target shapes differ: {Yp.shape} vs {Yt.shape}")
    return np.minimum(1.0, np.linalg.norm(Yp - Yt, axis=1))


def empirical_risk(predict, X, Y) -> float:
    """Mean clipped loss of ``predict`` over a non-empty sample batch."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] < 1:
        raise ValueError("empirical risk needs at least one sample")
    return float(np.mean(clipped_losses(np.atleast_2d(predict(X)), Y)))


class TrainingDiverged(RuntimeError):
    """Raised when the training risk blows past ten times its initial value."""


@dataclass(frozen=True)
class TrainConfig:
    """Projected-SGD settings; ``box_bound=None`` inherits the adapter's box.

    ``final_lr_fraction`` applies geometric step-size decay from
    ``learning_rate`` down to ``learning_rate * final_lr_fraction`` over the
    run; 1.0 keeps the step size constant.
    """

    steps: int
    learning_rate: float
    batch_size: int = 32
    box_bound: float | None = None
    final_lr_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        check_positive_int(self.steps, "steps")
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0.0:
            raise ValueError(f"learning_rate must be a non-negative real, got {self.learning_rate!r}")
        check_positive_int(self.batch_size, "batch_size")
        if self.box_bound is not None:
            check_positive(self.box_bound, "box_bound")
        if not 0.0 < self.final_lr_fraction <= 1.0:
            raise ValueError(f"final_lr_fraction must lie in (0, 1], got {self.final_lr_fraction!r}")


def train_projected_sgd(net: PretrainedNet, adapter: LoraAdapter, X, Y,
                        cfg: TrainConfig, rng=None) -> np.ndarray:
    """Minibatch SGD on the trainable factors with per-step box projection.

    Optimizes the mean squared error; after every step each trainable entry
    is clamped to [-M, M]. Frozen factors and base parameters are never
    touched. Returns the per-step minibatch clipped-risk trace. Mutates the
    adapter in place. ``rng`` overrides ``cfg.seed`` for minibatch sampling.

    Raises :class:`TrainingDiverged` if the full-sample clipped risk exceeds
    ten times its initial value at any checkpoint.
    """
    arch = net.arch
    X = check_samples(X, "X", n_features=arch.d)
    Y = check_samples(Y, "Y", n_features=arch.D)
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y sample counts differ")
    n = X.shape[0]
    box = cfg.box_bound if cfg.box_bound is not None else adapter.box_bound
    if box > adapter.box_bound:
        raise ValueError("training box_bound may not exceed the adapter's box_bound")
    gen = ensure_generator(rng if rng is not None else cfg.seed)

    predict = lambda Z: _forward(net, adapter, Z)
    initial_risk = empirical_risk(predict, X, Y)
    check_every = max(1, cfg.steps // 10)
    trace = np.empty(cfg.steps)
    decay = cfg.final_lr_fraction ** (1.0 / max(cfg.steps - 1, 1))

    for step in range(cfg.steps):
        idx = gen.integers(0, n, size=min(cfg.batch_size, n))
        Xb, Yb = X[idx], Y[idx]
        preds, caches = _forward(net, adapter, Xb, cache=True)
        resid = preds - Yb
        trace[step] = float(np.mean(np.minimum(1.0, np.linalg.norm(resid, axis=1))))
        if cfg.learning_rate > 0.0:
            lr = cfg.learning_rate * decay**step
            grads = _backward_trainable(net, adapter, caches, resid / len(idx))
            for g, a in zip(grads, adapter.trainable_factors):
                a -= lr * g
                np.clip(a, -box, box, out=a)
        if (step + 1) % check_every == 0:
            risk = empirical_risk(predict, X, Y)
            if risk > 10.0 * initial_risk:
                raise TrainingDiverged(
                    f"train risk {risk:.4f} exceeded 10x initial risk {initial_risk:.4f} "
                    f"at step {step + 1}")
    return trace


# --- Rademacher complexity ----------------------------------------------------

def rademacher_from_losses(loss_matrix, n_sign_draws: int, rng) -> tuple[float, float]:
    """Sign-average of sup over rows of (1/m) sum_i sigma_i * loss[row, i].

    Returns the Monte Carlo mean over sign draws and its standard error.
    """
    L = np.atleast_2d(np.asarray(loss_matrix, dtype=np.float64))
    n_sign_draws = check_positive_int(n_sign_draws, "n_sign_draws")
    if n_sign_draws < 100:
        raise ValueError("n_sign_draws must be at least 100")
    m = L.shape[1]
    gen = ensure_generator(rng)
    sups = np.empty(n_sign_draws)
    for k in range(n_sign_draws):
        signs = gen.integers(0, 2, size=m) * 2.0 - 1.0
        sups[k] = float(np.max(L @ signs) / m)
    return float(np.mean(sups)), float(np.std(sups, ddof=1) / math.sqrt(n_sign_draws))


def rademacher_mc(model_sampler, X, Y, n_sign_draws: int, n_model_draws: int, rng,
                  extra_models=()) -> tuple[float, float]:
    """Monte Carlo empirical Rademacher complexity of a sampled model class.

    The sup over the class is approximated from below by the best of
    ``n_model_draws`` models drawn by ``model_sampler(generator)`` plus any
    ``extra_models`` (e.g. trained ones); the result is therefore a lower
    estimate of the true complexity.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    n_model_draws = check_positive_int(n_model_draws, "n_model_draws")
    gen = ensure_generator(rng)
    models = [model_sampler(gen) for _ in range(n_model_draws)]
    models.extend(extra_models)
    loss_matrix = np.stack([clipped_losses(np.atleast_2d(f(X)), Y) for f in models])
    return rademacher_from_losses(loss_matrix, n_sign_draws, gen)


def box_adapter_sampler(net: PretrainedNet, adapter: LoraAdapter):
    """Model sampler over the adapter class: trainable side uniform in the box.

    The frozen factors stay fixed at the given adapter's realization, so the
    sampled models walk the same conditional function class the bound covers.
    """
    def sample(gen: np.random.Generator):
        probe = adapter.clone()
        for a in probe.trainable_factors:
            a[...] = gen.uniform(-probe.box_bound, probe.box_bound, size=a.shape)
        return lambda Z, _probe=probe: forward_lora(net, _probe, Z)
    return sample


# --- greedy covering ----------------------------------------------------------

def cover_count(values, eps_cov: float) -> int:
    """Greedy farthest-point cover count of rows under the sup metric.

    Rows are function evaluations on a fixed grid; the greedy construction
    yields a valid cover of the sampled functions, hence a lower witness for
    the covering number of the full class.
    """
    V = np.asarray(values, dtype=np.float64)
    if V.ndim == 3:  # (funcs, grid, D) -> sup over grid of output sup-norm
        V = V.reshape(V.shape[0], -1)
    if V.ndim != 2 or V.shape[0] < 1:
        raise ValueError("values must be a non-empty (n_functions, n_points) array")
    check_positive(eps_cov, "eps_cov")
    n = V.shape[0]
    dist_to_centers = np.full(n, np.inf)
    count = 0
    while True:
        far = int(np.argmax(dist_to_centers))
        if dist_to_centers[far] <= eps_cov:
            break
        count += 1
        d = np.max(np.abs(V - V[far]), axis=1)
        dist_to_centers = np.minimum(dist_to_centers, d)
    return count


def empirical_cover(functions, grid, eps_cov: float) -> int:
    """Greedy cover count of callables evaluated on a grid of inputs."""
    if len(functions) < 1:
        raise ValueError("need at least one function sample")
    G = np.asarray(grid, dtype=np.float64)
    if G.size < 1:
        raise ValueError("grid must be non-empty")
    values = np.stack([np.atleast_2d(np.asarray(f(G), dtype=np.float64)).reshape(len(G), -1)
                       for f in functions])
    return cover_count(values, eps_cov)


# --- one- versus two-factor curvature probe ------------------------------------

def finite_difference_lipschitz(map_fn, base_point, n_probes: int, rng,
                                step: float = 1e-6) -> float:
    """Local Lipschitz estimate: best directional difference quotient at a point."""
    gen = ensure_generator(rng)
    base = np.asarray(base_point, dtype=np.float64)
    f0 = np.asarray(map_fn(base), dtype=np.float64)
    best = 0.0
    for _ in range(n_probes):
        direction = gen.standard_normal(base.shape)
        direction /= np.linalg.norm(direction)
        f1 = np.asarray(map_fn(base + step * direction), dtype=np.float64)
        best = max(best, float(np.linalg.norm(f1 - f0) / step))
    return best


def lipschitz_growth_slope(map_fn, base_sampler, rho_grid, n_probes: int, rng,
                           step: float = 1e-6) -> float:
    """Fitted log-log slope of the local Lipschitz estimate versus base-point norm."""
    rhos = sorted({float(r) for r in rho_grid})
    if len(rhos) < 3:
        raise ValueError("rho_grid must contain at least 3 distinct radii")
    gen = ensure_generator(rng)
    logs_rho, logs_lip = [], []
    for rho in rhos:
        base = base_sampler(gen)
        base = base * (rho / np.linalg.norm(base))
        lip = finite_difference_lipschitz(map_fn, base, n_probes, gen, step)
        logs_rho.append(math.log(rho))
        logs_lip.append(math.log(max(lip, 1e-300)))
    slope = np.polyfit(logs_rho, logs_lip, 1)[0]
    return float(slope)


def factor_lipschitz_growth(net: PretrainedNet, rng, n_probes: int,
                            rho_grid=(1.0, 2.0, 4.0, 8.0, 16.0)) -> tuple[float, float]:
    """Growth exponents of the factor-map derivative in the base-point norm.

    Probes the first-layer factor shapes of ``net``. With one trainable factor
    the map A -> B0 A is linear, so its local Lipschitz constant is flat in
    the base norm (slope ~ 0); with both factors trainable the product map
    (A, B) -> B A is quadratic and its derivative grows linearly (slope ~ 1).
    Returns (one_factor_slope, two_factor_slope).
    """
    n_probes = check_positive_int(n_probes, "n_probes")
    if n_probes < 100:
        raise ValueError("n_probes must be at least 100")
    arch = net.arch
    gen = ensure_generator(rng)
    dout, din, r = arch.W, arch.d, arch.r

    b0 = gen.standard_normal((dout, r))

    def one_factor(a_flat):
        return (b0 @ a_flat.reshape(r, din)).ravel()

    def two_factor(ab_flat):
        b = ab_flat[: dout * r].reshape(dout, r)
        a = ab_flat[dout * r:].reshape(r, din)
        return (b @ a).ravel()

    slope_one = lipschitz_growth_slope(
        one_factor, lambda g: g.standard_normal(r * din), rho_grid, n_probes, gen)
    slope_two = lipschitz_growth_slope(
        two_factor, lambda g: g.standard_normal(dout * r + r * din), rho_grid, n_probes, gen)
    return slope_one, slope_two


# --- frozen-factor diameter event ----------------------------------------------

def diameter_event_frequency(width: int, rank: int, init_scale: float, box_bound: float,
                             eps: float, n_draws: int, rng) -> float:
    """Frequency of the event max_i M |sum_k B_ik| <= R over frozen-factor draws.

    ``M |sum_k B_ik|`` is the row-wise worst case of |[B A]_ij| over
    box-admissible trainable factors as controlled by the Gaussian row-sum
    concentration; R is :func:`perturbation_radius` at the same (eps, W, r).
    The frequency should be at least 1 - eps up to Monte Carlo error.
    """
    n_draws = check_positive_int(n_draws, "n_draws")
    radius = perturbation_radius(box_bound, init_scale, rank, width, eps)
    gen = ensure_generator(rng)
    hits = 0
    for _ in range(n_draws):
        b = init_scale * gen.standard_normal((width, rank))
        worst = box_bound * np.max(np.abs(b.sum(axis=1)))
        hits += worst <= radius
    return hits / n_draws

"""Constructive worst-case machinery and concentration verifiers.

Builds the identity-emulating adapter (trainable factor = pinv(frozen) times
the identity correction of each layer), checks its operator-norm
admissibility against the smallest singular value of the frozen factor,
verifies Gordon-type concentration for Gaussian matrices by Monte Carlo,
estimates small-ball (anti-concentration) probabilities of sign sums exactly
or by simulation, and assembles the full lower-bound experiment on the fair
Bernoulli source.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from math import comb

import numpy as np

from .linalg import operator_norm, pinv
from .network import LoraAdapter, PretrainedNet
from .rng import ensure_generator
from .validation import check_non_negative, check_positive, check_positive_int


class ConcentrationViolation(RuntimeError):
    """A Monte Carlo frequency exceeded its concentration bound plus slack."""


def rectangular_identity(n_out: int, n_in: int) -> np.ndarray:
    """Ones on the main diagonal: pads with zero rows when n_out > n_in,
    truncates trailing coordinates when n_out < n_in."""
    check_positive_int(n_out, "n_out")
    check_positive_int(n_in, "n_in")
    return np.eye(n_out, n_in)


def build_identity_interpolator(dims) -> list:
    """Padded identity per transition of a non-shrinking width schedule.

    ``dims`` lists widths (d_1, ..., d_L); transition t carries the first d_t
    coordinates into d_{t+1} rows, zero-padding the rest. Shrinking schedules
    are rejected because padding cannot represent them.
    """
    dims = [check_positive_int(d, "dims entry") for d in dims]
    if len(dims) < 2:
        raise ValueError("dims must list at least two widths")
    for a, b in zip(dims, dims[1:]):
        if b < a:
            raise ValueError(f"width schedule must be non-shrinking, got {a} -> {b}")
    return [rectangular_identity(b, a) for a, b in zip(dims, dims[1:])]


@dataclass
class AdversarialInstance:
    """Identity-emulating construction plus its admissibility certificates.

    ``admissibility_margin`` is the largest over layers of
    ``||A_t||_op - C_pre / s_min(B_t)``; submultiplicativity makes it
    non-positive up to floating-point error. ``residual`` is the worst
    identity-emulation error over the support {0, 1}. ``adapter`` is a
    box-validated :class:`LoraAdapter` whenever the construction rank is
    admissible (below the hidden width); the square-factor construction test
    deliberately uses rank = width and then only the raw factors are kept.
    """

    net: PretrainedNet
    out_factors: list
    in_factors: list
    adapter: LoraAdapter | None
    rank: int
    eta: float
    eta_star: float
    m_eta: float | None
    c_pre: float
    residual: float
    op_norms: list
    smallest_singulars: list
    admissibility_margin: float
    rank_deficient: bool
    gordon_ok: bool

    def predict(self, x: float) -> float:
        return _zero_bias_relu_forward(self.net.weights, self.out_factors,
                                       self.in_factors, x)


def _zero_bias_relu_forward(weights, out_factors, in_factors, x: float) -> float:
    h = np.array([float(x)])
    last = len(weights) - 1
    for t, w in enumerate(weights):
        pre = w @ h + out_factors[t] @ (in_factors[t] @ h)
        h = np.maximum(pre, 0.0) if t < last else pre
    return float(h[0])


def width_margin(hidden_dims, rank: int) -> float:
    """eta* = min over hidden layers of sqrt(d_out) - sqrt(rank)."""
    return min(math.sqrt(d) - math.sqrt(rank) for d in hidden_dims)


def construct_adversarial(net: PretrainedNet, frozen_factors, eta: float,
                          allow_square: bool = False) -> AdversarialInstance:
    """Build the adapter whose trainable factors steer every layer to the identity.

    Layer t's trainable factor is ``pinv(B_t) @ (I_rect - W_t)``. When the
    frozen factor has full row rank the correction is exact; otherwise the
    emulation residual is measured rather than assumed zero. Requires a
    scalar-in, scalar-out ReLU network with zero biases. The construction
    rank is inferred from the frozen factors and need not match the
    network's nominal adapter rank.

    ``allow_square`` skips the eta-window requirement for the square
    frozen-factor construction test, where the margin eta* is zero by design.
    """
    arch = net.arch
    if arch.d != 1 or arch.D != 1:
        raise ValueError("adversarial construction requires d = D = 1")
    if arch.activation != "relu":
        raise ValueError("adversarial construction requires the relu activation")
    if any(b.any() for b in net.biases):
        raise ValueError("adversarial construction requires zero biases")
    eta = check_positive(eta, "eta")

    shapes = arch.layer_shapes()
    if len(frozen_factors) != len(shapes):
        raise ValueError(f"expected {len(shapes)} frozen factors")
    frozen = [np.asarray(b, dtype=np.float64) for b in frozen_factors]
    rank = frozen[0].shape[1]
    hidden_dims = arch.out_dims()[:-1]
    eta_star = width_margin(hidden_dims, rank)
    if not allow_square and not eta < eta_star:
        raise ValueError(f"eta must lie in (0, eta_star={eta_star:.6g}), got {eta}")

    c_pre = 1.0 + max(operator_norm(w) for w in net.weights)
    in_factors, op_norms, smins = [], [], []
    margin = -math.inf
    rank_deficient = False
    for t, (dout, din) in enumerate(shapes):
        b = frozen[t]
        if b.shape != (dout, rank):
            raise ValueError(f"frozen factor {t} must have shape {(dout, rank)}, got {b.shape}")
        svals = np.linalg.svd(b, compute_uv=False)
        if svals[-1] <= max(b.shape) * np.finfo(np.float64).eps * svals[0]:
            rank_deficient = True
        target = rectangular_identity(dout, din) - net.weights[t]
        a = pinv(b) @ target
        in_factors.append(a)
        op_norms.append(operator_norm(a))
        smins.append(float(svals[-1]))
        margin = max(margin, op_norms[-1] - c_pre / smins[-1])

    residual = max(abs(_zero_bias_relu_forward(net.weights, frozen, in_factors, x) - x)
                   for x in (0.0, 1.0))

    denom = min(math.sqrt(d) - math.sqrt(rank) - eta for d in hidden_dims)
    m_eta = 1.0 / denom if denom > 0 else None
    gordon_ok = all(s >= math.sqrt(d) - math.sqrt(rank) - eta
                    for s, d in zip(smins[:-1], hidden_dims))

    adapter = None
    if rank < arch.W:
        box = max(max(abs(a).max() for a in in_factors), 1e-12) * (1.0 + 1e-9)
        adapter = LoraAdapter(replace(arch, r=rank), [b.copy() for b in frozen],
                              [a.copy() for a in in_factors],
                              box_bound=box, init_scale=1.0)

    return AdversarialInstance(
        net=net, out_factors=frozen, in_factors=in_factors, adapter=adapter,
        rank=rank, eta=eta, eta_star=eta_star, m_eta=m_eta, c_pre=c_pre,
        residual=residual, op_norms=op_norms, smallest_singulars=smins,
        admissibility_margin=margin, rank_deficient=rank_deficient,
        gordon_ok=gordon_ok)


# --- Gordon-type concentration --------------------------------------------------

def _batched_smin(gen: np.random.Generator, d_out: int, r: int, trials: int) -> np.ndarray:
    """Smallest singular values of `trials` i.i.d. standard Gaussian d_out x r matrices."""
    g = gen.standard_normal((trials, d_out, r))
    gram = np.einsum("tij,tik->tjk", g, g)
    eig = np.linalg.eigvalsh(gram)
    return np.sqrt(np.maximum(eig[:, 0], 0.0))


@dataclass(frozen=True)
class GordonCheck:
    failure_rate: float
    bound: float
    mean_smin: float


def gordon_verify(d_out: int, r: int, eta: float, trials: int, rng,
                  c: float = 0.5) -> GordonCheck:
    """Monte Carlo check of P(s_min < sqrt(d_out) - sqrt(r) - eta) <= 2 exp(-c eta^2).

    Raises :class:`ConcentrationViolation` when the empirical rate exceeds
    the bound by more than three Monte Carlo standard errors.
    """
    trials = check_positive_int(trials, "trials")
    if trials < 1000:
        raise ValueError("trials must be at least 1000")
    check_positive(eta, "eta")
    gen = ensure_generator(rng)
    smins = _batched_smin(gen, check_positive_int(d_out, "d_out"),
                          check_positive_int(r, "r"), trials)
    threshold = math.sqrt(d_out) - math.sqrt(r) - eta
    rate = float(np.mean(smins < threshold))
    bound = 2.0 * math.exp(-c * eta * eta)
    if rate > bound + 3.0 * math.sqrt(bound / trials):
        raise ConcentrationViolation(
            f"smallest-singular-value failure rate {rate:.4g} exceeds bound {bound:.4g}")
    return GordonCheck(failure_rate=rate, bound=bound, mean_smin=float(np.mean(smins)))


@dataclass(frozen=True)
class UnionGordonCheck:
    violation_rate: float
    bound: float


def union_gordon(out_dims, r: int, eta: float, trials: int, rng,
                 c: float = 0.5) -> UnionGordonCheck:
    """Frequency that any layer's s_min drops below its threshold, against 2 L exp(-c eta^2)."""
    out_dims = [check_positive_int(d, "out_dims entry") for d in out_dims]
    trials = check_positive_int(trials, "trials")
    check_positive(eta, "eta")
    gen = ensure_generator(rng)
    violated = np.zeros(trials, dtype=bool)
    for d_out in out_dims:
        smins = _batched_smin(gen, d_out, r, trials)
        violated |= smins < (math.sqrt(d_out) - math.sqrt(r) - eta)
    bound = 2.0 * len(out_dims) * math.exp(-c * eta * eta)
    return UnionGordonCheck(violation_rate=float(np.mean(violated)), bound=bound)


# --- small-ball / anti-concentration --------------------------------------------

EXACT_SMALL_BALL_MAX_N = 64


@dataclass(frozen=True)
class SmallBallEstimate:
    n: int
    t: float
    p_hat: float
    standard_error: float
    exact_available: bool
    p_exact: float | None


def sign_sum_window_prob(n: int, t: float, center: float = 0.0) -> float:
    """Exact P(|S - center| <= t) for S a sum of n independent fair signs.

    Integer binomial enumeration; exact for any n at O(n) cost.
    """
    n = check_positive_int(n, "n")
    check_non_negative(t, "t")
    num = sum(comb(n, k) for k in range(n + 1) if abs((2 * k - n) - center) <= t)
    return num / float(2 ** n)


def small_ball(n: int, t: float, trials: int = 0, rng=None) -> SmallBallEstimate:
    """sup over centers of P(|sum of n fair signs - center| <= t).

    For n <= 64 the supremum is enumerated exactly over integer centers (sums
    live on a lattice of step 2, so integer centers realize every optimal
    window placement). Larger n falls back to Monte Carlo with the center
    grid restricted to integer lattice points within [-2t, 2t].
    """
    n = check_positive_int(n, "n")
    check_non_negative(t, "t")
    if n <= EXACT_SMALL_BALL_MAX_N:
        best_num = 0
        masses = [(2 * k - n, comb(n, k)) for k in range(n + 1)]
        for v in range(-n, n + 1):
            num = sum(m for s, m in masses if abs(s - v) <= t)
            best_num = max(best_num, num)
        p = best_num / float(2 ** n)
        return SmallBallEstimate(n=n, t=float(t), p_hat=p, standard_error=0.0,
                                 exact_available=True, p_exact=p)
    trials = check_positive_int(trials, "trials")
    if trials < 1000:
        raise ValueError("Monte Carlo small-ball estimation needs trials >= 1000")
    gen = ensure_generator(rng if rng is not None else 0)
    sums = 2 * gen.binomial(n, 0.5, size=trials) - n
    half_width = int(math.ceil(2 * t))
    centers = sorted(set(range(-half_width, half_width + 1)) | {0})
    p_hat = max(float(np.mean(np.abs(sums - v) <= t)) for v in centers)
    se = math.sqrt(max(p_hat * (1.0 - p_hat), 1.0 / trials) / trials)
    return SmallBallEstimate(n=n, t=float(t), p_hat=p_hat, standard_error=se,
                             exact_available=False, p_exact=None)


def sample_assumption_dist(rng, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Fair Bernoulli inputs on {0, 1} with deterministic zero labels."""
    n = check_positive_int(n, "n")
    gen = ensure_generator(rng)
    x = gen.integers(0, 2, size=(n, 1)).astype(np.float64)
    return x, np.zeros((n, 1))


# --- assembled lower-bound experiment --------------------------------------------

@dataclass(frozen=True)
class LowerBoundReport:
    """Aggregate of one lower-bound experiment, JSON-schema stable."""

    eta: float
    eta_star: float
    m_eta: float | None
    c_pre: float
    residual_max: float
    gordon_rate: float
    gordon_bound: float
    smallball_p: float
    event_frequency: float
    theory_floor: float

    def to_json_dict(self) -> dict:
        return {
            "eta": self.eta,
            "eta_star": self.eta_star,
            "M_eta": self.m_eta,
            "C_pre": self.c_pre,
            "residual_max": self.residual_max,
            "gordon_rate": self.gordon_rate,
            "gordon_bound": self.gordon_bound,
            "smallball_p": self.smallball_p,
            "event_frequency": self.event_frequency,
            "theory_floor": self.theory_floor,
        }


# Relative guard for the gap > 1/N comparison: the exact construction puts an
# atom of the gap distribution exactly at 1/N, and float noise in the forward
# pass must not flip that atom into the event.
_EVENT_GUARD = 1e-9


def lower_bound_experiment(dims, r: int, eta: float, delta: float, n_samples: int,
                           trials: int, rng, c: float = 0.5,
                           square_mode: bool = False,
                           weight_scale: float = 0.5) -> LowerBoundReport:
    """Measure how often the constructed worst adapter beats the 1/N gap.

    Per trial: draw fresh frozen factors, build the identity-emulating
    instance, draw N fair-Bernoulli samples with zero labels, and test
    whether the exact risk gap of the constructed network exceeds 1/N. The
    resulting frequency is reported next to the floor
    (1 - delta/2)(1 - p) where p is the exact probability that a centered
    n-term sign sum stays within window 2.

    ``dims`` is the full width schedule (1, W, ..., W, 1); ``square_mode``
    requires the construction rank to equal the hidden width, which makes
    the emulation exact.
    """
    dims = [check_positive_int(d, "dims entry") for d in dims]
    if len(dims) < 3:
        raise ValueError("dims must list input, at least one hidden, and output widths")
    if dims[0] != 1 or dims[-1] != 1:
        raise ValueError("the Bernoulli experiment requires scalar input and output widths")
    hidden = dims[1:-1]
    if len(set(hidden)) != 1:
        raise ValueError("hidden widths must be constant to match the layer schedule")
    w = hidden[0]
    depth = len(hidden)
    r = check_positive_int(r, "r")
    if square_mode and r != w:
        raise ValueError("square_mode requires the rank to equal the hidden width")
    if not square_mode and r >= w:
        raise ValueError("rank must be below the hidden width outside square_mode")
    check_positive(eta, "eta")
    n_samples = check_positive_int(n_samples, "N")
    trials = check_positive_int(trials, "trials")

    n_layers = depth + 1
    gordon_bound = 2.0 * n_layers * math.exp(-c * eta * eta)
    if not gordon_bound < delta < 2.0 * n_layers:
        raise ValueError(
            f"delta must lie in ({gordon_bound:.6g}, {2.0 * n_layers:.6g}), got {delta}")

    from .network import Architecture, random_pretrained

    # the network's nominal adapter rank is irrelevant to its weights; keep it
    # Setting-admissible even when the construction rank equals the width
    arch = Architecture(d=1, D=1, T=depth, W=w, r=min(r, max(w - 1, 1)))
    gen = ensure_generator(rng)
    net = random_pretrained(gen, arch, weight_scale=weight_scale, bias_scale=0.0)
    shapes = arch.layer_shapes()

    eta_star = width_margin(hidden, r)
    denom = min(math.sqrt(d) - math.sqrt(r) - eta for d in hidden)
    m_eta = 1.0 / denom if denom > 0 else None
    c_pre = 1.0 + max(operator_norm(wt) for wt in net.weights)

    counts = gen.binomial(n_samples, 0.5, size=trials)
    residual_max = 0.0
    gordon_violations = 0
    event_hits = 0
    for i in range(trials):
        frozen = [gen.standard_normal((dout, r)) for dout, _ in shapes]
        inst = construct_adversarial(net, frozen, eta, allow_square=square_mode)
        residual_max = max(residual_max, inst.residual)
        gordon_violations += not inst.gordon_ok
        f0, f1 = inst.predict(0.0), inst.predict(1.0)
        k = int(counts[i])
        true_risk = 0.5 * (abs(f0) + abs(f1))
        emp_risk = ((n_samples - k) * abs(f0) + k * abs(f1)) / n_samples
        event_hits += abs(true_risk - emp_risk) * n_samples > 1.0 + _EVENT_GUARD

    smallball_p = sign_sum_window_prob(n_samples, 2.0)
    return LowerBoundReport(
        eta=eta, eta_star=eta_star, m_eta=m_eta, c_pre=c_pre,
        residual_max=residual_max, gordon_rate=gordon_violations / trials,
        gordon_bound=gordon_bound, smallball_p=smallball_p,
        event_frequency=event_hits / trials,
        theory_floor=(1.0 - delta / 2.0) * (1.0 - smallball_p))

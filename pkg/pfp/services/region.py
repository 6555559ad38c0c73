"""Secret-key-assisted private capacity region of a cq wiretap channel.

The single-letter region is
    R <= I(X;B) - I(X;E) + R_s,    R <= I(X;B),    R, R_s >= 0
unioned over input distributions p. Boundaries are computed by maximizing
min{I(X;B), I(X;B) - I(X;E) + R_s} over the probability simplex.
"""
import logging
from itertools import combinations
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from pfp.core.config import get_settings
from pfp.core.exceptions import ConfigurationError
from pfp.schemas import (
    BoundarySample, CornerPoint, EnvelopePoint, OptimizationResult, OptimizerConfig, RatePoint, RegionBoundary,
)
from pfp.services.channels import CqWiretapChannel, tensor_power
from pfp.services.information import holevo_pair, spectrum_entropy
from pfp.services.linalg import eigvalsh
from pfp.utils.budget import ensure_within_budget, operator_bytes
from pfp.utils.parallel import run_parallel
from pfp.utils.rng import substream

logger = logging.getLogger("pfp")

FEASIBILITY_SLACK = 1e-12
TIE_TOL = 1e-12

BatchObjective = Callable[[np.ndarray], np.ndarray]


class HolevoEvaluator:
    """I(X;B) and I(X;E) for many input distributions at once."""

    def __init__(self, channel: CqWiretapChannel):
        self.channel = channel
        self.bob = channel.bob_states()
        self.eve = channel.eve_states()
        self.h_bob = spectrum_entropy(eigvalsh(self.bob))
        self.h_eve = spectrum_entropy(eigvalsh(self.eve))

    @property
    def alphabet_size(self) -> int:
        return self.channel.alphabet_size

    def __call__(self, probs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        p = np.atleast_2d(np.asarray(probs, dtype=float))
        avg_b = np.einsum("mk,kij->mij", p, self.bob)
        avg_e = np.einsum("mk,kij->mij", p, self.eve)
        i_b = spectrum_entropy(eigvalsh(avg_b)) - p @ self.h_bob
        i_e = spectrum_entropy(eigvalsh(avg_e)) - p @ self.h_eve
        return i_b, i_e

    def private_rate(self, key_rate: float) -> BatchObjective:
        def objective(p):
            i_b, i_e = self(p)
            return np.minimum(i_b, i_b - i_e + key_rate)
        return objective

    def bob_information(self) -> BatchObjective:
        return lambda p: self(p)[0]

    def eve_information(self) -> BatchObjective:
        return lambda p: self(p)[1]

    def holevo_gap(self) -> BatchObjective:
        def objective(p):
            i_b, i_e = self(p)
            return i_b - i_e
        return objective


def simplex_grid(k: int, resolution: int) -> np.ndarray:
    """Every distribution on k symbols with entries in multiples of 1/resolution."""
    points = []
    for bars in combinations(range(resolution + k - 1), k - 1):
        edges = (-1,) + bars + (resolution + k - 1,)
        points.append([edges[i + 1] - edges[i] - 1 for i in range(k)])
    return np.array(points, dtype=float) / resolution


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def _pick_best(values: np.ndarray, candidates: np.ndarray, tiebreak: Optional[BatchObjective]) -> int:
    best = float(np.max(values))
    tied = np.flatnonzero(values >= best - TIE_TOL)
    if tiebreak is None or tied.size == 1:
        return int(tied[0])
    return int(tied[np.argmin(tiebreak(candidates[tied]))])


def _ascend(objective: BatchObjective, start: np.ndarray, config: OptimizerConfig) -> Tuple[np.ndarray, float, bool]:
    p = project_to_simplex(np.asarray(start, dtype=float))
    value = float(objective(p)[0])
    step = config.initial_step
    k = p.size
    for _ in range(config.max_iterations):
        shifted = p[None, :] + config.fd_step * np.eye(k)
        grad = (objective(shifted) - value) / config.fd_step
        improved = False
        while step > 1e-12:
            candidate = project_to_simplex(p + step * grad)
            cand_value = float(objective(candidate)[0])
            if cand_value > value:
                improved = True
                break
            step /= 2
        if not improved:
            return p, value, True
        gain = cand_value - value
        p, value = candidate, cand_value
        if gain < config.tolerance:
            return p, value, True
        step = min(2 * step, 1.0)
    return p, value, False


def maximize(objective: BatchObjective, k: int, config: Optional[OptimizerConfig] = None,
             warm_starts: Sequence[Sequence[float]] = (), tiebreak: Optional[BatchObjective] = None
             ) -> OptimizationResult:
    """Maximizes a batched objective over distributions on k symbols; `tiebreak` is minimized among ties."""
    config = config or OptimizerConfig()
    if k == 1:
        return OptimizationResult(value=float(objective(np.ones((1, 1)))[0]), distribution=[1.0], method="grid")

    if k <= config.grid_max_symbols:
        candidates = simplex_grid(k, config.grid_resolution)
        if len(warm_starts):
            candidates = np.vstack([candidates, np.asarray(warm_starts, dtype=float)])
        values = objective(candidates)
        best = _pick_best(values, candidates, tiebreak)
        return OptimizationResult(value=float(values[best]), distribution=candidates[best].tolist(), method="grid")

    rng = substream(config.seed)
    starts = [np.asarray(s, dtype=float) for s in warm_starts]
    starts.append(np.full(k, 1.0 / k))
    starts.extend(np.eye(k))
    starts.extend(rng.dirichlet(np.ones(k), size=config.restarts))
    runs = [_ascend(objective, s, config) for s in starts]
    candidates = np.array([r[0] for r in runs])
    values = np.array([r[1] for r in runs])
    best = _pick_best(values, candidates, tiebreak)
    converged = runs[best][2]
    if not converged:
        logger.warning(f"⚠️ OPTIMIZER: best of {len(starts)} starts did not converge, reporting best found")
    return OptimizationResult(value=float(values[best]), distribution=candidates[best].tolist(),
                              converged=converged, method="gradient")


def rate_pair_feasible(channel: CqWiretapChannel, probs, point: RatePoint) -> bool:
    i_b, i_e = holevo_pair(channel, probs)
    return (point.rate <= i_b - i_e + point.key_rate + FEASIBILITY_SLACK
            and point.rate <= i_b + FEASIBILITY_SLACK)


def max_rate_at_key(channel: CqWiretapChannel, key_rate: float, config: Optional[OptimizerConfig] = None,
                    warm_starts: Sequence[Sequence[float]] = (), evaluator: Optional[HolevoEvaluator] = None
                    ) -> OptimizationResult:
    if key_rate < 0:
        raise ConfigurationError(f"key rate must be non-negative, got {key_rate}")
    evaluator = evaluator or HolevoEvaluator(channel)
    return maximize(evaluator.private_rate(key_rate), channel.alphabet_size, config, warm_starts)


def _corner(evaluator: HolevoEvaluator, result: OptimizationResult, rate: float, key_rate: float) -> CornerPoint:
    i_b, i_e = evaluator(np.asarray(result.distribution))
    return CornerPoint(rate=rate, key_rate=key_rate, distribution=result.distribution,
                       holevo_b=float(i_b[0]), holevo_e=float(i_e[0]))


def corner_points(channel: CqWiretapChannel, config: Optional[OptimizerConfig] = None,
                  evaluator: Optional[HolevoEvaluator] = None, warm_starts: Sequence[Sequence[float]] = ()
                  ) -> Tuple[CornerPoint, CornerPoint]:
    """P = ([max_p I(X;B) - I(X;E)]^+, 0) and Q = (I(X;B), I(X;E)) at the p maximizing I(X;B)."""
    evaluator = evaluator or HolevoEvaluator(channel)
    k = channel.alphabet_size
    gap = maximize(evaluator.holevo_gap(), k, config, warm_starts)
    q_opt = maximize(evaluator.bob_information(), k, config, warm_starts, tiebreak=evaluator.eve_information())
    p_corner = _corner(evaluator, gap, max(0.0, gap.value), 0.0)
    q_raw = _corner(evaluator, q_opt, 0.0, 0.0)
    q_corner = q_raw.model_copy(update={
        "rate": max(0.0, q_raw.holevo_b),
        "key_rate": max(0.0, q_raw.holevo_e),
    })
    logger.info(
        f"REGION: corner P=({p_corner.rate:.6g}, 0), Q=({q_corner.rate:.6g}, {q_corner.key_rate:.6g})"
    )
    return p_corner, q_corner


def upper_concave_envelope(points: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Upper hull of (x, y) points, left to right (monotone chain)."""
    hull: List[Tuple[float, float]] = []
    for x, y in sorted(points):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append((x, y))
    return hull


def key_axis(q_corner: CornerPoint, n_samples: int) -> np.ndarray:
    upper = 1.25 * q_corner.key_rate if q_corner.key_rate > 0 else 1.25 * q_corner.rate
    if upper <= 0:
        upper = 1.0
    return np.linspace(0.0, upper, n_samples)


def _boundary_samples(channel: CqWiretapChannel, evaluator: HolevoEvaluator, keys: Sequence[float],
                      config: OptimizerConfig, base_starts: List[List[float]],
                      per_sample_starts: Optional[List[List[float]]] = None,
                      max_workers: Optional[int] = None) -> List[OptimizationResult]:
    k = channel.alphabet_size
    if k <= config.grid_max_symbols:
        return run_parallel(
            lambda key: maximize(evaluator.private_rate(key), k, config, base_starts),
            list(keys), max_workers=max_workers or get_settings().PFP_MAX_WORKERS,
        )
    # chained warm starts keep R_max nondecreasing along the key axis
    results: List[OptimizationResult] = []
    previous: List[List[float]] = []
    for i, key in enumerate(keys):
        starts = base_starts + previous
        if per_sample_starts is not None:
            starts = starts + [per_sample_starts[i]]
        result = maximize(evaluator.private_rate(key), k, config, starts)
        results.append(result)
        previous = [result.distribution]
    return results


def _assemble(channel: CqWiretapChannel, blocklength: int, keys: np.ndarray, results: List[OptimizationResult],
              p_corner: CornerPoint, q_corner: CornerPoint, scale: float = 1.0) -> RegionBoundary:
    samples = []
    best = results[0]
    for key, result in zip(keys, results):
        # a previous argmax stays feasible at a larger key rate
        if result.value >= best.value:
            best = result
        samples.append(BoundarySample(key_rate=float(key) * scale, max_rate=max(0.0, best.value) * scale,
                                      distribution=best.distribution, converged=result.converged))
    hull = upper_concave_envelope([(s.key_rate, s.max_rate) for s in samples])
    return RegionBoundary(
        blocklength=blocklength,
        symbols=channel.symbols,
        corner_p=p_corner,
        corner_q=q_corner,
        samples=samples,
        envelope=[EnvelopePoint(key_rate=x, max_rate=y) for x, y in hull],
    )


def region_boundary(channel: CqWiretapChannel, n_samples: int = 50, config: Optional[OptimizerConfig] = None,
                    max_workers: Optional[int] = None) -> RegionBoundary:
    """Samples R_max(R_s) on [0, 1.25 Q.R_s] together with its upper concave envelope."""
    if n_samples < 2:
        raise ConfigurationError(f"a boundary needs at least 2 samples, got {n_samples}")
    config = config or OptimizerConfig()
    k = channel.alphabet_size
    ensure_within_budget(operator_bytes(max(channel.d_b, channel.d_e), 2 * k), "Holevo evaluator states")
    evaluator = HolevoEvaluator(channel)
    p_corner, q_corner = corner_points(channel, config, evaluator)
    keys = key_axis(q_corner, n_samples)
    logger.info(f"REGION: sampling {n_samples} key rates on [0, {keys[-1]:.6g}] for |X|={k}")
    results = _boundary_samples(channel, evaluator, keys, config,
                                [p_corner.distribution, q_corner.distribution], max_workers=max_workers)
    return _assemble(channel, 1, keys, results, p_corner, q_corner)


def _product_distribution(p: Sequence[float], n: int) -> List[float]:
    out = np.ones(1)
    for _ in range(n):
        out = np.kron(out, np.asarray(p, dtype=float))
    return out.tolist()


def regularized_boundary(channel: CqWiretapChannel, n: int, n_samples: int = 50,
                         config: Optional[OptimizerConfig] = None, max_workers: Optional[int] = None
                         ) -> RegionBoundary:
    """(1/n) times the single-letter boundary of W^{(x)n}, per channel use, on the single-letter key axis."""
    config = config or OptimizerConfig()
    single = region_boundary(channel, n_samples, config, max_workers)
    if n == 1:
        return single
    power = tensor_power(channel, n)
    evaluator = HolevoEvaluator(power)
    keys = np.array([s.key_rate for s in single.samples])
    product_starts = [_product_distribution(s.distribution, n) for s in single.samples]
    base = [_product_distribution(single.corner_p.distribution, n), _product_distribution(single.corner_q.distribution, n)]
    logger.info(f"REGION: regularizing with W^(x){n} over {power.alphabet_size} joint symbols")
    results = _boundary_samples(power, evaluator, n * keys, config, base, product_starts, max_workers)
    p_corner, q_corner = corner_points(power, config, evaluator, base)
    scale = 1.0 / n
    p_scaled = p_corner.model_copy(update={"rate": p_corner.rate * scale, "holevo_b": p_corner.holevo_b * scale,
                                           "holevo_e": p_corner.holevo_e * scale})
    q_scaled = q_corner.model_copy(update={"rate": q_corner.rate * scale, "key_rate": q_corner.key_rate * scale,
                                           "holevo_b": q_corner.holevo_b * scale,
                                           "holevo_e": q_corner.holevo_e * scale})
    return _assemble(power, n, n * keys, results, p_scaled, q_scaled, scale)


def boundary_frame(boundary: RegionBoundary) -> pd.DataFrame:
    """Boundary samples as a DataFrame with columns Rs, Rmax, Renv, p_0, ..., p_k.

    Renv is the upper concave envelope evaluated at each sample's key rate.
    """
    hull_keys = [p.key_rate for p in boundary.envelope]
    hull_rates = [p.max_rate for p in boundary.envelope]
    rows = []
    for sample in boundary.samples:
        row = {"Rs": sample.key_rate, "Rmax": sample.max_rate,
               "Renv": float(np.interp(sample.key_rate, hull_keys, hull_rates))}
        row.update({f"p_{i}": v for i, v in enumerate(sample.distribution)})
        rows.append(row)
    return pd.DataFrame(rows)


import logging
import math
from functools import lru_cache
from itertools import product
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from pfp.core.config import get_settings
from pfp.core.exceptions import ConfigurationError, InvariantViolationError
from pfp.schemas import TypicalityParams, TypicalityReport
from pfp.services.channels import CqWiretapChannel, check_distribution
from pfp.services.information import CqState, conditional_entropy, von_neumann_entropy
from pfp.services.linalg import hermitian_eig, tensor
from pfp.utils.budget import ensure_dimension, ensure_enumerable, ensure_within_budget, operator_bytes
from pfp.utils.parallel import run_parallel
from pfp.utils.rng import substream

logger = logging.getLogger("pfp")

FREQ_TOL = 1e-12
OPERATOR_TOL = 1e-9
REPORT_ZERO = 1e-12


def _is_typical_counts(counts, n: int, probs: np.ndarray, delta: float) -> bool:
    if n == 0:
        return True
    return bool(np.all(np.abs(np.asarray(counts) / n - probs) <= delta + FREQ_TOL))


def _compositions(n: int, k: int) -> Iterator[Tuple[int, ...]]:
    if k == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, k - 1):
            yield (first,) + rest


def typical_types(probs, n: int, delta: float) -> List[Tuple[int, ...]]:
    """Count vectors N(.|x^n) of the typical sequences."""
    p = np.asarray(probs, dtype=float)
    return [c for c in _compositions(n, p.size) if _is_typical_counts(c, n, p, delta)]


def _multinomial(counts: Sequence[int]) -> int:
    total, result = 0, 1
    for c in counts:
        total += c
        result *= math.comb(total, c)
    return result


def typical_set_size(probs, n: int, delta: float) -> int:
    return sum(_multinomial(c) for c in typical_types(probs, n, delta))


def _arrangements(counts: List[int], n: int) -> Iterator[Tuple[int, ...]]:
    if n == 0:
        yield ()
        return
    for x, c in enumerate(counts):
        if c:
            counts[x] -= 1
            for rest in _arrangements(counts, n - 1):
                yield (x,) + rest
            counts[x] += 1


def typical_set(probs, n: int, delta: float) -> List[Tuple[int, ...]]:
    """Every x^n with |N(x|x^n)/n - p(x)| <= delta for all x, in lexicographic order."""
    p = np.asarray(probs, dtype=float)
    ensure_enumerable(p.size ** n, f"sequences of length {n} over {p.size} symbols")
    sequences = [seq for c in typical_types(p, n, delta) for seq in _arrangements(list(c), n)]
    return sorted(sequences)


def sequence_probability(probs, seq: Sequence[int]) -> float:
    return float(np.prod(np.asarray(probs, dtype=float)[list(seq)]))


@lru_cache(maxsize=32)
def _basis_digits(d: int, n: int) -> np.ndarray:
    return np.array(list(product(range(d), repeat=n)), dtype=np.int64).reshape(d ** n, n)


def _class_mask(digits: np.ndarray, d: int, spectrum: np.ndarray, delta: float) -> np.ndarray:
    n = digits.shape[1]
    if n == 0:
        return np.ones(digits.shape[0], dtype=bool)
    counts = np.stack([(digits == y).sum(axis=1) for y in range(d)], axis=1)
    return np.all(np.abs(counts / n - spectrum) <= delta + FREQ_TOL, axis=1)


def _spectral(rho) -> Tuple[np.ndarray, np.ndarray]:
    values, vectors = hermitian_eig(rho)
    values = np.clip(values, 0.0, None)
    return values / values.sum(), vectors


class TypicalProjector:
    """Projector diag(mask) written in the product basis `basis`."""

    def __init__(self, basis: np.ndarray, mask: np.ndarray):
        self.basis = basis
        self.mask = mask.astype(bool)

    @property
    def rank(self) -> int:
        return int(self.mask.sum())

    @property
    def dim(self) -> int:
        return self.mask.size

    @property
    def matrix(self) -> np.ndarray:
        kept = self.basis[:, self.mask]
        return kept @ kept.conj().T

    def expectation(self, sigma: np.ndarray) -> float:
        """tr(sigma Pi)."""
        kept = self.basis[:, self.mask]
        return float(np.real(np.einsum("ji,jk,ki->", kept.conj(), sigma, kept)))

    def compress(self, sigma: np.ndarray) -> np.ndarray:
        """Pi sigma Pi restricted to the support of Pi."""
        kept = self.basis[:, self.mask]
        return kept.conj().T @ sigma @ kept


def _check_size(d: int, n: int, what: str) -> None:
    ensure_dimension(d ** n, what)
    ensure_within_budget(operator_bytes(d ** n, 3), what)


def typical_projector(rho, n: int, delta: float) -> TypicalProjector:
    spectrum, vectors = _spectral(rho)
    d = spectrum.size
    _check_size(d, n, f"typical projector on {n} copies of a {d}-dimensional system")
    mask = _class_mask(_basis_digits(d, n), d, spectrum, delta)
    return TypicalProjector(tensor(*([vectors] * n)), mask)


def conditional_typical_projector(states: Sequence[np.ndarray], xseq: Sequence[int], delta: float) -> TypicalProjector:
    """Tensor product over symbol classes of the typical projector of rho_x on the positions where x_i = x."""
    n = len(xseq)
    spectra = [_spectral(s) for s in states]
    d = spectra[0][0].size
    _check_size(d, n, f"conditional typical projector on {n} copies of a {d}-dimensional system")
    digits = _basis_digits(d, n)
    xseq = np.asarray(xseq, dtype=int)
    mask = np.ones(digits.shape[0], dtype=bool)
    for x, (spectrum, _) in enumerate(spectra):
        positions = np.flatnonzero(xseq == x)
        if positions.size:
            mask &= _class_mask(digits[:, positions], d, spectrum, delta)
    basis = tensor(*(spectra[x][1] for x in xseq))
    return TypicalProjector(basis, mask)


def sample_typical_sequences(probs, n: int, delta: float, samples: int, seed: int = 0
                             ) -> Tuple[List[Tuple[int, ...]], np.ndarray, bool]:
    """Typical sequences with weights p^n(x^n | typical); exhaustive when the set has at most `samples` members."""
    p = np.asarray(probs, dtype=float)
    size = typical_set_size(p, n, delta)
    if size == 0:
        raise ConfigurationError(f"no typical sequences for n={n}, delta={delta}")
    if size <= samples:
        sequences = typical_set(p, n, delta)
        weights = np.array([sequence_probability(p, s) for s in sequences])
        if weights.sum() <= 0:
            weights = np.ones(len(sequences))
        return sequences, weights / weights.sum(), True

    rng = substream(seed)
    sequences: List[Tuple[int, ...]] = []
    attempts = 0
    max_attempts = 1000 * samples
    while len(sequences) < samples:
        batch = rng.choice(p.size, size=(samples, n), p=p)
        attempts += samples
        for row in batch:
            counts = np.bincount(row, minlength=p.size)
            if _is_typical_counts(counts, n, p, delta):
                sequences.append(tuple(int(v) for v in row))
                if len(sequences) == samples:
                    break
        if attempts >= max_attempts and len(sequences) < samples:
            raise ConfigurationError(
                f"typical set too unlikely to sample: {len(sequences)} of {samples} after {attempts} draws"
            )
    return sequences, np.full(samples, 1.0 / samples), False


def _zeroed(value: float) -> float:
    return 0.0 if abs(value) < REPORT_ZERO else float(value)


def verify_four_properties(channel: CqWiretapChannel, probs, n: int, delta: float, system: str = "E",
                           samples: int = 100, seed: int = 0, epsilon_target: float = 0.2,
                           max_workers: Optional[int] = None) -> TypicalityReport:
    """Measures eps, alpha and beta of the typical and conditionally typical subspaces of W's `system` output."""
    params = TypicalityParams(n=n, delta=delta, epsilon_target=epsilon_target)
    p = check_distribution(probs, channel.alphabet_size, "input distribution")
    states = channel.marginal_states(system)
    d = states.shape[1]
    widened = delta * (channel.alphabet_size + 1)

    cq = CqState(p, states)
    h_q = von_neumann_entropy(cq.average())
    h_q_given_x = conditional_entropy(cq)

    unconditional = typical_projector(cq.average(), n, widened)
    alpha_hat = float(unconditional.rank)
    sequences, weights, exhaustive = sample_typical_sequences(p, n, delta, samples, seed)
    logger.info(
        f"TYPICALITY: n={n} delta={delta} system={system} dim={d ** n} "
        f"checking {len(sequences)} sequences ({'exhaustive' if exhaustive else 'sampled'})"
    )

    def check(seq):
        sigma = tensor(*(states[x] for x in seq))
        conditional = conditional_typical_projector(states, seq, delta)
        eps_cond = 1.0 - conditional.expectation(sigma)
        eps_uncond = 1.0 - unconditional.expectation(sigma)
        if conditional.rank:
            top = float(np.linalg.eigvalsh(conditional.compress(sigma))[-1])
        else:
            top = 0.0
        return eps_cond, eps_uncond, top, conditional, sigma

    results = run_parallel(check, sequences, max_workers=max_workers or get_settings().PFP_MAX_WORKERS)
    eps_cond = np.array([r[0] for r in results])
    eps_uncond = np.array([r[1] for r in results])
    tops = np.array([r[2] for r in results])

    eps_conditional = float(np.dot(weights, eps_cond))
    eps_unconditional = float(np.dot(weights, eps_uncond))
    eps_hat = max(eps_conditional, eps_unconditional)
    eps_worst = float(max(eps_cond.max(), eps_uncond.max()))

    positive = tops[tops > 0]
    beta_hat = float(1.0 / positive.max()) if positive.size else float(2 ** (n * h_q_given_x))

    c_min = max(
        0.0,
        (math.log2(max(alpha_hat, 1.0)) / n - h_q) / delta,
        (h_q_given_x - math.log2(beta_hat) / n) / delta,
    )
    alpha_bound = 2 ** (n * (h_q + c_min * delta))
    beta_bound = 2 ** (n * (h_q_given_x - c_min * delta))

    gaps = []
    for _, _, _, conditional, sigma in results:
        if conditional.rank == 0:
            continue
        compressed = conditional.compress(sigma)
        gap = np.linalg.eigvalsh(np.eye(conditional.rank) / beta_bound - (compressed + compressed.conj().T) / 2)[0]
        gaps.append(float(gap))
    min_gap = min(gaps) if gaps else 0.0

    eps_ok = _zeroed(eps_hat) <= params.epsilon_target
    alpha_ok = alpha_hat <= alpha_bound * (1 + 1e-9)
    beta_ok = min_gap >= -OPERATOR_TOL
    if not np.isfinite(c_min):
        raise InvariantViolationError(f"typicality constant is not finite (c_min={c_min})")

    report = TypicalityReport(
        n=n,
        delta=delta,
        widened_delta=widened,
        system=system,
        eps_hat=_zeroed(eps_hat),
        eps_worst=_zeroed(eps_worst),
        eps_conditional=_zeroed(eps_conditional),
        eps_unconditional=_zeroed(eps_unconditional),
        alpha_hat=alpha_hat,
        beta_hat=beta_hat,
        c_min=c_min,
        min_operator_gap=_zeroed(min_gap),
        sequences_checked=len(sequences),
        exhaustive=exhaustive,
        eps_ok=eps_ok,
        alpha_ok=alpha_ok,
        beta_ok=beta_ok,
        passed=eps_ok and alpha_ok and beta_ok,
    )
    logger.info(
        f"TYPICALITY: eps_hat={report.eps_hat:.6g} alpha_hat={alpha_hat:.0f} "
        f"beta_hat={beta_hat:.6g} c_min={c_min:.6g} pass={report.passed}"
    )
    return report

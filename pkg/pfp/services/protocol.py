"""Finite-blocklength simulation of the secret-key-assisted private code.

Chain: message m and key s -> k = f(m, s) -> codeword x_k -> sigma^{BE}_{x_k}
-> Bob's PGM outcome k' -> decrypted m' = g(k', s). Reliability comes from the
decode matrix, security from the assembled state of (m', E^n) averaged over
uniform m and s.
"""
import logging
import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from pfp.core.config import get_settings
from pfp.core.exceptions import ConfigurationError, InvariantViolationError
from pfp.schemas import CodeSpec, CoveringReport, FanoCheck, ProtocolReport, SystemLayout, TrialRecord
from pfp.services.channels import CqWiretapChannel, check_distribution
from pfp.services.information import CqState, mutual_information, shannon_entropy
from pfp.services.linalg import eigvalsh, partial_trace, permute_systems, pinv_sqrt, tensor, trace_norm, trace_norm_distance
from pfp.utils.budget import ensure_dimension, ensure_within_budget, operator_bytes
from pfp.utils.parallel import run_parallel
from pfp.utils.rng import substream

logger = logging.getLogger("pfp")

POVM_TOL = 1e-9
ROW_TOL = 1e-9
CLIP_TOL = 1e-10
CROSS_CHECK_SLACK = 1e-9
PRODUCT_TOL = 1e-12
EXHAUSTIVE_PAIRING_BITS = 8
DEFAULT_COVERING_THRESHOLD = 0.5


class PairingMap:
    """k = f(m, s) = m XOR s and m = g(k, s) = k XOR s, with s zero-padded to the message width."""

    def __init__(self, message_bits: int, key_bits: int):
        self.message_bits = message_bits
        self.key_bits = key_bits

    @property
    def messages(self) -> int:
        return 1 << self.message_bits

    @property
    def keys(self) -> int:
        return 1 << self.key_bits

    def f(self, m: int, s: int) -> int:
        return m ^ s

    def g(self, k: int, s: int) -> int:
        return k ^ s

    def verify(self) -> None:
        """Exhaustive check of both injectivity conditions and of g(f(m, s), s) = m."""
        for m in range(self.messages):
            images = {self.f(m, s) for s in range(self.keys)}
            if len(images) != self.keys:
                raise InvariantViolationError(f"f(m={m}, .) is not injective in s")
        for s in range(self.keys):
            images = {self.f(m, s) for m in range(self.messages)}
            if len(images) != self.messages:
                raise InvariantViolationError(f"f(., s={s}) is not injective in m")
            for m in range(self.messages):
                if self.g(self.f(m, s), s) != m:
                    raise InvariantViolationError(f"g(f(m, s), s) != m for m={m}, s={s}")


def build_pairing(message_bits: int, key_bits: int) -> PairingMap:
    if message_bits < 1:
        raise ConfigurationError(f"message_bits must be at least 1, got {message_bits}")
    if key_bits > message_bits:
        raise ConfigurationError(
            f"cannot pair {key_bits} key bits into {message_bits} message bits injectively in m"
        )
    pairing = PairingMap(message_bits, key_bits)
    if message_bits <= EXHAUSTIVE_PAIRING_BITS:
        pairing.verify()
    return pairing


class Codebook:
    """Codewords x_k in X^n for k in {0,1}^message_bits, with their Bob and Eve output states."""

    def __init__(self, channel: CqWiretapChannel, codewords: np.ndarray):
        self.channel = channel
        self.codewords = np.asarray(codewords, dtype=np.int64)
        self._bob: Dict[Tuple[int, ...], np.ndarray] = {}
        self._eve: Dict[Tuple[int, ...], np.ndarray] = {}

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    @property
    def n(self) -> int:
        return self.codewords.shape[1]

    def codeword(self, k: int) -> Tuple[int, ...]:
        return tuple(int(x) for x in self.codewords[k])

    def bob_state(self, k: int) -> np.ndarray:
        key = self.codeword(k)
        if key not in self._bob:
            self._bob[key] = self.channel.sequence_state(key, "B")
        return self._bob[key]

    def eve_state(self, k: int) -> np.ndarray:
        key = self.codeword(k)
        if key not in self._eve:
            self._eve[key] = self.channel.sequence_state(key, "E")
        return self._eve[key]

    def bob_states(self) -> np.ndarray:
        return np.stack([self.bob_state(k) for k in range(self.size)])

    def eve_states(self) -> np.ndarray:
        return np.stack([self.eve_state(k) for k in range(self.size)])

    def joint_state(self, k: int) -> np.ndarray:
        """sigma^{B^n E^n}_{x_k} with all B factors first."""
        channel = self.channel
        raw = tensor(*(channel.state(x) for x in self.codeword(k)))
        dims = [channel.d_b, channel.d_e] * self.n
        order = list(range(0, 2 * self.n, 2)) + list(range(1, 2 * self.n, 2))
        return permute_systems(raw, dims, order)

    def symbol_frequencies(self) -> List[float]:
        counts = np.bincount(self.codewords.reshape(-1), minlength=self.channel.alphabet_size)
        return (counts / counts.sum()).tolist()


def sample_codebook(channel: CqWiretapChannel, probs, spec: CodeSpec, seed: Optional[int] = None) -> Codebook:
    """2^message_bits codewords drawn i.i.d. from p^n with the Philox substream for `seed`."""
    p = check_distribution(probs, channel.alphabet_size, "input distribution")
    size = 1 << spec.message_bits
    ensure_dimension(channel.d_b ** spec.n, f"Bob's output on {spec.n} channel uses")
    ensure_within_budget(
        operator_bytes(channel.d_b ** spec.n, size) + operator_bytes(channel.d_e ** spec.n, size),
        f"codebook output states ({size} codewords, n={spec.n})",
    )
    rng = substream(spec.seed if seed is None else seed)
    codewords = rng.choice(channel.alphabet_size, size=(size, spec.n), p=p)
    return Codebook(channel, codewords)


class DecoderPOVM:
    """Elements Lambda_k' plus the completeness residual for the '?' outcome."""

    def __init__(self, elements: np.ndarray, residual: np.ndarray):
        self.elements = elements
        self.residual = residual
        self.validate()

    def validate(self) -> None:
        lowest = float(np.min(eigvalsh(self.elements)[..., -1]))
        if lowest < -POVM_TOL:
            raise InvariantViolationError(f"POVM element has negative eigenvalue {lowest:.3e}")
        lowest_residual = float(eigvalsh(self.residual)[-1])
        if lowest_residual < -POVM_TOL:
            raise InvariantViolationError(f"POVM elements sum above identity (residual eigenvalue {lowest_residual:.3e})")
        total = self.elements.sum(axis=0) + self.residual
        deviation = float(np.max(np.abs(total - np.eye(total.shape[0]))))
        if deviation > POVM_TOL:
            raise InvariantViolationError(f"POVM is not complete: max deviation {deviation:.3e}")


def pgm_decoder(channel: CqWiretapChannel, codebook: Codebook) -> DecoderPOVM:
    """Square-root measurement Lambda_k = S^{-1/2} sigma_k S^{-1/2}, S = sum_k sigma_k."""
    ensure_dimension(channel.d_b ** codebook.n, f"decoder on {codebook.n} channel uses")
    states = codebook.bob_states()
    root = pinv_sqrt(states.sum(axis=0))
    elements = np.einsum("ij,kjl,lm->kim", root, states, root)
    elements = (elements + np.swapaxes(elements.conj(), 1, 2)) / 2
    residual = np.eye(states.shape[1]) - elements.sum(axis=0)
    return DecoderPOVM(elements, (residual + residual.conj().T) / 2)


def decode_matrix(channel: CqWiretapChannel, codebook: Codebook, povm: DecoderPOVM) -> np.ndarray:
    """pi(k'|k) = tr(Lambda_k' sigma_k) as a K x (K+1) table; the last column is '?'."""
    states = codebook.bob_states()
    table = np.real(np.einsum("kij,lji->kl", states, povm.elements))
    unknown = np.real(np.einsum("kij,ji->k", states, povm.residual))
    table = np.hstack([table, unknown[:, None]])
    if np.min(table) < -CLIP_TOL:
        raise InvariantViolationError(f"decode probability {np.min(table):.3e} is negative")
    table = np.where(table < 0, 0.0, table)
    rows = table.sum(axis=1)
    if np.max(np.abs(rows - 1.0)) > ROW_TOL:
        raise InvariantViolationError(f"decode matrix rows do not sum to 1 (max deviation {np.max(np.abs(rows - 1.0)):.3e})")
    return table


def iid_eve_reference(channel: CqWiretapChannel, probs, n: int) -> np.ndarray:
    """(sum_x p(x) sigma_x^E)^{(x)n}."""
    ensure_dimension(channel.d_e ** n, f"Eve's output on {n} channel uses")
    avg = channel.average_state(probs, "E")
    return tensor(*([avg] * n))


def covering_average(codebook: Codebook, pairing: PairingMap, m: int) -> np.ndarray:
    """(1/S) sum_s sigma^E_{x_f(m,s)}."""
    return sum(codebook.eve_state(pairing.f(m, s)) for s in range(pairing.keys)) / pairing.keys


def obfuscation_error(channel: CqWiretapChannel, codebook: Codebook, pairing: PairingMap, m: int,
                      probs=None, reference: Optional[np.ndarray] = None) -> float:
    """Trace distance between Eve's key-averaged state for message m and the i.i.d. ensemble average."""
    if reference is None:
        if probs is None:
            raise ConfigurationError("obfuscation error needs the input distribution or an explicit reference")
        reference = iid_eve_reference(channel, probs, codebook.n)
    return trace_norm_distance(covering_average(codebook, pairing, m), reference)


def covering_threshold(epsilon: float) -> float:
    return 2 * epsilon + 19 * math.sqrt(epsilon)


def covering_concentration(channel: CqWiretapChannel, probs, n: int, key_rate: float, trials: int = 200,
                           threshold_eps: Optional[float] = None, threshold: Optional[float] = None,
                           seed: int = 0, max_workers: Optional[int] = None) -> CoveringReport:
    """Fraction of random covering codes of size 2^ceil(n R_s) whose oe reaches the threshold."""
    if trials < 1:
        raise ConfigurationError(f"trials must be at least 1, got {trials}")
    p = check_distribution(probs, channel.alphabet_size, "input distribution")
    if threshold is None:
        threshold = covering_threshold(threshold_eps) if threshold_eps is not None else DEFAULT_COVERING_THRESHOLD
    key_bits = max(0, math.ceil(n * key_rate - 1e-9))
    code_size = 1 << key_bits
    ensure_within_budget(operator_bytes(channel.d_e ** n, 3), f"covering states on {n} channel uses")
    ensure_within_budget(8 * n * code_size, f"covering code of {code_size} sequences")
    reference = iid_eve_reference(channel, p, n)
    eve = channel.eve_states()
    logger.info(f"COVERING: n={n} R_s={key_rate} S=2^{key_bits} trials={trials} threshold={threshold:.6g}")

    def one_trial(t: int) -> float:
        rng = substream(seed, t)
        code = rng.choice(channel.alphabet_size, size=(code_size, n), p=p)
        unique, counts = np.unique(code, axis=0, return_counts=True)
        average = sum(c * tensor(*(eve[x] for x in row)) for row, c in zip(unique, counts)) / code_size
        return trace_norm_distance(average, reference)

    values = np.array(run_parallel(one_trial, list(range(trials)),
                                   max_workers=max_workers or get_settings().PFP_MAX_WORKERS))
    report = CoveringReport(
        n=n,
        key_rate=key_rate,
        key_bits=key_bits,
        code_size=code_size,
        trials=trials,
        seed=seed,
        threshold=threshold,
        threshold_eps=threshold_eps,
        fraction_exceeding=float(np.mean(values >= threshold)),
        mean_oe=float(np.mean(values)),
        median_oe=float(np.median(values)),
        oe_values=values.tolist(),
    )
    logger.info(f"COVERING: fraction >= threshold {report.fraction_exceeding:.4g}, mean oe {report.mean_oe:.6g}")
    return report


def is_product_channel(channel: CqWiretapChannel) -> bool:
    """True if every sigma_x^{BE} equals sigma_x^B (x) sigma_x^E."""
    return all(
        np.max(np.abs(channel.state(x) - np.kron(channel.bob_state(x), channel.eve_state(x)))) <= PRODUCT_TOL
        for x in range(channel.alphabet_size)
    )


def _received_blocks(channel: CqWiretapChannel, codebook: Codebook, povm: DecoderPOVM,
                     table: np.ndarray, pairing: PairingMap) -> np.ndarray:
    """Blocks of the decrypted state: entry m' < M is Eve's unnormalized state jointly with m', entry M is '?'."""
    size = pairing.messages
    weight = 1.0 / (pairing.messages * pairing.keys)
    if is_product_channel(channel):
        # C[m', k] = weight * sum_s pi(m' xor s | k); the '?' row collects the residual
        coeff = np.zeros((size + 1, codebook.size))
        for s in range(pairing.keys):
            for m_out in range(size):
                coeff[m_out] += table[:, pairing.f(m_out, s)]
        coeff[:size] *= weight
        coeff[size] = pairing.keys * weight * table[:, -1]
        return np.einsum("mk,kij->mij", coeff, codebook.eve_states())

    d_b = channel.d_b ** codebook.n
    d_e = channel.d_e ** codebook.n
    ensure_within_budget(operator_bytes(d_b * d_e, 2), f"joint B^n E^n states (dim {d_b * d_e})")
    layout = SystemLayout(factors=[("B", d_b), ("E", d_e)])
    grouped = np.zeros((size + 1, d_b, d_b), dtype=complex)
    for s in range(pairing.keys):
        for m_out in range(size):
            grouped[m_out] += povm.elements[pairing.f(m_out, s)]
    grouped[:size] *= weight
    grouped[size] = pairing.keys * weight * povm.residual
    blocks = np.zeros((size + 1, d_e, d_e), dtype=complex)
    identity_e = np.eye(d_e)
    for k in range(codebook.size):
        joint = codebook.joint_state(k)
        for m_out in range(size + 1):
            blocks[m_out] += partial_trace(np.kron(grouped[m_out], identity_e) @ joint, layout, {"E"})
    return blocks


def _security_distance(blocks: np.ndarray, eve_reference: np.ndarray) -> float:
    """|| Upsilon - tau (x) sigma^E ||_1 for a block-diagonal Upsilon; the '?' block has no tau weight."""
    size = blocks.shape[0] - 1
    total = sum(trace_norm(blocks[m] - eve_reference / size) for m in range(size))
    return float(total + trace_norm(blocks[size]))


def _simulate_trial(channel: CqWiretapChannel, probs: np.ndarray, spec: CodeSpec, pairing: PairingMap,
                    iid_reference: np.ndarray, trial: int) -> dict:
    seed = spec.seed ^ trial
    codebook = sample_codebook(channel, probs, spec, seed=seed)
    povm = pgm_decoder(channel, codebook)
    table = decode_matrix(channel, codebook, povm)
    avg_error = float(np.mean(1.0 - np.diag(table[:, :-1])))

    oe = [obfuscation_error(channel, codebook, pairing, m, reference=iid_reference)
          for m in range(pairing.messages)]
    blocks = _received_blocks(channel, codebook, povm, table, pairing)
    security = _security_distance(blocks, iid_reference)
    security_marginal = _security_distance(blocks, codebook.eve_states().mean(axis=0))

    ideal = np.zeros_like(blocks)
    for m in range(pairing.messages):
        ideal[m] = covering_average(codebook, pairing, m) / pairing.messages
    ideal_gap = float(sum(trace_norm(blocks[m] - ideal[m]) for m in range(blocks.shape[0])))

    max_oe = max(oe)
    if security > ideal_gap + max_oe + CROSS_CHECK_SLACK:
        raise InvariantViolationError(
            f"security cross-check failed: {security:.12g} > {ideal_gap:.12g} + {max_oe:.12g}"
        )
    if security_marginal > ideal_gap + 2 * max_oe + CROSS_CHECK_SLACK:
        raise InvariantViolationError(
            f"marginal security cross-check failed: {security_marginal:.12g} > {ideal_gap:.12g} + 2 * {max_oe:.12g}"
        )

    holevo_kb = mutual_information(CqState(np.full(codebook.size, 1.0 / codebook.size), codebook.bob_states()))
    fano = fano_details(table, spec.message_bits, holevo_kb)
    return {
        "trial": trial,
        "seed": seed,
        "avg_error": avg_error,
        "oe": oe,
        "security": security,
        "security_marginal": security_marginal,
        "ideal_gap": ideal_gap,
        "holevo_kb": holevo_kb,
        "fano": fano,
        "table": table,
        "frequencies": codebook.symbol_frequencies(),
    }


def run_protocol(channel: CqWiretapChannel, probs, spec: CodeSpec, max_workers: Optional[int] = None) -> ProtocolReport:
    p = check_distribution(probs, channel.alphabet_size, "input distribution")
    if spec.key_bits < spec.key_bits_requested:
        logger.warning(
            f"⚠️ PROTOCOL: key truncated from {spec.key_bits_requested} to {spec.key_bits} bits "
            f"(message width {spec.message_bits})"
        )
    pairing = build_pairing(spec.message_bits, spec.key_bits)
    iid_reference = iid_eve_reference(channel, p, spec.n)
    logger.info(
        f"PROTOCOL: n={spec.n} message_bits={spec.message_bits} key_bits={spec.key_bits} "
        f"trials={spec.trials} seed={spec.seed}"
    )

    trials = run_parallel(
        lambda t: _simulate_trial(channel, p, spec, pairing, iid_reference, t),
        list(range(spec.trials)),
        max_workers=max_workers or get_settings().PFP_MAX_WORKERS,
    )
    records = [
        TrialRecord(
            trial=t["trial"], seed=t["seed"], avg_error=t["avg_error"], max_oe=max(t["oe"]),
            security_distance=t["security"], security_distance_marginal=t["security_marginal"],
            ideal_gap=t["ideal_gap"], fano_ok=t["fano"].passed,
        )
        for t in trials
    ]
    first = trials[0]
    report = ProtocolReport(
        spec=spec,
        seed=spec.seed,
        avg_error=first["avg_error"],
        oe_per_message=first["oe"],
        security_distance=first["security"],
        security_distance_marginal=first["security_marginal"],
        ideal_gap=first["ideal_gap"],
        holevo_kb=first["holevo_kb"],
        symbol_frequencies=first["frequencies"],
        fano=first["fano"],
        trials=records,
        median_avg_error=float(np.median([r.avg_error for r in records])),
        median_security_distance=float(np.median([r.security_distance for r in records])),
        median_security_distance_marginal=float(np.median([r.security_distance_marginal for r in records])),
        decode_matrix=first["table"].tolist(),
    )
    logger.info(
        f"PROTOCOL: avg_error={report.avg_error:.6g} security_distance={report.security_distance:.6g} "
        f"marginal={report.security_distance_marginal:.6g} "
        f"max oe={max(report.oe_per_message):.6g}"
    )
    return report


def fano_details(table: np.ndarray, message_bits: int, holevo_kb: Optional[float] = None) -> FanoCheck:
    """H(K|K') <= 1 + Pr{K != K'} * message_bits for uniform K, plus I(K;K') <= I(K;B) when available."""
    table = np.asarray(table, dtype=float)
    size = table.shape[0]
    joint = table / size
    error = float(1.0 - np.trace(table[:, :size]) / size)
    h_joint = shannon_entropy(joint.reshape(-1))
    h_out = shannon_entropy(joint.sum(axis=0))
    conditional = h_joint - h_out
    information = math.log2(size) - conditional
    bound = 1.0 + error * message_bits
    passed = conditional <= bound + CROSS_CHECK_SLACK
    processing_ok = None
    if holevo_kb is not None:
        processing_ok = information <= holevo_kb + CROSS_CHECK_SLACK
        passed = passed and processing_ok
    return FanoCheck(
        error_probability=error,
        conditional_entropy=conditional,
        bound=bound,
        mutual_information=information,
        holevo_kb=holevo_kb,
        data_processing_ok=processing_ok,
        passed=passed,
    )


def fano_check(report: ProtocolReport, spec: CodeSpec) -> bool:
    if not report.decode_matrix:
        raise ConfigurationError("report carries no decode matrix")
    return fano_details(np.asarray(report.decode_matrix), spec.message_bits, report.holevo_kb).passed

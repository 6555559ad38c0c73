"""Entropic quantities on classical-quantum states, in bits."""
import logging
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import block_diag

from pfp.core.exceptions import InvariantViolationError, NegativeEigenvalueError
from pfp.schemas import SystemLayout
from pfp.services.channels import CqWiretapChannel, InputEnsemble, KrausChannel, check_distribution, isometric_extension
from pfp.services.linalg import as_matrix, eigvalsh, partial_trace, purity

logger = logging.getLogger("pfp")

CLIP_TOL = 1e-10
ZERO_EIG = 1e-15
AGREEMENT_TOL = 1e-9
PURITY_TOL = 1e-9


def spectrum_entropy(values: np.ndarray) -> np.ndarray:
    """Entropy of (stacks of) spectra along the last axis; tiny eigenvalues contribute nothing."""
    values = np.asarray(values, dtype=float)
    lowest = float(np.min(values)) if values.size else 0.0
    if lowest < -CLIP_TOL:
        raise NegativeEigenvalueError(lowest)
    values = np.where(values < ZERO_EIG, 0.0, values)
    safe = np.where(values > 0, values, 1.0)
    return -np.sum(values * np.log2(safe), axis=-1)


def von_neumann_entropy(rho) -> float:
    return float(spectrum_entropy(eigvalsh(as_matrix(rho))))


def shannon_entropy(probs) -> float:
    return float(spectrum_entropy(np.asarray(probs, dtype=float)))


class CqState:
    """rho^{XQ} = sum_x p(x) |x><x| (x) rho_x^Q, kept in block form."""

    def __init__(self, probs, states: Sequence[np.ndarray]):
        stack = np.stack([as_matrix(s) for s in states])
        self.probs = check_distribution(probs, stack.shape[0], "cq-state probabilities")
        traces = np.real(np.trace(stack, axis1=1, axis2=2))
        if np.any(np.abs(traces - 1.0) > CLIP_TOL):
            raise InvariantViolationError(f"conditional states must have unit trace, got {traces.tolist()}")
        self.states = stack

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def average(self) -> np.ndarray:
        return np.tensordot(self.probs, self.states, axes=1)

    def joint(self) -> np.ndarray:
        return block_diag(*(p * s for p, s in zip(self.probs, self.states)))

    def conditional_spectra(self) -> np.ndarray:
        return eigvalsh(self.states)


def conditional_entropy(state: CqState) -> float:
    """H(Q|X), computed both as H(QX) - H(X) and as sum_x p(x) H(rho_x)."""
    spectra = state.conditional_spectra()
    averaged = float(np.dot(state.probs, spectrum_entropy(spectra)))
    joint = float(spectrum_entropy((state.probs[:, None] * spectra).reshape(-1)))
    chained = joint - shannon_entropy(state.probs)
    if abs(chained - averaged) > AGREEMENT_TOL:
        raise InvariantViolationError(
            f"conditional entropy formulas disagree: H(QX)-H(X)={chained:.12g}, average={averaged:.12g}"
        )
    return averaged


def mutual_information(state: CqState) -> float:
    return von_neumann_entropy(state.average()) - conditional_entropy(state)


def holevo_pair(channel: CqWiretapChannel, probs) -> Tuple[float, float]:
    """(I(X;B), I(X;E)) for the input distribution `probs`."""
    p = check_distribution(probs, channel.alphabet_size, "input distribution")
    i_b = mutual_information(CqState(p, channel.bob_states()))
    i_e = mutual_information(CqState(p, channel.eve_states()))
    return i_b, i_e


def subsystem_entropy(rho, layout: SystemLayout, keep) -> float:
    return von_neumann_entropy(partial_trace(rho, layout, keep))


def quantum_mutual_information(rho, layout: SystemLayout, first: Sequence[str], second: Sequence[str]) -> float:
    first, second = set(first), set(second)
    return (subsystem_entropy(rho, layout, first) + subsystem_entropy(rho, layout, second)
            - subsystem_entropy(rho, layout, first | second))


def coherent_information(rho, layout: SystemLayout) -> float:
    """I_c(A>B) = H(B) - H(AB) of a global pure state on the systems of `layout`."""
    rho = as_matrix(rho)
    p = purity(rho)
    if p < 1 - PURITY_TOL:
        raise InvariantViolationError(f"coherent information needs a pure global state, purity is {p:.12g}")
    return subsystem_entropy(rho, layout, {"B"}) - subsystem_entropy(rho, layout, {"A", "B"})


def purify(rho) -> np.ndarray:
    """Vector sum_i sqrt(l_i) |i>^A (x) |v_i>^{A'} with the reference system first."""
    rho = as_matrix(rho)
    values, vectors = np.linalg.eigh((rho + rho.conj().T) / 2)
    values = np.clip(values, 0.0, None)
    dim = rho.shape[0]
    psi = np.zeros(dim * dim, dtype=complex)
    for i in range(dim):
        psi += np.sqrt(values[i]) * np.kron(np.eye(dim)[i], vectors[:, i])
    return psi


def channel_tripartite_state(channel: KrausChannel, rho) -> Tuple[np.ndarray, SystemLayout]:
    """Pure state on A B E: the purification of rho^{A'} pushed through the isometric extension."""
    v = isometric_extension(channel)
    phi = purify(rho)
    d_a = channel.d_in
    psi = np.kron(np.eye(d_a), v) @ phi
    layout = SystemLayout(factors=[("A", d_a), ("B", channel.d_out), ("E", channel.num_ops)])
    return np.outer(psi, psi.conj()), layout


class GenericInformation(NamedTuple):
    mutual_info_b: float
    mutual_info_e: float
    coherent_information: float


def generic_information(channel: KrausChannel, ensemble: Optional[InputEnsemble] = None) -> GenericInformation:
    """I(A;B), I(A;E) and I_c(A>B) for the average input state of the ensemble."""
    ensemble = ensemble if ensemble is not None else channel.ensemble()
    rho, layout = channel_tripartite_state(channel, ensemble.average())
    i_ab = quantum_mutual_information(rho, layout, ["A"], ["B"])
    i_ae = quantum_mutual_information(rho, layout, ["A"], ["E"])
    i_c = coherent_information(rho, layout)
    if abs((i_ab - i_ae) / 2 - i_c) > AGREEMENT_TOL:
        raise InvariantViolationError(
            f"pure-state identity broken: (I(A;B)-I(A;E))/2={(i_ab - i_ae) / 2:.12g}, I_c={i_c:.12g}"
        )
    return GenericInformation(i_ab, i_ae, i_c)

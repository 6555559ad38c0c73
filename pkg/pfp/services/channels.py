import json
import logging
from collections.abc import Sequence as SequenceABC
from functools import lru_cache
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from pfp.core.exceptions import ChannelParseError, ChannelValidationError, InvariantViolationError
from pfp.schemas import ChannelDocument, SystemLayout
from pfp.services.linalg import (
    as_matrix, eigvalsh, ket, max_asymmetry, partial_trace, permute_systems, projector, tensor,
)
from pfp.utils.budget import ensure_within_budget, operator_bytes

logger = logging.getLogger("pfp")

STATE_TOL = 1e-10
PROB_TOL = 1e-12
KRAUS_TOL = 1e-10


def validate_density(rho: np.ndarray, what: str, tol: float = STATE_TOL) -> np.ndarray:
    """Checks Hermitian, PSD (min eigenvalue >= -tol) and unit trace; names `what` on failure."""
    rho = as_matrix(rho)
    if rho.shape[0] != rho.shape[1]:
        raise ChannelValidationError(f"{what}: state is not square ({rho.shape})")
    asym = max_asymmetry(rho)
    if asym > tol:
        raise ChannelValidationError(f"{what}: state is not Hermitian (max asymmetry {asym:.3e})")
    trace = float(np.real(np.trace(rho)))
    if abs(trace - 1.0) > tol:
        raise ChannelValidationError(f"{what}: trace {trace:.12g} differs from 1")
    min_eig = float(eigvalsh(rho)[-1])
    if min_eig < -tol:
        raise ChannelValidationError(f"{what}: negative eigenvalue {min_eig:.3e}")
    return (rho + rho.conj().T) / 2


def check_distribution(probs, size: int, what: str = "distribution") -> np.ndarray:
    p = np.asarray(probs, dtype=float).reshape(-1)
    if p.size != size:
        raise ChannelValidationError(f"{what} has {p.size} entries, alphabet has {size}")
    if np.any(p < 0):
        raise ChannelValidationError(f"{what} has negative entries: {p.tolist()}")
    if abs(float(p.sum()) - 1.0) > PROB_TOL:
        raise ChannelValidationError(f"{what} sums to {float(p.sum()):.15g}, not 1")
    return p


class CqWiretapChannel:
    """The {c->qq} channel x -> sigma_x^{BE}; B is the first tensor factor, E the second."""

    def __init__(self, symbols: Sequence[str], states: Sequence[np.ndarray], d_b: int, d_e: int,
                 probs: Optional[Sequence[float]] = None, validate: bool = True):
        self.symbols = list(symbols)
        self._states = states
        self.d_b = int(d_b)
        self.d_e = int(d_e)
        if len(self.symbols) != len(states):
            raise ChannelValidationError(f"{len(self.symbols)} symbols but {len(states)} output states")
        if len(set(self.symbols)) != len(self.symbols):
            raise ChannelValidationError(f"duplicate symbol names: {self.symbols}")
        self.probs = None if probs is None else check_distribution(probs, len(self.symbols), "symbol probabilities")
        self._bob: Dict[int, np.ndarray] = {}
        self._eve: Dict[int, np.ndarray] = {}
        if validate:
            self.validate()

    @property
    def alphabet_size(self) -> int:
        return len(self.symbols)

    @property
    def layout(self) -> SystemLayout:
        return SystemLayout(factors=[("B", self.d_b), ("E", self.d_e)])

    def state(self, x: int) -> np.ndarray:
        return self._states[x]

    def validate(self) -> None:
        dim = self.d_b * self.d_e
        for i, name in enumerate(self.symbols):
            sigma = as_matrix(self._states[i])
            if sigma.shape != (dim, dim):
                raise ChannelValidationError(
                    f"symbol {name!r} (index {i}): state has shape {sigma.shape}, expected ({dim}, {dim})"
                )
            validate_density(sigma, f"symbol {name!r} (index {i})")

    def bob_state(self, x: int) -> np.ndarray:
        if x not in self._bob:
            self._bob[x] = partial_trace(self.state(x), self.layout, {"B"})
        return self._bob[x]

    def eve_state(self, x: int) -> np.ndarray:
        if x not in self._eve:
            self._eve[x] = partial_trace(self.state(x), self.layout, {"E"})
        return self._eve[x]

    def bob_states(self) -> np.ndarray:
        return np.stack([self.bob_state(x) for x in range(self.alphabet_size)])

    def eve_states(self) -> np.ndarray:
        return np.stack([self.eve_state(x) for x in range(self.alphabet_size)])

    def marginal_states(self, system: str) -> np.ndarray:
        if system == "B":
            return self.bob_states()
        if system == "E":
            return self.eve_states()
        raise InvariantViolationError(f"unknown system {system!r}, expected 'B' or 'E'")

    def sequence_state(self, seq: Sequence[int], system: str) -> np.ndarray:
        """Marginal on B^n or E^n of the product output for the input sequence."""
        pick = self.bob_state if system == "B" else self.eve_state
        return tensor(*(pick(int(x)) for x in seq))

    def average_state(self, probs, system: str) -> np.ndarray:
        return np.tensordot(np.asarray(probs, dtype=float), self.marginal_states(system), axes=1)

    def allclose(self, other: "CqWiretapChannel", atol: float = 1e-12) -> bool:
        if (self.symbols, self.d_b, self.d_e) != (other.symbols, other.d_b, other.d_e):
            return False
        return all(np.allclose(self.state(i), other.state(i), atol=atol) for i in range(self.alphabet_size))

    def __repr__(self):
        return f"CqWiretapChannel(|X|={self.alphabet_size}, dB={self.d_b}, dE={self.d_e})"


class InputEnsemble:
    """Input ensemble {p(x), rho_x} on A' for a generic channel."""

    def __init__(self, names: Sequence[str], probs: Sequence[float], states: Sequence[np.ndarray]):
        self.names = list(names)
        self.probs = check_distribution(probs, len(self.names), "input probabilities")
        if len(states) != len(self.names):
            raise ChannelValidationError(f"{len(self.names)} input names but {len(states)} input states")
        self.states = [validate_density(s, f"input {n!r} (index {i})") for i, (n, s) in enumerate(zip(self.names, states))]

    @property
    def dim(self) -> int:
        return self.states[0].shape[0]

    def average(self) -> np.ndarray:
        return np.tensordot(self.probs, np.stack(self.states), axes=1)

    @classmethod
    def computational_basis(cls, dim: int) -> "InputEnsemble":
        return cls([str(i) for i in range(dim)], np.full(dim, 1.0 / dim), [projector(ket(dim, i)) for i in range(dim)])


class KrausChannel:
    """Channel N: A' -> B given by Kraus operators of shape (dB, dA')."""

    def __init__(self, kraus_ops: Sequence[np.ndarray], inputs: Optional[InputEnsemble] = None):
        ops = [as_matrix(a) for a in kraus_ops]
        if not ops:
            raise ChannelValidationError("a Kraus channel needs at least one operator")
        shape = ops[0].shape
        for k, a in enumerate(ops):
            if a.shape != shape:
                raise ChannelValidationError(f"Kraus operator {k} has shape {a.shape}, expected {shape}")
        self.kraus_ops = np.stack(ops)
        self.d_out, self.d_in = shape
        completeness = np.einsum("kji,kjl->il", self.kraus_ops.conj(), self.kraus_ops)
        deviation = float(np.max(np.abs(completeness - np.eye(self.d_in))))
        if deviation > KRAUS_TOL:
            raise ChannelValidationError(
                f"Kraus operators are not complete: max |sum_k A_k^dagger A_k - I| = {deviation:.3e}"
            )
        if inputs is not None and inputs.dim != self.d_in:
            raise ChannelValidationError(f"input states have dimension {inputs.dim}, channel input is {self.d_in}")
        self.inputs = inputs

    @property
    def num_ops(self) -> int:
        return self.kraus_ops.shape[0]

    def apply(self, rho) -> np.ndarray:
        rho = as_matrix(rho)
        return np.einsum("kij,jl,kml->im", self.kraus_ops, rho, self.kraus_ops.conj())

    def ensemble(self) -> InputEnsemble:
        return self.inputs if self.inputs is not None else InputEnsemble.computational_basis(self.d_in)

    def __repr__(self):
        return f"KrausChannel(dA={self.d_in}, dB={self.d_out}, ops={self.num_ops})"


Channel = Union[CqWiretapChannel, KrausChannel]


def isometric_extension(channel: KrausChannel) -> np.ndarray:
    """V = sum_k A_k (x) |k>^E, an isometry A' -> BE with dE = number of Kraus operators."""
    d_e = channel.num_ops
    v = sum(np.kron(a, ket(d_e, k).reshape(d_e, 1)) for k, a in enumerate(channel.kraus_ops))
    gram_error = float(np.max(np.abs(v.conj().T @ v - np.eye(channel.d_in))))
    if gram_error > KRAUS_TOL:
        raise InvariantViolationError(f"extension is not an isometry: max |V^dagger V - I| = {gram_error:.3e}")
    return v


def induced_cq_channel(channel: KrausChannel, ensemble: Optional[InputEnsemble] = None) -> CqWiretapChannel:
    ensemble = ensemble if ensemble is not None else channel.ensemble()
    if ensemble.dim != channel.d_in:
        raise ChannelValidationError(f"input states have dimension {ensemble.dim}, channel input is {channel.d_in}")
    v = isometric_extension(channel)
    states = [v @ rho @ v.conj().T for rho in ensemble.states]
    return CqWiretapChannel(ensemble.names, states, channel.d_out, channel.num_ops, probs=ensemble.probs)


def as_cq_channel(channel: Channel) -> CqWiretapChannel:
    return channel if isinstance(channel, CqWiretapChannel) else induced_cq_channel(channel)


class _LazyProductStates(SequenceABC):
    def __init__(self, base: CqWiretapChannel, sequences: List[Tuple[int, ...]]):
        self.base = base
        self.sequences = sequences
        n = len(sequences[0])
        # (B1 E1 B2 E2 ...) -> (B1 ... Bn E1 ... En)
        self._dims = [base.d_b, base.d_e] * n
        self._order = list(range(0, 2 * n, 2)) + list(range(1, 2 * n, 2))
        self._cached = lru_cache(maxsize=256)(self._build)

    def _build(self, i: int) -> np.ndarray:
        raw = tensor(*(self.base.state(x) for x in self.sequences[i]))
        return permute_systems(raw, self._dims, self._order)

    def __len__(self):
        return len(self.sequences)

    def __getitem__(self, i):
        return self._cached(int(i))


class TensorPowerChannel(CqWiretapChannel):
    """W^{(x)n} over X^n with outputs presented as B^n E^n; states are built on demand."""

    def __init__(self, base: CqWiretapChannel, n: int):
        self.base = base
        self.n = n
        self.sequences = list(product(range(base.alphabet_size), repeat=n))
        sep = "" if all(len(s) == 1 for s in base.symbols) else ","
        names = [sep.join(base.symbols[x] for x in seq) for seq in self.sequences]
        probs = None
        if base.probs is not None:
            probs = [float(np.prod([base.probs[x] for x in seq])) for seq in self.sequences]
            probs = np.asarray(probs) / np.sum(probs)
        super().__init__(names, _LazyProductStates(base, self.sequences), base.d_b ** n, base.d_e ** n,
                         probs=probs, validate=False)

    def bob_state(self, x: int) -> np.ndarray:
        if x not in self._bob:
            self._bob[x] = self.base.sequence_state(self.sequences[x], "B")
        return self._bob[x]

    def eve_state(self, x: int) -> np.ndarray:
        if x not in self._eve:
            self._eve[x] = self.base.sequence_state(self.sequences[x], "E")
        return self._eve[x]


def tensor_power(channel: CqWiretapChannel, n: int, budget_bytes: Optional[int] = None) -> CqWiretapChannel:
    if n < 1:
        raise InvariantViolationError(f"tensor power needs n >= 1, got {n}")
    if n == 1:
        return channel
    count = channel.alphabet_size ** n
    dim = (channel.d_b * channel.d_e) ** n
    ensure_within_budget(operator_bytes(dim, count), f"W^(x){n} outputs ({count} states of dim {dim})", budget_bytes)
    logger.info(f"TENSOR: building W^(x){n}: {count} sequences, BE dimension {dim}")
    return TensorPowerChannel(channel, n)


# Channel-spec documents

def _matrix_from_doc(doc, what: str) -> np.ndarray:
    try:
        arr = np.array([[complex(re, im) for re, im in row] for row in doc], dtype=complex)
    except (TypeError, ValueError) as e:
        raise ChannelParseError(f"{what}: malformed matrix entries ({e})")
    if arr.ndim != 2 or any(len(row) != len(doc[0]) for row in doc):
        raise ChannelParseError(f"{what}: matrix rows have unequal lengths")
    return arr


def _collect_probs(items, what: str):
    probs = [item.prob for item in items]
    if all(p is None for p in probs):
        return None
    if any(p is None for p in probs):
        raise ChannelParseError(f"{what}: either every entry or no entry may carry 'prob'")
    return probs


def parse_channel(text: str) -> Channel:
    try:
        doc = ChannelDocument.model_validate_json(text)
    except ValidationError as e:
        raise ChannelParseError(f"malformed channel document: {e}")

    if doc.kind == "cq":
        dim = doc.dB * doc.dE
        states = []
        for i, sym in enumerate(doc.symbols):
            what = f"symbol {sym.name!r} (index {i})"
            sigma = _matrix_from_doc(sym.state_BE, what)
            if sigma.shape != (dim, dim):
                raise ChannelValidationError(f"{what}: state has shape {sigma.shape}, expected ({dim}, {dim})")
            states.append(sigma)
        return CqWiretapChannel([s.name for s in doc.symbols], states, doc.dB, doc.dE,
                                probs=_collect_probs(doc.symbols, "symbols"))

    ops = []
    for k, op in enumerate(doc.kraus):
        a = _matrix_from_doc(op, f"Kraus operator {k}")
        if a.shape[0] != doc.dB:
            raise ChannelValidationError(f"Kraus operator {k}: has {a.shape[0]} rows, dB is {doc.dB}")
        ops.append(a)
    inputs = None
    if doc.inputs:
        probs = _collect_probs(doc.inputs, "inputs")
        if probs is None:
            probs = [1.0 / len(doc.inputs)] * len(doc.inputs)
        inputs = InputEnsemble([i.name for i in doc.inputs], probs,
                               [_matrix_from_doc(i.state, f"input {i.name!r}") for i in doc.inputs])
    return KrausChannel(ops, inputs=inputs)


def load_channel(path: Union[str, Path]) -> Channel:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ChannelParseError(f"cannot read channel file {path}: {e}")
    channel = parse_channel(text)
    logger.info(f"CHANNEL: loaded {channel!r} from {path}")
    return channel


def _num(x: float) -> str:
    x = float(x)
    if not np.isfinite(x):
        raise ChannelParseError(f"cannot serialize non-finite value {x}")
    return format(x, ".17g")


def _matrix_to_doc(m: np.ndarray) -> str:
    rows = ("[" + ", ".join(f"[{_num(z.real)}, {_num(z.imag)}]" for z in row) + "]" for row in np.asarray(m))
    return "[" + ", ".join(rows) + "]"


def serialize_channel(channel: Channel) -> str:
    """Canonical document: keys in schema order, floats with 17 significant digits."""
    lines = ["{"]
    if isinstance(channel, CqWiretapChannel):
        lines += ['  "kind": "cq",', f'  "dB": {channel.d_b},', f'  "dE": {channel.d_e},', '  "symbols": [']
        entries = []
        for i, name in enumerate(channel.symbols):
            prob = "" if channel.probs is None else f', "prob": {_num(channel.probs[i])}'
            entries.append(f'    {{"name": {json.dumps(name)}{prob}, "state_BE": {_matrix_to_doc(channel.state(i))}}}')
        lines.append(",\n".join(entries))
        lines.append("  ]")
    else:
        lines += ['  "kind": "kraus",', f'  "dB": {channel.d_out},', '  "kraus": [']
        lines.append(",\n".join(f"    {_matrix_to_doc(a)}" for a in channel.kraus_ops))
        if channel.inputs is None:
            lines.append("  ]")
        else:
            lines.append("  ],")
            lines.append('  "inputs": [')
            ens = channel.inputs
            lines.append(",\n".join(
                f'    {{"name": {json.dumps(name)}, "prob": {_num(p)}, "state": {_matrix_to_doc(rho)}}}'
                for name, p, rho in zip(ens.names, ens.probs, ens.states)
            ))
            lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


# Catalog of named channels

_PLUS = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2)


def dephase(rho: np.ndarray, q: float) -> np.ndarray:
    """Qubit dephasing rho -> (1-q) rho + q Z rho Z."""
    z = np.diag([1.0, -1.0]).astype(complex)
    return (1 - q) * rho + q * z @ rho @ z


def constant_eve() -> CqWiretapChannel:
    """Bob receives |x>, Eve's output is trivial."""
    return CqWiretapChannel(["0", "1"], [projector(ket(2, 0)), projector(ket(2, 1))], 2, 1)


def copy_to_both() -> CqWiretapChannel:
    """Bob and Eve both receive |x>; the channel induced by full dephasing on {|0>, |1>}."""
    states = [np.kron(projector(ket(2, x)), projector(ket(2, x))) for x in range(2)]
    return CqWiretapChannel(["0", "1"], states, 2, 2)


def bb84_style(q: float = 0.2) -> CqWiretapChannel:
    """Bob receives |0> or |+>, Eve a dephased copy."""
    kets = [ket(2, 0), _PLUS]
    states = [np.kron(projector(v), dephase(projector(v), q)) for v in kets]
    return CqWiretapChannel(["0", "+"], states, 2, 2)


def dephasing_family(q: float) -> CqWiretapChannel:
    """Both parties receive the dephased state D_q(|0>) or D_q(|+>)."""
    kets = [ket(2, 0), _PLUS]
    states = [np.kron(dephase(projector(v), q), dephase(projector(v), q)) for v in kets]
    return CqWiretapChannel(["0", "+"], states, 2, 2)


def identity_kraus(dim: int = 2) -> KrausChannel:
    return KrausChannel([np.eye(dim)])


def full_dephasing_kraus() -> KrausChannel:
    return KrausChannel([projector(ket(2, 0)), projector(ket(2, 1))])


def dephasing_kraus(q: float) -> KrausChannel:
    return KrausChannel([np.sqrt(1 - q) * np.eye(2), np.sqrt(q) * np.diag([1.0, -1.0])])


def amplitude_damping(gamma: float, inputs: Optional[InputEnsemble] = None) -> KrausChannel:
    a0 = np.array([[1.0, 0.0], [0.0, np.sqrt(1 - gamma)]])
    a1 = np.array([[0.0, np.sqrt(gamma)], [0.0, 0.0]])
    return KrausChannel([a0, a1], inputs=inputs)


def zero_plus_inputs() -> InputEnsemble:
    return InputEnsemble(["0", "+"], [0.5, 0.5], [projector(ket(2, 0)), projector(_PLUS)])

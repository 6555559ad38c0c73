import numpy as np
import pytest

from pfp.core.exceptions import BudgetExceededError, ChannelParseError, ChannelValidationError
from pfp.services import channels
from pfp.services.channels import (
    CqWiretapChannel, KrausChannel, induced_cq_channel, isometric_extension, load_channel, parse_channel,
    serialize_channel, tensor_power,
)
from pfp.services.linalg import ket, partial_trace, permute_systems, projector, random_density, tensor
from pfp.schemas import SystemLayout


@pytest.mark.parametrize("name, expected", [
    ("constant_eve", channels.constant_eve()),
    ("copy_to_both", channels.copy_to_both()),
    ("bb84_style", channels.bb84_style(0.2)),
    ("dephasing_family", channels.dephasing_family(0.12)),
])
def test_bundled_cq_files_match_catalog(channel_path, name, expected):
    loaded = load_channel(channel_path(name))
    assert isinstance(loaded, CqWiretapChannel)
    assert loaded.allclose(expected, atol=1e-12)


def test_bundled_amplitude_damping_matches_catalog(channel_path):
    loaded = load_channel(channel_path("amplitude_damping"))
    expected = channels.amplitude_damping(0.3, inputs=channels.zero_plus_inputs())
    assert isinstance(loaded, KrausChannel)
    assert np.abs(loaded.kraus_ops - expected.kraus_ops).max() < 1e-12
    assert loaded.inputs.names == ["0", "+"]
    assert np.abs(loaded.inputs.average() - expected.inputs.average()).max() < 1e-12


def test_document_probabilities_are_kept(channel_path):
    loaded = load_channel(channel_path("dephasing_family"))
    assert np.allclose(loaded.probs, [0.5, 0.5])
    assert load_channel(channel_path("bb84_style")).probs is None


@pytest.mark.parametrize("channel", [
    channels.bb84_style(0.2),
    channels.amplitude_damping(0.3, inputs=channels.zero_plus_inputs()),
    channels.dephasing_kraus(0.1),
])
def test_serialization_is_canonical(channel):
    text = serialize_channel(channel)
    again = serialize_channel(parse_channel(text))
    assert again == text


def test_serialized_keys_follow_schema_order():
    text = serialize_channel(channels.amplitude_damping(0.3, inputs=channels.zero_plus_inputs()))
    positions = [text.index(f'"{key}"') for key in ("kind", "dB", "kraus", "inputs")]
    assert positions == sorted(positions)


def _doc(states, d_b=2, d_e=1, names=None, probs=None):
    import json

    symbols = []
    for i, s in enumerate(states):
        entry = {"name": (names or [str(j) for j in range(len(states))])[i],
                 "state_BE": [[[float(np.real(z)), float(np.imag(z))] for z in row] for row in s]}
        if probs is not None:
            entry["prob"] = probs[i]
        symbols.append(entry)
    return json.dumps({"kind": "cq", "dB": d_b, "dE": d_e, "symbols": symbols})


def test_malformed_documents_are_parse_errors():
    with pytest.raises(ChannelParseError):
        parse_channel("{not json")
    with pytest.raises(ChannelParseError):
        parse_channel('{"kind": "cq", "dB": 2, "dE": 1, "symbols": [], "extra": 1}')
    with pytest.raises(ChannelParseError):
        parse_channel('{"kind": "kraus", "dB": 2, "dE": 2, "kraus": [[[[1, 0]]]]}')


def test_trace_violation_names_the_symbol():
    bad = 0.9 * projector(ket(2, 1))
    with pytest.raises(ChannelValidationError, match="'flip'"):
        parse_channel(_doc([projector(ket(2, 0)), bad], names=["keep", "flip"]))


def test_negative_state_is_rejected():
    not_psd = np.array([[1.2, 0.0], [0.0, -0.2]])
    with pytest.raises(ChannelValidationError, match="negative eigenvalue"):
        parse_channel(_doc([not_psd]))


def test_state_shape_must_match_dimensions():
    with pytest.raises(ChannelValidationError, match="shape"):
        parse_channel(_doc([projector(ket(2, 0))], d_b=2, d_e=2))


def test_partial_probabilities_are_rejected():
    import json

    doc = json.loads(_doc([projector(ket(2, 0)), projector(ket(2, 1))], probs=[0.5, 0.5]))
    del doc["symbols"][1]["prob"]
    with pytest.raises(ChannelParseError):
        parse_channel(json.dumps(doc))


def test_incomplete_kraus_operators_are_rejected():
    with pytest.raises(ChannelValidationError, match="not complete"):
        KrausChannel([np.diag([1.0, 0.9])])


def test_missing_file_is_a_parse_error(tmp_path):
    with pytest.raises(ChannelParseError):
        load_channel(tmp_path / "absent.json")


def test_isometric_extension_reproduces_channel():
    channel = channels.amplitude_damping(0.3)
    v = isometric_extension(channel)
    assert v.shape == (4, 2)
    assert np.abs(v.conj().T @ v - np.eye(2)).max() < 1e-12
    rng = np.random.default_rng(7)
    layout = SystemLayout.of(B=2, E=2)
    for _ in range(50):
        rho = random_density(2, rng)
        assert np.abs(partial_trace(v @ rho @ v.conj().T, layout, {"B"}) - channel.apply(rho)).max() < 1e-12


def test_induced_channel_bob_marginals():
    channel = channels.amplitude_damping(0.3, inputs=channels.zero_plus_inputs())
    cq = induced_cq_channel(channel)
    assert cq.d_b == 2 and cq.d_e == 2
    for x, rho in enumerate(channel.inputs.states):
        assert np.abs(cq.bob_state(x) - channel.apply(rho)).max() < 1e-12
    assert np.allclose(cq.probs, [0.5, 0.5])


def test_induced_channel_defaults_to_computational_basis():
    cq = induced_cq_channel(channels.full_dephasing_kraus())
    assert cq.allclose(channels.copy_to_both(), atol=1e-12)


def test_tensor_power_orders_bob_before_eve():
    base = channels.bb84_style(0.2)
    power = tensor_power(base, 2)
    assert power.alphabet_size == 4
    assert power.symbols == ["00", "0+", "+0", "++"]
    x = 1
    seq = power.sequences[x]
    expected = permute_systems(tensor(base.state(seq[0]), base.state(seq[1])), [2, 2, 2, 2], [0, 2, 1, 3])
    assert np.abs(power.state(x) - expected).max() < 1e-12
    assert np.abs(power.bob_state(x) - np.kron(base.bob_state(0), base.bob_state(1))).max() < 1e-12
    assert np.abs(power.eve_state(x) - partial_trace(power.state(x), power.layout, {"E"})).max() < 1e-12


def test_tensor_power_respects_budget():
    with pytest.raises(BudgetExceededError):
        tensor_power(channels.bb84_style(0.2), 6, budget_bytes=1024)


def test_tensor_power_of_three_uses():
    rng = np.random.default_rng(15)
    base = CqWiretapChannel(["0", "1"], [random_density(4, rng), random_density(4, rng)], 2, 2)
    power = tensor_power(base, 3)
    x = power.symbols.index("010")
    assert x == 2
    assert power.sequences[x] == (0, 1, 0)
    bob = tensor(base.bob_state(0), base.bob_state(1), base.bob_state(0))
    eve = tensor(base.eve_state(0), base.eve_state(1), base.eve_state(0))
    assert np.abs(power.bob_state(x) - bob).max() < 1e-12
    assert np.abs(power.eve_state(x) - eve).max() < 1e-12
    raw = tensor(base.state(0), base.state(1), base.state(0))
    expected = permute_systems(raw, [2, 2] * 3, [0, 2, 4, 1, 3, 5])
    assert np.abs(power.state(x) - expected).max() < 1e-12

from collections import Counter

import numpy as np
import pytest
from scipy.linalg import block_diag

from pfp.core.exceptions import ConfigurationError
from pfp.schemas import CodeSpec
from pfp.services import channels
from pfp.services.linalg import trace_norm
from pfp.services.protocol import (
    Codebook, build_pairing, covering_concentration, covering_threshold, decode_matrix, fano_check, fano_details,
    iid_eve_reference, is_product_channel, obfuscation_error, pgm_decoder, run_protocol, sample_codebook,
)


def test_pairing_is_injective_and_invertible():
    for message_bits in range(1, 9):
        for key_bits in (0, message_bits // 2, message_bits):
            build_pairing(message_bits, key_bits)


def test_pairing_rejects_oversized_key():
    with pytest.raises(ConfigurationError):
        build_pairing(2, 3)


def test_code_spec_clamps_key_to_message_width():
    spec = CodeSpec(n=6, rate=0.5, key_rate=1.0)
    assert spec.message_bits == 3
    assert spec.key_bits_requested == 6
    assert spec.key_bits == 3


def test_codebook_symbol_frequencies():
    channel = channels.copy_to_both()
    codebook = sample_codebook(channel, [0.5, 0.5], CodeSpec(n=8, rate=0.5, seed=1))
    assert codebook.size == 16 and codebook.n == 8
    sigma = np.sqrt(0.25 / (16 * 8))
    assert abs(codebook.symbol_frequencies()[0] - 0.5) <= 3 * sigma


def test_pgm_error_for_zero_and_plus():
    channel = channels.bb84_style(0.2)
    codebook = Codebook(channel, [[0], [1]])
    table = decode_matrix(channel, codebook, pgm_decoder(channel, codebook))
    errors = 1.0 - np.diag(table[:, :2])
    assert np.allclose(errors, (1 - 2 ** -0.5) / 2, atol=1e-9)
    assert np.allclose(errors, 0.146447, atol=1e-6)


def test_identical_codewords_are_indistinguishable():
    channel = channels.bb84_style(0.2)
    codebook = Codebook(channel, [[0], [0]])
    povm = pgm_decoder(channel, codebook)
    table = decode_matrix(channel, codebook, povm)
    assert np.allclose(table[:, :2], 0.5, atol=1e-9)
    total = povm.elements.sum(axis=0) + povm.residual
    assert np.abs(total - np.eye(2)).max() < 1e-9


def test_noiseless_bob_decodes_all_distinct_codewords():
    channel = channels.constant_eve()
    spec = CodeSpec(n=4, rate=0.75, seed=5)
    report = run_protocol(channel, [0.5, 0.5], spec)
    codebook = sample_codebook(channel, [0.5, 0.5], spec)
    groups = Counter(codebook.codeword(k) for k in range(codebook.size))
    expected = np.mean([1 - 1 / groups[codebook.codeword(k)] for k in range(codebook.size)])
    assert np.isclose(report.avg_error, expected, atol=1e-9)
    assert abs(report.security_distance) < 1e-9
    assert report.fano.passed


def test_security_distance_against_full_assembly():
    channel = channels.copy_to_both()
    probs = [0.5, 0.5]
    spec = CodeSpec(n=2, rate=1.0, seed=3)
    report = run_protocol(channel, probs, spec)

    codebook = sample_codebook(channel, probs, spec)
    table = decode_matrix(channel, codebook, pgm_decoder(channel, codebook))
    size = codebook.size
    eve = codebook.eve_states()
    blocks = [sum(table[k, m] * eve[k] for k in range(size)) / size for m in range(size + 1)]
    iid = iid_eve_reference(channel, probs, spec.n)
    reference = [iid / size] * size + [np.zeros_like(iid)]
    expected = trace_norm(block_diag(*blocks) - block_diag(*reference))
    assert np.isclose(report.security_distance, expected, atol=1e-9)
    marginal = [eve.mean(axis=0) / size] * size + [np.zeros_like(eve[0])]
    expected_marginal = trace_norm(block_diag(*blocks) - block_diag(*marginal))
    assert np.isclose(report.security_distance_marginal, expected_marginal, atol=1e-9)
    assert report.security_distance <= report.ideal_gap + max(report.oe_per_message) + 1e-9


def test_decode_matrix_matches_direct_traces():
    channel = channels.bb84_style(0.2)
    codebook = sample_codebook(channel, [0.5, 0.5], CodeSpec(n=4, rate=0.5, seed=6))
    assert codebook.size == 4
    povm = pgm_decoder(channel, codebook)
    table = decode_matrix(channel, codebook, povm)
    assert table.shape == (4, 5)
    for k in range(4):
        sigma = channel.sequence_state(codebook.codeword(k), "B")
        for j in range(4):
            assert np.isclose(table[k, j], np.real(np.trace(povm.elements[j] @ sigma)), atol=1e-12)
        assert np.isclose(table[k, 4], np.real(np.trace(povm.residual @ sigma)), atol=1e-12)
    assert np.allclose(table.sum(axis=1), 1.0, atol=1e-9)


def test_larger_key_lowers_obfuscation_error():
    channel = channels.copy_to_both()
    probs = [0.5, 0.5]
    for seed in range(50):
        means = []
        for key_rate in (0.25, 1.0):
            spec = CodeSpec(n=4, rate=1.0, key_rate=key_rate, seed=seed)
            codebook = sample_codebook(channel, probs, spec)
            pairing = build_pairing(spec.message_bits, spec.key_bits)
            means.append(np.mean([obfuscation_error(channel, codebook, pairing, m, probs=probs)
                                  for m in range(pairing.messages)]))
        assert means[1] < means[0]


def test_obfuscation_error_needs_a_reference():
    channel = channels.copy_to_both()
    codebook = Codebook(channel, [[0], [1]])
    pairing = build_pairing(1, 1)
    assert abs(obfuscation_error(channel, codebook, pairing, 0, probs=[0.5, 0.5])) < 1e-12
    with pytest.raises(ConfigurationError):
        obfuscation_error(channel, codebook, pairing, 0)


def test_fano_on_uniform_table():
    table = np.hstack([np.full((4, 4), 0.25), np.zeros((4, 1))])
    check = fano_details(table, 2)
    assert np.isclose(check.conditional_entropy, 2.0)
    assert np.isclose(check.error_probability, 0.75)
    assert np.isclose(check.bound, 2.5)
    assert check.passed


def test_fano_holds_on_every_trial():
    spec = CodeSpec(n=3, rate=0.67, key_rate=0.34, trials=5, seed=2)
    report = run_protocol(channels.bb84_style(0.2), [0.5, 0.5], spec)
    assert all(t.fano_ok for t in report.trials)
    assert fano_check(report, spec)


def test_runs_are_reproducible():
    spec = CodeSpec(n=3, rate=0.67, key_rate=0.34, trials=3, seed=11)
    first = run_protocol(channels.dephasing_family(0.12), [0.5, 0.5], spec, max_workers=1)
    second = run_protocol(channels.dephasing_family(0.12), [0.5, 0.5], spec, max_workers=4)
    assert first.model_dump_json() == second.model_dump_json()


def test_non_product_channel_uses_joint_states():
    channel = channels.as_cq_channel(channels.amplitude_damping(0.3, inputs=channels.zero_plus_inputs()))
    assert not is_product_channel(channel)
    assert is_product_channel(channels.bb84_style(0.2))
    report = run_protocol(channel, [0.5, 0.5], CodeSpec(n=2, rate=0.5, key_rate=0.5, seed=4))
    assert 0 <= report.security_distance <= 2 + 1e-9
    assert report.fano.passed


def test_covering_on_constant_eve_never_exceeds():
    report = covering_concentration(channels.constant_eve(), [0.5, 0.5], 4, 0.5, trials=10)
    assert report.fraction_exceeding == 0
    assert max(report.oe_values) < 1e-12


def test_covering_threshold_formula():
    assert np.isclose(covering_threshold(0.01), 0.02 + 1.9)


@pytest.mark.slow
def test_reliability_improves_with_blocklength():
    medians = []
    for n in (4, 6, 8):
        spec = CodeSpec(n=n, rate=0.6, trials=50, seed=0)
        medians.append(run_protocol(channels.copy_to_both(), [0.5, 0.5], spec).median_avg_error)
    assert medians[0] > medians[1] > medians[2]
    assert medians[2] < 0.1


@pytest.mark.slow
def test_covering_error_concentrates_with_blocklength():
    """At uniform input and R_s = 1 = I(X;E) the copy-to-both oe settles near a constant, so the
    decay with n is shown on a skewed input where R_s = 1 exceeds I(X;E). The uniform input is
    checked at R_s = 0.25, below I(X;E), where covering fails.
    """
    reports = [covering_concentration(channels.copy_to_both(), [0.85, 0.15], n, 1.0, trials=200)
               for n in (4, 6, 8)]
    fractions = [r.fraction_exceeding for r in reports]
    means = [r.mean_oe for r in reports]
    assert fractions[0] >= fractions[1] >= fractions[2]
    assert means[0] > means[1] > means[2]
    low_key = covering_concentration(channels.copy_to_both(), [0.5, 0.5], 8, 0.25, trials=200)
    assert low_key.fraction_exceeding > 0.9


@pytest.mark.slow
def test_key_buys_security():
    channel = channels.copy_to_both()
    keyed = run_protocol(channel, [0.5, 0.5], CodeSpec(n=6, rate=0.5, key_rate=1.0, trials=20))
    unkeyed = run_protocol(channel, [0.5, 0.5], CodeSpec(n=6, rate=0.5, key_rate=0.0, trials=20))
    assert keyed.median_security_distance_marginal * 2 <= unkeyed.median_security_distance_marginal
    assert keyed.median_security_distance < unkeyed.median_security_distance

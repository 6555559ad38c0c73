import math

import numpy as np
import pytest

from pfp.core.config import get_settings
from pfp.core.exceptions import BudgetExceededError
from pfp.services import channels
from pfp.services.linalg import projector, tensor
from pfp.services.typicality import (
    conditional_typical_projector, sample_typical_sequences, typical_projector, typical_set, typical_set_size,
    verify_four_properties,
)

ZERO = np.array([1.0, 0.0])
PLUS = np.array([1.0, 1.0]) / np.sqrt(2)
MINUS = np.array([1.0, -1.0]) / np.sqrt(2)


def test_balanced_sequences_are_the_typical_set():
    sequences = typical_set([0.5, 0.5], 4, 0.1)
    assert len(sequences) == 6
    assert all(sum(s) == 2 for s in sequences)
    assert sequences == sorted(sequences)


def test_typical_set_size_matches_enumeration():
    probs = [0.2, 0.3, 0.5]
    for n in (3, 5, 6):
        assert typical_set_size(probs, n, 0.15) == len(typical_set(probs, n, 0.15))


def test_enumeration_limit():
    with pytest.raises(BudgetExceededError):
        typical_set([0.5, 0.5], 30, 0.1)


def test_typical_projector_rank():
    pi = typical_projector(np.diag([0.25, 0.75]), 6, 0.1)
    assert pi.rank == math.comb(6, 4) + math.comb(6, 5) == 21
    m = pi.matrix
    assert np.abs(m @ m - m).max() < 1e-12


def test_wide_delta_gives_identity():
    pi = typical_projector(np.eye(2) / 2, 3, 0.5)
    assert pi.rank == 8
    assert np.abs(pi.matrix - np.eye(8)).max() < 1e-12


def test_conditional_projector_factorizes_over_symbol_classes():
    rho_0 = projector(ZERO)
    rho_1 = 0.88 * projector(PLUS) + 0.12 * projector(MINUS)
    pi = conditional_typical_projector([rho_0, rho_1], [0, 1, 0, 1], 0.4)
    assert pi.rank == 3

    kept = [(PLUS, PLUS), (PLUS, MINUS), (MINUS, PLUS)]
    expected = sum(projector(tensor(ZERO, a, ZERO, b)) for a, b in kept)
    assert np.abs(pi.matrix - expected).max() < 1e-12


def test_projector_expectation_and_compression_agree():
    rho = np.diag([0.3, 0.7])
    pi = typical_projector(rho, 4, 0.2)
    sigma = tensor(*([rho] * 4))
    assert np.isclose(pi.expectation(sigma), np.trace(pi.matrix @ sigma).real, atol=1e-12)
    assert np.isclose(np.trace(pi.compress(sigma)).real, pi.expectation(sigma), atol=1e-12)


def test_projector_respects_budget():
    get_settings().PFP_BUDGET_MB = 1
    with pytest.raises(BudgetExceededError):
        typical_projector(np.eye(2) / 2, 10, 0.1)


def test_small_typical_sets_are_enumerated():
    sequences, weights, exhaustive = sample_typical_sequences([0.5, 0.5], 4, 0.1, samples=100)
    assert exhaustive and len(sequences) == 6
    assert np.isclose(weights.sum(), 1.0)


def test_large_typical_sets_are_sampled_reproducibly():
    first = sample_typical_sequences([0.5, 0.5], 8, 0.15, samples=50, seed=3)
    second = sample_typical_sequences([0.5, 0.5], 8, 0.15, samples=50, seed=3)
    assert not first[2]
    assert first[0] == second[0]
    assert all(3 <= sum(s) <= 5 for s in first[0])


def test_pure_outputs_have_no_typicality_error():
    report = verify_four_properties(channels.copy_to_both(), [0.5, 0.5], 4, 0.15, system="E")
    assert report.eps_hat == 0
    assert report.exhaustive and report.sequences_checked == 6


def test_four_properties_on_dephasing_family():
    channel = channels.dephasing_family(0.12)
    small = verify_four_properties(channel, [0.5, 0.5], 4, 0.15, system="E", samples=100)
    large = verify_four_properties(channel, [0.5, 0.5], 8, 0.15, system="E", samples=100)
    assert small.exhaustive and small.sequences_checked == 6
    assert not large.exhaustive and large.sequences_checked == 100
    assert large.eps_hat < small.eps_hat
    assert large.eps_hat < 0.2
    assert large.eps_ok and large.passed
    for report in (small, large):
        assert report.alpha_ok and report.beta_ok
        assert 0 <= report.eps_hat <= 1
        assert report.c_min >= 0
        assert report.min_operator_gap >= -1e-9


def test_report_dumps_pass_alias():
    report = verify_four_properties(channels.copy_to_both(), [0.5, 0.5], 2, 0.25)
    dumped = report.model_dump(by_alias=True)
    assert "pass" in dumped and dumped["pass"] == report.passed

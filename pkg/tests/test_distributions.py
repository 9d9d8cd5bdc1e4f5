from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmilab.distributions import (
    Distribution, SitePartition, chain_partition, cmi, conditional, fit_cmi_length, holevo_avg_entropy, kl_divergence,
    marginal, measurement_distribution, total_variation,
)
from cmilab.entswap import rotated_cluster_state
from cmilab.state import HADAMARD, apply_gate, basis_state, epr, product_state, random_state, shannon_entropy

seeds = st.integers(0, 2**32 - 1)


def random_table(rng, dims) -> Distribution:
    p = rng.random(dims) ** 3
    return Distribution(tuple(range(len(dims))), dims, p / p.sum())


def test_distribution_validation():
    with pytest.raises(ValueError):
        Distribution((0,), (2,), [0.6, 0.6])
    with pytest.raises(ValueError):
        Distribution((0,), (2,), [1.2, -0.2])
    with pytest.raises(ValueError):
        Distribution((0, 0), (2, 2), np.full((2, 2), 0.25))


def test_plus_state_gives_uniform():
    psi = basis_state([0, 0, 0])
    for k in range(3):
        psi = apply_gate(psi, HADAMARD, [k])
    assert np.allclose(measurement_distribution(psi).probs, 1 / 8)


def test_epr_distribution():
    d = measurement_distribution(epr())
    assert d.prob((0, 0)) == pytest.approx(0.5) and d.prob((1, 1)) == pytest.approx(0.5)
    assert d.prob((0, 1)) == 0 and d.prob((1, 0)) == 0


def test_marginal_matches_brute_force_sum(rng):
    psi = random_state((2,) * 4, rng)
    amps = psi.amplitudes
    oracle = np.zeros((2, 2))
    for bits in itertools.product((0, 1), repeat=4):
        idx = int("".join(map(str, bits)), 2)
        oracle[bits[1], bits[3]] += abs(amps[idx]) ** 2
    d = measurement_distribution(psi, [1, 3])
    assert np.abs(d.probs - oracle).max() < 1e-12


def test_marginal_respects_requested_order(rng):
    dist = random_table(rng, (2, 3, 2))
    m = marginal(dist, [2, 0])
    assert m.dims == (2, 2)
    assert np.allclose(m.probs, dist.probs.sum(axis=1).T)


def test_conditional_product_equals_marginal(rng):
    a, b = rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(3))
    dist = Distribution((0, 1), (2, 3), np.outer(a, b))
    for v in range(2):
        assert np.allclose(conditional(dist, [1], [0], [v]).probs, b)


def test_conditional_on_epr():
    d = measurement_distribution(epr())
    assert np.allclose(conditional(d, [1], [0], [0]).probs, [1, 0])
    with pytest.raises(ValueError):
        conditional(Distribution((0, 1), (2, 2), [[1.0, 0], [0, 0]]), [0], [1], [1])


def test_chain_rule_reconstruction(rng):
    dist = random_table(rng, (2, 2, 2))
    p23 = marginal(dist, [1, 2])
    for x in itertools.product((0, 1), repeat=3):
        cond = conditional(dist, [0], [1, 2], x[1:])
        assert abs(p23.prob(x[1:]) * cond.prob((x[0],)) - dist.prob(x)) < 1e-12


def test_kl_examples():
    p = Distribution((0,), (2,), [0.3, 0.7])
    u = Distribution((0,), (2,), [0.5, 0.5])
    assert kl_divergence(p, p) == 0.0
    assert kl_divergence(Distribution((0,), (2,), [1.0, 0.0]), u) == pytest.approx(1.0)
    oracle = 0.3 * math.log(0.6) + 0.7 * math.log(1.4)
    assert kl_divergence(p, u, "e") == pytest.approx(oracle, abs=1e-14)
    assert oracle == pytest.approx(0.082282, abs=1e-6)


def test_kl_support_and_sites():
    assert kl_divergence(Distribution((0,), (2,), [0.5, 0.5]), Distribution((0,), (2,), [1.0, 0.0])) == math.inf
    with pytest.raises(ValueError):
        kl_divergence(Distribution((0,), (2,), [0.5, 0.5]), Distribution((1,), (2,), [0.5, 0.5]))


def test_total_variation_is_l1():
    p = Distribution((0,), (2,), [1.0, 0.0])
    q = Distribution((0,), (2,), [0.0, 1.0])
    assert total_variation(p, q) == 2.0


def test_cmi_examples():
    a, b, c = (np.array([0.2, 0.8]), np.array([0.5, 0.5]), np.array([0.9, 0.1]))
    prod = Distribution((0, 1, 2), (2, 2, 2), np.einsum("i,j,k->ijk", a, b, c))
    assert cmi(prod, SitePartition((0,), (1,), (2,))).cmi == pytest.approx(0.0, abs=1e-12)
    assert cmi(measurement_distribution(epr()), SitePartition((0,), (), (1,))).cmi == pytest.approx(1.0)


def test_perfect_swapping_chain_has_one_bit():
    dist = measurement_distribution(rotated_cluster_state(4, 0.0))
    # brute-force oracle over the 16 outcomes
    p = dist.probs
    h = lambda t: shannon_entropy(t.ravel(), 2)
    oracle = h(p.sum(axis=3)) + h(p.sum(axis=0)) - h(p.sum(axis=(0, 3))) - h(p)
    assert oracle == pytest.approx(1.0, abs=1e-10)
    assert cmi(dist, SitePartition((0,), (1, 2), (3,))).cmi == pytest.approx(1.0, abs=1e-10)


def test_cmi_rejects_overlap():
    with pytest.raises(ValueError):
        SitePartition((0,), (0,), (1,))


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_cmi_identity_pinsker_and_definitional(seed):
    r = np.random.default_rng(seed)
    dist = random_table(r, (2, 3, 2, 2))
    rep = cmi(dist, SitePartition((0,), (1, 3), (2,)))
    assert rep.cmi >= -1e-12
    assert abs(rep.cmi - rep.definitional) < 1e-10
    assert rep.pinsker_residual <= math.sqrt(2 * rep.cmi_nats) + 1e-9


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_data_processing(seed):
    dist = random_table(np.random.default_rng(seed), (2, 2, 2, 2))
    small = cmi(dist, SitePartition((1,), (2,), (3,))).cmi
    big = cmi(dist, SitePartition((0, 1), (2,), (3,))).cmi
    assert small <= big + 1e-10


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_base_conversion(seed):
    dist = random_table(np.random.default_rng(seed), (2, 2, 2))
    part = SitePartition((0,), (1,), (2,))
    assert abs(cmi(dist, part, "e").cmi - cmi(dist, part, 2).cmi * math.log(2)) < 1e-12


def test_holevo_examples(rng):
    part = SitePartition((0,), (1,), ())
    prod = product_state([random_state((2,), rng).amplitudes, random_state((2,), rng).amplitudes])
    assert holevo_avg_entropy(prod, part) == pytest.approx(0.0, abs=1e-10)
    assert holevo_avg_entropy(epr(), part) == pytest.approx(0.0, abs=1e-10)


def test_holevo_bounds_cmi_on_rotated_cluster():
    psi = rotated_cluster_state(6, math.pi / 4)
    part = SitePartition((0,), (1, 2, 3, 4), (5,))
    bound = holevo_avg_entropy(psi, part)
    assert bound >= cmi(measurement_distribution(psi), part).cmi - 1e-9


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_holevo_bound_random_states(seed):
    psi = random_state((2,) * 4, np.random.default_rng(seed))
    part = SitePartition((0,), (1, 2), (3,))
    assert holevo_avg_entropy(psi, part) >= cmi(measurement_distribution(psi), part).cmi - 1e-9


def test_fit_exact_exponential():
    fit = fit_cmi_length([(d, math.exp(-d / 2)) for d in range(1, 7)])
    assert fit.xi == pytest.approx(2.0, abs=1e-6) and not fit.diverged


def test_fit_constant_diverges():
    assert fit_cmi_length([(d, 0.3) for d in range(1, 6)]).diverged


def test_fit_noisy(rng):
    pts = [(d, math.exp(-d / 3) * (1 + rng.uniform(-0.05, 0.05))) for d in range(1, 11)]
    assert 2.7 <= fit_cmi_length(pts).xi <= 3.3


def test_fit_vanished_and_errors():
    fit = fit_cmi_length([(1, 1e-13), (2, 1e-14), (3, 0.0)])
    assert fit.vanished and not fit.diverged and math.isnan(fit.xi)
    with pytest.raises(ValueError):
        fit_cmi_length([(1, 0.1), (2, 0.01)])
    with pytest.raises(ValueError):
        fit_cmi_length([(1, 0.1), (1, 0.01), (3, 0.001)])


def test_chain_partition():
    p = chain_partition([0, 1], [5])
    assert p.B == (2, 3, 4) and p.distance == 4.0
    with pytest.raises(ValueError):
        chain_partition([3], [1])


def test_csv_round_trip(rng):
    dist = random_table(rng, (2, 2, 2))
    back = Distribution.from_csv(dist.to_csv())
    assert np.array_equal(back.probs, dist.probs)
    assert dist.to_csv().splitlines()[0] == "outcome,prob"

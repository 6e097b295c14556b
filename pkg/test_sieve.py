import math

import numpy as np
import pytest
from scipy.stats import norm

from errors import DomainError
from randomness import CoefficientLattice, SparseLattice
from sieve import (
    SieveParams,
    SieveState,
    brute_force_survivors,
    condition10,
    condition10_report,
    extract_slow_candidates,
    level_margins,
    level_survivors,
    minimal_admissible_mu,
    p_l,
    retry_hint,
    run_sieve,
    survival_margins,
    survival_statistics,
    survival_table_from_counts,
    tightest_candidates,
)


def test_p_l_reference_value():
    assert p_l(1, 0) == pytest.approx(0.27181, abs=5e-6)
    assert p_l(1, 0) == pytest.approx(2 * (norm.cdf(2) - norm.cdf(1)), rel=1e-12)


def test_p_l_decreases_in_l():
    values = [p_l(2, l) for l in range(6)]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_p_l_bands_partition_the_tail():
    for mu in (1, 2, 3):
        assert sum(p_l(mu, l) for l in range(12)) == pytest.approx(2 * norm.sf(mu), rel=1e-12)


def test_p_l_domain():
    with pytest.raises(DomainError):
        p_l(0.5, 0)
    with pytest.raises(DomainError):
        p_l(1, -1)


def test_condition10_decreasing_in_mu():
    for m in (2, 3, 4):
        values = [condition10(m, mu) for mu in range(1, 21)]
        assert all(b < a for a, b in zip(values, values[1:]))


def test_condition10_increasing_in_m():
    for mu in (1, 2, 3, 5):
        assert condition10(2, mu) < condition10(3, mu) < condition10(4, mu)


def test_minimal_admissible_mu():
    assert minimal_admissible_mu(2) == 2
    assert minimal_admissible_mu(3) == 3
    assert minimal_admissible_mu(4) == 3
    assert not condition10_report(3, 2).admissible
    assert condition10_report(3, 3).admissible


def test_condition10_report_certifies_tail():
    report = condition10_report(3, 3)
    assert report.tail_bound < 1e-15
    assert report.value == pytest.approx(report.partial_sum)
    assert report.terms[-1] < 1e-16
    assert not report.diverged


def test_condition10_domain():
    with pytest.raises(DomainError):
        condition10(1, 3)


def test_params_validation():
    with pytest.raises(ValueError):
        SieveParams(m=2, h=0.4)
    with pytest.raises(ValueError):
        SieveParams(m=3, h=0.5, inf_K=0.3)
    assert SieveParams(m=3, h=0.5, inf_K=0.4).exponent == pytest.approx(0.4)
    with pytest.raises(ValueError):
        SieveParams(J1=10, J_cap=8)
    with pytest.raises(ValueError):
        SieveParams(J1=0)
    assert SieveParams(J1=0, trim_edges=False).J1 == 0
    assert SieveParams(m=3, mu=3).admissible


def test_zero_field_keeps_everything():
    params = SieveParams(m=3, mu=3, J_cap=6, trim_edges=False)
    state = run_sieve(SparseLattice.zeros(), params)
    assert state.counts == [2 ** J for J in range(7)]


def test_single_large_coefficient_removes_its_reach():
    m, mu, j0, k0 = 2, 1, 6, 30
    # |xi| in (2 mu, 4 mu]: band l = 1, reach 2^{m l} = 4
    xi = np.zeros(1 << j0)
    xi[k0] = 3.0
    alive = level_survivors(xi, m, mu, j0)
    removed = np.flatnonzero(~alive)
    assert removed.tolist() == list(range(k0 - 4, k0 + 5))


def test_level_removed_when_band_covers_everything():
    xi = np.zeros(8)
    xi[0] = 100.0
    assert not level_survivors(xi, 3, 1, 3).any()


def test_sieve_matches_literal_definition():
    for seed in range(5):
        lattice = CoefficientLattice(seed)
        for params in (SieveParams(m=3, mu=3, J_cap=8, J1=4), SieveParams(m=2, mu=1, J_cap=7, J1=3)):
            state = run_sieve(lattice, params, require_admissible=False)
            oracle = brute_force_survivors(lattice, params)
            for J, mask in oracle.items():
                assert np.array_equal(state.nested[J], mask), (seed, params, J)


def test_survivors_are_nested():
    state = run_sieve(CoefficientLattice(17), SieveParams(m=3, mu=3, J_cap=10))
    for J in range(10):
        children = state.survivors(J + 1)
        assert set((children >> 1).tolist()) <= set(state.survivors(J).tolist())
    assert all(b <= 2 * a for a, b in zip(state.counts, state.counts[1:]))


def test_inadmissible_params_rejected():
    with pytest.raises(DomainError):
        run_sieve(CoefficientLattice(1), SieveParams(m=3, mu=1))


def test_candidate_midpoints():
    params = SieveParams(m=3, mu=3, J_cap=4, J1=1, trim_edges=False)
    nested = {J: np.zeros(1 << J, dtype=bool) for J in range(5)}
    nested[4][5] = True
    state = SieveState(params=params, seed=None, nested=nested)
    assert extract_slow_candidates(state) == [11 / 32]


def test_candidates_avoid_trimmed_edges():
    params = SieveParams(m=3, mu=3, J_cap=12, J1=4)
    for seed in range(10):
        ts = extract_slow_candidates(run_sieve(CoefficientLattice(seed), params))
        assert ts == sorted(ts)
        assert all(2.0 ** -4 <= t <= 1 - 2.0 ** -4 for t in ts)


def test_candidates_revalidate_against_oracle():
    params = SieveParams(m=3, mu=3, J_cap=8, J1=4)
    lattice = CoefficientLattice(23)
    oracle = brute_force_survivors(lattice, params)
    for t in extract_slow_candidates(run_sieve(lattice, params)):
        assert oracle[8][math.floor(t * 256)]


def test_level_margins_of_single_coefficient():
    m, j0, k0 = 2, 6, 30
    xi = np.zeros(1 << j0)
    xi[k0] = 3.0
    margins = level_margins(xi, m, j0)
    distance = np.abs(np.arange(1 << j0) - k0)
    expected = np.select([distance <= 1, distance <= 4, distance <= 16], [3.0, 1.5, 0.75], 0.375)
    assert np.array_equal(margins, expected)


def test_survival_margins_reproduce_survivors():
    for seed in range(4):
        lattice = CoefficientLattice(seed)
        for base in (SieveParams(m=3, mu=3, J_cap=8, J1=4), SieveParams(m=2, mu=1, J_cap=7, trim_edges=False)):
            margins = survival_margins(lattice, base)
            for mu in (1, 2, 3, 5, 8):
                params = base.model_copy(update={"mu": mu})
                state = run_sieve(lattice, params, require_admissible=False)
                assert np.array_equal(margins <= mu, state.nested[params.J_cap]), (seed, base, mu)


def test_tightest_candidates_are_survivors_with_smallest_margins():
    params = SieveParams(m=3, mu=4, J_cap=10, J1=4)
    for seed in range(5):
        lattice = CoefficientLattice(seed)
        survivors = set(extract_slow_candidates(run_sieve(lattice, params)))
        ts = tightest_candidates(lattice, params, 3, interior=(0.25, 0.75))
        assert ts == sorted(ts)
        assert len(ts) <= 3
        assert set(ts) <= survivors
        assert all(0.25 <= t <= 0.75 for t in ts)
        margins = survival_margins(lattice, params)
        picked = {math.floor(t * 1024) for t in ts}
        rest = [k for k in range(256, 768) if k not in picked and margins[k] <= params.mu]
        if picked and rest:
            assert max(margins[k] for k in picked) <= min(margins[k] for k in rest)


def test_tightest_candidates_empty(caplog):
    params = SieveParams(m=3, mu=3, J_cap=6, J1=2)
    lattice = SparseLattice.single(0, 0, 50.0)
    assert tightest_candidates(lattice, params, 4) == []
    assert "larger mu" in caplog.text


def test_empty_survivors_give_retry_hint(caplog):
    params = SieveParams(m=3, mu=3, J_cap=3, J1=1)
    state = SieveState(params=params, seed=None, nested={J: np.zeros(1 << J, dtype=bool) for J in range(4)})
    assert extract_slow_candidates(state) == []
    assert "larger mu" in retry_hint(params)
    assert "larger mu" in caplog.text


def test_survival_table_from_counts():
    params = SieveParams(m=3, mu=3, J_cap=3, J1=1)
    counts = [[1, 2, 3, 4], [1, 1, 3, 0], [1, 2, 1, 8]]
    table = survival_table_from_counts([1, 2, 3], counts, params)
    # thresholds 1, 1.5, 2.25, 3.375; growth needs every earlier level too
    assert table.growth_frequency == pytest.approx([1.0, 2 / 3, 1 / 3, 1 / 3])
    assert table.survival_frequency == pytest.approx([1.0, 1.0, 1.0, 2 / 3])
    assert table.seed_rows()[1] == [2, 1, 1, 3, 0, False]
    assert len(table.frequency_rows()) == 4


@pytest.mark.slow
def test_survival_statistics_monotone():
    params = SieveParams(m=3, mu=3, J_cap=9, J1=4)
    table = survival_statistics(range(30), params, workers=2)
    assert len(table.counts) == 30
    assert np.all(np.diff(table.growth_frequency) <= 0)
    assert np.all(np.diff(table.survival_frequency) <= 0)
    with pytest.raises(DomainError):
        survival_statistics(range(10), params)

import math

import numpy as np
import pytest

from errors import DomainError, SynthesisError
from models import CoefficientArray
from randomness import CoefficientLattice, SparseLattice
from synthesis import (
    HurstFunction,
    baire_alpha,
    baire_band_violations,
    baire_perturb,
    block_exponents,
    check_block_gaps,
    series_coefficients,
    sum_levels,
    synth_brownian,
    synth_fh,
    synth_fH,
    synth_level,
    synth_points,
    synth_prevalence_counterexample,
)
from wavelets import WaveletSpec, evaluate_many

DB4 = WaveletSpec(family="daubechies", order=4)
DB2 = WaveletSpec(family="daubechies", order=2)


def test_zero_lattice_gives_zero_path():
    path = synth_fh(SparseLattice.zeros(), DB4, 0.5, 6)
    assert np.all(path.values == 0.0)
    assert path.J_grid == 10 and path.n == 1025


def test_single_term_path():
    path = synth_fh(SparseLattice.single(2, 1), DB2, 0.5, 4)
    expected = 0.5 * evaluate_many(DB2, 2, 1, path.times, resolution=path.J_grid)
    assert np.array_equal(path.values, expected)


def test_levels_sum_to_series_bitwise():
    lattice = CoefficientLattice(3)
    J = 12
    full = synth_fh(lattice, DB4, 0.5, 8, J_grid=J)
    levels = [synth_level(lattice, DB4, 0.5, j, J_grid=J) for j in range(9)]
    assert np.array_equal(sum_levels(levels), full.values)


def test_additivity_in_j_max():
    lattice = CoefficientLattice(4)
    J = 12
    upper = synth_fh(lattice, DB4, 0.5, 8, J_grid=J)
    lower = synth_fh(lattice, DB4, 0.5, 7, J_grid=J)
    levels = [synth_level(lattice, DB4, 0.5, j, J_grid=J) for j in range(9)]
    assert np.array_equal(lower.values, sum_levels(levels[:8]))
    assert np.array_equal(upper.values, sum_levels(levels))
    # each compensated partial sum sits within a few ulps of the exact one
    eps = np.finfo(np.float64).eps
    bound = 4 * eps * (np.abs(upper.values) + np.abs(lower.values) + np.abs(levels[8].values))
    assert np.all(np.abs(upper.values - lower.values - levels[8].values) <= bound)


def test_smaller_h_gives_larger_level():
    lattice = CoefficientLattice(5)
    rough = synth_level(lattice, DB4, 0.3, 10, J_grid=14)
    smooth = synth_level(lattice, DB4, 0.7, 10, J_grid=14)
    assert np.max(np.abs(rough.values)) > np.max(np.abs(smooth.values))


def test_window_consistency():
    lattice = CoefficientLattice(6)
    J = 12
    full = synth_fh(lattice, DB4, 0.5, 8, (0.0, 1.0), J)
    part = synth_fh(lattice, DB4, 0.5, 8, (0.25, 0.75), J)
    assert np.array_equal(full.restrict(0.25, 0.75).values, part.values)


def test_resynthesis_is_bit_identical_across_workers():
    lattice = CoefficientLattice(7)
    a = synth_fh(lattice, DB4, 0.5, 8, J_grid=12)
    b = synth_fh(CoefficientLattice(7), DB4, 0.5, 8, J_grid=12, workers=4)
    assert np.array_equal(a.values, b.values)
    assert a.provenance.fingerprint() == b.provenance.fingerprint()


def test_synth_points_match_path():
    lattice = CoefficientLattice(8)
    path = synth_fh(lattice, DB4, 0.5, 8, J_grid=12)
    idx = np.array([1000, 5, 2048, 77])
    values = synth_points(lattice, DB4, 0.5, np.ldexp(idx.astype(float), -12), 8, 12)
    assert np.array_equal(values, path.values[idx])
    with pytest.raises(SynthesisError):
        synth_points(lattice, DB4, 0.5, [1.0 / 3.0], 8, 12)


@pytest.mark.parametrize("h", [0.0, 1.0, 1.5])
def test_h_must_lie_in_unit_interval(h):
    with pytest.raises(DomainError):
        synth_fh(SparseLattice.zeros(), DB4, h, 4)


def test_misaligned_window():
    with pytest.raises(SynthesisError):
        synth_fh(SparseLattice.zeros(), DB4, 0.5, 4, (0.1, 0.9), 8)
    with pytest.raises(SynthesisError):
        synth_fh(SparseLattice.zeros(), DB4, 0.5, 10, J_grid=8)


def test_provenance_reports_tail_bound():
    path = synth_fh(CoefficientLattice(1), DB4, 0.5, 8)
    assert path.provenance.tail_bound > synth_fh(CoefficientLattice(1), DB4, 0.5, 10).provenance.tail_bound > 0


def test_brownian_endpoints():
    lattice = CoefficientLattice(9)
    path = synth_brownian(lattice, J_grid=10)
    assert path.values[0] == 0.0
    assert path.values[-1] == pytest.approx(lattice.auxiliary(0))
    bare = synth_brownian(lattice, J_grid=10, include_linear_term=False)
    assert bare.values[-1] == 0.0


def test_brownian_dyadic_values_are_final():
    lattice = CoefficientLattice(10)
    coarse = synth_brownian(lattice, j_max=5, J_grid=12)
    fine = synth_brownian(lattice, j_max=11, J_grid=12)
    step = 1 << (12 - 6)
    assert np.allclose(coarse.values[::step], fine.values[::step], rtol=0, atol=1e-12)


@pytest.mark.slow
def test_brownian_midpoint_variance():
    j = 3
    # displacement of the midpoint of [k 2^-j, (k+1) 2^-j] against the chord
    samples = []
    for seed in range(1250):
        path = synth_brownian(CoefficientLattice(seed), j_max=j + 1, J_grid=j + 1)
        v = path.values
        samples.extend(v[1::2] - 0.5 * (v[:-1:2] + v[2::2]))
    assert np.var(samples) == pytest.approx(2.0 ** (-j - 2), rel=0.1)


def test_constant_hurst_reduces_to_fh():
    lattice = CoefficientLattice(11)
    a = synth_fH(lattice, DB4, HurstFunction.constant(0.5), 8, J_grid=12)
    b = synth_fh(lattice, DB4, 0.5, 8, J_grid=12)
    assert np.array_equal(a.values, b.values)


def test_hurst_parse_and_regularity():
    H = HurstFunction.parse("linear:0.4,0.2")
    assert H(0.5) == pytest.approx(0.5)
    assert H.K_bounds == pytest.approx((0.4, 0.6))
    assert H.check_regularity().passed
    sine = HurstFunction.parse("sine:0.5,0.1")
    assert sine.check_regularity().passed
    assert HurstFunction.parse("constant:0.3").c_H == 0.0


def test_hurst_regularity_check_is_seed_free():
    H = HurstFunction.parse("linear:0.4,0.2")
    a = synth_fH(CoefficientLattice(1), DB4, H, 6)
    b = synth_fH(CoefficientLattice(2), DB4, H, 6)
    assert not np.array_equal(a.values, b.values)
    assert H.check_regularity() == H.check_regularity()


def test_hurst_rejects_bad_input():
    with pytest.raises(SynthesisError):
        HurstFunction.parse("cubic:1")
    with pytest.raises(SynthesisError):
        HurstFunction.parse("linear:0.8,0.4")
    steep = HurstFunction(lambda t: 0.5 + 0.3 * np.sign(np.sin(40.0 * t)), 0.01, (0.2, 0.8), "steps")
    with pytest.raises(SynthesisError):
        synth_fH(SparseLattice.zeros(), DB4, steep, 4)


def test_gap_condition():
    check_block_gaps([3, 8, 16])
    with pytest.raises(SynthesisError):
        check_block_gaps([3, 7])
    with pytest.raises(SynthesisError):
        check_block_gaps([])


def test_block_exponents_increase_below_h():
    alphas = block_exponents(0.5, [3, 8, 16])
    assert alphas == sorted(alphas)
    assert all(a < 0.5 for a in alphas)


def test_prevalence_series():
    lattice = CoefficientLattice(12, "uniform")
    series = synth_prevalence_counterexample(lattice, DB4, 0.5, [3, 8], 10, J_grid=12)
    assert series.coefficients.scales == list(range(3, 11))
    c = series.coefficients.get(9, 17)
    assert c == pytest.approx(2.0 ** (-series.alphas[1] * 9) * lattice.value(9, 17))
    assert series.coefficients.get(9, -1) == 0.0
    zero = synth_prevalence_counterexample(SparseLattice.zeros(), DB4, 0.5, [3, 8], 10, J_grid=12)
    assert np.all(zero.path.values == 0.0)


def _single_row(j, values):
    coeffs = CoefficientArray(outside=0.0)
    coeffs.set_row(j, 0, np.asarray(values, dtype=float))
    return coeffs


def test_baire_small_branch():
    j, h = 9, 0.5
    out = baire_perturb(_single_row(j, np.zeros(4)), h, J0=4)
    assert np.allclose(out.rows[j].values, 2.0 ** (-baire_alpha(h, j) * j))


def test_baire_truncation_branch():
    j, h = 9, 0.5
    unit = 2.0 ** (-baire_alpha(h, j) * j)
    out = baire_perturb(_single_row(j, [3.7 * unit, -3.7 * unit]), h, J0=4)
    assert out.rows[j].values == pytest.approx([3 * unit, -3 * unit])


def test_baire_keeps_coarse_scales_and_is_idempotent():
    lattice = CoefficientLattice(13, "uniform")
    coeffs = series_coefficients(lattice, DB4, 0.5, 10)
    once = baire_perturb(coeffs, 0.5, J0=5)
    twice = baire_perturb(once, 0.5, J0=5)
    for j in range(5):
        assert np.array_equal(once.rows[j].values, coeffs.rows[j].values)
    for j in once.scales:
        assert np.array_equal(once.rows[j].values, twice.rows[j].values)
    assert baire_band_violations(coeffs, once, 0.5, 5) == 0
    with pytest.raises(DomainError):
        baire_perturb(coeffs, 0.5, J0=0)


def test_baire_band_violations_detects_offsets():
    j, h = 9, 0.5
    unit = 2.0 ** (-baire_alpha(h, j) * j)
    original = _single_row(j, [5.0 * unit])
    assert baire_band_violations(original, _single_row(j, [2.5 * unit]), h, 4) == 1
    assert baire_band_violations(original, _single_row(j, [5.0 * unit]), h, 4) == 0
    assert math.isfinite(unit)

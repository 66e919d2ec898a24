import math

import numpy as np
import pytest

from confdim.cantor import (
    GapSequence,
    GapSequenceError,
    build_system,
    closed_form_minkowski,
    gap_density,
    iter_levels,
    minimality_criterion,
    truncated_length,
    uniform_perfectness_constant,
)


def test_gap_sequence_rejects_out_of_range():
    with pytest.raises(GapSequenceError):
        GapSequence(values=(0.2, 1.0))
    with pytest.raises(GapSequenceError):
        GapSequence(values=(-0.1,))


def test_uniform_kind_needs_room_for_children():
    with pytest.raises(GapSequenceError):
        GapSequence.uniform([0.5], [3])  # 2 gaps of 0.5 leave nothing
    gs = GapSequence.uniform([0.1, 0.05], [3, 4])
    assert gs.branching(0) == 3 and gs.branching(1) == 4


def test_middle_thirds_levels_are_exact():
    system = build_system(GapSequence.constant(1 / 3, 3), max_depth=3)
    lv1 = system.level(1)
    assert np.allclose(lv1.intervals(), [(0.0, 1 / 3), (2 / 3, 1.0)])
    lv2 = system.level(2)
    assert lv2.count == 4
    assert lv2.lengths == pytest.approx(np.full(4, 1 / 9))
    assert lv2.lefts[0] == 0.0 and lv2.rights[-1] == pytest.approx(1.0)


def test_iter_levels_matches_build_system():
    gaps = GapSequence.harmonic(8)
    system = build_system(gaps, max_depth=8)
    for streamed, kept in zip(iter_levels(gaps, 8), system.levels):
        assert np.allclose(streamed.lefts, kept.lefts)
        assert np.allclose(streamed.log_lengths, kept.log_lengths)


def test_memory_cap_refuses_deep_builds():
    gaps = GapSequence.constant(0.1, 40)
    with pytest.raises(MemoryError):
        build_system(gaps, max_depth=40, memory_cap=2 ** 20)


def test_harmonic_truncated_length_telescopes():
    # prod_{i=1..n} (1 - 1/(i+1)) = 1/(n+1)
    system = build_system(GapSequence.harmonic(14), max_depth=14)
    for n in range(15):
        expected = 1.0 / (n + 1)
        assert truncated_length(system, n) == pytest.approx(expected, rel=1e-12)


def test_parent_index_links_generations():
    system = build_system(GapSequence.constant(0.2, 5), max_depth=5)
    for n in range(1, 6):
        lv, up = system.level(n), system.level(n - 1)
        for j in range(lv.count):
            p = lv.parent_index[j]
            assert up.lefts[p] - 1e-15 <= lv.lefts[j]
            assert lv.rights[j] <= up.rights[p] + 1e-15


def test_closed_form_minkowski_middle_thirds():
    gaps = GapSequence.constant(1 / 3, 50)
    val = closed_form_minkowski(gaps, 50)
    assert val == pytest.approx(math.log(2) / math.log(3), rel=1e-12)


def test_closed_form_minkowski_harmonic_tends_to_one():
    gaps = GapSequence.harmonic(10000)
    vals = [closed_form_minkowski(gaps, n) for n in (10, 100, 1000, 10000)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert 0.9985 <= vals[-1] <= 0.999


def test_closed_form_minkowski_rejects_uniform_kind():
    gs = GapSequence.uniform([0.1], [3])
    with pytest.raises(ValueError):
        closed_form_minkowski(gs, 1)


def test_minimality_criterion_harmonic():
    rep = minimality_criterion(GapSequence.harmonic(1000), M=1.0, tail_window=1000)
    # geometric mean of i/(i+1), i=1..1000 equals 1001^(-1/1000)
    assert rep.product_limit_estimate == pytest.approx(1001.0 ** (-1e-3), rel=1e-12)
    assert rep.ratio_ok
    assert rep.satisfied_at_finite_scale


def test_minimality_criterion_constant_third_fails():
    rep = minimality_criterion(GapSequence.constant(1 / 3, 200), M=1.0, tail_window=100)
    assert rep.product_limit_estimate == pytest.approx(2 / 3, rel=1e-12)
    assert not rep.satisfied_at_finite_scale


def test_gap_density():
    gaps = GapSequence(values=(0.5, 0.01, 0.02, 0.4))
    assert gap_density(gaps, a=0.1, n=4) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        gap_density(gaps, a=1.5, n=4)


def test_uniform_perfectness_middle_thirds():
    system = build_system(GapSequence.constant(1 / 3, 8), max_depth=8)
    rep = uniform_perfectness_constant(system)
    assert rep.uniformly_perfect_at_depth
    assert 1.0 <= rep.C < 100.0


def test_uniform_perfectness_degrades_with_huge_gaps():
    small = build_system(GapSequence.constant(0.1, 6), max_depth=6)
    large = build_system(GapSequence.constant(0.95, 6), max_depth=6)
    c_small = uniform_perfectness_constant(small).C
    c_large = uniform_perfectness_constant(large).C
    assert c_large > c_small

import numpy as np
import pytest

from fieldtopo.filtering import (
    FilterSpec,
    build_neighborhoods,
    default_radius,
    filter_sensitivities,
    filter_sensitivities_bruteforce,
)
from fieldtopo.sampling import DomainSpec, stratified_batch

BEAM = DomainSpec((0.0, 0.0), (3.0, 1.0))


def batch_with_columns(grid=(20, 20), seed=0, domain=BEAM):
    rng = np.random.default_rng(seed + 1000)
    b = stratified_batch(domain, grid, seed)
    b.density = rng.uniform(0.01, 1.0, b.n)
    b.sensitivity = -rng.uniform(0.0, 2.0, b.n)
    return b


def test_default_radius_is_2_5_cell_diagonals():
    r = default_radius(BEAM, (30, 10))
    assert r == pytest.approx(2.5 * np.hypot(0.1, 0.1))


def test_filter_spec_rejects_nonpositive_radius():
    with pytest.raises(ValueError):
        FilterSpec(0.0)


def test_bucketed_matches_bruteforce():
    dom = DomainSpec((0.0, 0.0), (1.0, 1.0))
    spec = FilterSpec(default_radius(dom, (20, 20)))
    for seed in range(10):
        b = batch_with_columns((20, 20), seed, dom)
        fast = filter_sensitivities(b, spec, dom)
        slow = filter_sensitivities_bruteforce(b, spec)
        assert np.abs(fast - slow).max() < 1e-12


def test_neighborhoods_contain_self_and_are_symmetric():
    dom = DomainSpec((0.0, 0.0), (1.0, 1.0))
    b = batch_with_columns((10, 10), 3, dom)
    radius = default_radius(dom, (10, 10))
    neighbors, offsets = build_neighborhoods(b, radius, dom)
    sets = [set(neighbors[offsets[j]:offsets[j + 1]]) for j in range(b.n)]
    for j in range(b.n):
        assert j in sets[j]
        for k in sets[j]:
            assert j in sets[k]


def test_neighborhoods_exactly_the_radius_ball():
    dom = DomainSpec((0.0, 0.0), (1.0, 1.0))
    b = batch_with_columns((8, 8), 5, dom)
    radius = 0.3
    neighbors, offsets = build_neighborhoods(b, radius, dom)
    d = np.linalg.norm(b.positions[:, None] - b.positions[None, :], axis=-1)
    for j in range(b.n):
        assert set(neighbors[offsets[j]:offsets[j + 1]]) == set(np.nonzero(d[j] < radius)[0])


def test_constant_sensitivity_fixed_point():
    # uniform rho and s: the filter returns s unchanged
    dom = DomainSpec((0.0, 0.0), (1.0, 1.0))
    b = stratified_batch(dom, (15, 15), seed=2)
    b.density = np.full(b.n, 0.5)
    b.sensitivity = np.full(b.n, -1.3)
    spec = FilterSpec(default_radius(dom, (15, 15)))
    out = filter_sensitivities(b, spec, dom)
    assert np.allclose(out, -1.3)


def test_epsilon_floor_guards_small_densities():
    dom = DomainSpec((0.0, 0.0), (1.0, 1.0))
    b = batch_with_columns((10, 10), 7, dom)
    b.density[:] = 0.0  # zero density everywhere
    spec = FilterSpec(default_radius(dom, (10, 10)), epsilon=1e-3)
    out = filter_sensitivities(b, spec, dom)
    assert np.all(np.isfinite(out))
    assert np.allclose(out, 0.0)  # numerator carries rho_k = 0


def test_filter_requires_columns():
    dom = DomainSpec((0.0, 0.0), (1.0, 1.0))
    b = stratified_batch(dom, (5, 5), seed=0)
    with pytest.raises(ValueError):
        filter_sensitivities(b, FilterSpec(0.2), dom)


def test_filter_3d_matches_bruteforce():
    dom = DomainSpec((0.0, 0.0, 0.0), (1.0, 1.0, 0.5))
    rng = np.random.default_rng(11)
    b = stratified_batch(dom, (8, 8, 4), seed=11)
    b.density = rng.uniform(0.01, 1.0, b.n)
    b.sensitivity = -rng.uniform(0.0, 2.0, b.n)
    spec = FilterSpec(default_radius(dom, (8, 8, 4)))
    assert np.abs(filter_sensitivities(b, spec, dom)
                  - filter_sensitivities_bruteforce(b, spec)).max() < 1e-12

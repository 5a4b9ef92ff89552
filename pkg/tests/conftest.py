"""Shared fixtures: the interval-150 reference witness and its pipeline
artifacts are expensive, so they are built once per session."""

import pytest

from banddim.cover import brick_cover
from banddim.cpmaps import BandAlgebra, FactoredMap, PointBijectionHom
from banddim.extract import build_translation_system, decompose_neighbors, threshold_setup
from banddim.fdalg import FiniteDimAlgebra, Summand
from banddim.operators import BandOperator
from banddim.space import generate_space
from banddim.witness import build_upper_witness


@pytest.fixture(scope="session")
def interval150():
    return generate_space("interval", length=150)


@pytest.fixture(scope="session")
def witness150(interval150):
    """The reference witness: interval 150, r = 5, fiber 2, brick side 30,
    propagation-1 test operators."""
    cover = brick_cover(interval150, 5, 30)
    decomp = decompose_neighbors(interval150, 1, fiber_dim=2)
    test_set = [BandOperator.identity(interval150, 2)] + list(decomp.operators)
    return build_upper_witness(interval150, cover, 5, 2, test_set=test_set)


@pytest.fixture(scope="session")
def pts150(witness150):
    td = threshold_setup(witness150)
    return td, build_translation_system(witness150, td)


def random_factored_map(rng, space, fiber=1, slots=None):
    """Random order-zero map h . pi onto partial translations of the space.

    The homomorphism sends slot units to translations between disjoint point
    tuples; h is diagonal, constant along orbit positions (scalar fiber
    blocks), so it commutes with every image.
    """
    n = space.n
    n_slots = slots if slots is not None else int(rng.integers(2, 5))
    orbit_len = int(rng.integers(1, max(2, n // n_slots)))
    needed = n_slots * orbit_len
    pts = rng.permutation(n)[:needed]
    orbits = pts.reshape(n_slots, orbit_len)
    algebra = FiniteDimAlgebra([Summand(0, "rand", n_slots)], fiber)
    band = BandAlgebra(space, fiber)
    hom = PointBijectionHom(algebra, band, [tuple(int(p) for p in row)
                                            for row in orbits])
    h_values = {}
    for t in range(orbit_len):
        val = float(rng.uniform(0.2, 1.0))
        for k in range(n_slots):
            h_values[int(orbits[k][t])] = val
    h = BandOperator.diagonal(space, fiber, h_values)
    return FactoredMap(h, hom)


SMALL_WITNESS_POOL = [
    ("interval", {"length": 10}, 1, 4, 1),
    ("interval", {"length": 12}, 1, 5, 2),
    ("interval", {"length": 14}, 1, 6, 1),
    ("interval", {"length": 16}, 1, 7, 2),
    ("interval", {"length": 18}, 2, 7, 1),
    ("interval", {"length": 20}, 2, 8, 2),
    ("interval", {"length": 15}, 1, 3, 2),
    ("interval", {"length": 9}, 1, 3, 1),
    ("grid", {"sides": [3, 4], "metric": "linf"}, 1, 12, 1),
    ("grid", {"sides": [4, 4], "metric": "linf"}, 1, 12, 2),
    ("grid", {"sides": [4, 5], "metric": "l1"}, 1, 12, 1),
    ("grid", {"sides": [3, 6], "metric": "linf"}, 1, 12, 2),
]


def build_small_witness(index, rng):
    """Deterministic small witness from the pool (|X| <= 20, fiber <= 2)."""
    family, params, r, side, fiber = SMALL_WITNESS_POOL[index % len(SMALL_WITNESS_POOL)]
    space = generate_space(family, **params)
    if family == "interval":
        cover = brick_cover(space, r, side)
    else:
        cover = brick_cover(space, 3 * r, side)
    return build_upper_witness(space, cover, r, fiber)

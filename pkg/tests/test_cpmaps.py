import numpy as np
import pytest

from banddim.cpmaps import (BandAlgebra, CompressionMap, DenseCpMap, FactoredMap,
                            InclusionMap, KrausMap, PointBijectionHom, bump_function,
                            choi_check, cop_check, elem_norm, factorize_order_zero,
                            functional_calculus, order_zero_check, transpose_map)
from banddim.errors import (FactorizationError, InvalidFunctionError,
                            InvalidParameterError, SizeLimitError)
from banddim.fdalg import FdElement, FiniteDimAlgebra, Summand
from banddim.operators import BandOperator
from banddim.space import generate_space

from conftest import random_factored_map


def matrix_algebra(n, fiber=1):
    return FiniteDimAlgebra([Summand(0, "M", n)], fiber)


# -- Choi checks ----------------------------------------------------------

def test_choi_identity_map():
    alg = matrix_algebra(2)
    rep = choi_check(DenseCpMap.from_callable(alg, alg, lambda u: u))
    assert rep.flag and rep.min_eigenvalue >= -1e-12
    assert abs(rep.min_eigenvalue) < 1e-12


def test_choi_transpose_rejected():
    rep = choi_check(transpose_map(2))
    assert not rep.flag
    # eigensolve of the 4x4 Choi matrix of the transpose gives exactly -1
    assert abs(rep.min_eigenvalue + 1.0) < 1e-12


def test_choi_conjugation_maps_pass():
    rng = np.random.default_rng(12)
    alg = matrix_algebra(3)
    for _ in range(5):
        kraus = [rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
                 for _ in range(int(rng.integers(1, 4)))]
        assert choi_check(KrausMap(alg, alg, kraus)).flag


def test_choi_size_limit():
    sp = generate_space("interval", length=40)
    band = BandAlgebra(sp, 1)
    win = tuple(range(40))
    alg = FiniteDimAlgebra([Summand(0, "w", 40)], 1)
    phi = InclusionMap(alg, band, [win])
    with pytest.raises(SizeLimitError):
        choi_check(phi, truncation=40 * 40)
    assert choi_check(phi, truncation=512).flag


# -- order zero -----------------------------------------------------------

def test_order_zero_homomorphism_passes():
    sp = generate_space("interval", length=8)
    hom = PointBijectionHom(matrix_algebra(2), BandAlgebra(sp, 1), [(0, 4), (1, 5)])
    rep = order_zero_check(hom)
    assert rep.flag and rep.worst == 0.0 and rep.mode == "structural"


def test_order_zero_sandwich_fails():
    alg = matrix_algebra(2)
    h = np.diag([1.0, 0.3])
    phi = DenseCpMap.from_callable(alg, alg,
                                   lambda u: FdElement(alg, [h @ u.parts[0] @ h]))
    rep = order_zero_check(phi, trials=80, seed=3)
    assert not rep.flag and rep.worst > 1e-3 and rep.mode == "sampled"


def test_order_zero_single_color_inclusion_structural():
    sp = generate_space("interval", length=10)
    band = BandAlgebra(sp, 1)
    alg = FiniteDimAlgebra([Summand(0, "a", 3), Summand(0, "b", 3)], 1)
    phi = InclusionMap(alg, band, [(0, 1, 2), (5, 6, 7)])
    assert order_zero_check(phi).mode == "structural"
    # orthogonality holds exactly for block-supported positives in distinct blocks
    a = alg.matrix_unit(0, 0, 0)
    b = alg.matrix_unit(1, 1, 1)
    assert (phi.apply(a) @ phi.apply(b)).is_zero


# -- factorization ----------------------------------------------------------

def test_factorize_homomorphism():
    sp = generate_space("interval", length=8)
    hom = PointBijectionHom(matrix_algebra(2), BandAlgebra(sp, 1), [(0, 4), (1, 5)])
    fact = factorize_order_zero(hom)
    h_dense = fact.h.to_dense()
    assert np.allclose(h_dense @ h_dense, h_dense)  # image of the unit is a projection
    a = matrix_algebra(2).matrix_unit(0, 0, 1)
    assert elem_norm(fact.pi(a) - hom.apply(a)) < 1e-12


def test_factorize_scalar_multiple_of_identity():
    alg = matrix_algebra(2)
    for t in (1.0, 0.35):
        phi = DenseCpMap.from_callable(alg, alg, lambda u, t=t: t * u)
        fact = factorize_order_zero(phi)
        assert np.allclose(fact.h.parts[0], t * np.eye(2))
        a = alg.random_hermitian(np.random.default_rng(1))
        assert elem_norm(fact.pi(a) - a) < 1e-10


def test_factorize_recovers_random_factored_maps():
    rng = np.random.default_rng(42)
    sp = generate_space("interval", length=12)
    for _ in range(10):
        phi = random_factored_map(rng, sp)
        fact = factorize_order_zero(phi)
        assert elem_norm(fact.h - phi.apply(phi.domain.identity())) < 1e-12
        for _ in range(3):
            a = phi.domain.random_hermitian(rng)
            assert elem_norm(phi.apply(a) - fact.h @ fact.pi(a)) <= 1e-10
        rebuilt = fact.rebuild()
        a = phi.domain.random_hermitian(rng)
        assert elem_norm(rebuilt.apply(a) - phi.apply(a)) <= 1e-10


def test_factorize_rejects_non_order_zero():
    alg = matrix_algebra(2)
    h = np.diag([1.0, 0.3])
    phi = DenseCpMap.from_callable(alg, alg,
                                   lambda u: FdElement(alg, [h @ u.parts[0] @ h]))
    with pytest.raises(FactorizationError) as err:
        factorize_order_zero(phi)
    assert err.value.identity is not None


# -- functional calculus ------------------------------------------------------

def test_functional_calculus_identity_function():
    rng = np.random.default_rng(5)
    sp = generate_space("interval", length=10)
    phi = random_factored_map(rng, sp)
    f_phi = functional_calculus(lambda t: t, phi)
    a = phi.domain.random_hermitian(rng)
    assert elem_norm(f_phi.apply(a) - phi.apply(a)) < 1e-10


def test_functional_calculus_square_spectral_mapping():
    alg = matrix_algebra(2)
    sp = generate_space("interval", length=4)
    hom = PointBijectionHom(alg, BandAlgebra(sp, 1), [(0,), (1,)])
    h = BandOperator.diagonal(sp, 1, {0: 1.0, 1: 0.5})
    phi = FactoredMap(h, hom)
    f_phi = functional_calculus(lambda t: t ** 2, phi)
    out = f_phi.apply(alg.identity())
    assert abs(out.block(0, 0)[0, 0] - 1.0) < 1e-12
    assert abs(out.block(1, 1)[0, 0] - 0.25) < 1e-12


def test_functional_calculus_f_delta_stays_order_zero():
    rng = np.random.default_rng(6)
    sp = generate_space("interval", length=12)
    phi = random_factored_map(rng, sp)
    f = bump_function("f_delta", delta=0.1)
    rep = order_zero_check(functional_calculus(f, phi), trials=40, seed=1)
    assert rep.flag


def test_functional_calculus_requires_vanishing_at_zero():
    rng = np.random.default_rng(7)
    phi = random_factored_map(rng, generate_space("interval", length=8))
    with pytest.raises(InvalidFunctionError):
        functional_calculus(lambda t: t + 1.0, phi)


def test_contractive_functions_give_contractive_images():
    rng = np.random.default_rng(8)
    phi = random_factored_map(rng, generate_space("interval", length=10))
    g = bump_function("g_delta", delta=0.3)
    image = functional_calculus(g, phi).apply(phi.domain.identity())
    assert elem_norm(image) <= 1.0 + 1e-12


# -- bump functions ---------------------------------------------------------

def test_f_delta_values():
    delta = 0.11
    f = bump_function("f_delta", delta=delta)
    assert f(delta) == 0.0
    assert abs(f(2 * delta) - 2 * delta) < 1e-15
    assert f(1.0) == 1.0
    assert f(0.0) == 0.0


def test_g_delta_values():
    delta = 0.11
    g = bump_function("g_delta", delta=delta)
    assert g(delta / 2) == 0.0
    assert abs(g(delta) - 1.0) < 1e-15
    assert g(1.0) == 1.0


def test_zeta_reciprocal():
    z = bump_function("zeta", d=1, eps=0.4)
    zp = bump_function("zeta_prime", d=1, eps=0.4)
    ts = np.linspace(0.0, 1.0, 10_001)
    assert np.abs(z(ts) * zp(ts) - 1.0).max() < 1e-12


def test_f_absorbs_g_pointwise():
    delta = 0.07
    f = bump_function("f_delta", delta=delta)
    g = bump_function("g_delta", delta=delta)
    ts = np.linspace(0.0, 1.0, 10_001)
    assert np.abs(f(ts) * g(ts) - f(ts)).max() < 1e-12


def test_bump_delta_range():
    with pytest.raises(InvalidParameterError):
        bump_function("f_delta", delta=0.5)
    with pytest.raises(InvalidParameterError):
        bump_function("g_delta", delta=0.0)
    with pytest.raises(InvalidParameterError):
        bump_function("zeta", d=1, eps=0.0)


# -- commutation property ------------------------------------------------------

def test_cop_disjoint_projections_pass():
    rng = np.random.default_rng(9)
    sp = generate_space("interval", length=14)
    phi = random_factored_map(rng, sp, fiber=2)
    fact = factorize_order_zero(phi)
    rep = cop_check(fact, tol=1e-9)
    assert rep.flag and rep.worst == 0.0


class _FiberwiseConjugationHom:
    """M_2 with half-size fiber onto constant diagonal blocks v (.) v*.

    v glues two copies of the half fiber into the full fiber, so the images
    of the two diagonal slot units are complementary non-full projections at
    every point: they share their support and fail to commute with the
    diagonal."""

    def __init__(self, space, half):
        self.space = space
        self.half = half
        self.domain = FiniteDimAlgebra([Summand(0, "M", 2)], half)
        self.codomain = BandAlgebra(space, 2 * half)

    def apply(self, elem):
        mat = elem.parts[0]  # (2*half) x (2*half), exactly the glued fiber block
        return BandOperator(self.space, 2 * self.half,
                            {(x, x): mat.copy() for x in range(self.space.n)})

    def order_zero_certificate(self):
        return None


def test_cop_counterexample_fails():
    sp = generate_space("interval", length=5)
    pi = _FiberwiseConjugationHom(sp, half=2)
    fact = factorize_order_zero(pi, trials=4)
    rep = cop_check(fact, tol=1e-9)
    assert not rep.flag and rep.worst > 0.1
    # the two diagonal slot images are supported on the same set
    p_img = fact.pi(pi.domain.slot_projection(0, 0))
    q_img = fact.pi(pi.domain.slot_projection(0, 1))
    assert set(p_img.blocks) == set(q_img.blocks)


def test_cop_automatic_for_abelian_fiber():
    rng = np.random.default_rng(10)
    for _ in range(10):
        sp = generate_space("interval", length=int(rng.integers(8, 15)))
        phi = random_factored_map(rng, sp, fiber=1)
        fact = factorize_order_zero(phi)
        assert cop_check(fact, tol=1e-9).flag


def test_cop_invariant_under_domain_fiber_conjugation():
    rng = np.random.default_rng(11)
    sp = generate_space("interval", length=12)
    phi = random_factored_map(rng, sp, fiber=2, slots=2)
    g = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    u, _ = np.linalg.qr(g)

    class _Conjugated:
        domain = phi.domain
        codomain = phi.codomain

        def apply(self, elem):
            n = phi.domain.summands[0].size
            big = np.kron(np.eye(n), u)
            return phi.apply(FdElement(phi.domain,
                                       [big @ elem.parts[0] @ big.conj().T]))

        def order_zero_certificate(self):
            return None

    f1 = factorize_order_zero(phi)
    f2 = factorize_order_zero(_Conjugated())
    assert cop_check(f1).flag == cop_check(f2).flag


# -- compression maps ------------------------------------------------------

def test_compression_map_choi_small_instance():
    sp = generate_space("interval", length=6)
    band = BandAlgebra(sp, 1)
    alg = FiniteDimAlgebra([Summand(0, "w", 3), Summand(1, "v", 3)], 1)
    h = BandOperator.diagonal(sp, 1, {x: 0.7 for x in range(6)})
    psi = CompressionMap(band, alg, [(0, 1, 2), (3, 4, 5)], [h, h])
    rep = choi_check(psi)
    assert rep.flag


# -- JSON interface -----------------------------------------------------------

def test_cpmap_json_round_trip_structural(tmp_path):
    from banddim.cpmaps import load_cpmap, save_cpmap

    sp = generate_space("interval", length=8)
    band = BandAlgebra(sp, 2)
    alg = FiniteDimAlgebra([Summand(0, (0, 0), 3), Summand(1, (1, 0), 3)], 2)
    h = BandOperator.diagonal(sp, 2, {x: 0.5 + 0.05 * x for x in range(8)})
    psi = CompressionMap(band, alg, [(0, 1, 2), (4, 5, 6)], [h, h])
    save_cpmap(psi, tmp_path / "psi.json")
    back = load_cpmap(tmp_path / "psi.json", sp)
    rng = np.random.default_rng(0)
    T = band.random_hermitian(rng)
    diff = psi.apply(T) - back.apply(T)
    assert diff.norm() < 1e-12

    phi = InclusionMap(alg, band, [(0, 1, 2), (4, 5, 6)])
    save_cpmap(phi, tmp_path / "phi.json")
    back_phi = load_cpmap(tmp_path / "phi.json", sp)
    e = alg.random_hermitian(rng)
    assert elem_norm(phi.apply(e) - back_phi.apply(e)) < 1e-12


def test_cpmap_json_round_trip_dense(tmp_path):
    from banddim.cpmaps import load_cpmap, save_cpmap

    t = transpose_map(2)
    save_cpmap(t, tmp_path / "t.json")
    back = load_cpmap(tmp_path / "t.json")
    rep = choi_check(back)
    assert not rep.flag and abs(rep.min_eigenvalue + 1.0) < 1e-12


def test_maps_preserve_adjoints():
    rng = np.random.default_rng(31)
    sp = generate_space("interval", length=8)
    band = BandAlgebra(sp, 2)
    alg = FiniteDimAlgebra([Summand(0, "w", 3), Summand(1, "v", 3)], 2)
    h = BandOperator.diagonal(sp, 2, {x: 0.9 - 0.05 * x for x in range(8)})
    psi = CompressionMap(band, alg, [(0, 1, 2), (4, 5, 6)], [h, h])
    phi = InclusionMap(alg, band, [(0, 1, 2), (4, 5, 6)])
    g = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    T = BandOperator.from_dense(sp, 2, g)
    assert (psi.apply(T.adjoint()) - psi.apply(T).adjoint()).norm() < 1e-10
    e = alg.random_hermitian(rng) @ alg.random_hermitian(rng)
    from banddim.operators import operator_norm
    assert operator_norm(phi.apply(e.adjoint()) - phi.apply(e).adjoint()) < 1e-10


def test_unit_image_identities_with_nontrivial_h():
    """Adjoint symmetry and absorption of the f/g images hold for order-zero
    maps whose positive part has spectrum across both breakpoint regions,
    not only for projections."""
    from banddim.cpmaps import f_delta, g_delta, PointBijectionHom
    delta = 1.0 / 128.0
    sp = generate_space("interval", length=12)
    band = BandAlgebra(sp, 1)
    alg = matrix_algebra(3)
    orbits = [(0, 6), (1, 7), (2, 8)]
    hom = PointBijectionHom(alg, band, orbits)
    # one orbit position below delta (killed), one between delta and 2*delta
    vals = {0: delta / 2, 1: delta / 2, 2: delta / 2,
            6: 1.5 * delta, 7: 1.5 * delta, 8: 1.5 * delta}
    phi = FactoredMap(BandOperator.diagonal(sp, 1, vals), hom)
    fact = factorize_order_zero(phi)
    f_map = functional_calculus(f_delta(delta), fact)
    g_map = functional_calculus(g_delta(delta), fact)
    f_img = {(k, l): f_map.apply(alg.matrix_unit(0, k, l))
             for k in range(3) for l in range(3)}
    g_img = {(k, l): g_map.apply(alg.matrix_unit(0, k, l))
             for k in range(3) for l in range(3)}
    for k in range(3):
        for l in range(3):
            assert elem_norm(f_img[(k, l)].adjoint() - f_img[(l, k)]) <= 1e-12
            assert elem_norm(g_img[(k, l)].adjoint() - g_img[(l, k)]) <= 1e-12
            for m in range(3):
                assert elem_norm(f_img[(k, l)] @ g_img[(l, m)]
                                 - f_img[(k, m)]) <= 1e-12
    # the sub-delta orbit position is annihilated, the middle one survives
    assert all(abs(x) >= 6 for (x, y) in f_img[(0, 0)].blocks)
    assert f_img[(0, 0)].block(6, 6)[0, 0] > 0

"""Completely positive maps between band algebras and finite-dimensional
algebras with fibers.

Maps built by this package carry their structure (compression windows,
inclusion windows, coefficient operators), which yields exact certificates:
a compression or inclusion map is completely positive by construction, and an
inclusion with pairwise disjoint windows is exactly order zero.  Dense maps on
coordinates are supported for small algebras so that falsifiers (transpose
map, sampled positivity checks) run against the same interfaces.

Order-zero maps factor as a positive element times a supporting homomorphism;
the factorization here is the exact finite-dimensional surrogate
``pi(a) = pinv(h) . phi(a)`` on the support of ``h = phi(1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (FactorizationError, IncompatibilityError, InvalidFunctionError,
                     InvalidParameterError, SizeLimitError)
from .fdalg import FdElement, FiniteDimAlgebra, Summand
from .operators import BandOperator, operator_norm


class BandAlgebra:
    """Descriptor of the band-operator algebra over a space and fiber."""

    def __init__(self, space, fiber_dim):
        self.space = space
        self.fiber_dim = int(fiber_dim)

    @property
    def matrix_dim(self):
        return self.space.n * self.fiber_dim

    @property
    def coord_dim(self):
        return self.matrix_dim ** 2

    def identity(self):
        return BandOperator.identity(self.space, self.fiber_dim)

    def zero(self):
        return BandOperator.zero(self.space, self.fiber_dim)

    def random_hermitian(self, rng, scale=1.0):
        d = self.matrix_dim
        g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        return BandOperator.from_dense(self.space, self.fiber_dim,
                                       scale * (g + g.conj().T) / 2.0)

    def unit(self, i, j):
        m = self.fiber_dim
        blk = np.zeros((m, m), dtype=complex)
        blk[i % m, j % m] = 1.0
        return BandOperator(self.space, m, {(i // m, j // m): blk})

    def __repr__(self):
        return f"BandAlgebra(n={self.space.n}, m={self.fiber_dim})"


def elem_norm(x):
    if isinstance(x, BandOperator):
        return operator_norm(x)
    return x.norm()


def elem_funcalc(x, f):
    if isinstance(x, BandOperator):
        return hermitian_funcalc(x, f)
    return x.funcalc(f)


def hermitian_funcalc(op, f):
    """Scalar functional calculus of a Hermitian band operator.

    Propagation-zero operators are handled blockwise; anything else goes
    through a dense eigendecomposition.
    """
    if all(x == y for (x, y) in op.blocks):
        blocks = {}
        for (x, _), b in op.blocks.items():
            w, v = np.linalg.eigh(b)
            blocks[(x, x)] = (v * np.asarray(f(w))) @ v.conj().T
        out = dict(blocks)
        # Points with no stored block carry the value f(0).
        f0 = complex(np.asarray(f(np.array([0.0])))[0])
        if abs(f0) > 0.0:
            eye = f0 * np.eye(op.fiber_dim)
            for x in range(op.space.n):
                if (x, x) not in out:
                    out[(x, x)] = eye.copy()
        return BandOperator(op.space, op.fiber_dim, out)
    dense = op.to_dense()
    w, v = np.linalg.eigh(dense)
    mat = (v * np.asarray(f(w))) @ v.conj().T
    return BandOperator.from_dense(op.space, op.fiber_dim, mat, tol=1e-14)


# ---------------------------------------------------------------------------
# Map classes
# ---------------------------------------------------------------------------

class CpMap:
    """Base class: a linear, adjoint-preserving, completely positive map."""

    domain = None
    codomain = None

    def apply(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.apply(x)

    def order_zero_certificate(self):
        """Structural evidence that the map is order zero, or None."""
        return None


class CompressionMap(CpMap):
    """Band operators to a finite-dimensional algebra, one window per summand.

    The summand image is the compression of ``c T c`` to the window's points,
    where ``c`` is that window's diagonal coefficient operator (identity when
    None).  Each summand action is a single-Kraus conjugation, so the map is
    completely positive by construction.
    """

    def __init__(self, band, algebra, windows, coefficients=None):
        if len(windows) != len(algebra.summands):
            raise InvalidParameterError("one window per summand required")
        for w, s in zip(windows, algebra.summands):
            if len(w) != s.size:
                raise InvalidParameterError("window size must match summand size")
        self.domain = band
        self.codomain = algebra
        self.windows = [tuple(w) for w in windows]
        self.coefficients = coefficients or [None] * len(windows)
        self._slots = [{p: a for a, p in enumerate(w)} for w in self.windows]

    def apply(self, op):
        m = self.domain.fiber_dim
        parts = [np.zeros((d, d), dtype=complex) for d in self.codomain.block_dims]
        for k, (window, slots) in enumerate(zip(self.windows, self._slots)):
            coeff = self.coefficients[k]
            part = parts[k]
            for (x, y), b in op.blocks.items():
                a = slots.get(x)
                c = slots.get(y)
                if a is None or c is None:
                    continue
                blk = b
                if coeff is not None:
                    blk = coeff.block(x, x) @ blk @ coeff.block(y, y).conj().T
                part[a * m:(a + 1) * m, c * m:(c + 1) * m] += blk
        return FdElement(self.codomain, parts)


class InclusionMap(CpMap):
    """Finite-dimensional algebra into band operators, summand by summand.

    The k-th summand is written back onto its window's point pairs and the
    summand images are summed.  Restricting to the summands of one color whose
    windows are pairwise disjoint gives an exactly order-zero map (in fact a
    homomorphism onto a block subalgebra).
    """

    def __init__(self, algebra, band, windows):
        if len(windows) != len(algebra.summands):
            raise InvalidParameterError("one window per summand required")
        for w, s in zip(windows, algebra.summands):
            if len(w) != s.size:
                raise InvalidParameterError("window size must match summand size")
        self.domain = algebra
        self.codomain = band
        self.windows = [tuple(w) for w in windows]
        self._coords = None

    def window_coords(self):
        if self._coords is None:
            m = self.codomain.fiber_dim
            self._coords = [np.array([p * m + a for p in w for a in range(m)])
                            for w in self.windows]
        return self._coords

    def apply_dense(self, elem):
        """Image as a dense matrix (vectorized scatter, for dense elements)."""
        out = np.zeros((self.codomain.matrix_dim,) * 2, dtype=complex)
        for coords, part in zip(self.window_coords(), elem.parts):
            out[np.ix_(coords, coords)] += part
        return out

    def apply(self, elem):
        m = self.domain.fiber_dim
        blocks = {}
        for k, window in enumerate(self.windows):
            part = elem.parts[k]
            s = len(window)
            view = np.abs(part.reshape(s, m, s, m)).max(axis=(1, 3))
            for a, c in np.argwhere(view > 0.0):
                key = (window[a], window[c])
                blk = part[a * m:(a + 1) * m, c * m:(c + 1) * m]
                blocks[key] = blocks.get(key, 0) + blk
        return BandOperator(self.codomain.space, self.codomain.fiber_dim, blocks)

    def order_zero_certificate(self):
        if len({s.color for s in self.domain.summands}) != 1:
            return None
        return ("disjoint-windows", self.windows)

    def restrict_to_color(self, color):
        keep = self.domain.color_indices(color)
        algebra = FiniteDimAlgebra([self.domain.summands[k] for k in keep],
                                   self.domain.fiber_dim)
        return InclusionMap(algebra, self.codomain, [self.windows[k] for k in keep])

    def image_of_unit(self, k, a, b, fiber=None):
        """Image of a single slot matrix unit (tensor fiber block): exactly
        one block of the band operator, by the definition of the map."""
        m = self.codomain.fiber_dim
        blk = np.eye(m, dtype=complex) if fiber is None else np.asarray(fiber, complex)
        window = self.windows[k]
        return BandOperator(self.codomain.space, m, {(window[a], window[b]): blk})

    def corner_map(self, k, kept_slots):
        """Restriction to the corner of summand k given by the kept slots."""
        s = self.domain.summands[k]
        corner = FiniteDimAlgebra(
            [Summand(s.color, ("corner", s.label), len(kept_slots))],
            self.domain.fiber_dim)
        window = tuple(self.windows[k][a] for a in kept_slots)
        return InclusionMap(corner, self.codomain, [window])


class DenseCpMap(CpMap):
    """Explicit matrix action on coordinates, for small algebras."""

    def __init__(self, domain, codomain, matrix):
        self.domain = domain
        self.codomain = codomain
        self.matrix = np.asarray(matrix, dtype=complex)
        if self.matrix.shape != (coord_dim(codomain), coord_dim(domain)):
            raise InvalidParameterError("coordinate matrix has wrong shape")

    def apply(self, x):
        return unpack_coords(self.codomain, self.matrix @ pack_coords(self.domain, x))

    @classmethod
    def from_callable(cls, domain, codomain, fn):
        cols = []
        for u in basis_elements(domain):
            cols.append(pack_coords(codomain, fn(u)))
        return cls(domain, codomain, np.stack(cols, axis=1))


def transpose_map(n):
    """The transpose map on M_n: the canonical completely-bounded non-cp map."""
    alg = FiniteDimAlgebra([Summand(0, "M", n)], 1)
    return DenseCpMap.from_callable(alg, alg,
                                    lambda u: FdElement(alg, [u.parts[0].T.copy()]))


class KrausMap(CpMap):
    """x -> sum_t V_t x V_t* between single-corner algebras (dense form)."""

    def __init__(self, domain, codomain, kraus):
        self.domain = domain
        self.codomain = codomain
        self.kraus = [np.asarray(V, dtype=complex) for V in kraus]

    def apply(self, x):
        mat = to_dense(x)
        out = sum(V @ mat @ V.conj().T for V in self.kraus)
        return from_dense(self.codomain, out)


class SandwichedMap(CpMap):
    """scale * post . inner(pre . x . pre) . post, with positive pre/post."""

    def __init__(self, inner, pre=None, post=None, scale=1.0):
        self.inner = inner
        self.pre = pre
        self.post = post
        self.scale = float(scale)
        self.domain = inner.domain
        self.codomain = inner.codomain

    def apply(self, x):
        if self.pre is not None:
            x = self.pre @ x @ self.pre
        y = self.inner.apply(x)
        if self.post is not None:
            y = self.post @ y @ self.post
        return self.scale * y if self.scale != 1.0 else y


class ScaledMap(CpMap):
    def __init__(self, inner, scale):
        self.inner = inner
        self.scale = float(scale)
        self.domain = inner.domain
        self.codomain = inner.codomain

    def apply(self, x):
        return self.scale * self.inner.apply(x)


class PointBijectionHom(CpMap):
    """Homomorphism of M_n (with fiber) onto partial translations.

    ``orbits`` is an n x T matrix of pairwise distinct point indices; the
    slot unit e_{k,l} tensor a fiber block b is sent to the operator carrying
    b at (orbits[k][t], orbits[l][t]) for every t.
    """

    def __init__(self, algebra, band, orbits):
        if len(algebra.summands) != 1:
            raise InvalidParameterError("single-summand domain required")
        self.domain = algebra
        self.codomain = band
        self.orbits = [tuple(row) for row in orbits]
        flat = [p for row in self.orbits for p in row]
        if len(set(flat)) != len(flat):
            raise InvalidParameterError("orbit points must be pairwise distinct")

    def apply(self, elem):
        n = self.domain.summands[0].size
        m = self.domain.fiber_dim
        blocks = {}
        part = elem.parts[0]
        for k in range(n):
            for l in range(n):
                blk = part[k * m:(k + 1) * m, l * m:(l + 1) * m]
                if not blk.any():
                    continue
                for t in range(len(self.orbits[0])):
                    key = (self.orbits[k][t], self.orbits[l][t])
                    blocks[key] = blocks.get(key, 0) + blk
        return BandOperator(self.codomain.space, self.codomain.fiber_dim, blocks)

    def order_zero_certificate(self):
        return ("point-bijection-hom", self.orbits)


class FactoredMap(CpMap):
    """Order-zero map assembled as ``h . pi`` for a commuting positive h."""

    def __init__(self, h, pi_map):
        self.h = h
        self.pi_map = pi_map
        self.domain = pi_map.domain
        self.codomain = pi_map.codomain

    def apply(self, x):
        return self.h @ self.pi_map.apply(x)

    def order_zero_certificate(self):
        inner = self.pi_map.order_zero_certificate()
        return None if inner is None else ("factored", inner)


class FunctionalCalculusMap(CpMap):
    """Image f(phi) of an order-zero map: a -> f(h) . pi(a)."""

    def __init__(self, factorization, f, f_of_h):
        self.factorization = factorization
        self.f = f
        self.f_of_h = f_of_h
        self.domain = factorization.domain
        self.codomain = factorization.codomain

    def apply(self, x):
        return self.f_of_h @ self.factorization.pi(x)

    def order_zero_certificate(self):
        return ("functional-calculus", self.factorization.source_certificate)


# ---------------------------------------------------------------------------
# Coordinate helpers (small algebras only)
# ---------------------------------------------------------------------------

def coord_dim(algebra):
    return algebra.coord_dim


def to_dense(x):
    if isinstance(x, BandOperator):
        return x.to_dense()
    if len(x.parts) != 1:
        raise InvalidParameterError("dense form needs a single-summand element")
    return x.parts[0]


def from_dense(algebra, mat):
    if isinstance(algebra, BandAlgebra):
        return BandOperator.from_dense(algebra.space, algebra.fiber_dim, mat, tol=1e-14)
    if len(algebra.summands) != 1:
        raise InvalidParameterError("dense form needs a single-summand algebra")
    return FdElement(algebra, [mat])


def pack_coords(algebra, x):
    if isinstance(x, BandOperator):
        return x.to_dense().reshape(-1)
    return np.concatenate([p.reshape(-1) for p in x.parts])


def unpack_coords(algebra, vec):
    if isinstance(algebra, BandAlgebra):
        d = algebra.matrix_dim
        return BandOperator.from_dense(algebra.space, algebra.fiber_dim,
                                       vec.reshape(d, d), tol=0.0)
    parts = []
    pos = 0
    for d in algebra.block_dims:
        parts.append(vec[pos:pos + d * d].reshape(d, d))
        pos += d * d
    return FdElement(algebra, parts)


def _corners(algebra):
    """(matrix dim, unit factory) per matrix corner of the algebra."""
    if isinstance(algebra, BandAlgebra):
        return [(algebra.matrix_dim, algebra.unit)]
    out = []
    m = algebra.fiber_dim

    def factory(k):
        def unit(i, j):
            parts = [np.zeros((d, d), dtype=complex) for d in algebra.block_dims]
            parts[k][i, j] = 1.0
            return FdElement(algebra, parts)
        return unit

    for k, s in enumerate(algebra.summands):
        out.append((s.size * m, factory(k)))
    return out


def basis_elements(algebra):
    for dim, unit in _corners(algebra):
        for i in range(dim):
            for j in range(dim):
                yield unit(i, j)


# ---------------------------------------------------------------------------
# Choi certification
# ---------------------------------------------------------------------------

CHOI_COORD_CAP = 512
CHOI_ASSEMBLY_CAP = 4096


def _active_dense(images):
    """Dense matrices of the images restricted to their joint active coords."""
    if isinstance(images[0], BandOperator):
        m = images[0].fiber_dim
        pts = set()
        for im in images:
            for (x, y) in im.blocks:
                pts.update((x, y))
        coords = [p * m + a for p in sorted(pts) for a in range(m)]
        if not coords:
            coords = [0]
        sel = np.array(coords)
        return [im.to_dense()[np.ix_(sel, sel)] for im in images]
    offsets = []
    pos = 0
    for d in images[0].algebra.block_dims:
        offsets.append(pos)
        pos += d
    active = set()
    for im in images:
        for k, p in enumerate(im.parts):
            rows = np.argwhere(np.abs(p).max(axis=1) > 0.0).reshape(-1)
            cols = np.argwhere(np.abs(p).max(axis=0) > 0.0).reshape(-1)
            active.update(offsets[k] + r for r in rows)
            active.update(offsets[k] + c for c in cols)
    coords = sorted(active) if active else [0]
    full = []
    for im in images:
        mat = np.zeros((pos, pos), dtype=complex)
        for k, p in enumerate(im.parts):
            d = p.shape[0]
            mat[offsets[k]:offsets[k] + d, offsets[k]:offsets[k] + d] = p
        sel = np.array(coords)
        full.append(mat[np.ix_(sel, sel)])
    return full


@dataclass
class ChoiReport:
    min_eigenvalue: float
    flag: bool
    truncated_dims: list
    hermiticity_defect: float

    def __bool__(self):
        return self.flag


def choi_check(phi, truncation=CHOI_COORD_CAP, psd_tol=1e-10):
    """Certify complete positivity by the Choi matrix of the coordinate action.

    The Choi matrix of each matrix corner of the domain is assembled from the
    images of its matrix units (unnormalized, so the transpose map on M_2
    scores exactly -1).  When the domain exceeds the coordinate budget, each
    corner is truncated to a leading corner subalgebra and the codomain is
    compressed to the coordinates the images touch; both reductions preserve
    complete positivity, so a PSD failure on the truncation refutes the map.
    """
    eff = min(coord_dim(phi.domain), truncation)
    if eff > CHOI_COORD_CAP:
        raise SizeLimitError(
            f"domain truncation of coordinate dimension {eff} exceeds the "
            f"{CHOI_COORD_CAP} cap")
    budget = eff
    min_eig = math.inf
    herm_defect = 0.0
    dims = []
    for dim, unit in _corners(phi.domain):
        n = min(dim, int(math.isqrt(budget)))
        if n < 1:
            break
        images = [[phi.apply(unit(i, j)) for j in range(n)] for i in range(n)]
        flat = [im for row in images for im in row]
        dense = _active_dense(flat)
        nc = dense[0].shape[0]
        while n > 1 and n * nc > CHOI_ASSEMBLY_CAP:
            n -= 1
            flat = [images[i][j] for i in range(n) for j in range(n)]
            dense = _active_dense(flat)
            nc = dense[0].shape[0]
        choi = np.zeros((n * nc, n * nc), dtype=complex)
        for i in range(n):
            for j in range(n):
                choi[i * nc:(i + 1) * nc, j * nc:(j + 1) * nc] = dense[i * n + j]
        herm_defect = max(herm_defect, float(np.abs(choi - choi.conj().T).max()))
        choi = (choi + choi.conj().T) / 2.0
        vals = np.linalg.eigvalsh(choi)
        min_eig = min(min_eig, float(vals[0]))
        dims.append(n)
        budget -= n * n
        if budget < 1:
            break
    if min_eig is math.inf:
        min_eig = 0.0
    return ChoiReport(min_eig, min_eig >= -psd_tol, dims, herm_defect)


# ---------------------------------------------------------------------------
# Order-zero structure
# ---------------------------------------------------------------------------

@dataclass
class OrderZeroReport:
    flag: bool
    worst: float
    mode: str
    trials: int = 0

    def __bool__(self):
        return self.flag


def _windows_disjoint(windows):
    seen = set()
    for w in windows:
        ws = set(w)
        if seen & ws:
            return False
        seen |= ws
    return True


def _split_positives(x, rng):
    """A pair of orthogonal positives carved from a random Hermitian."""
    if isinstance(x, BandOperator):
        vals = np.linalg.eigvalsh(x.to_dense())
    else:
        vals = np.concatenate([np.linalg.eigvalsh(p) for p in x.parts])
    lo, hi = float(vals.min()), float(vals.max())
    if hi <= lo:
        return None
    cut = rng.uniform(lo, hi)
    a = elem_funcalc(x, lambda t: np.maximum(t - cut, 0.0))
    b = elem_funcalc(x, lambda t: np.maximum(cut - t, 0.0))
    na, nb = elem_norm(a), elem_norm(b)
    if na < 1e-9 or nb < 1e-9:
        return None
    return (1.0 / na) * a, (1.0 / nb) * b


def _structural_order_zero(phi):
    """True when the map carries a verified structural order-zero certificate."""
    cert = phi.order_zero_certificate()
    while cert is not None and cert[0] in ("factored", "functional-calculus",
                                           "supported-homomorphism"):
        cert = cert[1]
    if cert is None:
        return False
    kind = cert[0]
    if kind == "disjoint-windows":
        return _windows_disjoint(cert[1])
    return kind == "point-bijection-hom"


def order_zero_check(phi, trials=200, seed=0, tol=1e-9):
    """Certify or falsify orthogonality preservation.

    Maps built with disjoint structural windows pass exactly; everything else
    is sampled on pairs of positives with disjoint spectral supports.  The
    sampling mode is a falsifier, not a prover, and is labeled as such.
    """
    if _structural_order_zero(phi):
        return OrderZeroReport(True, 0.0, "structural")
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    for _ in range(trials):
        pair = _split_positives(phi.domain.random_hermitian(rng), rng)
        if pair is None:
            continue
        a, b = pair
        worst = max(worst, elem_norm(phi.apply(a) @ phi.apply(b)))
        done += 1
    return OrderZeroReport(worst <= tol, worst, "sampled", done)


class OrderZeroFactorization:
    """h = phi(1) together with the supporting homomorphism.

    ``pi(a)`` is evaluated lazily as ``pinv(h) . phi(a)``; eigenvalues of h
    at or below 1e-12 of the largest are treated as kernel.
    """

    PINV_REL_CUTOFF = 1e-12

    def __init__(self, phi, h, pinv, support):
        self.source = phi
        self.h = h
        self.pinv = pinv
        self.support = support
        self.domain = phi.domain
        self.codomain = phi.codomain
        self.source_certificate = phi.order_zero_certificate()

    def pi(self, a):
        return self.pinv @ self.source.apply(a)

    def rebuild(self):
        """The map a -> h . pi(a); equals the source for order-zero inputs."""
        return FactoredMap(self.h, _PiWrapper(self))


class _PiWrapper(CpMap):
    def __init__(self, fact):
        self.fact = fact
        self.domain = fact.domain
        self.codomain = fact.codomain

    def apply(self, x):
        return self.fact.pi(x)

    def order_zero_certificate(self):
        cert = self.fact.source_certificate
        return None if cert is None else ("supported-homomorphism", cert)


def factorize_order_zero(phi, tol=1e-10, validate=True, trials=8, seed=0):
    """Split an order-zero map into its positive part and supporting
    homomorphism, raising when a factorization identity fails.

    Maps with a verified structural certificate are validated on the unit
    alone; everything else is validated on seeded random Hermitian samples.
    """
    if validate and _structural_order_zero(phi):
        trials = 0
    h = phi.apply(phi.domain.identity())

    def pinv_fn(t):
        cut = OrderZeroFactorization.PINV_REL_CUTOFF * max(float(np.max(t)), 0.0)
        return np.where(t > cut, 1.0 / np.maximum(t, 1e-300), 0.0)

    def supp_fn(t):
        cut = OrderZeroFactorization.PINV_REL_CUTOFF * max(float(np.max(t)), 0.0)
        return (t > cut).astype(float)

    pinv = elem_funcalc(h, pinv_fn)
    support = elem_funcalc(h, supp_fn)
    fact = OrderZeroFactorization(phi, h, pinv, support)
    if validate:
        _validate_factorization(fact, tol, trials, seed)
    return fact


def _validate_factorization(fact, tol, trials, seed):
    rng = np.random.default_rng(seed)
    scale = max(1.0, elem_norm(fact.h))
    samples = [fact.domain.identity()]
    for _ in range(trials):
        samples.append(fact.domain.random_hermitian(rng))
    pis = [fact.pi(a) for a in samples]
    for a, pa in zip(samples, pis):
        na = max(1.0, elem_norm(a))
        dev = elem_norm(fact.source.apply(a) - fact.h @ pa) / (scale * na)
        if dev > tol:
            raise FactorizationError(
                "factorization identity phi(a) = h.pi(a) fails",
                identity="phi=h.pi", deviation=dev)
        dev = elem_norm(fact.h @ pa - pa @ fact.h) / (scale * na)
        if dev > tol:
            raise FactorizationError(
                "h does not commute with pi(a)", identity="[h,pi]=0", deviation=dev)
    s = fact.support
    for i in range(min(3, len(samples))):
        for j in range(min(3, len(samples))):
            a, b = samples[i], samples[j]
            nn = max(1.0, elem_norm(a) * elem_norm(b))
            lhs = s @ fact.pi(a @ b) @ s
            rhs = (s @ fact.pi(a) @ s) @ (s @ fact.pi(b) @ s)
            dev = elem_norm(lhs - rhs) / nn
            if dev > tol:
                raise FactorizationError(
                    "pi is not multiplicative on the support of h",
                    identity="pi(ab)=pi(a)pi(b)", deviation=dev)


def functional_calculus(f, phi, tol=1e-10):
    """Order-zero functional calculus f(phi): a -> f(h) . pi(a).

    ``f`` must be continuous on [0, 1] with f(0) = 0; when additionally
    sup|f| <= 1 the result is contractive.
    """
    f0 = float(np.asarray(f(np.array([0.0])))[0])
    if abs(f0) > 1e-14:
        raise InvalidFunctionError("functional calculus requires f(0) = 0")
    fact = phi if isinstance(phi, OrderZeroFactorization) else \
        factorize_order_zero(phi, tol=tol)
    f_of_h = elem_funcalc(fact.h, f)
    return FunctionalCalculusMap(fact, f, f_of_h)


# ---------------------------------------------------------------------------
# Bump functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BumpFunction:
    """Evaluable scalar function with exact breakpoint metadata."""

    kind: str
    params: tuple
    breakpoints: tuple

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "f_delta":
            (delta,) = self.params
            return np.where(t <= delta, 0.0,
                            np.where(t <= 2 * delta, 2.0 * (t - delta), t))
        if self.kind == "g_delta":
            (delta,) = self.params
            return np.where(t <= delta / 2, 0.0,
                            np.where(t <= delta, (t - delta / 2) * (2.0 / delta), 1.0))
        if self.kind == "zeta":
            d, eps = self.params
            bp = eps ** 2 / (81.0 * 2.0 * (d + 1))
            return np.where(t <= bp, eps / (9.0 * math.sqrt(2.0 * (d + 1))),
                            np.sqrt(np.maximum(t, bp)))
        if self.kind == "zeta_prime":
            d, eps = self.params
            zeta = BumpFunction("zeta", self.params, self.breakpoints)
            return 1.0 / zeta(t)
        raise InvalidParameterError(f"unknown bump kind {self.kind!r}")


def bump_function(kind, *, delta=None, d=None, eps=None):
    """Piecewise scalar functions used throughout the pipeline.

    ``f_delta`` vanishes on [0, delta], rises linearly on [delta, 2 delta],
    and is the identity after; ``g_delta`` vanishes on [0, delta/2], rises to
    1 on [delta/2, delta], and is 1 after (so f.g = f pointwise).  ``zeta``
    is the square root flattened to a positive constant near zero, and
    ``zeta_prime`` its exact reciprocal.
    """
    if kind in ("f_delta", "g_delta"):
        if delta is None or not 0 < delta < 0.5:
            raise InvalidParameterError("delta must lie in (0, 1/2)")
        delta = float(delta)
        bps = (delta, 2 * delta) if kind == "f_delta" else (delta / 2, delta)
        return BumpFunction(kind, (delta,), bps)
    if kind in ("zeta", "zeta_prime"):
        if eps is None or eps <= 0 or d is None or d < 0:
            raise InvalidParameterError("zeta requires eps > 0 and d >= 0")
        bp = float(eps) ** 2 / (81.0 * 2.0 * (d + 1))
        return BumpFunction(kind, (int(d), float(eps)), (bp,))
    raise InvalidParameterError(f"unknown bump kind {kind!r}")


def f_delta(delta):
    return bump_function("f_delta", delta=delta)


def g_delta(delta):
    return bump_function("g_delta", delta=delta)


# ---------------------------------------------------------------------------
# JSON interface
# ---------------------------------------------------------------------------

def save_cpmap(phi, path):
    """Serialize a map: structural compress-conjugate-sum form for
    compression and inclusion maps (windows plus inline coefficient
    operators), dense coordinate form for dense maps between
    finite-dimensional algebras."""
    import json

    from .operators import _block_to_json
    from .space import _id_to_json

    def summand_doc(s):
        return {"color": s.color,
                "label": list(s.label) if isinstance(s.label, tuple) else s.label,
                "size": s.size}

    if isinstance(phi, (CompressionMap, InclusionMap)):
        direction = "compress" if isinstance(phi, CompressionMap) else "include"
        algebra = phi.codomain if direction == "compress" else phi.domain
        band = phi.domain if direction == "compress" else phi.codomain
        terms = []
        coefficients = getattr(phi, "coefficients", [None] * len(phi.windows))
        for k, window in enumerate(phi.windows):
            c = coefficients[k]
            coeff_doc = None
            if c is not None:
                coeff_doc = [
                    {"x": _id_to_json(band.space.points[x]),
                     "block": _block_to_json(b)}
                    for (x, _), b in sorted(c.blocks.items())]
            terms.append({"window": [_id_to_json(band.space.points[p])
                                     for p in window],
                          "summand": summand_doc(algebra.summands[k]),
                          "coefficient": coeff_doc})
        doc = {"kind": "compress-conjugate-sum", "direction": direction,
               "fiber": band.fiber_dim, "terms": terms}
    elif isinstance(phi, DenseCpMap):
        if isinstance(phi.domain, BandAlgebra) or isinstance(phi.codomain, BandAlgebra):
            raise InvalidParameterError(
                "dense serialization supports finite-dimensional algebras only")
        doc = {"kind": "dense",
               "domain": {"fiber": phi.domain.fiber_dim,
                          "summands": [summand_doc(s) for s in phi.domain.summands]},
               "codomain": {"fiber": phi.codomain.fiber_dim,
                            "summands": [summand_doc(s) for s in phi.codomain.summands]},
               "matrix": [[[float(v.real), float(v.imag)] for v in row]
                          for row in phi.matrix]}
    else:
        raise InvalidParameterError(f"cannot serialize map of type {type(phi).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_cpmap(path, space=None):
    """Load a map saved by :func:`save_cpmap`; structural forms need the
    space they act on."""
    import json

    from .operators import _block_from_json
    from .space import _id_from_json

    def summand_from(doc):
        label = tuple(doc["label"]) if isinstance(doc["label"], list) else doc["label"]
        return Summand(doc["color"], label, doc["size"])

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc["kind"] == "compress-conjugate-sum":
        if space is None:
            raise InvalidParameterError("structural maps need the space to load")
        m = doc["fiber"]
        band = BandAlgebra(space, m)
        windows, summands, coefficients = [], [], []
        for term in doc["terms"]:
            windows.append(tuple(space.index(_id_from_json(p))
                                 for p in term["window"]))
            summands.append(summand_from(term["summand"]))
            if term["coefficient"] is None:
                coefficients.append(None)
            else:
                blocks = {}
                for rec in term["coefficient"]:
                    x = space.index(_id_from_json(rec["x"]))
                    blocks[(x, x)] = _block_from_json(rec["block"])
                coefficients.append(BandOperator(space, m, blocks))
        algebra = FiniteDimAlgebra(summands, m)
        if doc["direction"] == "compress":
            return CompressionMap(band, algebra, windows, coefficients)
        return InclusionMap(algebra, band, windows)
    if doc["kind"] == "dense":
        domain = FiniteDimAlgebra([summand_from(s) for s in doc["domain"]["summands"]],
                                  doc["domain"]["fiber"])
        codomain = FiniteDimAlgebra([summand_from(s)
                                     for s in doc["codomain"]["summands"]],
                                    doc["codomain"]["fiber"])
        matrix = np.array([[complex(re, im) for re, im in row]
                           for row in doc["matrix"]])
        return DenseCpMap(domain, codomain, matrix)
    raise InvalidParameterError(f"unknown map kind {doc['kind']!r}")


# ---------------------------------------------------------------------------
# Commutation property
# ---------------------------------------------------------------------------

@dataclass
class CopReport:
    flag: bool
    worst: float
    checked: int

    def __bool__(self):
        return self.flag


def _scalar_diagonal(op, tol=0.0):
    for (x, y), b in op.blocks.items():
        if x != y:
            return False
        if not np.allclose(b, b[0, 0] * np.eye(op.fiber_dim), atol=tol):
            return False
    return True


def cop_check(fact, diagonal=None, tol=1e-9):
    """Check that supporting-homomorphism images of minimal diagonal
    projections (with full fiber units) commute with the band diagonal.

    The diagonal is the canonical propagation-zero subalgebra of the
    codomain; commutators are evaluated against its single-point,
    single-fiber-unit generators.  Truncated fibers are unital, so the
    approximate-unit limit in the defining property is evaluated exactly at
    the unit.
    """
    if not isinstance(fact.domain, FiniteDimAlgebra):
        raise InvalidParameterError("cop_check requires a finite-dimensional domain")
    if not isinstance(fact.codomain, BandAlgebra):
        raise InvalidParameterError("cop_check requires a band-algebra codomain")
    if diagonal is not None and diagonal is not fact.codomain:
        if getattr(diagonal, "space", None) is not fact.codomain.space:
            raise IncompatibilityError("diagonal descriptor does not match codomain")
    m = fact.codomain.fiber_dim
    worst = 0.0
    checked = 0
    for k, s in enumerate(fact.domain.summands):
        for a in range(s.size):
            c = fact.pi(fact.domain.slot_projection(k, a))
            checked += 1
            if _scalar_diagonal(c):
                continue
            pts = set()
            for (x, y) in c.blocks:
                pts.update((x, y))
            for y in sorted(pts):
                for alpha in range(m):
                    for beta in range(m):
                        blk = np.zeros((m, m), dtype=complex)
                        blk[alpha, beta] = 1.0
                        gen = BandOperator(fact.codomain.space, m, {(y, y): blk})
                        comm = c @ gen - gen @ c
                        if not comm.is_zero:
                            worst = max(worst, operator_norm(comm))
    return CopReport(worst <= tol, worst, checked)

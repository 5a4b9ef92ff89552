"""Cover extraction from witnesses.

The pipeline runs in four stages.  ``decompose_neighbors`` splits the
r-neighbor relation into partial bijections and their translation operators.
``threshold_setup`` fixes the constants delta = 1/(2^7 (d+1)^2),
eta = 1/(2^3 (d+1)), eps = delta^3/4, thresholds psi(1) spectrally at delta,
and promotes the surviving diagonal slots to full fiber units, which cuts the
witness algebra down to matrix corners over the fiber.
``build_translation_system`` pushes the generalized matrix units of each
corner through the f_delta / g_delta functional calculus of the corner's
order-zero map, reads off the sets U_k where the diagonal images carry more
than eta^2 of a point, and extracts the partial bijections sigma_bar between
them from singleton supports of conjugated operators.  ``extract_cover``
closes each color's U-set under r-chains; the classes form the extracted
colored cover and their sizes are compared against the corner sizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .cover import make_cover, verify_cover
from .cpmaps import bump_function, factorize_order_zero, hermitian_funcalc
from .errors import (AmbiguousSupportError, CoverGapError, DiagonalViolationError,
                     InvalidParameterError, InvalidWitnessError)
from .operators import BandOperator, operator_norm
from .space import ulf_profile


# ---------------------------------------------------------------------------
# Edge decomposition
# ---------------------------------------------------------------------------

@dataclass
class EdgeDecomposition:
    """Partition of the r-neighbor pairs into partial bijections."""

    scale_r: float
    pairs: list
    parts: list
    operators: list
    max_ball: int

    @property
    def M(self):
        return len(self.parts)


def decompose_neighbors(space, r, fiber_dim=1):
    """Greedy deterministic split of {(x, y) : dist <= r} into parts whose
    first and second coordinates are each pairwise distinct.

    Pairs are processed in lexicographic order and placed into the first
    compatible part; with N the maximal ball cardinality at radius r this
    needs at most 2N - 1 parts.
    """
    if float(r) < 0:
        raise InvalidParameterError("scale r must be nonnegative")
    pairs = [(x, y) for x in range(space.n) for y in range(space.n)
             if space.within(x, y, r)]
    parts, firsts, seconds = [], [], []
    for (x, y) in pairs:
        for t in range(len(parts)):
            if x not in firsts[t] and y not in seconds[t]:
                parts[t].append((x, y))
                firsts[t].add(x)
                seconds[t].add(y)
                break
        else:
            parts.append([(x, y)])
            firsts.append({x})
            seconds.append({y})
    max_ball = ulf_profile(space, [r])[r]
    if len(parts) > 2 * max_ball - 1:
        raise InvalidWitnessError(
            f"edge decomposition produced {len(parts)} parts, above the "
            f"2N-1 = {2 * max_ball - 1} bound")
    ops = [BandOperator.partial_translation(space, fiber_dim, part)
           for part in parts]
    return EdgeDecomposition(float(r), pairs, parts, ops, max_ball)


# ---------------------------------------------------------------------------
# Thresholding
# ---------------------------------------------------------------------------

THRESHOLD_EIG_MARGIN = 1e-9


@dataclass
class CornerData:
    color: int
    j: int
    summand_index: int
    kept_slots: tuple

    @property
    def s(self):
        return len(self.kept_slots)


@dataclass
class ThresholdData:
    d: int
    delta: Fraction
    eta: Fraction
    eps: Fraction
    qhat: object
    q: object
    corners: list

    @property
    def s_max(self):
        return max((c.s for c in self.corners), default=0)

    def corners_of_color(self, color):
        return [c for c in self.corners if c.color == color]


def threshold_constants(d):
    delta = Fraction(1, 2 ** 7 * (d + 1) ** 2)
    eta = Fraction(1, 2 ** 3 * (d + 1))
    return delta, eta, delta ** 3 / 4


def threshold_setup(witness, tol=1e-9):
    """Spectral thresholding of psi(1) and the corner bookkeeping.

    ``qhat`` keeps, slot by slot, the eigenspaces of psi(1) strictly above
    delta (eigenvalues within 1e-9 of delta are excluded, matching the
    half-open spectral interval); ``q`` promotes every surviving slot to a
    full fiber unit.  Corners enumerate, per color, the summands with
    surviving slots.
    """
    d = witness.d
    delta, eta, eps = threshold_constants(d)
    psi1 = witness.psi.apply(witness.band.identity())
    good, mass = psi1.is_canonical_diagonal(tol)
    if not good:
        raise DiagonalViolationError(
            f"psi(1) is not in the canonical diagonal (off-diagonal mass {mass:.3e})")

    algebra = witness.algebra
    m = algebra.fiber_dim
    cut = float(delta) + THRESHOLD_EIG_MARGIN
    qhat_parts, q_parts = [], []
    kept = []
    for k, s in enumerate(algebra.summands):
        dim = s.size * m
        qhat_p = np.zeros((dim, dim), dtype=complex)
        q_p = np.zeros((dim, dim), dtype=complex)
        kept_slots = []
        for a in range(s.size):
            blk = psi1.fiber_block(k, a, a)
            blk = (blk + blk.conj().T) / 2.0
            w, v = np.linalg.eigh(blk)
            sel = w > cut
            if np.any(sel):
                proj = (v[:, sel]) @ (v[:, sel].conj().T)
                qhat_p[a * m:(a + 1) * m, a * m:(a + 1) * m] = proj
                q_p[a * m:(a + 1) * m, a * m:(a + 1) * m] = np.eye(m)
                kept_slots.append(a)
        qhat_parts.append(qhat_p)
        q_parts.append(q_p)
        kept.append(tuple(kept_slots))

    corners = []
    for color in algebra.colors():
        j = 0
        for k in algebra.color_indices(color):
            if kept[k]:
                corners.append(CornerData(color, j, k, kept[k]))
                j += 1
    return ThresholdData(d, delta, eta, eps,
                         algebra.element(qhat_parts), algebra.element(q_parts),
                         corners)


# ---------------------------------------------------------------------------
# Partial translation system
# ---------------------------------------------------------------------------

SUPPORT_RESIDUAL_TOL = 1e-6


@dataclass
class CornerSystem:
    corner: CornerData
    phi_map: object
    factorization: object
    f_img: dict
    g_img: dict
    U: dict


@dataclass
class PartialTranslationSystem:
    corners: list
    sigma_bar: dict  # (corner index, k, l) -> {x: y}
    delta: float
    eta: float
    borderline: list = field(default_factory=list)

    def corner_index(self, color, j):
        for ci, cs in enumerate(self.corners):
            if cs.corner.color == color and cs.corner.j == j:
                return ci
        raise KeyError((color, j))


def _point_compression_norm(op, x):
    """||T 1_x T|| computed from the column and row of T at x."""
    col = [b for (u, y), b in op.blocks.items() if y == x]
    row = [b for (u, y), b in op.blocks.items() if u == x]
    if not col or not row:
        return 0.0
    B = np.vstack(col)
    C = np.hstack(row)
    return float(np.linalg.norm(B @ C, 2))


def _column_compression(op, x):
    """The operator T 1_x T as a band operator."""
    left = op.compress(range(op.space.n), [x])
    right = op.compress([x], range(op.space.n))
    return left @ right


def build_translation_system(witness, td, verify=True, tol=1e-8):
    """Functional-calculus images of the generalized matrix units and the
    partial bijections they induce.

    For each corner, the f_delta and g_delta images of all matrix units are
    computed through the corner's order-zero factorization.  U_k collects the
    points where the k-th diagonal image compresses to norm strictly above
    eta^2 (values within 1e-9 of eta^2 are flagged as borderline).  For
    x in U_k the conjugate g_{l,k} (f_{k,k} 1_x f_{k,k}) g_{k,l} must be
    supported in a single point, which defines sigma_bar_{k,l}(x); residual
    mass above 1e-6 of the total raises an error naming the indices.
    """
    delta = float(td.delta)
    eta = float(td.eta)
    f_fun = bump_function("f_delta", delta=delta)
    g_fun = bump_function("g_delta", delta=delta)

    corners = []
    for corner in td.corners:
        phi_ij = witness.phi.corner_map(corner.summand_index, corner.kept_slots)
        fact = factorize_order_zero(phi_ij, trials=2)
        f_of_h = hermitian_funcalc(fact.h, f_fun)
        g_of_h = hermitian_funcalc(fact.h, g_fun)
        dom = phi_ij.domain
        s = corner.s
        f_img, g_img = {}, {}
        for k in range(s):
            for l in range(s):
                pi_kl = fact.pi(dom.matrix_unit(0, k, l))
                f_img[(k, l)] = f_of_h @ pi_kl
                g_img[(k, l)] = g_of_h @ pi_kl
        corners.append(CornerSystem(corner, phi_ij, fact, f_img, g_img, {}))

    borderline = []
    eta_sq = eta * eta
    for ci, cs in enumerate(corners):
        for k in range(cs.corner.s):
            fkk = cs.f_img[(k, k)]
            pts = sorted({x for (x, y) in fkk.blocks} | {y for (x, y) in fkk.blocks})
            members = []
            for x in pts:
                val = _point_compression_norm(fkk, x)
                if abs(val - eta_sq) <= 1e-9:
                    borderline.append((ci, k, x, val))
                if val > eta_sq:
                    members.append(x)
            cs.U[k] = tuple(members)

    sigma_bar = {}
    for ci, cs in enumerate(corners):
        s = cs.corner.s
        for k in range(s):
            for l in range(s):
                mapping = {}
                for x in cs.U[k]:
                    inner = _column_compression(cs.f_img[(k, k)], x)
                    xi = cs.g_img[(l, k)] @ inner @ cs.g_img[(k, l)]
                    masses = {}
                    total = 0.0
                    best_y, best = None, -1.0
                    for (u, v), b in xi.blocks.items():
                        w = float(np.linalg.norm(b))
                        total += w
                        if u == v:
                            masses[u] = masses.get(u, 0.0) + w
                    for y, w in masses.items():
                        if w > best:
                            best_y, best = y, w
                    if best_y is None or total <= 0.0 or \
                            (total - best) > SUPPORT_RESIDUAL_TOL * total:
                        raise AmbiguousSupportError(
                            "conjugated operator is not supported in a single point",
                            indices=(cs.corner.color, cs.corner.j, k, l, x))
                    mapping[x] = best_y
                sigma_bar[(ci, k, l)] = mapping

    pts = PartialTranslationSystem(corners, sigma_bar, delta, eta, borderline)
    if verify:
        _verify_translation_system(pts, tol)
    return pts


def _verify_translation_system(pts, tol):
    for ci, cs in enumerate(pts.corners):
        s = cs.corner.s
        u_sets = {k: set(cs.U[k]) for k in range(s)}
        for k in range(s):
            for x, y in pts.sigma_bar[(ci, k, k)].items():
                if y != x:
                    raise InvalidWitnessError(
                        f"sigma_bar[{ci},{k},{k}] moves {x} to {y}")
        for k in range(s):
            for l in range(s):
                fwd = pts.sigma_bar[(ci, k, l)]
                back = pts.sigma_bar[(ci, l, k)]
                values = list(fwd.values())
                if len(set(values)) != len(values):
                    raise InvalidWitnessError(
                        f"sigma_bar[{ci},{k},{l}] is not injective")
                for x, y in fwd.items():
                    if y not in u_sets[l]:
                        raise InvalidWitnessError(
                            f"sigma_bar[{ci},{k},{l}]({x}) = {y} lands outside U_{l}")
                    if back.get(y) != x:
                        raise InvalidWitnessError(
                            f"sigma_bar round trip fails at corner {ci}, "
                            f"({k},{l}), point {x}")
    rep = matrix_unit_identities(pts, tol)
    if not rep.flag:
        raise InvalidWitnessError(
            f"matrix-unit identity {rep.worst_identity} deviates by {rep.worst:.3e}")


# ---------------------------------------------------------------------------
# Matrix-unit identities
# ---------------------------------------------------------------------------

@dataclass
class IdentityReport:
    deviations: dict
    tol: float

    @property
    def worst(self):
        return max(self.deviations.values()) if self.deviations else 0.0

    @property
    def worst_identity(self):
        if not self.deviations:
            return ""
        return max(self.deviations, key=self.deviations.get)

    @property
    def flag(self):
        return self.worst <= self.tol

    def __bool__(self):
        return self.flag

    def to_json(self):
        return {"deviations": self.deviations, "tol": self.tol,
                "worst": self.worst, "flag": self.flag}


def _diag_positive_deviation(op, tol):
    """Distance from being a positive propagation-zero operator."""
    dev = 0.0
    for (x, y), b in op.blocks.items():
        if x != y:
            dev = max(dev, float(np.linalg.norm(b, 2)))
        else:
            h = (b + b.conj().T) / 2.0
            dev = max(dev, float(np.abs(b - h).max()))
            w = np.linalg.eigvalsh(h)
            dev = max(dev, max(0.0, -float(w[0])))
    return dev


def matrix_unit_identities(pts, tol=1e-8):
    """Evaluate the five matrix-unit-image identities on every index tuple:
    diagonal images are positive diagonal operators, adjoints swap indices,
    and f-images absorb g-images under composition."""
    devs = {"diag_positive_f": 0.0, "diag_positive_g": 0.0,
            "adjoint_f": 0.0, "adjoint_g": 0.0, "absorb": 0.0}
    for cs in pts.corners:
        s = cs.corner.s
        for k in range(s):
            devs["diag_positive_f"] = max(devs["diag_positive_f"],
                                          _diag_positive_deviation(cs.f_img[(k, k)], tol))
            devs["diag_positive_g"] = max(devs["diag_positive_g"],
                                          _diag_positive_deviation(cs.g_img[(k, k)], tol))
        for k in range(s):
            for l in range(s):
                diff = cs.f_img[(k, l)].adjoint() - cs.f_img[(l, k)]
                if not diff.is_zero:
                    devs["adjoint_f"] = max(devs["adjoint_f"], operator_norm(diff))
                diff = cs.g_img[(k, l)].adjoint() - cs.g_img[(l, k)]
                if not diff.is_zero:
                    devs["adjoint_g"] = max(devs["adjoint_g"], operator_norm(diff))
        for k in range(s):
            for l in range(s):
                for mm in range(s):
                    lhs = cs.f_img[(k, l)] @ cs.g_img[(l, mm)] - cs.f_img[(k, mm)]
                    if not lhs.is_zero:
                        devs["absorb"] = max(devs["absorb"], operator_norm(lhs))
                    rhs = cs.g_img[(k, l)] @ cs.f_img[(l, mm)] - cs.f_img[(k, mm)]
                    if not rhs.is_zero:
                        devs["absorb"] = max(devs["absorb"], operator_norm(rhs))
    return IdentityReport(devs, tol)


# ---------------------------------------------------------------------------
# Cover extraction
# ---------------------------------------------------------------------------

class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


@dataclass
class ExtractedCover:
    cover: object
    cover_report: object
    class_sizes: list
    S: int
    s_max: int
    bound_ok: bool
    coverage_violations: list

    @property
    def passed(self):
        return (self.cover_report.passed and self.bound_ok
                and not self.coverage_violations)

    def to_json(self, space=None):
        doc = {"S": self.S, "s_max": self.s_max,
               "class_sizes": self.class_sizes,
               "bound_ok": self.bound_ok,
               "cover_report": self.cover_report.to_json(),
               "coverage_violations": self.coverage_violations}
        if space is not None:
            from .space import _id_to_json
            doc["r"] = float(self.cover.scale_r)
            doc["families"] = [
                [sorted(_id_to_json(space.points[i]) for i in s) for s in fam]
                for fam in self.cover.families]
        return doc


def extract_cover(pts, space, r):
    """Equivalence classes of r-chains inside the U-sets, one color at a time.

    Every point must lie in some U-set; a gap means the witness approximated
    the identity too poorly at this scale and raises a cover-gap error.  The
    classes are emitted as the color families of a cover that is then run
    through the cover checker at scale r, and the largest class size S is
    compared against the largest corner size.
    """
    colors = sorted({cs.corner.color for cs in pts.corners})
    per_color = {}
    for color in colors:
        pool = set()
        for cs in pts.corners:
            if cs.corner.color == color:
                for k in range(cs.corner.s):
                    pool.update(cs.U[k])
        per_color[color] = sorted(pool)

    covered = set()
    for pool in per_color.values():
        covered.update(pool)

    # Coverage guarantee: a point whose summed diagonal f-image column
    # carries norm above 3/4 must lie in some U-set; record violations of
    # the implication before raising on uncovered points.
    col_index = {}
    for color in colors:
        total = None
        for cs in pts.corners:
            if cs.corner.color != color:
                continue
            for k in range(cs.corner.s):
                op = cs.f_img[(k, k)]
                total = op if total is None else total + op
        cols = {}
        if total is not None:
            for (u, x), b in total.blocks.items():
                cols.setdefault(x, []).append(b)
        col_index[color] = cols
    coverage_violations = []
    for x in range(space.n):
        mass = 0.0
        for color in colors:
            blocks = col_index[color].get(x)
            if blocks:
                mass += float(np.linalg.norm(np.vstack(blocks), 2))
        if mass > 0.75 and x not in covered:
            coverage_violations.append(space.points[x])

    for x in range(space.n):
        if x not in covered:
            raise CoverGapError(
                f"point {space.points[x]!r} lies in no U-set; the witness error "
                "is too large for this scale", point=space.points[x])

    families = []
    class_sizes = []
    for color in colors:
        pool = per_color[color]
        uf = _UnionFind(pool)
        for ii, x in enumerate(pool):
            for y in pool[ii + 1:]:
                if space.within(x, y, r):
                    uf.union(x, y)
        classes = {}
        for x in pool:
            classes.setdefault(uf.find(x), set()).add(x)
        fam = [frozenset(c) for c in classes.values()]
        fam.sort(key=lambda c: sorted(c))
        families.append(fam)
        class_sizes.append(sorted(len(c) for c in fam))

    cover = make_cover(space, families, r)
    report = verify_cover(cover, space, r)
    S = max((max(sz) for sz in class_sizes if sz), default=0)
    s_max = max((cs.corner.s for cs in pts.corners), default=0)
    return ExtractedCover(cover, report, class_sizes, S, s_max,
                          S <= s_max, coverage_violations)

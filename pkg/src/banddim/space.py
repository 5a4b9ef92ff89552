"""Finite metric spaces with exact distance bookkeeping.

A :class:`FiniteMetricSpace` is an ordered list of point ids together with a
full symmetric distance matrix.  Spaces generated from integer boxes keep an
integer distance matrix plus a rational spacing, so every comparison against a
scale ``r`` is exact; spaces loaded from JSON fall back to doubles with a
1e-12 comparison tolerance.  All other modules reference points by their index
into ``points``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InvalidParameterError

FLOAT_TOL = 1e-12


@dataclass(frozen=True)
class GridMeta:
    """Construction parameters of a generated integer box."""

    family: str
    sides: tuple
    metric: str
    spacing: Fraction


class FiniteMetricSpace:
    """Point set with an exact nonnegative symmetric distance matrix.

    Instances are immutable after construction and safe to share across
    threads.
    """

    def __init__(self, points, dist, *, dist_int=None, spacing=None, grid_meta=None,
                 validate=True):
        self.points = list(points)
        self._index = {p: i for i, p in enumerate(self.points)}
        if len(self._index) != len(self.points):
            raise InvalidParameterError("duplicate point ids")
        self.dist = np.asarray(dist, dtype=float)
        self.dist_int = None if dist_int is None else np.asarray(dist_int)
        self.spacing = None if spacing is None else Fraction(spacing)
        self.grid_meta = grid_meta
        if validate:
            self._validate_axioms()

    # -- basic queries -------------------------------------------------

    @property
    def n(self):
        return len(self.points)

    @property
    def exact(self):
        return self.dist_int is not None

    def index(self, point):
        return self._index[point]

    def within(self, i, j, radius):
        """Exact (or 1e-12-tolerant) test of dist(i, j) <= radius."""
        if self.exact:
            return Fraction(int(self.dist_int[i, j])) * self.spacing <= Fraction(radius)
        return self.dist[i, j] <= float(radius) + FLOAT_TOL

    def dist_to_set(self, subset):
        """Vector of distances from every point to the subset (inf if empty)."""
        idx = list(subset)
        if not idx:
            return np.full(self.n, np.inf)
        return self.dist[:, idx].min(axis=1)

    def set_within(self, i, subset, radius):
        """Exact test of dist(i, subset) <= radius (False for empty subset)."""
        return any(self.within(i, j, radius) for j in subset)

    def diameter(self, subset=None):
        idx = list(subset) if subset is not None else range(self.n)
        if len(idx) < 2:
            return 0.0
        sub = self.dist[np.ix_(idx, idx)]
        return float(sub.max())

    def set_gap(self, a, b):
        """Minimum distance between two nonempty point sets."""
        ia, ib = list(a), list(b)
        return float(self.dist[np.ix_(ia, ib)].min())

    # -- validation ----------------------------------------------------

    def _validate_axioms(self):
        d = self.dist
        if d.shape != (self.n, self.n):
            raise InvalidParameterError("distance matrix shape mismatch")
        if np.any(d < 0):
            raise InvalidParameterError("negative distance")
        if not np.allclose(d, d.T, atol=FLOAT_TOL, rtol=0.0):
            raise InvalidParameterError("distance matrix not symmetric")
        if np.any(np.abs(np.diag(d)) > FLOAT_TOL):
            raise InvalidParameterError("nonzero diagonal distance")
        off = d + np.diag(np.full(self.n, np.inf))
        if self.n > 1 and off.min() <= FLOAT_TOL:
            raise InvalidParameterError("zero distance between distinct points")
        # Triangle inequality, checked one intermediate point at a time to
        # keep memory at O(n^2).
        for k in range(self.n):
            if np.any(d > d[:, k:k + 1] + d[k:k + 1, :] + FLOAT_TOL):
                raise InvalidParameterError(
                    f"triangle inequality fails through point {self.points[k]!r}")

    def __repr__(self):
        kind = self.grid_meta.family if self.grid_meta else "loaded"
        return f"FiniteMetricSpace({kind}, n={self.n})"


def _coordinate_distance(p, q, metric):
    diffs = [abs(a - b) for a, b in zip(p, q)]
    if metric == "l1":
        return sum(diffs)
    if metric == "linf":
        return max(diffs)
    raise InvalidParameterError(f"unknown metric {metric!r}")


def generate_space(family, *, length=None, sides=None, metric="linf", spacing=1):
    """Generate an integer interval or box with an exact metric.

    ``interval`` takes ``length`` and yields points ``0..length-1`` with
    distance ``spacing * |i - j|``.  ``grid`` takes ``sides`` (one entry per
    dimension) and the ``l1`` or ``linf`` metric on integer coordinates,
    scaled by ``spacing``.
    """
    spacing = Fraction(spacing)
    if spacing <= 0:
        raise InvalidParameterError("spacing must be positive")
    if family == "interval":
        if length is None:
            raise InvalidParameterError("interval requires a length")
        if int(length) != length or length < 1:
            raise InvalidParameterError("interval length must be a positive integer")
        n = int(length)
        points = list(range(n))
        idx = np.arange(n)
        dist_int = np.abs(idx[:, None] - idx[None, :])
        meta = GridMeta("interval", (n,), "linf", spacing)
    elif family == "grid":
        if not sides:
            raise InvalidParameterError("grid requires side lengths")
        sides = tuple(int(s) for s in sides)
        if any(s < 1 for s in sides):
            raise InvalidParameterError("all grid sides must be >= 1")
        if metric not in ("l1", "linf"):
            raise InvalidParameterError(f"unknown metric {metric!r}")
        points = [tuple(p) for p in itertools.product(*(range(s) for s in sides))]
        n = len(points)
        coords = np.array(points, dtype=np.int64)
        if metric == "l1":
            dist_int = np.abs(coords[:, None, :] - coords[None, :, :]).sum(axis=2)
        else:
            dist_int = np.abs(coords[:, None, :] - coords[None, :, :]).max(axis=2)
        meta = GridMeta("grid", sides, metric, spacing)
    else:
        raise InvalidParameterError(f"unknown space family {family!r}")
    dist = dist_int.astype(float) * float(spacing)
    return FiniteMetricSpace(points, dist, dist_int=dist_int, spacing=spacing,
                             grid_meta=meta, validate=False)


@dataclass(frozen=True)
class UlfProfile:
    """Maximum ball cardinality N(r) at each requested radius."""

    entries: dict

    def __getitem__(self, radius):
        return self.entries[radius]


def ulf_profile(space, radii):
    """Profile r -> max_x |{y : dist(x, y) <= r}| over the given radii."""
    entries = {}
    for r in radii:
        if float(r) < 0:
            raise InvalidParameterError("radii must be nonnegative")
        best = 0
        for i in range(space.n):
            count = sum(1 for j in range(space.n) if space.within(i, j, r))
            best = max(best, count)
        entries[r] = best
    return UlfProfile(entries)


def enlarge(space, subset, r):
    """Metric enlargement {x : dist(x, subset) <= r}; empty subset gives {}."""
    if float(r) < 0:
        raise InvalidParameterError("enlargement radius must be nonnegative")
    subset = list(subset)
    if not subset:
        return frozenset()
    out = set()
    for i in range(space.n):
        if space.set_within(i, subset, r):
            out.add(i)
    return frozenset(out)


# -- JSON interface ----------------------------------------------------

def _id_to_json(p):
    return [_id_to_json(v) for v in p] if isinstance(p, tuple) else p


def _id_from_json(p):
    return tuple(_id_from_json(v) for v in p) if isinstance(p, list) else p


def save_space(space, path):
    doc = {
        "points": [_id_to_json(p) for p in space.points],
        "dist": [[float(v) for v in row] for row in space.dist],
    }
    if space.grid_meta is not None:
        meta = space.grid_meta
        doc["generator"] = {"family": meta.family, "sides": list(meta.sides),
                            "metric": meta.metric, "spacing": str(meta.spacing)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_space(path):
    """Load a space file, validating all three metric axioms (double mode).

    When the file carries a generator block whose regenerated space matches
    the stored matrix, the exact integer representation is adopted; anything
    else stays in double mode.
    """
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    points = [_id_from_json(p) for p in doc["points"]]
    dist = np.asarray(doc["dist"], dtype=float)
    loaded = FiniteMetricSpace(points, dist)
    gen = doc.get("generator")
    if gen:
        spacing = Fraction(gen["spacing"])
        if gen["family"] == "interval":
            regen = generate_space("interval", length=gen["sides"][0], spacing=spacing)
        else:
            regen = generate_space("grid", sides=gen["sides"], metric=gen["metric"],
                                   spacing=spacing)
        if regen.points == loaded.points and np.allclose(regen.dist, loaded.dist,
                                                         atol=FLOAT_TOL, rtol=0.0):
            return regen
    return loaded

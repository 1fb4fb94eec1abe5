"""Outcome spaces, variable-cluster structures, and orthogonal utility bases.

A utility function over a finite multi-attribute outcome space is represented
as a linear combination of orthogonal basis functions.  Each basis function is
a product of single-variable contrast vectors, and a cluster structure (a set
of possibly overlapping variable subsets) determines which products are
admitted.  Because the basis columns are pairwise orthogonal over the full
outcome space, exact projection of a complete utility vector reduces to
independent per-column dot products.

All values in this module are immutable after construction and all operations
are pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import combinations, product
from math import gcd, lcm, prod

import numpy as np


class UnknownVariableError(ValueError):
    """A cluster references a variable that is not in the domain."""


@dataclass(frozen=True)
class Variable:
    """One attribute with a fixed, ordered set of levels."""

    name: str
    levels: tuple[str, ...]

    def __post_init__(self):
        if len(self.levels) < 2:
            raise ValueError(f"variable {self.name!r} needs arity >= 2")

    @property
    def arity(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class Domain:
    """An ordered set of attribute variables.

    The variable order is significant: it fixes the outcome enumeration
    (row-major, last variable fastest) and therefore every file format and
    design-matrix row order downstream.
    """

    variables: tuple[Variable, ...]

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValueError("variable names must be unique")
        if not self.variables:
            raise ValueError("domain needs at least one variable")

    @classmethod
    def from_lists(cls, specs: list[tuple[str, list[str]]]) -> "Domain":
        return cls(tuple(Variable(n, tuple(ls)) for n, ls in specs))

    def to_json_dict(self) -> dict:
        return {
            "variables": [
                {"name": v.name, "levels": list(v.levels)} for v in self.variables
            ]
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Domain":
        return cls.from_lists([(v["name"], v["levels"]) for v in d["variables"]])

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def arities(self) -> tuple[int, ...]:
        return tuple(v.arity for v in self.variables)

    @property
    def n_outcomes(self) -> int:
        return prod(self.arities)

    @property
    def strides(self) -> tuple[int, ...]:
        out = []
        s = 1
        for k in reversed(self.arities):
            out.append(s)
            s *= k
        return tuple(reversed(out))

    def var_index(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise UnknownVariableError(f"unknown variable {name!r}")

    def index_of(self, assignment) -> int:
        """Outcome index of a per-variable level-index assignment."""
        if len(assignment) != len(self.variables):
            raise ValueError("assignment length mismatch")
        idx = 0
        for lvl, k, s in zip(assignment, self.arities, self.strides):
            if not 0 <= lvl < k:
                raise ValueError(f"level index {lvl} out of range for arity {k}")
            idx += lvl * s
        return idx

    def assignment_of(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.n_outcomes:
            raise ValueError(f"outcome index {index} out of range")
        out = []
        for k, s in zip(self.arities, self.strides):
            out.append((index // s) % k)
        return tuple(out)

    def assignments(self) -> np.ndarray:
        """All outcome assignments as an (N, n_vars) int array, in index order."""
        grids = np.meshgrid(*[np.arange(k) for k in self.arities], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def outcome_key(self, index: int) -> str:
        """Canonical key string for an outcome, e.g. ``A=a2|B=b1|C=c1``."""
        asg = self.assignment_of(index)
        return "|".join(
            f"{v.name}={v.levels[l]}" for v, l in zip(self.variables, asg)
        )

    def outcome_keys(self) -> list[str]:
        return [self.outcome_key(i) for i in range(self.n_outcomes)]

    def index_of_key(self, key: str) -> int:
        asg = []
        parts = key.split("|")
        if len(parts) != len(self.variables):
            raise ValueError(f"bad outcome key {key!r}")
        for part, v in zip(parts, self.variables):
            name, _, level = part.partition("=")
            if name != v.name or level not in v.levels:
                raise ValueError(f"bad outcome key {key!r}")
            asg.append(v.levels.index(level))
        return self.index_of(asg)


@dataclass(frozen=True)
class Outcome:
    """One complete assignment, paired with its enumeration index."""

    index: int
    assignment: tuple[int, ...]


def enumerate_outcomes(domain: Domain) -> list[Outcome]:
    """All outcomes in row-major order (last variable fastest)."""
    return [
        Outcome(i, tuple(row))
        for i, row in enumerate(domain.assignments().tolist())
    ]


@dataclass(frozen=True)
class ClusterStructure:
    """A canonical set of variable clusters.

    Canonical form: no cluster is a subset of another, variables within a
    cluster are sorted by name, and clusters are sorted lexicographically.
    Variables may be absent from every cluster (irrelevant attributes).
    """

    clusters: tuple[tuple[str, ...], ...]

    @classmethod
    def make(cls, clusters) -> "ClusterStructure":
        """Canonicalize an iterable of variable-name iterables."""
        sets = [frozenset(c) for c in clusters if len(frozenset(c)) > 0]
        kept = [
            c for c in sets
            if not any(c < other for other in sets)
        ]
        uniq = sorted({tuple(sorted(c)) for c in kept})
        return cls(tuple(uniq))

    @classmethod
    def fully_additive(cls, domain: Domain) -> "ClusterStructure":
        return cls.make([(v.name,) for v in domain.variables])

    @classmethod
    def full(cls, domain: Domain) -> "ClusterStructure":
        return cls.make([domain.names])

    @property
    def is_empty(self) -> bool:
        return not self.clusters

    def variables(self) -> frozenset[str]:
        return frozenset(v for c in self.clusters for v in c)

    def max_cluster_size(self) -> int:
        return max((len(c) for c in self.clusters), default=0)

    def edit_distance(self, other: "ClusterStructure") -> int:
        """Size of the symmetric difference of the two cluster sets."""
        a = {frozenset(c) for c in self.clusters}
        b = {frozenset(c) for c in other.clusters}
        return len(a ^ b)

    def to_json_dict(self) -> dict:
        return {"clusters": [list(c) for c in self.clusters]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ClusterStructure":
        return cls.make(d["clusters"])


@lru_cache(maxsize=None)
def single_var_basis(k: int) -> tuple[tuple[int, ...], ...]:
    """Orthogonal integer contrast vectors for a k-level variable.

    Gram-Schmidt on the monomials 1, x, ..., x^(k-1) over level codes
    0..k-1, with each result rescaled to the smallest integer vector whose
    leading nonzero entry is positive.  The first vector is all ones; the
    vectors are pairwise orthogonal under the unweighted dot product.
    """
    if k < 2:
        raise ValueError(f"arity must be >= 2, got {k}")
    done: list[list[Fraction]] = []
    for power in range(k):
        vec = [Fraction(x) ** power for x in range(k)]
        for b in done:
            coef = _fdot(vec, b) / _fdot(b, b)
            vec = [v - coef * bv for v, bv in zip(vec, b)]
        done.append(_smallest_integer(vec))
    return tuple(tuple(int(x) for x in v) for v in done)


def _fdot(a, b) -> Fraction:
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


def _smallest_integer(vec: list[Fraction]) -> list[Fraction]:
    denom = lcm(*(f.denominator for f in vec))
    ints = [int(f * denom) for f in vec]
    g = gcd(*ints)
    if g:
        ints = [x // g for x in ints]
    lead = next((x for x in ints if x != 0), 1)
    if lead < 0:
        ints = [-x for x in ints]
    return [Fraction(x) for x in ints]


@dataclass(frozen=True)
class BasisFunction:
    """A product of single-variable contrasts over a variable subset.

    ``indices[i]`` is the 0-based position of the contrast used for
    ``support[i]`` in that variable's single-variable basis; position 0 is
    the all-ones function, so every index here is >= 1.  Empty support is
    the constant function, identically 1.
    """

    support: tuple[str, ...]
    indices: tuple[int, ...]

    @property
    def is_constant(self) -> bool:
        return not self.support

    def value_at(self, domain: Domain, assignment) -> int:
        val = 1
        for name, idx in zip(self.support, self.indices):
            vi = domain.var_index(name)
            table = single_var_basis(domain.variables[vi].arity)
            val *= table[idx][assignment[vi]]
        return val


@dataclass(frozen=True)
class Basis:
    """The orthogonal basis spanning all utilities factored over a structure."""

    domain: Domain
    structure: ClusterStructure
    functions: tuple[BasisFunction, ...]

    @property
    def m(self) -> int:
        return len(self.functions)


def build_basis(domain: Domain, structure: ClusterStructure) -> Basis:
    """All basis functions whose support lies inside some cluster.

    The constant function comes first; the rest are sorted by support
    (in domain variable order) and then by contrast indices.  Functions
    shared between overlapping clusters appear once.
    """
    for cluster in structure.clusters:
        for name in cluster:
            domain.var_index(name)  # raises UnknownVariableError
    funcs: set[BasisFunction] = set()
    for cluster in structure.clusters:
        ordered = sorted(cluster, key=domain.var_index)
        options = [
            [None] + list(range(1, domain.variables[domain.var_index(n)].arity))
            for n in ordered
        ]
        for combo in product(*options):
            support = tuple(n for n, c in zip(ordered, combo) if c is not None)
            indices = tuple(c for c in combo if c is not None)
            funcs.add(BasisFunction(support, indices))
    funcs.add(BasisFunction((), ()))

    def sort_key(f: BasisFunction):
        return (tuple(domain.var_index(n) for n in f.support), f.indices)

    return Basis(domain, structure, tuple(sorted(funcs, key=sort_key)))


def basis_count(domain: Domain, structure: ClusterStructure) -> int:
    """Number of distinct basis functions, by inclusion-exclusion.

    The overlap between the bases of two clusters is exactly the basis of
    their intersection, so the count is an alternating sum of intersection
    domain sizes (the empty intersection contributes the lone constant).
    """
    for cluster in structure.clusters:
        for name in cluster:
            domain.var_index(name)
    sets = [frozenset(c) for c in structure.clusters]
    total = 0
    for r in range(1, len(sets) + 1):
        for group in combinations(sets, r):
            inter = frozenset.intersection(*group)
            size = prod(
                domain.variables[domain.var_index(n)].arity for n in inter
            )
            total += (-1) ** (r + 1) * size
    if total == 0:
        total = 1  # empty structure still has the constant function
    return total


def design_matrix(domain: Domain, basis: Basis, outcomes=None) -> np.ndarray:
    """Evaluate every basis function at every outcome.

    Returns an integer matrix with one row per outcome and one column per
    basis function; column 0 is all ones.  When ``outcomes`` (a sequence of
    outcome indices) is given, only those rows are returned — orthogonality
    of the columns is guaranteed only for the full matrix.
    """
    asg = domain.assignments()
    if outcomes is not None:
        outcomes = np.asarray(list(outcomes), dtype=int)
        if outcomes.size and (outcomes.min() < 0 or outcomes.max() >= domain.n_outcomes):
            raise ValueError("outcome index out of range")
        asg = asg[outcomes]
    tables = {
        v.name: np.asarray(single_var_basis(v.arity), dtype=np.int64)
        for v in domain.variables
    }
    n = asg.shape[0]
    cols = np.empty((n, basis.m), dtype=np.int64)
    for j, f in enumerate(basis.functions):
        col = np.ones(n, dtype=np.int64)
        for name, idx in zip(f.support, f.indices):
            vi = domain.var_index(name)
            col *= tables[name][idx][asg[:, vi]]
        cols[:, j] = col
    return cols


def project_exact(u, basis: Basis, design: np.ndarray | None = None) -> np.ndarray:
    """Orthogonal projection of a complete utility vector onto a basis.

    Each weight is an independent ratio of dot products thanks to column
    orthogonality.  When the structure spans the full space the projection
    reconstructs ``u`` exactly; otherwise it is the least-squares fit within
    the factored family.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (basis.domain.n_outcomes,):
        raise ValueError(
            f"utility vector length {u.shape} != outcome count "
            f"{basis.domain.n_outcomes}"
        )
    a = design if design is not None else design_matrix(basis.domain, basis)
    norms = np.einsum("ij,ij->j", a, a).astype(float)
    return (a.T @ u) / norms

"""Recursive tree-similarity metric over parsed math expressions.

The score of a query tree against a document tree is the best of three
alignments: both roots aligned (a weighted sum of head similarity and
argument-list similarity), the whole query aligned somewhere inside the
document (depth-penalised), or the whole document aligned inside the query
(depth-penalised, which is also how partial query coverage is charged).
Depth penalties are computed from the absolute depth at which an alignment
roots, under one of four decay shapes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

from .mathml import (
    Apply,
    Constant,
    DEFAULT_EQUALITY_SYMBOLS,
    DEFAULT_INEQUALITY_SYMBOLS,
    ExprTree,
    FormulaClass,
    FunctionSymbol,
    LEAF_TYPES,
    Variable,
    iter_subtrees,
)

DECAY_KINDS = ("exponential", "linear", "quadratic", "logarithmic")

DEFAULT_COMMUTATIVE = frozenset(
    {
        ("arith1", "plus"),
        ("arith1", "times"),
        ("arith1", "gcd"),
        ("arith1", "lcm"),
        ("logic1", "and"),
        ("logic1", "or"),
        ("relation1", "eq"),
        ("relation1", "neq"),
        ("set1", "union"),
        ("set1", "intersect"),
    }
)


@dataclass(frozen=True)
class DecayModel:
    """One decay shape with its rate: a^k, or max(1 - rate*g(k), epsilon)."""

    kind: str
    rate: float

    def __post_init__(self) -> None:
        if self.kind not in DECAY_KINDS:
            raise ValueError(f"unknown decay model {self.kind!r}, expected one of {DECAY_KINDS}")
        if not math.isfinite(self.rate):
            raise ValueError("decay rate must be finite")
        if self.kind == "exponential":
            if not 0.0 < self.rate <= 1.0:
                raise ValueError(f"exponential base must be in (0, 1], got {self.rate}")
        elif self.rate < 0.0:
            raise ValueError(f"decay rate must be >= 0, got {self.rate}")


def decay(model: DecayModel, k: int, epsilon: float) -> float:
    """Depth-discount factor at nesting depth ``k``; equals 1 at depth 0.

    Exponential decay ignores ``epsilon``; the other shapes are floored by it
    so the factor stays positive.
    """
    if k < 0:
        raise ValueError(f"match depth must be >= 0, got {k}")
    if model.kind == "exponential":
        return model.rate ** k
    if model.kind == "linear":
        return max(1.0 - model.rate * k, epsilon)
    if model.kind == "quadratic":
        return max(1.0 - model.rate * k * k, epsilon)
    return max(1.0 - model.rate * math.log(k + 1), epsilon)


_FIELD_RANGES = {
    # name: (low, high, low_open, high_open)
    "delta": (0.0, 1.0, False, True),
    "zeta": (0.0, 1.0, False, False),
    "mu": (0.0, 1.0, True, True),
    "theta": (0.0, 1.0, False, True),
    "omega": (1.0, math.inf, True, True),
    "dp_rate": (0.0, math.inf, False, True),
    "cp_rate": (0.0, math.inf, False, True),
    "epsilon": (0.0, 1.0, True, True),
    "w_eq": (0.0, math.inf, True, True),
    "w_ineq": (0.0, math.inf, True, True),
    "w_expr": (0.0, math.inf, True, True),
}


def validate_field(name: str, value: float) -> None:
    """Check one tunable against its own range (cross-field rules not included)."""
    if name not in _FIELD_RANGES:
        raise ValueError(f"unknown metric parameter {name!r}")
    low, high, low_open, high_open = _FIELD_RANGES[name]
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    ok_low = value > low if low_open else value >= low
    ok_high = value < high if high_open else value <= high
    if not (ok_low and ok_high):
        lo = "(" if low_open else "["
        hi = ")" if high_open else "]"
        raise ValueError(f"{name}={value} outside {lo}{low}, {high}{hi}")


@dataclass(frozen=True)
class MetricParams:
    """Every tunable of the similarity metric.

    ``decay_model`` names the shape shared by both depth penalties;
    ``dp_rate`` drives the query-inside-document penalty and ``cp_rate``
    the document-inside-query one.
    """

    delta: float
    zeta: float
    mu: float
    theta: float
    omega: float
    decay_model: str
    dp_rate: float
    cp_rate: float
    epsilon: float
    w_eq: float
    w_ineq: float
    w_expr: float

    def __post_init__(self) -> None:
        for name in _FIELD_RANGES:
            validate_field(name, getattr(self, name))
        if self.decay_model not in DECAY_KINDS:
            raise ValueError(
                f"unknown decay model {self.decay_model!r}, expected one of {DECAY_KINDS}"
            )
        if not (self.w_eq >= self.w_ineq >= self.w_expr):
            raise ValueError(
                f"class weights must satisfy w_eq >= w_ineq >= w_expr, "
                f"got {self.w_eq}, {self.w_ineq}, {self.w_expr}"
            )
        # Constructing the models validates the rates against the shape.
        self.dp_model()
        self.cp_model()

    def dp_model(self) -> DecayModel:
        return DecayModel(self.decay_model, self.dp_rate)

    def cp_model(self) -> DecayModel:
        return DecayModel(self.decay_model, self.cp_rate)

    def weight_for(self, formula_class: FormulaClass) -> float:
        if formula_class is FormulaClass.EQUATION:
            return self.w_eq
        if formula_class is FormulaClass.INEQUALITY:
            return self.w_ineq
        return self.w_expr

    def with_value(self, name: str, value) -> "MetricParams":
        return replace(self, **{name: value})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "MetricParams":
        names = {f.name for f in fields(cls)}
        missing = sorted(names - data.keys())
        if missing:
            raise ValueError(f"params document missing keys: {', '.join(missing)}")
        return cls(**{k: data[k] for k in names})


DEFAULT_PARAMS = MetricParams(
    delta=0.3,
    zeta=0.5,
    mu=0.5,
    theta=0.2,
    omega=2.0,
    decay_model="exponential",
    dp_rate=0.7,
    cp_rate=0.7,
    epsilon=0.05,
    w_eq=1.5,
    w_ineq=1.25,
    w_expr=1.0,
)


@dataclass(frozen=True)
class SymbolConfig:
    """Symbol inventories: commutative functions plus equality/inequality sets."""

    commutative: frozenset[tuple[str, str]] = DEFAULT_COMMUTATIVE
    equality: frozenset[tuple[str, str]] = DEFAULT_EQUALITY_SYMBOLS
    inequality: frozenset[tuple[str, str]] = DEFAULT_INEQUALITY_SYMBOLS


def _symbol_set(entries: Iterable) -> frozenset[tuple[str, str]]:
    pairs = set()
    for entry in entries:
        cd, name = entry
        pairs.add((str(cd), str(name)))
    return frozenset(pairs)


def load_params(path: str | Path) -> tuple[MetricParams, SymbolConfig]:
    """Read a params JSON document, including any symbol-set overrides."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    params = MetricParams.from_dict(data)
    symbols = SymbolConfig(
        commutative=_symbol_set(data["commutative"])
        if "commutative" in data
        else DEFAULT_COMMUTATIVE,
        equality=_symbol_set(data["equality_symbols"])
        if "equality_symbols" in data
        else DEFAULT_EQUALITY_SYMBOLS,
        inequality=_symbol_set(data["inequality_symbols"])
        if "inequality_symbols" in data
        else DEFAULT_INEQUALITY_SYMBOLS,
    )
    return params, symbols


def save_params(params: MetricParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), indent=2) + "\n", encoding="utf-8")


def leaf_sim(n1: ExprTree, n2: ExprTree, params: MetricParams) -> float:
    """Similarity of two height-0 nodes.

    Constant equality is lexical on the literal text, so "2" and "2.0" are
    unequal constants.
    """
    if not isinstance(n1, LEAF_TYPES) or not isinstance(n2, LEAF_TYPES):
        raise ValueError("leaf_sim requires two height-0 nodes")
    if isinstance(n1, Constant) and isinstance(n2, Constant):
        return 1.0 if n1.value == n2.value else params.delta
    if isinstance(n1, Variable) and isinstance(n2, Variable):
        return 1.0 if n1.name == n2.name else params.zeta
    if isinstance(n1, FunctionSymbol) and isinstance(n2, FunctionSymbol):
        if n1.cd == n2.cd:
            return 1.0 if n1.name == n2.name else params.mu
        return 0.0
    if isinstance(n1, FunctionSymbol) or isinstance(n2, FunctionSymbol):
        return 0.0
    return params.theta


class _SimContext:
    """Memoised metric evaluation for one top-level query/document pair.

    Caches are keyed on node identity, which is stable for the lifetime of
    the context because the trees are immutable and held by the caller.
    """

    def __init__(self, params: MetricParams, commutative: frozenset[tuple[str, str]]):
        self.params = params
        self.commutative = commutative
        self._sim_cache: dict[tuple[int, int], float] = {}
        self._aligned_cache: dict[tuple[int, int], float | None] = {}
        self._walk_cache: dict[int, list[tuple[int, ExprTree]]] = {}
        self._dp_factors = [1.0]
        self._cp_factors = [1.0]
        self._dp_model = params.dp_model()
        self._cp_model = params.cp_model()

    def _dp(self, k: int) -> float:
        table = self._dp_factors
        while len(table) <= k:
            table.append(decay(self._dp_model, len(table), self.params.epsilon))
        return table[k]

    def _cp(self, k: int) -> float:
        table = self._cp_factors
        while len(table) <= k:
            table.append(decay(self._cp_model, len(table), self.params.epsilon))
        return table[k]

    def _walk(self, tree: ExprTree) -> list[tuple[int, ExprTree]]:
        # Subtrees with their depth below `tree`, shallowest first so the
        # depth-bound pruning in sim() can stop early.
        got = self._walk_cache.get(id(tree))
        if got is None:
            got = sorted(iter_subtrees(tree), key=lambda pair: pair[0])
            self._walk_cache[id(tree)] = got
        return got

    def sim(self, query: ExprTree, doc: ExprTree) -> float:
        key = (id(query), id(doc))
        cached = self._sim_cache.get(key)
        if cached is not None:
            return cached
        best = 0.0
        for j, sub_q in self._walk(query):
            cj = self._cp(j)
            if cj <= best:
                break
            for k, sub_d in self._walk(doc):
                bound = cj * self._dp(k)
                if bound <= best:
                    break
                aligned = self._aligned(sub_q, sub_d)
                if aligned is not None:
                    value = bound * aligned
                    if value > best:
                        best = value
        result = min(best, 1.0)
        self._sim_cache[key] = result
        return result

    def _aligned(self, q: ExprTree, d: ExprTree) -> float | None:
        # Score with both roots aligned; None when one side is a leaf and the
        # other an application (no direct alignment exists for such pairs).
        q_leaf = isinstance(q, LEAF_TYPES)
        d_leaf = isinstance(d, LEAF_TYPES)
        if q_leaf and d_leaf:
            return leaf_sim(q, d, self.params)
        if q_leaf or d_leaf:
            return None
        key = (id(q), id(d))
        if key in self._aligned_cache:
            return self._aligned_cache[key]
        p = len(q.args)
        omega = self.params.omega
        alpha = omega / (p + omega)
        beta = 1.0 / (p + omega)
        if isinstance(q.head, LEAF_TYPES) and isinstance(d.head, LEAF_TYPES):
            head_sim = leaf_sim(q.head, d.head, self.params)
        else:
            head_sim = self.sim(q.head, d.head)
        value = alpha * head_sim + beta * self._arg_list_sim(q, d)
        self._aligned_cache[key] = value
        return value

    def _arg_list_sim(self, q: Apply, d: Apply) -> float:
        if not q.args or not d.args:
            return 0.0
        if self._use_greedy(q.head, d.head):
            return self.greedy_sum(q.args, d.args)
        return self.ordered_sum(q.args, d.args)

    def _use_greedy(self, head1: ExprTree, head2: ExprTree) -> bool:
        # Argument order is only relaxed when both heads are plain symbols
        # and at least one of them is a commutative function.
        if not isinstance(head1, FunctionSymbol) or not isinstance(head2, FunctionSymbol):
            return False
        return (
            (head1.cd, head1.name) in self.commutative
            or (head2.cd, head2.name) in self.commutative
        )

    def ordered_sum(self, args1: Sequence[ExprTree], args2: Sequence[ExprTree]) -> float:
        return sum(self.sim(a, b) for a, b in zip(args1, args2))

    def greedy_sum(self, args1: Sequence[ExprTree], args2: Sequence[ExprTree]) -> float:
        used = [False] * len(args2)
        total = 0.0
        for arg in args1[: min(len(args1), len(args2))]:
            best_j = -1
            best_v = -1.0
            for j, other in enumerate(args2):
                if used[j]:
                    continue
                v = self.sim(arg, other)
                if v > best_v:
                    best_v = v
                    best_j = j
            used[best_j] = True
            total += best_v
        return total


def sim(
    query: ExprTree,
    doc: ExprTree,
    params: MetricParams,
    commutative: frozenset[tuple[str, str]] = DEFAULT_COMMUTATIVE,
) -> float:
    """Similarity of ``doc`` to ``query`` in [0, 1]; 1 for identical trees."""
    return _SimContext(params, commutative).sim(query, doc)


def arg_list_sim_ordered(
    args1: Sequence[ExprTree],
    args2: Sequence[ExprTree],
    params: MetricParams,
    commutative: frozenset[tuple[str, str]] = DEFAULT_COMMUTATIVE,
) -> float:
    """Order-respecting argument-list similarity: sum over corresponding pairs."""
    return _SimContext(params, commutative).ordered_sum(args1, args2)


def arg_list_sim_greedy(
    args1: Sequence[ExprTree],
    args2: Sequence[ExprTree],
    params: MetricParams,
    commutative: frozenset[tuple[str, str]] = DEFAULT_COMMUTATIVE,
) -> float:
    """Order-free argument matching: each argument takes the best unused partner.

    Ties go to the lowest remaining index in ``args2`` so rankings are
    reproducible.
    """
    return _SimContext(params, commutative).greedy_sum(args1, args2)


def arg_list_sim_exact(
    args1: Sequence[ExprTree],
    args2: Sequence[ExprTree],
    params: MetricParams,
    commutative: frozenset[tuple[str, str]] = DEFAULT_COMMUTATIVE,
    bound: int = 6,
    max_assignments: int = 2_000_000,
) -> float:
    """Brute-force optimum of the argument assignment; testing oracle only.

    Maximises the similarity sum over every injective mapping of the shorter
    list into the longer one.  Refuses instances with min(p, q) above
    ``bound`` or whose enumeration would exceed ``max_assignments``.
    """
    import itertools

    p, q = len(args1), len(args2)
    m = min(p, q)
    if m == 0:
        return 0.0
    if m > bound:
        raise ValueError(f"exact matching refuses min(p, q)={m} above oracle bound {bound}")
    n = max(p, q)
    count = 1
    for i in range(m):
        count *= n - i
    if count > max_assignments:
        raise ValueError(f"exact matching would enumerate {count} assignments; refusing")
    ctx = _SimContext(params, commutative)
    matrix = [[ctx.sim(a, b) for b in args2] for a in args1]
    best = -math.inf
    if p <= q:
        for phi in itertools.permutations(range(q), p):
            best = max(best, sum(matrix[i][phi[i]] for i in range(p)))
    else:
        for psi in itertools.permutations(range(p), q):
            best = max(best, sum(matrix[psi[j]][j] for j in range(q)))
    return best


def score_document(
    query: ExprTree,
    doc: ExprTree,
    doc_class: FormulaClass,
    params: MetricParams,
    commutative: frozenset[tuple[str, str]] = DEFAULT_COMMUTATIVE,
) -> float:
    """Similarity weighted by the document's formula class."""
    return sim(query, doc, params, commutative) * params.weight_for(doc_class)

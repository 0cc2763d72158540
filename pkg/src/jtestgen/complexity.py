"""Initialization complexity and cyclomatic complexity of focal methods.

Initialization complexity is a weighted sum of four min-max normalized
counts measured on a piece of calling code (an exemplar or a test prefix):
variable declarations, object creations, method calls issued before the
focal call, and the focal method's parameter count.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from tree_sitter import Node, Tree

from .code_model import CLASS_NODE_TYPES, MethodInfo, named_args, parse_tree, reparse_method, walk, walk_postorder
from .errors import EmptyCorpus, NoFocalCall

FEATURES = ("V", "O", "M", "P")
DEFAULT_WEIGHTS = (0.1, 0.1, 0.4, 0.4)
NUM_BINS = 10


@dataclass(frozen=True)
class InitFeatures:
    V: int
    O: int
    M: int
    P: int

    def __post_init__(self):
        for name in FEATURES:
            if getattr(self, name) < 0:
                raise ValueError(f"feature {name} must be nonnegative")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.V, self.O, self.M, self.P)


@dataclass(frozen=True)
class ComplexityWeights:
    w1: float = DEFAULT_WEIGHTS[0]
    w2: float = DEFAULT_WEIGHTS[1]
    w3: float = DEFAULT_WEIGHTS[2]
    w4: float = DEFAULT_WEIGHTS[3]

    def __post_init__(self):
        ws = self.as_tuple()
        if any(w < 0 for w in ws):
            raise ValueError("complexity weights must be nonnegative")
        if abs(math.fsum(ws) - 1.0) > 1e-12:
            raise ValueError(f"complexity weights must sum to 1, got {math.fsum(ws)!r}")

    @classmethod
    def of(cls, values: Sequence[float]) -> "ComplexityWeights":
        if len(values) != 4:
            raise ValueError("exactly four weights are required")
        return cls(*map(float, values))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w1, self.w2, self.w3, self.w4)


@dataclass(frozen=True)
class NormalizationStats:
    V: tuple[int, int]
    O: tuple[int, int]
    M: tuple[int, int]
    P: tuple[int, int]

    def __post_init__(self):
        for name in FEATURES:
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"min > max for feature {name}")

    def to_dict(self) -> dict:
        return {k: {"min": v[0], "max": v[1]} for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> "NormalizationStats":
        return cls(**{k: (data[k]["min"], data[k]["max"]) for k in FEATURES})


@dataclass(frozen=True)
class ComplexityScore:
    raw: float
    scaled: float
    bin: int


def score_from_raw(raw: float) -> ComplexityScore:
    raw = min(1.0, max(0.0, raw))
    scaled = 10.0 * raw
    # rounding guards against 6.9999999999 style artifacts of the weighted sum
    b = min(int(math.floor(round(scaled, 9))), NUM_BINS - 1)
    return ComplexityScore(raw=raw, scaled=scaled, bin=b)


def bin_label(b: int) -> str:
    return f"{b}-{b + 1}"


# --------------------------------------------------------------------------
# feature measurement


def _context_tree(context: str) -> Tree:
    tree = parse_tree(context)
    root = tree.root_node
    if not root.has_error and any(c.type in CLASS_NODE_TYPES for c in root.named_children):
        return tree
    return parse_tree("class __C { void __m() {\n" + context + "\n} }")


def find_focal_call(root: Node, focal: MethodInfo) -> Node | None:
    """First call (in evaluation order) matching the focal name and arity."""
    for n in walk_postorder(root):
        if n.type != "method_invocation":
            continue
        name = n.child_by_field_name("name")
        if name is not None and name.text.decode() == focal.name and len(named_args(n.child_by_field_name("arguments"))) == focal.arity:
            return n
    return None


def _enclosing_scope(node: Node, root: Node) -> Node:
    cur = node.parent
    while cur is not None:
        if cur.type in ("method_declaration", "constructor_declaration"):
            return cur
        cur = cur.parent
    return root


def count_init_features(invocation_context: str, focal: MethodInfo) -> InitFeatures:
    tree = _context_tree(invocation_context)
    call = find_focal_call(tree.root_node, focal)
    if call is None:
        raise NoFocalCall(f"context never invokes {focal.name}/{focal.arity}")
    scope = _enclosing_scope(call, tree.root_node)
    end = call.end_byte
    v = o = 0
    for n in walk(scope):
        if n.start_byte >= end:
            continue
        if n.type == "local_variable_declaration":
            v += 1
        elif n.type in ("object_creation_expression", "array_creation_expression"):
            o += 1
    m = 0
    for n in walk_postorder(scope):
        if n == call:
            break
        if n.type == "method_invocation":
            m += 1
    return InitFeatures(V=v, O=o, M=m, P=focal.arity)


def minmax_normalize(x: float, stats_for_feature: tuple[float, float]) -> float:
    lo, hi = stats_for_feature
    if hi == lo:
        return 0.0
    x = min(max(x, lo), hi)
    return (x - lo) / (hi - lo)


def fit_normalization(features: Iterable[InitFeatures]) -> NormalizationStats:
    items = list(features)
    if not items:
        raise EmptyCorpus("cannot fit normalization over zero feature vectors")
    cols = list(zip(*(f.as_tuple() for f in items)))
    return NormalizationStats(*((min(c), max(c)) for c in cols))


def normalized(f: InitFeatures, stats: NormalizationStats) -> tuple[float, float, float, float]:
    return tuple(minmax_normalize(getattr(f, k), getattr(stats, k)) for k in FEATURES)  # type: ignore[return-value]


def init_complexity(
    f: InitFeatures,
    stats: NormalizationStats,
    w: ComplexityWeights = ComplexityWeights(),
) -> ComplexityScore:
    raw = math.fsum(wi * xi for wi, xi in zip(w.as_tuple(), normalized(f, stats)))
    return score_from_raw(raw)


# --------------------------------------------------------------------------
# cyclomatic complexity

_DECISION_NODES = {
    "if_statement",
    "for_statement",
    "enhanced_for_statement",
    "while_statement",
    "do_statement",
    "catch_clause",
    "ternary_expression",
}


def _decision_points(body: Node) -> int:
    count = 0
    # bodies of anonymous and local classes are scored as separate functions
    for n in walk(body, skip=("class_body", "class_declaration", "interface_declaration", "enum_declaration")):
        t = n.type
        if t in _DECISION_NODES:
            count += 1
        elif t == "binary_expression":
            op = n.child_by_field_name("operator")
            if op is not None and op.type in ("&&", "||"):
                count += 1
        elif t == "switch_label":
            if n.children and n.children[0].type == "case":
                count += 1
    return count


def cyclomatic_complexity(m: MethodInfo) -> int:
    """CCN = 1 + decision points, counted the way Lizard counts Java."""
    decl = reparse_method(m)
    if decl is None:
        return 1
    body = decl.child_by_field_name("body")
    if body is None:
        return 1
    return 1 + _decision_points(body)

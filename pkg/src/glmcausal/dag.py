"""Causal DAGs: parsing, path analysis, d-separation and adjustment sets.

The text format is a small subset of dagitty::

    dag {
      # comment
      Chemotherapy [exposure]
      VTE [outcome]
      Age -> Chemotherapy
      Chemotherapy -> PlateletCount -> VTE
    }
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import re
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

__all__ = [
    "AdjustmentVerdict",
    "CycleError",
    "Dag",
    "DagError",
    "DagSyntaxError",
    "NodeRole",
    "Path",
    "check_adjustment",
    "classify_node",
    "d_separated",
    "enumerate_paths",
    "implied_independencies",
    "is_valid_adjustment",
    "minimal_adjustment_sets",
    "parse_dag",
    "path_open",
]


class DagError(ValueError):
    pass


class DagSyntaxError(DagError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


class CycleError(DagError):
    def __init__(self, cycle: Sequence[str]):
        self.cycle = tuple(cycle)
        super().__init__("graph contains a cycle: " + " -> ".join(self.cycle))


class DuplicateRoleError(DagError):
    pass


class UnknownNodeError(DagError, KeyError):
    def __str__(self):
        return str(self.args[0])


class MissingRoleError(DagError):
    pass


@dataclass(frozen=True)
class Dag:
    """Immutable directed acyclic graph with optional exposure/outcome roles.

    ``nodes`` keeps declaration order, which is the tie-break order used by
    every deterministic listing in this module.
    """

    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    exposure: str | None = None
    outcome: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        if len(set(self.nodes)) != len(self.nodes):
            raise DagError("duplicate node names")
        known = set(self.nodes)
        seen = set()
        for a, b in self.edges:
            if a not in known or b not in known:
                missing = a if a not in known else b
                raise UnknownNodeError(f"edge {a} -> {b} references undeclared node {missing!r}")
            if a == b:
                raise CycleError([a, a])
            if (a, b) in seen:
                raise DagError(f"duplicate edge {a} -> {b}")
            seen.add((a, b))
        for role in (self.exposure, self.outcome):
            if role is not None and role not in known:
                raise UnknownNodeError(f"role annotation on unknown node {role!r}")
        if self.exposure is not None and self.exposure == self.outcome:
            raise DuplicateRoleError(f"{self.exposure!r} is both exposure and outcome")
        self._check_acyclic()

    def _check_acyclic(self):
        # DFS colouring; reports the first cycle found in declaration order
        state = dict.fromkeys(self.nodes, 0)
        stack: list[str] = []

        def visit(v):
            state[v] = 1
            stack.append(v)
            for w in self.children[v]:
                if state[w] == 1:
                    raise CycleError(stack[stack.index(w):] + [w])
                if state[w] == 0:
                    visit(w)
            stack.pop()
            state[v] = 2

        for v in self.nodes:
            if state[v] == 0:
                visit(v)

    @cached_property
    def index(self) -> dict[str, int]:
        return {v: i for i, v in enumerate(self.nodes)}

    @cached_property
    def parents(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {v: [] for v in self.nodes}
        for a, b in self.edges:
            out[b].append(a)
        return {v: tuple(sorted(ps, key=self.index.__getitem__)) for v, ps in out.items()}

    @cached_property
    def children(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {v: [] for v in self.nodes}
        for a, b in self.edges:
            out[a].append(b)
        return {v: tuple(sorted(cs, key=self.index.__getitem__)) for v, cs in out.items()}

    @cached_property
    def neighbours(self) -> dict[str, tuple[str, ...]]:
        return {
            v: tuple(sorted(set(self.parents[v]) | set(self.children[v]), key=self.index.__getitem__))
            for v in self.nodes
        }

    @cached_property
    def _edge_set(self) -> frozenset[tuple[str, str]]:
        return frozenset(self.edges)

    def has_edge(self, a: str, b: str) -> bool:
        return (a, b) in self._edge_set

    def adjacent(self, a: str, b: str) -> bool:
        return (a, b) in self._edge_set or (b, a) in self._edge_set

    def topological_order(self) -> tuple[str, ...]:
        """Kahn's algorithm, ties resolved by declaration order."""
        indeg = {v: len(self.parents[v]) for v in self.nodes}
        ready = [v for v in self.nodes if indeg[v] == 0]
        order = []
        while ready:
            ready.sort(key=self.index.__getitem__)
            v = ready.pop(0)
            order.append(v)
            for w in self.children[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    ready.append(w)
        return tuple(order)

    def descendants(self, v: str) -> frozenset[str]:
        """Strict descendants of ``v``."""
        self._require(v)
        return frozenset(_reach(v, self.children)) - {v}

    def ancestors(self, v: str) -> frozenset[str]:
        """Strict ancestors of ``v``."""
        self._require(v)
        return frozenset(_reach(v, self.parents)) - {v}

    def _require(self, *names: str):
        for v in names:
            if v not in self.index:
                raise UnknownNodeError(f"unknown node {v!r}")

    def require_roles(self) -> tuple[str, str]:
        if self.exposure is None or self.outcome is None:
            raise MissingRoleError("DAG needs both an [exposure] and an [outcome] annotation")
        return self.exposure, self.outcome

    def with_roles(self, exposure: str | None = None, outcome: str | None = None) -> Dag:
        return Dag(self.nodes, self.edges, exposure or self.exposure, outcome or self.outcome)

    def to_source(self) -> str:
        """Canonical text form: roles first, then edges in declaration order."""
        lines = ["dag {"]
        linked = {v for e in self.edges for v in e}
        for v in self.nodes:
            if v == self.exposure:
                lines.append(f"  {v} [exposure]")
            elif v == self.outcome:
                lines.append(f"  {v} [outcome]")
            elif v not in linked:
                lines.append(f"  {v}")
        lines.extend(f"  {a} -> {b}" for a, b in self.edges)
        lines.append("}")
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        # order-insensitive so reformatting the source does not change it
        canon = {
            "nodes": sorted(self.nodes),
            "edges": sorted(f"{a}->{b}" for a, b in self.edges),
            "exposure": self.exposure,
            "outcome": self.outcome,
        }
        text = repr(sorted(canon.items()))
        return "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest()


def _reach(start: str, step: dict[str, tuple[str, ...]]) -> set[str]:
    seen = {start}
    todo = [start]
    while todo:
        v = todo.pop()
        for w in step[v]:
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return seen


# --------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<newline>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<arrow>->)
  | (?P<lbrace>\{)
  | (?P<rbrace>\})
  | (?P<lbracket>\[)
  | (?P<rbracket>\])
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)


def _tokenize(text: str):
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DagSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "newline":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            yield kind, m.group(), line, m.start() - line_start + 1
        pos = m.end()
    yield "eof", "", line, pos - line_start + 1


def parse_dag(text: str) -> Dag:
    """Parse dagitty-subset source into a :class:`Dag`.

    Raises :class:`DagSyntaxError` (with line/column), :class:`CycleError`
    or :class:`DuplicateRoleError`.
    """
    toks = list(_tokenize(text))
    i = 0

    def expect(kind, what):
        nonlocal i
        k, val, ln, col = toks[i]
        if k != kind:
            shown = val or "end of input"
            raise DagSyntaxError(f"expected {what}, found {shown!r}", ln, col)
        i += 1
        return val, ln, col

    keyword, ln, col = expect("name", "'dag'")
    if keyword != "dag":
        raise DagSyntaxError(f"expected 'dag', found {keyword!r}", ln, col)
    expect("lbrace", "'{'")

    nodes: dict[str, None] = {}
    edges: list[tuple[str, str]] = []
    roles: dict[str, str] = {}

    while toks[i][0] != "rbrace":
        name, ln, col = expect("name", "a node name or '}'")
        nodes.setdefault(name)
        if toks[i][0] == "lbracket":
            i += 1
            role, rln, rcol = expect("name", "'exposure' or 'outcome'")
            if role not in ("exposure", "outcome"):
                raise DagSyntaxError(f"unknown attribute {role!r}", rln, rcol)
            expect("rbracket", "']'")
            if role in roles and roles[role] != name:
                raise DuplicateRoleError(
                    f"line {rln}: second {role} annotation ({name!r}, already {roles[role]!r})"
                )
            roles[role] = name
        prev = name
        while toks[i][0] == "arrow":
            i += 1
            nxt, _, _ = expect("name", "a node name after '->'")
            nodes.setdefault(nxt)
            if (prev, nxt) not in edges:
                edges.append((prev, nxt))
            prev = nxt
    expect("rbrace", "'}'")
    expect("eof", "end of input")

    return Dag(tuple(nodes), tuple(edges), roles.get("exposure"), roles.get("outcome"))


# --------------------------------------------------------------------------
# paths


class Orientation(str, enum.Enum):
    CHAIN = "chain"
    FORK = "fork"
    COLLIDER = "collider"


@dataclass(frozen=True, order=True)
class Path:
    """A simple path between two nodes, ignoring edge direction.

    ``forward[i]`` is true when the edge between ``nodes[i]`` and
    ``nodes[i + 1]`` points towards ``nodes[i + 1]``.
    """

    nodes: tuple[str, ...]
    forward: tuple[bool, ...] = field(compare=False)
    # descendants of each interior collider; needed by path_open
    collider_descendants: dict[str, frozenset[str]] = field(
        default_factory=dict, compare=False, hash=False, repr=False
    )

    @classmethod
    def from_nodes(cls, dag: Dag, nodes: Sequence[str]) -> Path:
        nodes = tuple(nodes)
        if len(nodes) < 2:
            raise DagError("a path needs at least two nodes")
        if len(set(nodes)) != len(nodes):
            raise DagError(f"path repeats a node: {nodes}")
        forward = []
        for a, b in zip(nodes, nodes[1:]):
            if dag.has_edge(a, b):
                forward.append(True)
            elif dag.has_edge(b, a):
                forward.append(False)
            else:
                raise DagError(f"{a} and {b} are not adjacent")
        path = cls(nodes, tuple(forward))
        colliders = {
            v: dag.descendants(v)
            for v, o in zip(nodes[1:-1], path.orientations)
            if o is Orientation.COLLIDER
        }
        object.__setattr__(path, "collider_descendants", colliders)
        return path

    @property
    def orientations(self) -> tuple[Orientation, ...]:
        out = []
        for into_prev, out_next in zip(self.forward, self.forward[1:]):
            # into_prev: edge (prev, v) points at v; out_next: edge (v, next) points at next
            if into_prev and not out_next:
                out.append(Orientation.COLLIDER)
            elif not into_prev and out_next:
                out.append(Orientation.FORK)
            else:
                out.append(Orientation.CHAIN)
        return tuple(out)

    @property
    def interior(self) -> tuple[str, ...]:
        return self.nodes[1:-1]

    def is_directed(self) -> bool:
        """All edges point from the first node towards the last."""
        return all(self.forward)

    def is_backdoor(self) -> bool:
        """First edge points into the starting node."""
        return not self.forward[0]

    def has_collider(self) -> bool:
        return Orientation.COLLIDER in self.orientations

    def __len__(self):
        return len(self.nodes) - 1

    def __str__(self):
        parts = [self.nodes[0]]
        for fwd, v in zip(self.forward, self.nodes[1:]):
            parts.append("->" if fwd else "<-")
            parts.append(v)
        return " ".join(parts)


def enumerate_paths(dag: Dag, x: str, y: str, max_length: int | None = None) -> list[Path]:
    """All simple paths between ``x`` and ``y`` with at most ``max_length`` edges."""
    dag._require(x, y)
    if x == y:
        raise DagError("path endpoints must differ")
    if max_length is None:
        max_length = len(dag.nodes)
    found: list[tuple[str, ...]] = []
    trail = [x]
    on_trail = {x}

    def extend(v):
        if len(trail) - 1 >= max_length:
            return
        for w in dag.neighbours[v]:
            if w in on_trail:
                continue
            if w == y:
                found.append(tuple(trail) + (y,))
                continue
            trail.append(w)
            on_trail.add(w)
            extend(w)
            trail.pop()
            on_trail.discard(w)

    extend(x)
    found.sort()
    return [Path.from_nodes(dag, p) for p in found]


def path_open(path: Path, z: Iterable[str]) -> bool:
    """d-connection of a single path given conditioning set ``z``."""
    z = frozenset(z)
    if path.nodes[0] in z or path.nodes[-1] in z:
        raise DagError("conditioning set must not contain path endpoints")
    for v, o in zip(path.interior, path.orientations):
        if o is Orientation.COLLIDER:
            if v not in z and not (path.collider_descendants[v] & z):
                return False
        elif v in z:
            return False
    return True


def d_separated(dag: Dag, x: str, y: str, z: Iterable[str] = ()) -> bool:
    """Test whether ``z`` d-separates ``x`` and ``y``.

    Reachability over (node, direction) states; linear in the graph size.
    """
    z = frozenset(z)
    dag._require(x, y, *z)
    if x == y:
        raise DagError("x and y must differ")
    if x in z or y in z:
        raise DagError("x and y must not be in the conditioning set")

    # nodes that are in z or have a descendant in z
    anc_z = set(z)
    todo = list(z)
    while todo:
        v = todo.pop()
        for p in dag.parents[v]:
            if p not in anc_z:
                anc_z.add(p)
                todo.append(p)

    # "up": arrived from a child (travelling against edges)
    # "down": arrived from a parent
    visited = set()
    queue = deque([(x, "up")])
    while queue:
        v, direction = queue.popleft()
        if (v, direction) in visited:
            continue
        visited.add((v, direction))
        if v == y:
            return False
        if direction == "up" and v not in z:
            for p in dag.parents[v]:
                queue.append((p, "up"))
            for c in dag.children[v]:
                queue.append((c, "down"))
        elif direction == "down":
            if v not in z:
                for c in dag.children[v]:
                    queue.append((c, "down"))
            if v in anc_z:
                for p in dag.parents[v]:
                    queue.append((p, "up"))
    return True


# --------------------------------------------------------------------------
# roles and adjustment


class NodeRole(str, enum.Enum):
    CONFOUNDER = "confounder-path member"
    MEDIATOR = "mediator"
    COLLIDER = "collider"
    EXPOSURE = "exposure"
    OUTCOME = "outcome"
    OTHER = "other"


def classify_node(dag: Dag, v: str) -> frozenset[NodeRole]:
    """Role labels of ``v`` relative to the annotated exposure/outcome pair."""
    x, y = dag.require_roles()
    dag._require(v)
    if v == x:
        return frozenset({NodeRole.EXPOSURE})
    if v == y:
        return frozenset({NodeRole.OUTCOME})
    roles = set()
    if v in dag.descendants(x) and v in dag.ancestors(y):
        roles.add(NodeRole.MEDIATOR)
    for path in enumerate_paths(dag, x, y):
        if v not in path.interior:
            continue
        if path.is_backdoor() and not path.has_collider():
            roles.add(NodeRole.CONFOUNDER)
        if path.orientations[path.interior.index(v)] is Orientation.COLLIDER:
            roles.add(NodeRole.COLLIDER)
    return frozenset(roles or {NodeRole.OTHER})


@dataclass(frozen=True)
class AdjustmentVerdict:
    adjustment_set: tuple[str, ...]
    condition1_blocked_confounding: bool
    condition2_no_causal_blocked: bool
    condition3_no_collider_opened: bool
    # (condition number, witnessing path)
    offending_paths: tuple[tuple[int, Path], ...] = ()
    notes: tuple[str, ...] = ()

    @property
    def valid(self) -> bool:
        return (
            self.condition1_blocked_confounding
            and self.condition2_no_causal_blocked
            and self.condition3_no_collider_opened
        )

    @property
    def failed_conditions(self) -> tuple[int, ...]:
        flags = (
            self.condition1_blocked_confounding,
            self.condition2_no_causal_blocked,
            self.condition3_no_collider_opened,
        )
        return tuple(i + 1 for i, ok in enumerate(flags) if not ok)


CONDITION_TEXT = {
    1: "block all confounding paths",
    2: "do not block any causal path",
    3: "do not open any colliding path",
}


def _causal_nodes(dag: Dag, x: str, y: str) -> frozenset[str]:
    """Nodes other than ``x`` lying on a directed x -> y path."""
    return dag.descendants(x) & (dag.ancestors(y) | {y})


def _forbidden_nodes(dag: Dag, x: str, y: str) -> frozenset[str]:
    out = set()
    for w in _causal_nodes(dag, x, y):
        out |= {w} | dag.descendants(w)
    return frozenset(out)


def check_adjustment(dag: Dag, z: Iterable[str]) -> AdjustmentVerdict:
    """Evaluate the three graphical conditions for adjustment set ``z``.

    Condition 2 also rejects descendants of mediators (and of the outcome):
    conditioning on them distorts the causal association even though they
    do not sit on a causal path themselves.
    """
    x, y = dag.require_roles()
    z = frozenset(z)
    dag._require(*z)
    if x in z or y in z:
        raise DagError("adjustment set must not contain the exposure or the outcome")

    witness: dict[int, Path] = {}
    causal = []
    for path in enumerate_paths(dag, x, y):
        if path.is_directed():
            causal.append(path)
            if not path_open(path, z):
                witness.setdefault(2, path)
        elif path.has_collider():
            if path_open(path, z):
                witness.setdefault(3, path)
        elif path_open(path, z):
            witness.setdefault(1, path)

    notes = []
    ordered_z = tuple(sorted(z, key=dag.index.__getitem__))
    for v in ordered_z:
        if v in dag.descendants(x) and any(v in p.interior for p in causal):
            notes.append(f"{v} mediates the effect of {x} on {y}")
    for v in sorted(z & _forbidden_nodes(dag, x, y) - _causal_nodes(dag, x, y), key=dag.index.__getitem__):
        via = next(p for p in causal if any(v in dag.descendants(w) for w in p.nodes[1:]))
        notes.append(f"{v} is a descendant of the causal path {via}")
        witness.setdefault(2, via)

    return AdjustmentVerdict(
        ordered_z,
        1 not in witness,
        2 not in witness,
        3 not in witness,
        tuple(sorted(witness.items())),
        tuple(notes),
    )


class _AdjustmentChecker:
    """Reusable fast validity test for many candidate sets on one DAG."""

    def __init__(self, dag: Dag):
        x, y = dag.require_roles()
        self.x, self.y = x, y
        self.forbidden = _forbidden_nodes(dag, x, y)
        on_causal = _causal_nodes(dag, x, y)
        # drop the first edge of every causal path
        edges = tuple(e for e in dag.edges if not (e[0] == x and e[1] in on_causal))
        self.backdoor_graph = Dag(dag.nodes, edges)

    def __call__(self, z: frozenset[str]) -> bool:
        if z & self.forbidden:
            return False
        return d_separated(self.backdoor_graph, self.x, self.y, z)


def is_valid_adjustment(dag: Dag, z: Iterable[str]) -> bool:
    """Fast validity test: no forbidden node, and ``z`` d-separates the
    exposure from the outcome once the first edge of each causal path is cut.

    Agrees with ``check_adjustment(dag, z).valid``.
    """
    return _AdjustmentChecker(dag)(frozenset(z))


def minimal_adjustment_sets(dag: Dag) -> list[tuple[str, ...]]:
    """All inclusion-minimal valid adjustment sets among non-descendants
    of the exposure, ordered by size then by declaration order."""
    x, y = dag.require_roles()
    pool = [v for v in dag.nodes if v not in (x, y) and v not in dag.descendants(x)]
    valid = _AdjustmentChecker(dag)
    found: list[frozenset[str]] = []
    for size in range(len(pool) + 1):
        for combo in itertools.combinations(pool, size):
            s = frozenset(combo)
            if any(f <= s for f in found):
                continue
            if valid(s):
                found.append(s)
    return [tuple(sorted(s, key=dag.index.__getitem__)) for s in _ordered(dag, found)]


def _ordered(dag: Dag, sets: Iterable[frozenset[str]]) -> list[frozenset[str]]:
    return sorted(sets, key=lambda s: (len(s), sorted(dag.index[v] for v in s)))


def implied_independencies(
    dag: Dag, max_set_size: int | None = None
) -> list[tuple[str, str, tuple[str, ...]]]:
    """One (x, y, z) triple per non-adjacent pair, where z is the first
    smallest separating set (declaration order) of size <= ``max_set_size``."""
    if max_set_size is None:
        max_set_size = max(len(dag.nodes) - 2, 0)
    out = []
    for a, b in itertools.combinations(dag.nodes, 2):
        if dag.adjacent(a, b):
            continue
        rest = [v for v in dag.nodes if v not in (a, b)]
        for size in range(min(max_set_size, len(rest)) + 1):
            hit = next(
                (c for c in itertools.combinations(rest, size) if d_separated(dag, a, b, c)),
                None,
            )
            if hit is not None:
                out.append((a, b, tuple(hit)))
                break
    return out

"""Core data model for folksonomy-driven tags.

A tag couples a formal context (topic, descriptors, incidence), a time
exposition (clickthrough rate in [0, 1]), a resource URI and a position on
the unit simulation plane.  Tags are grounded in a user-supplied concept
tree; semantic tests between tags reduce to ancestor queries on that tree.

Everything in this module is an immutable value, and every operation is a
pure function, so unrestricted parallel use is safe.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional


class OntologyFormatError(ValueError):
    """Raised for malformed concept-tree files (duplicate ids, bad shape)."""


class UnknownConceptError(KeyError):
    """Raised when a concept id does not exist in the tree."""

    def __init__(self, concept_id: str):
        super().__init__(concept_id)
        self.concept_id = concept_id

    def __str__(self) -> str:
        return f"unknown concept id: {self.concept_id!r}"


class LevelRangeError(ValueError):
    """Raised when a tree-level argument falls outside 1..tree.depth."""


# ---------------------------------------------------------------------------
# Concept tree
# ---------------------------------------------------------------------------


class OntologyTree:
    """Rooted concept tree with stable child order.

    Node depth is the distance from the root (root = 0); ``depth`` of the
    tree is the maximum node depth.  Child order follows insertion order,
    which makes the pre-order traversal (and everything derived from it)
    deterministic.
    """

    def __init__(self, root: str, label: str):
        self.root = root
        self._labels: dict[str, str] = {root: label}
        self._parents: dict[str, Optional[str]] = {root: None}
        self._children: dict[str, list[str]] = {root: []}
        self._depths: dict[str, int] = {root: 0}
        self._preorder: Optional[dict[str, int]] = None

    def add_node(self, node_id: str, label: str, parent_id: str) -> None:
        if node_id in self._labels:
            raise OntologyFormatError(f"duplicate node id: {node_id!r}")
        if parent_id not in self._labels:
            raise UnknownConceptError(parent_id)
        self._labels[node_id] = label
        self._parents[node_id] = parent_id
        self._children[node_id] = []
        self._children[parent_id].append(node_id)
        self._depths[node_id] = self._depths[parent_id] + 1
        self._preorder = None

    # -- queries ------------------------------------------------------------

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._labels

    def __len__(self) -> int:
        return len(self._labels)

    def _require(self, node_id: str) -> None:
        if node_id not in self._labels:
            raise UnknownConceptError(node_id)

    def label_of(self, node_id: str) -> str:
        self._require(node_id)
        return self._labels[node_id]

    def parent_of(self, node_id: str) -> Optional[str]:
        self._require(node_id)
        return self._parents[node_id]

    def children_of(self, node_id: str) -> tuple[str, ...]:
        self._require(node_id)
        return tuple(self._children[node_id])

    def depth_of(self, node_id: str) -> int:
        self._require(node_id)
        return self._depths[node_id]

    @property
    def depth(self) -> int:
        """Maximum node depth (0 for a single-node tree)."""
        return max(self._depths.values())

    def iter_preorder(self) -> Iterator[str]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(self._children[node]))

    def preorder_index(self, node_id: str) -> int:
        self._require(node_id)
        if self._preorder is None:
            self._preorder = {n: i for i, n in enumerate(self.iter_preorder())}
        return self._preorder[node_id]

    def ancestor_at(self, node_id: str, depth: int) -> Optional[str]:
        """Unique ancestor of ``node_id`` at the given depth, or None if the
        node itself is shallower than that depth."""
        self._require(node_id)
        d = self._depths[node_id]
        if depth > d:
            return None
        node: Optional[str] = node_id
        while d > depth:
            node = self._parents[node]  # type: ignore[index]
            d -= 1
        return node

    def leaves(self) -> tuple[str, ...]:
        return tuple(n for n in self.iter_preorder() if not self._children[n])

    # -- construction from the JSON file format ------------------------------

    @classmethod
    def from_nested(cls, obj: dict) -> "OntologyTree":
        """Build a tree from the nested-dict file shape
        ``{"id": str, "label": str, "children": [...]}``."""

        def check(node: dict) -> tuple[str, str, list]:
            if not isinstance(node, dict):
                raise OntologyFormatError("tree node must be an object")
            node_id = node.get("id")
            label = node.get("label")
            children = node.get("children", [])
            if not isinstance(node_id, str) or not node_id:
                raise OntologyFormatError("tree node is missing a string 'id'")
            if not isinstance(label, str):
                raise OntologyFormatError(f"node {node_id!r} is missing a string 'label'")
            if not isinstance(children, list):
                raise OntologyFormatError(f"node {node_id!r} has a non-list 'children'")
            return node_id, label, children

        root_id, root_label, root_children = check(obj)
        tree = cls(root_id, root_label)
        stack = [(root_id, child) for child in reversed(root_children)]
        while stack:
            parent_id, node = stack.pop()
            node_id, label, children = check(node)
            tree.add_node(node_id, label, parent_id)
            stack.extend((node_id, child) for child in reversed(children))
        return tree


def load_ontology(path) -> OntologyTree:
    """Load a concept tree from a JSON file (root object at top level)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise OntologyFormatError(f"invalid JSON in {path}: {exc}") from exc
    return OntologyTree.from_nested(obj)


# ---------------------------------------------------------------------------
# Tag values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FormalContext:
    """Topic + descriptor set + their incidence pairs, resolved to a concept.

    Descriptors keep their given order but must be unique; every incidence
    pair must reference this context's own topic and one of its descriptors.
    """

    topic: str
    descriptors: tuple[str, ...]
    concept_id: str
    incidence: frozenset[tuple[str, str]] = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.descriptors:
            raise ValueError("descriptors must be non-empty")
        if len(set(self.descriptors)) != len(self.descriptors):
            raise ValueError("descriptors must be duplicate-free")
        for t, d in self.incidence:
            if t != self.topic:
                raise ValueError(f"incidence pair references foreign topic {t!r}")
            if d not in self.descriptors:
                raise ValueError(f"incidence pair references unknown descriptor {d!r}")


@dataclass(frozen=True)
class FDTag:
    """One folksonomy-driven tag / simulation agent.

    ``exposition`` is the clickthrough rate at birth and never changes;
    ``position`` starts at (c_coord, exposition) and may drift during a
    simulation.  A tag never links to itself.
    """

    id: int
    context: FormalContext
    exposition: float
    resource: str
    elasticity: float = 1.0
    position: tuple[float, float] = (0.0, 0.0)
    linked_to: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.exposition <= 1.0:
            raise ValueError(f"exposition must be in [0, 1], got {self.exposition}")
        if self.elasticity < 0.0:
            raise ValueError(f"elasticity must be >= 0, got {self.elasticity}")
        if self.linked_to == self.id:
            raise ValueError("a tag never links to itself")

    @property
    def concept_id(self) -> str:
        return self.context.concept_id


def make_tag(
    id: int,
    context: FormalContext,
    exposition: float,
    resource: str,
    tree: OntologyTree,
    elasticity: float = 1.0,
    c_coord: Optional[float] = None,
) -> FDTag:
    """Create a tag at its birth position (c_coord, exposition).

    The concept must resolve in ``tree``; when ``c_coord`` is omitted it is
    the concept's plane coordinate.
    """
    if c_coord is None:
        c_coord = context_coordinate(context, tree)
    elif context.concept_id not in tree:
        raise UnknownConceptError(context.concept_id)
    return FDTag(
        id=id,
        context=context,
        exposition=exposition,
        resource=resource,
        elasticity=elasticity,
        position=(c_coord, exposition),
    )


class TimeDirection(Enum):
    PAST_DIRECTED = "past_directed"
    FUTURE_DIRECTED = "future_directed"


@dataclass(frozen=True)
class FDEvent:
    """A point event: context, exposition coordinate, resource, plus the
    signed first component of its time vector (zero is rejected)."""

    context: FormalContext
    exposition: float
    resource: str
    time_component: float

    def __post_init__(self):
        if self.time_component == 0:
            raise ValueError("time_component must be nonzero")


Triple = tuple[str, float, str]  # (context id, exposition, resource)


@dataclass(frozen=True)
class RelationX:
    """Finite set of (context id, exposition, resource) triples."""

    events: frozenset[Triple] = field(default_factory=frozenset)

    def __post_init__(self):
        # accept any iterable of triples, normalize to a frozenset
        object.__setattr__(self, "events", frozenset(self.events))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def lca_depth(a: str, b: str, tree: OntologyTree) -> int:
    """Depth of the lowest common ancestor of two concepts (root = 0)."""
    da, db = tree.depth_of(a), tree.depth_of(b)
    while da > db:
        a = tree.parent_of(a)  # type: ignore[assignment]
        da -= 1
    while db > da:
        b = tree.parent_of(b)  # type: ignore[assignment]
        db -= 1
    while a != b:
        a = tree.parent_of(a)  # type: ignore[assignment]
        b = tree.parent_of(b)  # type: ignore[assignment]
        da -= 1
    return da


def _check_level(k: int, tree: OntologyTree) -> None:
    if not 1 <= k <= tree.depth:
        raise LevelRangeError(f"level {k} out of range 1..{tree.depth}")


def is_simile_at_level(t1: FDTag, t2: FDTag, k: int, tree: OntologyTree) -> bool:
    """True when both concepts share an ancestor at depth >= k.

    Monotone in k (true at k implies true at every smaller level) and
    symmetric in the two tags.
    """
    _check_level(k, tree)
    return lca_depth(t1.concept_id, t2.concept_id, tree) >= k


def is_in_ontology(t: FDTag, k: int, tree: OntologyTree) -> bool:
    """True when the tag's concept is resolvable at level k (depth >= k)."""
    _check_level(k, tree)
    return tree.depth_of(t.concept_id) >= k


def web_slice(x: RelationX, context_id: str, resource: str) -> frozenset[Triple]:
    """Triples of ``x`` with the given context and resource, any exposition."""
    return frozenset(
        (c, e, r) for (c, e, r) in x.events if c == context_id and r == resource
    )


def classify_time_direction(ev: FDEvent) -> TimeDirection:
    """Sign of the leading time component: negative = past, positive = future."""
    if ev.time_component < 0:
        return TimeDirection.PAST_DIRECTED
    return TimeDirection.FUTURE_DIRECTED


def context_coordinate(c: FormalContext, tree: OntologyTree) -> float:
    """Deterministic projection of a concept onto [0, 1].

    Pre-order index divided by (node count - 1); the root of a single-node
    tree maps to 0.  Equal concepts always map to equal coordinates.
    """
    idx = tree.preorder_index(c.concept_id)
    n = len(tree)
    if n == 1:
        return 0.0
    return idx / (n - 1)

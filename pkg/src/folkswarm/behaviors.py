"""Local-interaction behavior repertoire.

Each behavior maps one agent's local perception to a single command:
stop, go (with a unit direction), or link (with a target id).  Behaviors
are pure functions of their arguments; the engine owns everything else
(motion integration, link bookkeeping, sustained-forward timing).

Degenerate geometry (an agent exactly at the point it should move away
from) resolves to the fixed fallback direction (+1, 0) so replays stay
bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .core_model import FDTag, OntologyTree, is_in_ontology, is_simile_at_level

FALLBACK_DIRECTION = (1.0, 0.0)
_UNIT_TOL = 1e-9


class CommandKind(Enum):
    STOP = "stop"
    GO = "go"
    LINK = "link"


@dataclass(frozen=True)
class BehaviorCommand:
    """Stop, go, or link.

    Go carries a unit direction and optionally a displacement magnitude;
    when magnitude is None the engine moves the agent by its step size.
    """

    kind: CommandKind
    direction: Optional[tuple[float, float]] = None
    target: Optional[int] = None
    magnitude: Optional[float] = None

    def __post_init__(self):
        if self.kind is CommandKind.GO:
            if self.direction is None:
                raise ValueError("Go requires a direction")
            norm = math.hypot(*self.direction)
            if abs(norm - 1.0) > _UNIT_TOL:
                raise ValueError(f"Go direction must be unit length, |d|={norm}")
        else:
            if self.direction is not None:
                raise ValueError(f"{self.kind.value} carries no direction")
        if (self.target is not None) != (self.kind is CommandKind.LINK):
            raise ValueError("target is present iff kind is Link")


STOP = BehaviorCommand(CommandKind.STOP)


def go(direction: tuple[float, float], magnitude: Optional[float] = None) -> BehaviorCommand:
    return BehaviorCommand(CommandKind.GO, direction=direction, magnitude=magnitude)


def link(target: int) -> BehaviorCommand:
    return BehaviorCommand(CommandKind.LINK, target=target)


@dataclass(frozen=True)
class Neighbor:
    tag: FDTag
    distance: float


@dataclass(frozen=True)
class Perception:
    """What one agent can see: itself, in-range neighbors with distances,
    and the scenario goal when one exists.  Built by the engine; neighbor
    distances never exceed the sensing radius and never include self."""

    self_tag: FDTag
    neighbors: tuple[Neighbor, ...] = ()
    goal: Optional[FDTag] = None


@dataclass(frozen=True)
class BehaviorParams:
    """Tunable interaction parameters on the unit plane."""

    r_p: float = 0.05          # personal-space radius
    r_s: float = 0.2           # sensing radius
    step: float = 0.01         # per-tick displacement
    t_forward: int = 5         # sustained-forward duration, ticks
    eps_elastic: float = 0.05  # elasticity equality tolerance
    k_agg: float = 0.5         # aggregation gain
    d_agg: float = 0.4         # aggregation target diameter (2 * r_s)
    level_simile: int = 1      # tree level for the avoid/merge test

    def __post_init__(self):
        if not 0 < self.r_p < self.r_s <= 1:
            raise ValueError("require 0 < r_p < r_s <= 1")
        if self.step <= 0:
            raise ValueError("step must be > 0")
        if self.t_forward < 1:
            raise ValueError("t_forward must be >= 1")
        if self.eps_elastic < 0:
            raise ValueError("eps_elastic must be >= 0")
        if self.k_agg <= 0 or self.d_agg <= 0:
            raise ValueError("k_agg and d_agg must be > 0")
        if self.level_simile < 1:
            raise ValueError("level_simile must be >= 1")


# ---------------------------------------------------------------------------
# geometry helpers
# ---------------------------------------------------------------------------

def unit_away(frm: tuple[float, float], to: tuple[float, float]) -> tuple[float, float]:
    """Unit vector pointing from ``to`` toward ``frm`` (i.e. away from ``to``);
    falls back to (+1, 0) when the two points coincide."""
    dx, dy = frm[0] - to[0], frm[1] - to[1]
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        return FALLBACK_DIRECTION
    return (dx / norm, dy / norm)


def unit_toward(frm: tuple[float, float], to: tuple[float, float]) -> tuple[float, float]:
    return unit_away(to, frm)


def centroid(positions: Sequence[tuple[float, float]]) -> tuple[float, float]:
    n = len(positions)
    return (sum(p[0] for p in positions) / n, sum(p[1] for p in positions) / n)


def distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


# ---------------------------------------------------------------------------
# avoid / merge
# ---------------------------------------------------------------------------

class MergeDecision(Enum):
    AVOID = "avoid"
    MERGE = "merge"


def avoid_or_merge(p: Perception, other: FDTag, tree: OntologyTree,
                   params: BehaviorParams) -> MergeDecision:
    """Merge when the two tags are simile at the configured level, avoid
    otherwise."""
    if is_simile_at_level(p.self_tag, other, params.level_simile, tree):
        return MergeDecision.MERGE
    return MergeDecision.AVOID


def first_level_not_in_ontology(other: FDTag, tree: OntologyTree) -> Optional[int]:
    """First level k in 1..depth at which ``other`` is not resolvable."""
    for k in range(1, tree.depth + 1):
        if not is_in_ontology(other, k, tree):
            return k
    return None


def first_level_in_ontology(other: FDTag, tree: OntologyTree) -> Optional[int]:
    """First level k in 1..depth at which ``other`` is resolvable.

    Exact complement of :func:`first_level_not_in_ontology` at every level.
    """
    for k in range(1, tree.depth + 1):
        if is_in_ontology(other, k, tree):
            return k
    return None


def avoid_everything_else(p: Perception, other: FDTag,
                          tree: OntologyTree) -> BehaviorCommand:
    """Scan levels 1..depth; on the first level where the other tag is not
    resolvable, move directly away from it.  A tag resolvable at every
    level needs no avoidance."""
    if first_level_not_in_ontology(other, tree) is None:
        return STOP
    return go(unit_away(p.self_tag.position, other.position))


def merge_everything_else(p: Perception, other: FDTag,
                          tree: OntologyTree) -> BehaviorCommand:
    """Scan levels 1..depth; on the first level where the other tag is
    resolvable, link to it.  A tag resolvable at no level is ignored."""
    if first_level_in_ontology(other, tree) is None:
        return STOP
    return link(other.id)


# ---------------------------------------------------------------------------
# dispersion / aggregation
# ---------------------------------------------------------------------------

def disperse(p: Perception, params: BehaviorParams) -> BehaviorCommand:
    """Move away from crowding; the engine sustains the move t_forward ticks.

    Exactly one neighbor inside personal space: back directly away from it
    (this outranks the crowd rule, so the closest pair always separates
    along its own axis).  Otherwise two or more sensed neighbors: move away
    from their centroid.  Otherwise: stop.
    """
    in_personal = [nb for nb in p.neighbors if nb.distance <= params.r_p]
    if len(in_personal) == 1:
        return go(unit_away(p.self_tag.position, in_personal[0].tag.position))
    if len(p.neighbors) >= 2:
        c = centroid([nb.tag.position for nb in p.neighbors])
        return go(unit_away(p.self_tag.position, c))
    return STOP


def aggregate(p: Perception, params: BehaviorParams) -> BehaviorCommand:
    """Move toward the local centroid until within half the target diameter."""
    if not p.neighbors:
        return STOP
    c = centroid([nb.tag.position for nb in p.neighbors])
    if distance(p.self_tag.position, c) > params.d_agg / 2:
        return go(unit_toward(p.self_tag.position, c))
    return STOP


# ---------------------------------------------------------------------------
# goal seeking
# ---------------------------------------------------------------------------

def goal_seek(p: Perception, params: BehaviorParams) -> BehaviorCommand:
    """Greedy straight-line pursuit; link once inside personal space of the
    goal (the engine then marks the agent stopped)."""
    if p.goal is None:
        raise ValueError("goal_seek requires a goal tag")
    if distance(p.self_tag.position, p.goal.position) <= params.r_p:
        return link(p.goal.id)
    return go(unit_toward(p.self_tag.position, p.goal.position))


# ---------------------------------------------------------------------------
# flocking
# ---------------------------------------------------------------------------

def _offender(p: Perception, tree: OntologyTree,
              params: BehaviorParams) -> Optional[Neighbor]:
    """Nearest neighbor inside personal space that is elastically or
    semantically incompatible; ties broken by lower id."""
    best: Optional[Neighbor] = None
    for nb in p.neighbors:
        if nb.distance > params.r_p:
            continue
        incompatible = (
            abs(nb.tag.elasticity - p.self_tag.elasticity) > params.eps_elastic
            or avoid_or_merge(p, nb.tag, tree, params) is MergeDecision.AVOID
        )
        if not incompatible:
            continue
        if best is None or (nb.distance, nb.tag.id) < (best.distance, best.tag.id):
            best = nb
    return best


def flock(p: Perception, tree: OntologyTree, params: BehaviorParams) -> BehaviorCommand:
    """Avoidance-first combination of avoidance and aggregation.

    Any incompatible neighbor inside personal space wins outright and is
    avoided.  Otherwise the agent aggregates toward the centroid of its
    same-elasticity neighbors, with displacement min(step, k_agg * distance)
    so pull strength is proportional to how far the group has drifted.
    Flocking never links; the engine forms links from proximity.
    """
    offender = _offender(p, tree, params)
    if offender is not None:
        return go(unit_away(p.self_tag.position, offender.tag.position))
    peers = [
        nb for nb in p.neighbors
        if abs(nb.tag.elasticity - p.self_tag.elasticity) <= params.eps_elastic
    ]
    if not peers:
        return STOP
    c = centroid([nb.tag.position for nb in peers])
    d = distance(p.self_tag.position, c)
    magnitude = min(params.step, params.k_agg * d)
    return go(unit_toward(p.self_tag.position, c), magnitude=magnitude)

"""Deterministic synchronous discrete-time swarm engine.

One tick: every agent perceives the pre-step world, its behavior (or the
compound controller) produces a command, and all commands are applied in
agent-id order.  No agent's command ever depends on another agent's move in
the same tick, so evaluation order is irrelevant and replays are bit-exact.

The scenario's goal tag, when present, is a stationary pseudo-agent: it is
visible in perceptions and accepts unlimited links, but it is never
evaluated, never moves, and is excluded from trajectory rows.
"""

from __future__ import annotations

import csv
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .behaviors import (
    BehaviorCommand,
    BehaviorParams,
    CommandKind,
    Neighbor,
    Perception,
    STOP,
    aggregate,
    disperse,
    flock,
    go,
    goal_seek,
    link,
    unit_away,
)
from .core_model import FDTag, FormalContext, OntologyTree, UnknownConceptError


class ScenarioError(ValueError):
    """Raised for invalid scenario configuration."""


class SimulationFinishedError(RuntimeError):
    """Raised when stepping past max_ticks."""


class Behavior(Enum):
    DISPERSE = "disperse"
    AGGREGATE = "aggregate"
    GOAL_SEEK = "goal_seek"
    FLOCK = "flock"
    COMPOUND = "compound"


class Phase(Enum):
    ACTIVE = "active"      # running a plain (non-compound) behavior
    DISPERSE = "disperse"  # compound: spreading out, looking for peers
    SEEK = "seek"          # compound: heading for the goal
    LINKED = "linked"      # linked at the goal; permanently stopped


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgentSpec:
    position: tuple[float, float]
    concept_id: Optional[str] = None
    elasticity: Optional[float] = None


@dataclass(frozen=True)
class UniformRandomInit:
    seed: int


@dataclass(frozen=True)
class ExplicitInit:
    agents: tuple[AgentSpec, ...]
    links: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class GoalSpec:
    position: tuple[float, float]
    concept_id: Optional[str] = None
    elasticity: Optional[float] = None


@dataclass(frozen=True)
class ScenarioConfig:
    n_agents: int
    behavior: Behavior
    params: BehaviorParams = field(default_factory=BehaviorParams)
    ontology_path: Optional[str] = None
    goal_spec: Optional[GoalSpec] = None
    init: Union[UniformRandomInit, ExplicitInit] = UniformRandomInit(seed=0)
    max_ticks: int = 500
    dt_seconds: float = 1.0
    quiescence_window: int = 10
    seek_forever: bool = True
    default_concept: Optional[str] = None
    default_elasticity: float = 1.0
    topic: str = "sim"

    def __post_init__(self):
        if self.n_agents < 1:
            raise ScenarioError("n_agents must be >= 1")
        if self.max_ticks < 1:
            raise ScenarioError("max_ticks must be >= 1")
        if self.dt_seconds <= 0:
            raise ScenarioError("dt_seconds must be > 0")
        if self.quiescence_window < 1:
            raise ScenarioError("quiescence_window must be >= 1")
        if self.behavior in (Behavior.GOAL_SEEK, Behavior.COMPOUND) and self.goal_spec is None:
            raise ScenarioError(f"{self.behavior.value} scenarios require a goal")
        if isinstance(self.init, ExplicitInit) and len(self.init.agents) != self.n_agents:
            raise ScenarioError("explicit init must list exactly n_agents agents")


def load_scenario(path, seed_override: Optional[int] = None,
                  max_ticks_override: Optional[int] = None) -> ScenarioConfig:
    """Parse a TOML scenario file (see the bundled scenarios/ for the schema).

    Relative ontology paths resolve against the scenario file's directory.
    """
    import os

    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"invalid scenario file {path}: {exc}") from exc

    try:
        sc = doc["scenario"]
        behavior = Behavior(sc["behavior"])
        n_agents = int(sc["n_agents"])
    except (KeyError, ValueError) as exc:
        raise ScenarioError(f"bad [scenario] section in {path}: {exc}") from exc

    params = BehaviorParams(**doc.get("params", {}))

    ontology = sc.get("ontology")
    if ontology is not None and not os.path.isabs(ontology):
        ontology = os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(path)), ontology))

    goal_spec = None
    if "goal" in doc:
        g = doc["goal"]
        goal_spec = GoalSpec(
            position=tuple(g["position"]),
            concept_id=g.get("concept"),
            elasticity=g.get("elasticity"),
        )

    init_doc = doc.get("init", {"kind": "uniform_random"})
    kind = init_doc.get("kind", "uniform_random")
    if kind == "uniform_random":
        seed = int(init_doc.get("seed", sc.get("seed", 0)))
        if seed_override is not None:
            seed = seed_override
        init: Union[UniformRandomInit, ExplicitInit] = UniformRandomInit(seed=seed)
    elif kind == "explicit":
        agents = tuple(
            AgentSpec(
                position=tuple(a["position"]),
                concept_id=a.get("concept"),
                elasticity=a.get("elasticity"),
            )
            for a in init_doc.get("agents", [])
        )
        links = tuple((int(a), int(b)) for a, b in init_doc.get("links", []))
        init = ExplicitInit(agents=agents, links=links)
    else:
        raise ScenarioError(f"unknown init kind {kind!r}")

    return ScenarioConfig(
        n_agents=n_agents,
        behavior=behavior,
        params=params,
        ontology_path=ontology,
        goal_spec=goal_spec,
        init=init,
        max_ticks=int(max_ticks_override if max_ticks_override is not None
                      else sc.get("max_ticks", 500)),
        dt_seconds=float(sc.get("dt_seconds", 1.0)),
        quiescence_window=int(sc.get("quiescence_window", 10)),
        seek_forever=bool(sc.get("seek_forever", True)),
        default_concept=sc.get("default_concept"),
        default_elasticity=float(sc.get("default_elasticity", 1.0)),
        topic=sc.get("topic", "sim"),
    )


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgentRuntime:
    """One agent plus its controller bookkeeping (phase, sustained-forward
    latch left over from a disperse command)."""

    tag: FDTag
    phase: Phase
    latch_direction: Optional[tuple[float, float]] = None
    latch_left: int = 0


# per-agent, per-tick record: position, phase, command kind, link target
AgentFrame = tuple[tuple[float, float], str, str, Optional[int]]


@dataclass(frozen=True)
class SimState:
    tick: int
    agents: tuple[AgentRuntime, ...]
    goal: Optional[FDTag]
    links: frozenset[tuple[int, int]]
    link_events: tuple[tuple[int, int, int], ...]  # (tick, id_a, id_b), a < b
    rng_state: Optional[dict]
    trajectory: tuple[tuple[AgentFrame, ...], ...]
    quiescent_ticks: int = 0

    def positions(self) -> list[tuple[float, float]]:
        return [rt.tag.position for rt in self.agents]


@dataclass(frozen=True)
class FlockReport:
    coherent: bool
    diameter_series: tuple[float, ...]
    diverged_ids: tuple[int, ...]

    def to_json_dict(self) -> dict:
        return {
            "coherent": self.coherent,
            "diverged_ids": list(self.diverged_ids),
            "diameter_series": [float(f"{d:.9g}") for d in self.diameter_series],
        }


def _default_concept(tree: OntologyTree) -> str:
    """First maximum-depth node in pre-order: a fully resolvable concept."""
    d = tree.depth
    for node in tree.iter_preorder():
        if tree.depth_of(node) == d:
            return node
    return tree.root


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else (1.0 if v > 1.0 else v)


def _make_agent_tag(i: int, position, concept_id: str, elasticity: float,
                    topic: str, tree: OntologyTree) -> FDTag:
    if concept_id not in tree:
        raise UnknownConceptError(concept_id)
    x, y = float(position[0]), float(position[1])
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ScenarioError(f"agent {i} position {position} outside the unit plane")
    ctx = FormalContext(topic=topic, descriptors=(f"agent-{i}",), concept_id=concept_id)
    return FDTag(
        id=i,
        context=ctx,
        exposition=y,  # birth rule: e-coordinate is the exposition
        resource=f"sim://agent/{i}",
        elasticity=elasticity,
        position=(x, y),
    )


def init_sim(cfg: ScenarioConfig, tree: OntologyTree) -> SimState:
    """Place agents, the optional goal, and the initial trajectory frame."""
    concept_default = cfg.default_concept or _default_concept(tree)
    rng_state = None

    if isinstance(cfg.init, UniformRandomInit):
        rng = np.random.default_rng(cfg.init.seed)
        positions = rng.random((cfg.n_agents, 2))
        rng_state = rng.bit_generator.state
        specs = [AgentSpec(position=(float(x), float(y))) for x, y in positions]
        initial_links: tuple[tuple[int, int], ...] = ()
    else:
        specs = list(cfg.init.agents)
        initial_links = cfg.init.links

    agents = []
    initial_phase = Phase.DISPERSE if cfg.behavior is Behavior.COMPOUND else Phase.ACTIVE
    for i, spec in enumerate(specs):
        tag = _make_agent_tag(
            i, spec.position,
            spec.concept_id or concept_default,
            spec.elasticity if spec.elasticity is not None else cfg.default_elasticity,
            cfg.topic, tree,
        )
        agents.append(AgentRuntime(tag=tag, phase=initial_phase))

    goal = None
    if cfg.goal_spec is not None:
        g = cfg.goal_spec
        goal = _make_agent_tag(
            cfg.n_agents, g.position,
            g.concept_id or concept_default,
            g.elasticity if g.elasticity is not None else cfg.default_elasticity,
            cfg.topic, tree,
        )

    links = set()
    link_events = []
    first_partner: dict[int, int] = {}
    for a, b in initial_links:
        if a == b or not (0 <= a < cfg.n_agents) or not (0 <= b < cfg.n_agents):
            raise ScenarioError(f"invalid initial link ({a}, {b})")
        pair = (min(a, b), max(a, b))
        if pair not in links:
            links.add(pair)
            link_events.append((0, pair[0], pair[1]))
            first_partner.setdefault(pair[0], pair[1])
            first_partner.setdefault(pair[1], pair[0])
    for i, partner in first_partner.items():
        agents[i] = replace(agents[i], tag=replace(agents[i].tag, linked_to=partner))

    frame0 = tuple(
        (rt.tag.position, rt.phase.value, "", None) for rt in agents
    )
    return SimState(
        tick=0,
        agents=tuple(agents),
        goal=goal,
        links=frozenset(links),
        link_events=tuple(link_events),
        rng_state=rng_state,
        trajectory=(frame0,),
    )


# ---------------------------------------------------------------------------
# perception
# ---------------------------------------------------------------------------


def sense(state: SimState, agent_id: int, params: BehaviorParams) -> Perception:
    """Everything within the sensing radius (closed ball), plus the goal.

    The goal tag is included among the neighbors when in range and is also
    attached as the perception's goal.
    """
    if not 0 <= agent_id < len(state.agents):
        raise KeyError(f"unknown agent id: {agent_id}")
    me = state.agents[agent_id].tag
    neighbors = []
    for rt in state.agents:
        if rt.tag.id == agent_id:
            continue
        d = math.dist(me.position, rt.tag.position)
        if d <= params.r_s:
            neighbors.append(Neighbor(tag=rt.tag, distance=d))
    if state.goal is not None:
        d = math.dist(me.position, state.goal.position)
        if d <= params.r_s:
            neighbors.append(Neighbor(tag=state.goal, distance=d))
    return Perception(self_tag=me, neighbors=tuple(neighbors), goal=state.goal)


# ---------------------------------------------------------------------------
# compound controller
# ---------------------------------------------------------------------------


def _same_elasticity(a: FDTag, b: FDTag, params: BehaviorParams) -> bool:
    return abs(a.elasticity - b.elasticity) <= params.eps_elastic


def compound_controller(
    phase: Phase,
    p: Perception,
    tree: OntologyTree,
    params: BehaviorParams,
    linked_partners: frozenset[int],
    seek_forever: bool = True,
) -> tuple[BehaviorCommand, Phase]:
    """Matching-task state machine for one agent.

    DISPERSE: spread out until any same-elasticity neighbor is sensed, then
    switch to SEEK.  SEEK: head for the goal, but a differing-elasticity
    neighbor inside personal space is avoided, and an unlinked
    same-elasticity neighbor inside personal space is linked (the nearest
    one wins; peer links do not stop the search unless seek_forever is off).
    LINKED (at the goal) stops permanently.
    """
    if phase is Phase.LINKED:
        return STOP, Phase.LINKED

    if phase is Phase.DISPERSE:
        if not any(_same_elasticity(p.self_tag, nb.tag, params) for nb in p.neighbors):
            return disperse(p, params), Phase.DISPERSE
        phase = Phase.SEEK  # a link connection was found; start goal-seeking

    if not seek_forever and linked_partners:
        return STOP, Phase.SEEK

    offender = None
    peer = None
    for nb in p.neighbors:
        if nb.distance > params.r_p:
            continue
        key = (nb.distance, nb.tag.id)
        if not _same_elasticity(p.self_tag, nb.tag, params):
            if offender is None or key < (offender.distance, offender.tag.id):
                offender = nb
        elif nb.tag.id not in linked_partners:
            if peer is None or key < (peer.distance, peer.tag.id):
                peer = nb
    if offender is not None:
        return go(unit_away(p.self_tag.position, offender.tag.position)), Phase.SEEK
    if peer is not None:
        return link(peer.tag.id), Phase.SEEK
    return goal_seek(p, params), Phase.SEEK


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------


def _decide(state: SimState, cfg: ScenarioConfig, tree: OntologyTree,
            i: int, partners: dict[int, frozenset]) -> tuple[
                BehaviorCommand, Phase, Optional[tuple[float, float]], int]:
    """Compute one agent's command against the pre-step state.

    Returns (command, next phase, latch direction, latch ticks left)."""
    rt = state.agents[i]
    params = cfg.params

    if rt.phase is Phase.LINKED:
        return STOP, Phase.LINKED, None, 0

    # sustained forward motion from an earlier disperse command; compound
    # agents re-check the SEEK transition every tick before continuing
    if rt.latch_left > 0 and rt.phase in (Phase.ACTIVE, Phase.DISPERSE):
        if cfg.behavior is Behavior.DISPERSE:
            return (go(rt.latch_direction), Phase.ACTIVE,
                    rt.latch_direction, rt.latch_left - 1)
        p = sense(state, i, params)
        if not any(_same_elasticity(rt.tag, nb.tag, params) for nb in p.neighbors):
            return (go(rt.latch_direction), Phase.DISPERSE,
                    rt.latch_direction, rt.latch_left - 1)
        # fall through: transition interrupts the latch

    p = sense(state, i, params)

    if cfg.behavior is Behavior.DISPERSE:
        cmd = disperse(p, params)
        if cmd.kind is CommandKind.GO:
            return cmd, Phase.ACTIVE, cmd.direction, params.t_forward - 1
        return cmd, Phase.ACTIVE, None, 0
    if cfg.behavior is Behavior.AGGREGATE:
        return aggregate(p, params), Phase.ACTIVE, None, 0
    if cfg.behavior is Behavior.GOAL_SEEK:
        return goal_seek(p, params), Phase.ACTIVE, None, 0
    if cfg.behavior is Behavior.FLOCK:
        return flock(p, tree, params), Phase.ACTIVE, None, 0

    cmd, next_phase = compound_controller(
        rt.phase, p, tree, params, partners.get(i, frozenset()), cfg.seek_forever
    )
    if next_phase is Phase.DISPERSE and cmd.kind is CommandKind.GO:
        return cmd, next_phase, cmd.direction, params.t_forward - 1
    return cmd, next_phase, None, 0


def _link_partners(state: SimState) -> dict[int, frozenset]:
    acc: dict[int, set] = {}
    for a, b in state.links:
        acc.setdefault(a, set()).add(b)
        acc.setdefault(b, set()).add(a)
    return {k: frozenset(v) for k, v in acc.items()}


def step(state: SimState, cfg: ScenarioConfig, tree: OntologyTree,
         eval_order: Optional[Sequence[int]] = None, workers: int = 1) -> SimState:
    """Advance one tick: perceive, decide, apply in agent-id order.

    ``eval_order`` only reorders decision computation; results are
    order-independent because every decision reads the pre-step state.
    """
    if state.tick >= cfg.max_ticks:
        raise SimulationFinishedError(f"simulation already at max_ticks={cfg.max_ticks}")

    n = len(state.agents)
    order = list(eval_order) if eval_order is not None else list(range(n))
    if sorted(order) != list(range(n)):
        raise ValueError("eval_order must be a permutation of the agent ids")

    partners = _link_partners(state)
    decisions: list = [None] * n
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for i, dec in zip(order, pool.map(
                    lambda j: _decide(state, cfg, tree, j, partners), order)):
                decisions[i] = dec
    else:
        for i in order:
            decisions[i] = _decide(state, cfg, tree, i, partners)

    # apply in agent-id order
    new_tick = state.tick + 1
    goal_id = state.goal.id if state.goal is not None else None
    links = set(state.links)
    events = list(state.link_events)
    new_agents = []
    frame = []
    all_stop = True
    for i in range(n):
        cmd, phase, latch_dir, latch_left = decisions[i]
        rt = state.agents[i]
        tag = rt.tag
        pos = tag.position
        target: Optional[int] = None
        if cmd.kind is CommandKind.GO:
            all_stop = False
            mag = cmd.magnitude if cmd.magnitude is not None else cfg.params.step
            pos = (_clamp01(pos[0] + cmd.direction[0] * mag),
                   _clamp01(pos[1] + cmd.direction[1] * mag))
        elif cmd.kind is CommandKind.LINK:
            all_stop = False
            target = cmd.target
            pair = (min(i, target), max(i, target))
            if pair not in links:
                links.add(pair)
                events.append((new_tick, pair[0], pair[1]))
            if tag.linked_to is None:
                tag = replace(tag, linked_to=target)
            if target == goal_id:
                phase = Phase.LINKED
                latch_dir, latch_left = None, 0
        if pos != tag.position:
            tag = replace(tag, position=pos)
        new_agents.append(AgentRuntime(tag=tag, phase=phase,
                                       latch_direction=latch_dir,
                                       latch_left=latch_left))
        frame.append((pos, phase.value, cmd.kind.value, target))

    return SimState(
        tick=new_tick,
        agents=tuple(new_agents),
        goal=state.goal,
        links=frozenset(links),
        link_events=tuple(events),
        rng_state=state.rng_state,
        trajectory=state.trajectory + (tuple(frame),),
        quiescent_ticks=state.quiescent_ticks + 1 if all_stop else 0,
    )


def run(cfg: ScenarioConfig, tree: OntologyTree,
        workers: int = 1) -> tuple[SimState, Optional[FlockReport]]:
    """Run to max_ticks or quiescence (every agent stopped for the whole
    quiescence window).  Flock scenarios also get a coherence report."""
    state = init_sim(cfg, tree)
    while state.tick < cfg.max_ticks and state.quiescent_ticks < cfg.quiescence_window:
        state = step(state, cfg, tree, workers=workers)
    report = flock_report(state, cfg) if cfg.behavior is Behavior.FLOCK else None
    return state, report


# ---------------------------------------------------------------------------
# flock analysis
# ---------------------------------------------------------------------------

def _diameter(points: list[tuple[float, float]]) -> float:
    best = 0.0
    for i in range(len(points)):
        for j in range(i + 1, len(points)):
            d = math.dist(points[i], points[j])
            if d > best:
                best = d
    return best


def flock_report(state: SimState, cfg: ScenarioConfig) -> FlockReport:
    """Classify divergence against each agent's elasticity peer group.

    An agent is divergent when it has no elasticity peers at all, or when
    its distance to its peers' centroid exceeds 2*r_s at every tick of the
    final quarter of the run.  The diameter series tracks the largest
    same-elasticity group.
    """
    params = cfg.params
    n = len(state.agents)
    elast = [rt.tag.elasticity for rt in state.agents]
    peers = {
        i: [j for j in range(n)
            if j != i and abs(elast[i] - elast[j]) <= params.eps_elastic]
        for i in range(n)
    }

    # largest same-elasticity group: connected components of the peer relation
    seen: set[int] = set()
    groups = []
    for i in range(n):
        if i in seen:
            continue
        comp, stack = [], [i]
        seen.add(i)
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in peers[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        groups.append(sorted(comp))
    reference = max(groups, key=lambda g: (len(g), -g[0]))

    frames = state.trajectory
    diameter_series = tuple(
        _diameter([frame[i][0] for i in reference]) for frame in frames
    )

    final_tick = state.tick
    window_start = math.ceil(0.75 * final_tick)
    threshold = 2 * params.r_s
    diverged = []
    for i in range(n):
        if not peers[i]:
            diverged.append(i)
            continue
        away_all = True
        for frame in frames[window_start:]:
            cx = sum(frame[j][0][0] for j in peers[i]) / len(peers[i])
            cy = sum(frame[j][0][1] for j in peers[i]) / len(peers[i])
            if math.dist(frame[i][0], (cx, cy)) <= threshold:
                away_all = False
                break
        if away_all:
            diverged.append(i)

    return FlockReport(
        coherent=not diverged,
        diameter_series=diameter_series,
        diverged_ids=tuple(diverged),
    )


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return f"{v:.9g}"


def export_trajectory(state: SimState, path) -> None:
    """One CSV row per (tick, agent); floats carry 9 significant digits.

    Byte-identical across replays of the same seed."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tick", "agent_id", "c_coord", "e_coord", "phase",
                    "command", "link_target"])
        for tick, frame in enumerate(state.trajectory):
            for agent_id, (pos, phase, command, target) in enumerate(frame):
                w.writerow([tick, agent_id, _fmt(pos[0]), _fmt(pos[1]),
                            phase, command, "" if target is None else target])


def export_link_events(state: SimState, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tick", "id_a", "id_b"])
        for tick, a, b in sorted(state.link_events):
            w.writerow([tick, a, b])

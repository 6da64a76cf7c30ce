"""folkswarm: deterministic tag-swarm simulation and acquaintance-network analysis."""

__version__ = "0.1.0"

from .core_model import (
    FDEvent,
    FDTag,
    FormalContext,
    OntologyTree,
    RelationX,
    TimeDirection,
    classify_time_direction,
    context_coordinate,
    is_in_ontology,
    is_simile_at_level,
    lca_depth,
    load_ontology,
    make_tag,
    web_slice,
)

__all__ = [
    "FDEvent",
    "FDTag",
    "FormalContext",
    "OntologyTree",
    "RelationX",
    "TimeDirection",
    "classify_time_direction",
    "context_coordinate",
    "is_in_ontology",
    "is_simile_at_level",
    "lca_depth",
    "load_ontology",
    "make_tag",
    "web_slice",
    "__version__",
]

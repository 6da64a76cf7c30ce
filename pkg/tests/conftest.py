import numpy as np
import pytest

from folkswarm.core_model import FDTag, FormalContext, OntologyTree


def build_tree(nested: dict) -> OntologyTree:
    return OntologyTree.from_nested(nested)


def make_test_tag(tag_id, concept_id, position=(0.5, 0.5), elasticity=1.0,
                  exposition=0.5, resource=None, topic="t"):
    ctx = FormalContext(topic=topic, descriptors=(f"d{tag_id}",), concept_id=concept_id)
    return FDTag(
        id=tag_id,
        context=ctx,
        exposition=exposition,
        resource=resource if resource is not None else f"https://ex.org/{tag_id}",
        elasticity=elasticity,
        position=position,
    )


@pytest.fixture
def chain4():
    # root -> a -> b -> c, depth 3
    return build_tree(
        {"id": "root", "label": "root", "children": [
            {"id": "a", "label": "a", "children": [
                {"id": "b", "label": "b", "children": [
                    {"id": "c", "label": "c", "children": []}]}]}]}
    )


@pytest.fixture
def depth4_tree():
    # one path to depth 4 plus side branches at depths 1 and 2
    return build_tree(
        {"id": "root", "label": "root", "children": [
            {"id": "l1", "label": "l1", "children": [
                {"id": "l2", "label": "l2", "children": [
                    {"id": "l3", "label": "l3", "children": [
                        {"id": "l4", "label": "l4", "children": []}]},
                    {"id": "l3b", "label": "l3b", "children": []}]},
                {"id": "l2b", "label": "l2b", "children": []}]},
            {"id": "r1", "label": "r1", "children": [
                {"id": "r2", "label": "r2", "children": []}]}]}
    )


def tree15() -> OntologyTree:
    """4 levels below the root, 15 nodes total: 1 + 2 + 4 + 4 + 4."""
    t = OntologyTree("n0", "n0")
    t.add_node("n1", "n1", "n0")
    t.add_node("n2", "n2", "n0")
    for i, parent in enumerate(["n1", "n1", "n2", "n2"]):
        t.add_node(f"n1{i}", f"n1{i}", parent)
    for i, parent in enumerate(["n10", "n11", "n12", "n13"]):
        t.add_node(f"n2{i}", f"n2{i}", parent)
    for i, parent in enumerate(["n20", "n21", "n22", "n23"]):
        t.add_node(f"n3{i}", f"n3{i}", parent)
    assert len(t) == 15 and t.depth == 4
    return t


@pytest.fixture(name="tree15")
def tree15_fixture():
    return tree15()


def random_tree(rng: np.random.Generator, n_nodes: int) -> OntologyTree:
    """Random tree with stable ids n0..n{k}; parents drawn uniformly."""
    t = OntologyTree("n0", "n0")
    for i in range(1, n_nodes):
        parent = f"n{rng.integers(0, i)}"
        t.add_node(f"n{i}", f"n{i}", parent)
    return t

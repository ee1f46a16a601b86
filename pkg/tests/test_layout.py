from __future__ import annotations

import random

import pytest

from figsmith.errors import InvariantError, MalformedMarkupError, UnsupportedElementError
from figsmith.images import png_bytes
from figsmith.layout import (
    Edge,
    LayoutGraph,
    Node,
    StyleDescriptor,
    extract_labels,
    grid_layout,
    measure,
    parse_svg,
    rasterize,
    serialize_svg,
)

from conftest import random_graph


def _node(node_id="a", label="A", shape="rect", frame=(0.0, 0.0, 10.0, 10.0), fill="#aabbcc", group=None):
    return Node(id=node_id, label=label, shape=shape, frame=frame, fill=fill, group_id=group)


def test_serialize_empty_graph():
    markup = serialize_svg(LayoutGraph(canvas=(100.0, 50.0)))
    assert markup.startswith("<svg ")
    assert 'width="100.00"' in markup and 'height="50.00"' in markup
    assert "<g class" not in markup
    assert parse_svg(markup) == LayoutGraph(canvas=(100.0, 50.0))


def test_serialize_single_rect_node():
    graph = LayoutGraph(nodes=(_node(),), canvas=(100.0, 100.0))
    markup = serialize_svg(graph)
    assert markup.count("<rect ") == 1
    assert ">A</text>" in markup
    assert 'data-id="a"' in markup


def test_serialize_edge_schema():
    # documented element schema, checked by hand: one path with an
    # arrowhead marker, bound to both node ids via data attributes
    graph = LayoutGraph(
        nodes=(_node("a", frame=(0.0, 0.0, 10.0, 10.0)), _node("b", "B", frame=(30.0, 0.0, 10.0, 10.0))),
        edges=(Edge("a", "b"),),
        canvas=(100.0, 100.0),
    )
    markup = serialize_svg(graph)
    assert markup.count("<path ") == 1
    assert 'marker-end="url(#arrowhead)"' in markup
    assert 'data-source="a"' in markup and 'data-target="b"' in markup


def test_roundtrip_small_random_graph():
    graph = random_graph(random.Random(7), max_nodes=5)
    assert parse_svg(serialize_svg(graph)) == graph


@pytest.mark.parametrize("seed", range(25))
def test_roundtrip_property(seed):
    graph = random_graph(random.Random(seed))
    parsed = parse_svg(serialize_svg(graph))
    assert parsed == graph
    assert extract_labels(parsed) == extract_labels(graph)


def test_unsupported_element_rejected():
    markup = (
        '<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10">'
        "<filter><feGaussianBlur/></filter></svg>"
    )
    with pytest.raises(UnsupportedElementError):
        parse_svg(markup)


def test_handwritten_minimal_node():
    # expected graph constructed by hand from the documented schema
    markup = (
        '<svg xmlns="http://www.w3.org/2000/svg" width="50.00" height="40.00">'
        '<g class="node" data-id="only" data-shape="rect">'
        '<rect x="5.00" y="5.00" width="20.00" height="10.00" fill="#112233"/>'
        "<text>Hi</text></g></svg>"
    )
    graph = parse_svg(markup)
    assert graph == LayoutGraph(
        nodes=(Node("only", "Hi", "rect", (5.0, 5.0, 20.0, 10.0), "#112233"),),
        canvas=(50.0, 40.0),
    )


def test_malformed_markup_rejected():
    with pytest.raises(MalformedMarkupError):
        parse_svg("<svg><unclosed")
    with pytest.raises(MalformedMarkupError):
        parse_svg('<svg xmlns="http://www.w3.org/2000/svg" width="10" height="10"><g class="node"/></svg>')


def test_rasterize_empty_canvas():
    markup = serialize_svg(LayoutGraph(canvas=(100.0, 50.0)))
    image = rasterize(markup, 1.0)
    assert image.size == (100, 50)
    assert image.tobytes() == b"\xff\xff\xff" * (100 * 50)


def test_rasterize_deterministic():
    graph = random_graph(random.Random(3), max_nodes=6)
    markup = serialize_svg(graph)
    assert png_bytes(rasterize(markup, 1.0)) == png_bytes(rasterize(markup, 1.0))


def test_rasterize_scale_sets_dimensions():
    markup = serialize_svg(LayoutGraph(canvas=(100.0, 50.0)))
    assert rasterize(markup, 2.0).size == (200, 100)
    assert rasterize(markup, 0.5).size == (50, 25)


def test_rasterize_full_black_rect():
    graph = LayoutGraph(
        nodes=(_node(frame=(0.0, 0.0, 100.0, 50.0), fill="#000000", label=""),),
        canvas=(100.0, 50.0),
    )
    image = rasterize(serialize_svg(graph), 1.0)
    for x in (5, 50, 94):
        for y in (5, 25, 44):
            assert image.getpixel((x, y)) == (0, 0, 0)


def _overlap_oracle(a, b):
    # independent rectangle-intersection computation
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    w = min(ax + aw, bx + bw) - max(ax, bx)
    h = min(ay + ah, by + bh) - max(ay, by)
    return max(0.0, w) * max(0.0, h) if (w > 0 and h > 0) else 0.0


def test_measure_overlap_examples():
    disjoint = LayoutGraph(
        nodes=(_node("a", frame=(0.0, 0.0, 1.0, 1.0)), _node("b", frame=(5.0, 5.0, 1.0, 1.0))),
        canvas=(10.0, 10.0),
    )
    assert measure(disjoint).overlap_area == 0.0

    identical = LayoutGraph(
        nodes=(_node("a", frame=(0.0, 0.0, 1.0, 1.0)), _node("b", frame=(0.0, 0.0, 1.0, 1.0))),
        canvas=(10.0, 10.0),
    )
    assert measure(identical).overlap_area == pytest.approx(1.0)

    shifted = LayoutGraph(
        nodes=(_node("a", frame=(0.0, 0.0, 2.0, 2.0)), _node("b", frame=(1.0, 1.0, 2.0, 2.0))),
        canvas=(10.0, 10.0),
    )
    assert measure(shifted).overlap_area == pytest.approx(_overlap_oracle((0, 0, 2, 2), (1, 1, 2, 2)))
    assert measure(shifted).overlap_area == pytest.approx(1.0)


def test_overlap_invariant_under_order_and_relabeling():
    rng = random.Random(11)
    for _ in range(20):
        graph = random_graph(rng, max_nodes=6)
        overlap = measure(graph).overlap_area
        shuffled_nodes = list(graph.nodes)
        rng.shuffle(shuffled_nodes)
        renamed = []
        mapping = {}
        for i, node in enumerate(shuffled_nodes):
            mapping[node.id] = f"z{i}"
        for node in shuffled_nodes:
            renamed.append(
                Node(
                    id=mapping[node.id],
                    label=node.label,
                    shape=node.shape,
                    frame=node.frame,
                    fill=node.fill,
                    group_id=mapping.get(node.group_id) if node.group_id else None,
                )
            )
        edges = tuple(
            Edge(mapping[e.source_id], mapping[e.target_id], e.label, e.kind) for e in graph.edges
        )
        permuted = LayoutGraph(nodes=tuple(renamed), edges=edges, canvas=graph.canvas)
        assert measure(permuted).overlap_area == pytest.approx(overlap)


def test_measure_alignment_zero_when_aligned():
    graph = LayoutGraph(
        nodes=(_node("a", frame=(10.0, 10.0, 20.0, 10.0)), _node("b", frame=(10.0, 40.0, 20.0, 10.0))),
        canvas=(100.0, 100.0),
    )
    assert measure(graph).alignment_deviation == 0.0


def test_measure_balance_bounds():
    centered = LayoutGraph(nodes=(_node("a", frame=(45.0, 45.0, 10.0, 10.0)),), canvas=(100.0, 100.0))
    assert measure(centered).balance == pytest.approx(1.0)
    cornered = LayoutGraph(nodes=(_node("a", frame=(0.0, 0.0, 2.0, 2.0)),), canvas=(100.0, 100.0))
    assert 0.0 <= measure(cornered).balance < 0.5
    assert measure(LayoutGraph(canvas=(10.0, 10.0))).balance == 1.0


def test_extract_labels_enumeration():
    graph = LayoutGraph(
        nodes=(_node("a", "A"), _node("b", "B", frame=(20.0, 0.0, 10.0, 10.0))),
        edges=(Edge("a", "b", "flow"),),
        canvas=(100.0, 100.0),
    )
    assert extract_labels(graph) == {"A": 1, "B": 1, "flow": 1}


def test_extract_labels_multiplicity():
    graph = LayoutGraph(
        nodes=(_node("a", "RM"), _node("b", "RM", frame=(20.0, 0.0, 10.0, 10.0))),
        canvas=(100.0, 100.0),
    )
    assert extract_labels(graph) == {"RM": 2}


def test_extract_labels_empty_and_normalized():
    assert extract_labels(LayoutGraph()) == {}
    graph = LayoutGraph(nodes=(_node("a", "  Stage   1 "),), canvas=(100.0, 100.0))
    assert extract_labels(graph) == {"Stage 1": 1}


def test_validate_rejects_bad_graphs():
    with pytest.raises(InvariantError):
        LayoutGraph(nodes=(_node("a"), _node("a")), canvas=(50.0, 50.0)).validate()
    with pytest.raises(InvariantError):
        LayoutGraph(nodes=(_node("a"),), edges=(Edge("a", "ghost"),), canvas=(50.0, 50.0)).validate()
    with pytest.raises(InvariantError):
        LayoutGraph(nodes=(_node("a", frame=(45.0, 0.0, 10.0, 10.0)),), canvas=(50.0, 50.0)).validate()
    with pytest.raises(InvariantError):  # group parent must be a group node
        LayoutGraph(
            nodes=(_node("a"), _node("b", group="a", frame=(20.0, 0.0, 5.0, 5.0))),
            canvas=(50.0, 50.0),
        ).validate()
    with pytest.raises(InvariantError):  # membership cycles
        LayoutGraph(
            nodes=(
                _node("g1", shape="group", group="g2"),
                _node("g2", shape="group", frame=(20.0, 0.0, 9.0, 9.0), group="g1"),
            ),
            canvas=(50.0, 50.0),
        ).validate()


def test_grid_layout_empty_entities_becomes_caption():
    graph = grid_layout([], [], canvas=(200.0, 100.0), caption="A single idea")
    assert len(graph.nodes) == 1
    assert graph.nodes[0].label == "A single idea"
    graph.validate()


def test_grid_layout_respects_canvas_with_jitter():
    for key in ("k1", "k2", "k3"):
        graph = grid_layout(
            [(f"e{i}", f"E{i}") for i in range(7)],
            [("e0", "e1", None)],
            canvas=(320.0, 240.0),
            jitter_key=key,
        )
        graph.validate()


def test_style_descriptor_requires_text():
    with pytest.raises(InvariantError):
        StyleDescriptor(style_text="   ")

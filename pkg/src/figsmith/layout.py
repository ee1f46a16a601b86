"""The symbolic blueprint: a directed layout graph and its SVG form.

The graph is the machine-readable plan of the figure — labeled boxes,
directed edges, optional group containers — serialized to a frozen SVG
subset (rect / ellipse / polygon / path / text / g, plus the arrowhead
marker in defs). Serialization is canonical: fixed attribute order,
coordinates printed with 2 decimals, so byte equality means graph
equality. Rasterization draws with a single embedded font and is
bit-deterministic; the produced PNG carries a machine-readable index of
every drawn string and its pixel bbox in the ``figmeta`` chunk.
"""

from __future__ import annotations

import hashlib
import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from xml.sax.saxutils import escape, quoteattr

from PIL import Image, ImageDraw, ImageFont

from .errors import InvariantError, MalformedMarkupError, UnsupportedElementError
from .images import set_figmeta

SVG_NS = "http://www.w3.org/2000/svg"
NODE_SHAPES = ("rect", "rounded", "ellipse", "diamond", "group")
EDGE_KINDS = ("arrow", "line", "dashed")
BACKGROUND = (255, 255, 255)

# muted palette for generated blueprints; render style is Stage II's job
PALETTE = ("#a6b9c8", "#c4b7ab", "#b5c4ab", "#c8b9c7", "#aebfbe", "#c9c3a6", "#b3aec9", "#c2a9a9")

_FILL_RE = re.compile(r"^#[0-9a-f]{6}$")


@dataclass(frozen=True)
class Node:
    id: str
    label: str
    shape: str
    frame: tuple[float, float, float, float]  # x, y, w, h in canvas units
    fill: str = "#a6b9c8"
    group_id: str | None = None


@dataclass(frozen=True)
class Edge:
    source_id: str
    target_id: str
    label: str | None = None
    kind: str = "arrow"


@dataclass(frozen=True)
class LayoutGraph:
    nodes: tuple[Node, ...] = ()
    edges: tuple[Edge, ...] = ()
    canvas: tuple[float, float] = (800.0, 600.0)

    def node_by_id(self) -> dict[str, Node]:
        return {node.id: node for node in self.nodes}

    def validate(self) -> None:
        """Raise InvariantError unless all graph invariants hold."""
        width, height = self.canvas
        if width <= 0 or height <= 0:
            raise InvariantError("canvas must have positive dimensions")
        by_id: dict[str, Node] = {}
        for node in self.nodes:
            if node.id in by_id:
                raise InvariantError(f"duplicate node id {node.id!r}")
            by_id[node.id] = node
            if node.shape not in NODE_SHAPES:
                raise InvariantError(f"unknown shape {node.shape!r}")
            if not _FILL_RE.match(node.fill):
                raise InvariantError(f"fill {node.fill!r} is not lowercase #rrggbb")
            if "\n" in node.label or "\r" in node.label:
                raise InvariantError(f"label of {node.id!r} contains a line break")
            x, y, w, h = node.frame
            if w <= 0 or h <= 0:
                raise InvariantError(f"node {node.id!r} has non-positive size")
            if x < 0 or y < 0 or x + w > width + 1e-9 or y + h > height + 1e-9:
                raise InvariantError(f"node {node.id!r} frame outside canvas")
        for node in self.nodes:
            if node.group_id is not None:
                parent = by_id.get(node.group_id)
                if parent is None:
                    raise InvariantError(f"node {node.id!r} references unknown group {node.group_id!r}")
                if parent.shape != "group":
                    raise InvariantError(f"group {node.group_id!r} is not a group node")
            seen = {node.id}
            cursor = node.group_id
            while cursor is not None:
                if cursor in seen:
                    raise InvariantError(f"group membership cycle at {cursor!r}")
                seen.add(cursor)
                cursor = by_id[cursor].group_id
        for edge in self.edges:
            if edge.source_id not in by_id or edge.target_id not in by_id:
                raise InvariantError(f"edge {edge.source_id!r}->{edge.target_id!r} references unknown node")
            if edge.kind not in EDGE_KINDS:
                raise InvariantError(f"unknown edge kind {edge.kind!r}")
            if edge.label is not None and ("\n" in edge.label or "\r" in edge.label):
                raise InvariantError("edge label contains a line break")


@dataclass(frozen=True)
class StyleDescriptor:
    """Free-text aesthetic instruction conditioning the renderer."""

    style_text: str = "Delicate and cute cartoon comic style, using Morandi color palette"
    palette_hint: tuple[str, ...] | None = None
    category: str = "Paper"

    def __post_init__(self):
        if not self.style_text.strip():
            raise InvariantError("style_text must be non-empty")


@dataclass(frozen=True)
class LayoutMetrics:
    overlap_area: float
    alignment_deviation: float
    balance: float


# --- serialization ---


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def serialize_svg(graph: LayoutGraph, style: StyleDescriptor | None = None) -> str:
    """Emit the canonical SVG-subset form of the graph."""
    graph.validate()
    width, height = graph.canvas
    lines = [
        f'<svg xmlns="{SVG_NS}" width={quoteattr(_fmt(width))} height={quoteattr(_fmt(height))}'
        f' viewBox="0.00 0.00 {_fmt(width)} {_fmt(height)}">',
        "  <defs>",
        '    <marker id="arrowhead" markerWidth="10" markerHeight="7" refX="9.00" refY="3.50" orient="auto">',
        '      <polygon points="0.00,0.00 10.00,3.50 0.00,7.00"/>',
        "    </marker>",
        "  </defs>",
    ]
    for node in graph.nodes:
        frame_attr = " ".join(_fmt(value) for value in node.frame)
        attrs = (
            f"data-id={quoteattr(node.id)} data-shape={quoteattr(node.shape)}"
            f" data-frame={quoteattr(frame_attr)}"
        )
        if node.group_id is not None:
            attrs += f" data-group={quoteattr(node.group_id)}"
        lines.append(f'  <g class="node" {attrs}>')
        lines.append("    " + _shape_element(node))
        if node.label:
            cx, cy = _frame_center(node.frame)
            lines.append(
                f'    <text x={quoteattr(_fmt(cx))} y={quoteattr(_fmt(cy))}'
                f' text-anchor="middle" dominant-baseline="middle">{escape(node.label)}</text>'
            )
        lines.append("  </g>")
    by_id = graph.node_by_id()
    for edge in graph.edges:
        start, end = _edge_endpoints(by_id[edge.source_id].frame, by_id[edge.target_id].frame)
        attrs = (
            f"data-source={quoteattr(edge.source_id)} data-target={quoteattr(edge.target_id)}"
            f" data-kind={quoteattr(edge.kind)}"
        )
        lines.append(f'  <g class="edge" {attrs}>')
        d = f"M {_fmt(start[0])} {_fmt(start[1])} L {_fmt(end[0])} {_fmt(end[1])}"
        marker = ' marker-end="url(#arrowhead)"' if edge.kind == "arrow" else ""
        dash = ' stroke-dasharray="6 4"' if edge.kind == "dashed" else ""
        lines.append(f'    <path d="{d}" stroke="#444444" fill="none"{dash}{marker}/>')
        if edge.label is not None:
            mx, my = (start[0] + end[0]) / 2, (start[1] + end[1]) / 2
            lines.append(
                f'    <text x={quoteattr(_fmt(mx))} y={quoteattr(_fmt(my))}'
                f' text-anchor="middle" dominant-baseline="middle">{escape(edge.label)}</text>'
            )
        lines.append("  </g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def _shape_element(node: Node) -> str:
    x, y, w, h = node.frame
    fill = quoteattr(node.fill)
    if node.shape == "rect":
        return f"<rect x={quoteattr(_fmt(x))} y={quoteattr(_fmt(y))} width={quoteattr(_fmt(w))} height={quoteattr(_fmt(h))} fill={fill}/>"
    if node.shape == "rounded":
        rx = _fmt(round(min(w, h) * 0.15, 2))
        return (
            f"<rect x={quoteattr(_fmt(x))} y={quoteattr(_fmt(y))} width={quoteattr(_fmt(w))}"
            f" height={quoteattr(_fmt(h))} rx={quoteattr(rx)} fill={fill}/>"
        )
    if node.shape == "ellipse":
        cx, cy = _frame_center(node.frame)
        return (
            f"<ellipse cx={quoteattr(_fmt(cx))} cy={quoteattr(_fmt(cy))} rx={quoteattr(_fmt(w / 2))}"
            f" ry={quoteattr(_fmt(h / 2))} fill={fill}/>"
        )
    if node.shape == "diamond":
        cx, cy = _frame_center(node.frame)
        points = f"{_fmt(cx)},{_fmt(y)} {_fmt(x + w)},{_fmt(cy)} {_fmt(cx)},{_fmt(y + h)} {_fmt(x)},{_fmt(cy)}"
        return f"<polygon points={quoteattr(points)} fill={fill}/>"
    # group: translucent container rectangle
    return (
        f"<rect x={quoteattr(_fmt(x))} y={quoteattr(_fmt(y))} width={quoteattr(_fmt(w))}"
        f' height={quoteattr(_fmt(h))} fill={fill} fill-opacity="0.15" stroke="#888888"/>'
    )


def _frame_center(frame: tuple[float, float, float, float]) -> tuple[float, float]:
    x, y, w, h = frame
    return x + w / 2, y + h / 2


# --- parsing ---

_ALLOWED_TAGS = {"svg", "defs", "marker", "g", "rect", "ellipse", "polygon", "path", "text"}


def parse_svg(markup: str) -> LayoutGraph:
    """Parse subset markup back into a graph; inverse of serialize_svg."""
    try:
        root = ET.fromstring(markup)
    except ET.ParseError as err:
        raise MalformedMarkupError(f"not well-formed: {err}") from err
    if _local(root.tag) != "svg":
        raise MalformedMarkupError(f"root element is <{_local(root.tag)}>, expected <svg>")
    for element in root.iter():
        tag = _local(element.tag)
        if tag not in _ALLOWED_TAGS:
            raise UnsupportedElementError(f"<{tag}> is outside the supported subset")
    canvas = (_parse_length(root, "width"), _parse_length(root, "height"))
    nodes: list[Node] = []
    edges: list[Edge] = []
    for child in root:
        tag = _local(child.tag)
        if tag == "defs":
            continue
        if tag != "g":
            raise UnsupportedElementError(f"top-level <{tag}> is outside the supported subset")
        cls = child.get("class")
        if cls == "node":
            nodes.append(_parse_node(child))
        elif cls == "edge":
            edges.append(_parse_edge(child))
        else:
            raise MalformedMarkupError(f"<g> with class={cls!r} is neither node nor edge")
    graph = LayoutGraph(nodes=tuple(nodes), edges=tuple(edges), canvas=canvas)
    graph.validate()
    return graph


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _parse_length(element: ET.Element, attr: str) -> float:
    raw = element.get(attr)
    if raw is None:
        raise MalformedMarkupError(f"missing {attr!r} on <{_local(element.tag)}>")
    try:
        return float(raw)
    except ValueError:
        raise MalformedMarkupError(f"bad length {raw!r}") from None


def _parse_node(group: ET.Element) -> Node:
    node_id = group.get("data-id")
    shape = group.get("data-shape")
    if node_id is None or shape is None:
        raise MalformedMarkupError("node group missing data-id/data-shape")
    label = ""
    frame = None
    fill = "#a6b9c8"
    declared = group.get("data-frame")
    if declared is not None:
        parts = declared.split()
        if len(parts) != 4:
            raise MalformedMarkupError(f"bad data-frame {declared!r}")
        try:
            frame = tuple(float(part) for part in parts)
        except ValueError:
            raise MalformedMarkupError(f"bad data-frame {declared!r}") from None
    for child in group:
        tag = _local(child.tag)
        if tag == "text":
            label = child.text or ""
            continue
        if tag == "rect":
            derived = (
                _parse_length(child, "x"),
                _parse_length(child, "y"),
                _parse_length(child, "width"),
                _parse_length(child, "height"),
            )
        elif tag == "ellipse":
            cx, cy = _parse_length(child, "cx"), _parse_length(child, "cy")
            rx, ry = _parse_length(child, "rx"), _parse_length(child, "ry")
            derived = (round(cx - rx, 2), round(cy - ry, 2), round(2 * rx, 2), round(2 * ry, 2))
        elif tag == "polygon":
            points = _parse_points(child)
            if len(points) != 4:
                raise MalformedMarkupError("diamond polygon must have 4 points")
            top, right, bottom, left = points
            derived = (
                round(left[0], 2),
                round(top[1], 2),
                round(right[0] - left[0], 2),
                round(bottom[1] - top[1], 2),
            )
        else:
            raise UnsupportedElementError(f"<{tag}> inside node group")
        fill = child.get("fill", fill)
        if frame is None:
            frame = derived
    if frame is None:
        raise MalformedMarkupError(f"node {node_id!r} has no shape element")
    return Node(
        id=node_id,
        label=label,
        shape=shape,
        frame=frame,
        fill=fill,
        group_id=group.get("data-group"),
    )


def _parse_edge(group: ET.Element) -> Edge:
    source = group.get("data-source")
    target = group.get("data-target")
    kind = group.get("data-kind", "arrow")
    if source is None or target is None:
        raise MalformedMarkupError("edge group missing data-source/data-target")
    label = None
    for child in group:
        tag = _local(child.tag)
        if tag == "text":
            label = child.text or ""
        elif tag != "path":
            raise UnsupportedElementError(f"<{tag}> inside edge group")
    return Edge(source_id=source, target_id=target, label=label, kind=kind)


def _parse_points(element: ET.Element) -> list[tuple[float, float]]:
    raw = element.get("points", "")
    points = []
    for token in raw.replace(",", " ").split():
        points.append(float(token))
    if len(points) % 2 != 0:
        raise MalformedMarkupError(f"odd coordinate count in points {raw!r}")
    return [(points[i], points[i + 1]) for i in range(0, len(points), 2)]


# --- rasterization ---


def rasterize(markup: str, scale: float = 1.0) -> Image.Image:
    """Render subset markup to pixels; same markup and scale, same bytes.

    The result carries a ``figmeta`` index of every drawn string with
    its pixel bbox, which downstream OCR mocks can read back.
    """
    if scale <= 0:
        raise InvariantError("scale must be positive")
    graph = parse_svg(markup)
    width = max(1, int(round(graph.canvas[0] * scale)))
    height = max(1, int(round(graph.canvas[1] * scale)))
    image = Image.new("RGB", (width, height), BACKGROUND)
    draw = ImageDraw.Draw(image)
    font = ImageFont.load_default(size=max(7, int(round(12 * scale))))
    by_id = graph.node_by_id()
    texts: list[dict] = []

    def s(value: float) -> float:
        return value * scale

    groups = [n for n in graph.nodes if n.shape == "group"]
    plain = [n for n in graph.nodes if n.shape != "group"]
    for node in groups:
        x, y, w, h = node.frame
        fill = _mix(_hex_rgb(node.fill), BACKGROUND, 0.85)
        draw.rectangle([s(x), s(y), s(x + w), s(y + h)], fill=fill, outline=(136, 136, 136))
    for edge in graph.edges:
        _draw_edge(draw, edge, by_id, scale)
    for node in plain:
        _draw_node(draw, node, scale)
    for node in graph.nodes:
        if node.label:
            cx, cy = _frame_center(node.frame)
            _draw_label(draw, texts, node.label, (s(cx), s(cy)), font, _hex_rgb(node.fill))
    for edge in graph.edges:
        if edge.label:
            start, end = _edge_endpoints(by_id[edge.source_id].frame, by_id[edge.target_id].frame)
            mx, my = s((start[0] + end[0]) / 2), s((start[1] + end[1]) / 2)
            _draw_label(draw, texts, edge.label, (mx, my), font, BACKGROUND)
    set_figmeta(image, {"size": [width, height], "texts": texts})
    return image


def _draw_node(draw: ImageDraw.ImageDraw, node: Node, scale: float) -> None:
    x, y, w, h = (v * scale for v in node.frame)
    fill = _hex_rgb(node.fill)
    outline = (68, 68, 68)
    if node.shape == "rect":
        draw.rectangle([x, y, x + w, y + h], fill=fill, outline=outline)
    elif node.shape == "rounded":
        radius = min(w, h) * 0.15
        draw.rounded_rectangle([x, y, x + w, y + h], radius=radius, fill=fill, outline=outline)
    elif node.shape == "ellipse":
        draw.ellipse([x, y, x + w, y + h], fill=fill, outline=outline)
    elif node.shape == "diamond":
        cx, cy = x + w / 2, y + h / 2
        draw.polygon([(cx, y), (x + w, cy), (cx, y + h), (x, cy)], fill=fill, outline=outline)


def _draw_edge(draw: ImageDraw.ImageDraw, edge: Edge, by_id: dict[str, Node], scale: float) -> None:
    start, end = _edge_endpoints(by_id[edge.source_id].frame, by_id[edge.target_id].frame)
    p0 = (start[0] * scale, start[1] * scale)
    p1 = (end[0] * scale, end[1] * scale)
    color = (68, 68, 68)
    line_width = max(1, int(round(scale)))
    if edge.kind == "dashed":
        _draw_dashed(draw, p0, p1, color, line_width, on=6 * scale, off=4 * scale)
    else:
        draw.line([p0, p1], fill=color, width=line_width)
    if edge.kind == "arrow":
        _draw_arrowhead(draw, p0, p1, color, size=max(4.0, 6.0 * scale))


def _edge_endpoints(
    source_frame: tuple[float, float, float, float],
    target_frame: tuple[float, float, float, float],
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Straight segment between centers, clipped at both node borders."""
    c0 = _frame_center(source_frame)
    c1 = _frame_center(target_frame)
    if c0 == c1:
        return c0, c1
    t0 = _exit_parameter(c0, c1, source_frame)
    t1 = _exit_parameter(c1, c0, target_frame)
    start = (c0[0] + (c1[0] - c0[0]) * t0, c0[1] + (c1[1] - c0[1]) * t0)
    end = (c1[0] + (c0[0] - c1[0]) * t1, c1[1] + (c0[1] - c1[1]) * t1)
    return (round(start[0], 2), round(start[1], 2)), (round(end[0], 2), round(end[1], 2))


def _exit_parameter(center: tuple[float, float], toward: tuple[float, float], frame) -> float:
    """Smallest t in [0,1] where center + t*(toward-center) leaves the frame."""
    x, y, w, h = frame
    dx, dy = toward[0] - center[0], toward[1] - center[1]
    best = 1.0
    if dx > 0:
        best = min(best, (x + w - center[0]) / dx)
    elif dx < 0:
        best = min(best, (x - center[0]) / dx)
    if dy > 0:
        best = min(best, (y + h - center[1]) / dy)
    elif dy < 0:
        best = min(best, (y - center[1]) / dy)
    return max(0.0, best)


def _draw_dashed(draw, p0, p1, color, width, on: float, off: float) -> None:
    length = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
    if length <= 0:
        return
    ux, uy = (p1[0] - p0[0]) / length, (p1[1] - p0[1]) / length
    pos = 0.0
    while pos < length:
        seg_end = min(pos + on, length)
        a = (p0[0] + ux * pos, p0[1] + uy * pos)
        b = (p0[0] + ux * seg_end, p0[1] + uy * seg_end)
        draw.line([a, b], fill=color, width=width)
        pos = seg_end + off


def _draw_arrowhead(draw, p0, p1, color, size: float) -> None:
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    length = math.hypot(dx, dy)
    if length <= 0:
        return
    ux, uy = dx / length, dy / length
    base = (p1[0] - ux * size, p1[1] - uy * size)
    half = size * 0.4
    left = (base[0] - uy * half, base[1] + ux * half)
    right = (base[0] + uy * half, base[1] - ux * half)
    draw.polygon([p1, left, right], fill=color)


def _draw_label(draw, texts: list[dict], label: str, center: tuple[float, float], font, background_rgb) -> None:
    text = " ".join(label.split())
    if not text:
        return
    color = (17, 17, 17) if _luminance(background_rgb) > 0.5 else (245, 245, 245)
    draw.text(center, text, font=font, fill=color, anchor="mm")
    left, top, right, bottom = draw.textbbox(center, text, font=font, anchor="mm")
    texts.append(
        {
            "text": text,
            "bbox": [int(left), int(top), max(1, int(math.ceil(right - left))), max(1, int(math.ceil(bottom - top)))],
        }
    )


def _hex_rgb(color: str) -> tuple[int, int, int]:
    return tuple(int(color[i : i + 2], 16) for i in (1, 3, 5))  # type: ignore[return-value]


def _mix(a: tuple[int, int, int], b: tuple[int, int, int], weight_b: float) -> tuple[int, int, int]:
    return tuple(int(round(av * (1 - weight_b) + bv * weight_b)) for av, bv in zip(a, b))  # type: ignore[return-value]


def _luminance(rgb: tuple[int, int, int]) -> float:
    r, g, b = (v / 255.0 for v in rgb)
    return 0.2126 * r + 0.7152 * g + 0.0722 * b


# --- geometric quality metrics ---


def measure(graph: LayoutGraph) -> LayoutMetrics:
    """Geometric quality signals fed to the critic as context.

    Overlap sums pairwise intersection areas of node bounding frames
    (all node pairs, groups included). Alignment clusters node edge
    coordinates into guide lines (gap tolerance 2 canvas units) and
    averages each edge's distance to its guide. Balance is one minus
    the area-weighted centroid's offset from the canvas center,
    normalized by the half-diagonal.
    """
    graph.validate()
    overlap = 0.0
    frames = [node.frame for node in graph.nodes]
    for i in range(len(frames)):
        for j in range(i + 1, len(frames)):
            overlap += _intersection_area(frames[i], frames[j])

    xs: list[float] = []
    ys: list[float] = []
    for x, y, w, h in frames:
        xs.extend((x, x + w))
        ys.extend((y, y + h))
    deviations = _cluster_deviations(xs) + _cluster_deviations(ys)
    alignment = sum(deviations) / len(deviations) if deviations else 0.0

    width, height = graph.canvas
    if frames:
        total_area = sum(w * h for _, _, w, h in frames)
        cx = sum((x + w / 2) * w * h for x, y, w, h in frames) / total_area
        cy = sum((y + h / 2) * w * h for x, y, w, h in frames) / total_area
        offset = math.hypot(cx - width / 2, cy - height / 2)
        max_offset = math.hypot(width / 2, height / 2)
        balance = max(0.0, min(1.0, 1.0 - offset / max_offset))
    else:
        balance = 1.0
    return LayoutMetrics(overlap_area=overlap, alignment_deviation=alignment, balance=balance)


def _intersection_area(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    w = min(ax + aw, bx + bw) - max(ax, bx)
    h = min(ay + ah, by + bh) - max(ay, by)
    return w * h if w > 0 and h > 0 else 0.0


def _cluster_deviations(values: list[float], tolerance: float = 2.0) -> list[float]:
    if not values:
        return []
    ordered = sorted(values)
    clusters: list[list[float]] = [[ordered[0]]]
    for value in ordered[1:]:
        if value - clusters[-1][-1] <= tolerance:
            clusters[-1].append(value)
        else:
            clusters.append([value])
    deviations = []
    for cluster in clusters:
        guide = sum(cluster) / len(cluster)
        deviations.extend(abs(v - guide) for v in cluster)
    return deviations


# --- labels ---


def extract_labels(graph: LayoutGraph) -> dict[str, int]:
    """Multiset (label -> count) of node and edge labels, whitespace-normalized."""
    counts: dict[str, int] = {}
    for node in graph.nodes:
        _count_label(counts, node.label)
    for edge in graph.edges:
        if edge.label is not None:
            _count_label(counts, edge.label)
    return counts


def _count_label(counts: dict[str, int], label: str) -> None:
    text = " ".join(label.split())
    if text:
        counts[text] = counts.get(text, 0) + 1


# --- deterministic seed layout ---


def grid_layout(
    entities: list[tuple[str, str]],
    relations: list[tuple[str, str, str | None]],
    canvas: tuple[float, float] = (800.0, 600.0),
    caption: str = "Overview",
    jitter_key: str | None = None,
) -> LayoutGraph:
    """Place entities on a uniform grid; the seed blueprint for refinement.

    With no entities the layout degenerates to a single caption node.
    ``jitter_key`` perturbs positions deterministically so distinct
    design rounds yield distinct geometry.
    """
    width, height = canvas
    if not entities:
        w, h = round(width * 0.6, 2), round(height * 0.25, 2)
        node = Node(
            id="caption",
            label=" ".join(caption.split()) or "Overview",
            shape="rounded",
            frame=(round((width - w) / 2, 2), round((height - h) / 2, 2), w, h),
            fill=PALETTE[0],
        )
        return LayoutGraph(nodes=(node,), canvas=canvas)

    count = len(entities)
    cols = max(1, math.ceil(math.sqrt(count)))
    rows = math.ceil(count / cols)
    margin_x, margin_y = width * 0.06, height * 0.08
    cell_w = (width - 2 * margin_x) / cols
    cell_h = (height - 2 * margin_y) / rows
    node_w, node_h = round(cell_w * 0.72, 2), round(cell_h * 0.6, 2)
    nodes = []
    for index, (entity_id, label) in enumerate(entities):
        row, col = divmod(index, cols)
        x = margin_x + col * cell_w + (cell_w - node_w) / 2
        y = margin_y + row * cell_h + (cell_h - node_h) / 2
        if jitter_key is not None:
            jx, jy = _jitter(jitter_key, entity_id)
            x, y = x + jx, y + jy
        nodes.append(
            Node(
                id=entity_id,
                label=" ".join(label.split()) or entity_id,
                shape="rounded",
                frame=(_fit(x, node_w, width), _fit(y, node_h, height), node_w, node_h),
                fill=PALETTE[index % len(PALETTE)],
            )
        )
    known = {n.id for n in nodes}
    edges = tuple(
        Edge(source_id=src, target_id=dst, label=label, kind="arrow")
        for src, dst, label in relations
        if src in known and dst in known
    )
    return LayoutGraph(nodes=tuple(nodes), edges=edges, canvas=canvas)


def _fit(position: float, extent: float, limit: float) -> float:
    """Round position to 2 decimals such that position + extent stays in [0, limit]."""
    clamped = min(max(0.0, position), limit - extent)
    rounded = round(clamped, 2)
    if rounded + extent > limit:
        rounded = math.floor((limit - extent) * 100 + 1e-6) / 100
    return max(0.0, rounded)


def _jitter(key: str, node_id: str, amplitude: float = 9.0) -> tuple[float, float]:
    digest = hashlib.sha256(f"{key}:{node_id}".encode("utf-8")).digest()
    jx = (digest[0] / 255.0 * 2 - 1) * amplitude
    jy = (digest[1] / 255.0 * 2 - 1) * amplitude
    return round(jx, 2), round(jy, 2)

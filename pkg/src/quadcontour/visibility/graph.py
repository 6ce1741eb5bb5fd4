"""Contour graph assembly: chaining, event insertion, node typing.

Segments produced per patch are stitched into a graph whose nodes are
shared endpoints and whose edges are contour pieces.  Event points
(interior cusps, image crossings) are then spliced into the edges, and
junctions where the projected tangent reverses are retyped as boundary
cusps.  Quantitative invisibility propagates over this graph: plain
junctions pass the value through, cusps shift it by one, crossings
shift the hidden side by two, and every other node kind blocks
propagation so each region is seeded by its own ray test.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ..contours.bernstein import bernstein_restrict, quadratic_roots
from ..contours.extract import (ContourSegment, ParamCurve,
                                normal_coefficients)
from ..surface import monomial_coefficients
from .cusps import (evaluate_quadratic_rows, is_boundary_cusp,
                    tangent_quadratics, view_frame)
from .quadratics import VisibilityError
from .raytest import BOUNDARY_BAND

log = logging.getLogger(__name__)

CHAIN_TOL_REL = 1e-7
EVENT_MERGE_TOL = 1e-9
ENDPOINT_SNAP = 1e-9
RIM_SNAP = 1e-6
DEPTH_TIE_REL = 1e-9
PROBE_DELTA = 1e-4
FENCE_TOL = 1e-3


@dataclass
class GraphNode:
    index: int
    kind: str
    position: np.ndarray
    image: np.ndarray
    propagating: bool = True
    tangent: np.ndarray = None
    deltas: dict = field(default_factory=dict)   # (edge, end) -> 0 or 2


@dataclass
class GraphEdge:
    index: int
    segment: ContourSegment
    node0: int
    node1: int
    qi: int = None
    reliable: bool = True


class ViewGraph:
    """Nodes, edges and adjacency for one view's contour network."""

    def __init__(self, nodes, edges, tau):
        self.nodes = nodes
        self.edges = edges
        self.tau = np.asarray(tau, dtype=float)
        self.rebuild()

    def rebuild(self):
        self.adjacency = {n.index: [] for n in self.nodes}
        for e in self.edges:
            self.adjacency[e.node0].append((e.index, 0))
            self.adjacency[e.node1].append((e.index, 1))

    def degree(self, node_index):
        return len(self.adjacency[node_index])

    def loops(self):
        """Maximal chains of edges joined through plain junctions.

        Returns (chain, closed) pairs, where a chain lists edge indices
        in walk order.  Any node other than a two-way junction breaks
        the walk, so event nodes become chain ends.
        """
        plain = {n.index for n in self.nodes
                 if n.kind == "junction" and self.degree(n.index) == 2}
        seen = set()
        out = []
        for e0 in self.edges:
            if e0.index in seen:
                continue
            seen.add(e0.index)
            chain = [e0.index]
            closed = False
            node = e0.node1
            while node in plain:
                links = [(ei, end) for ei, end in self.adjacency[node]
                         if ei not in seen]
                if not links:
                    closed = node == e0.node0
                    break
                ei, end = links[0]
                seen.add(ei)
                chain.append(ei)
                node = self.edges[ei].node1 if end == 0 \
                    else self.edges[ei].node0
            if not closed:
                node = e0.node0
                while node in plain:
                    links = [(ei, end) for ei, end in self.adjacency[node]
                             if ei not in seen]
                    if not links:
                        break
                    ei, end = links[0]
                    seen.add(ei)
                    chain.insert(0, ei)
                    node = self.edges[ei].node1 if end == 0 \
                        else self.edges[ei].node0
            out.append((chain, closed))
        return out

    def payload(self):
        """JSON-ready dump of the graph for diagnostics and rendering."""
        return {
            "nodes": [{"index": n.index, "kind": n.kind,
                       "position": [float(v) for v in n.position],
                       "image": [float(v) for v in n.image],
                       "propagating": bool(n.propagating)}
                      for n in self.nodes],
            "edges": [{"index": e.index, "node0": e.node0, "node1": e.node1,
                       "patch": int(e.segment.patch), "qi": e.qi}
                      for e in self.edges],
        }


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def chain_across_patches(segments, tau, cone_positions=None, closed=True):
    """Stitch per-patch segments into a graph by matching 3d endpoints.

    On a watertight surface every contour endpoint must pair up with a
    neighbouring patch's endpoint; a lone endpoint means the extraction
    lost a piece and raises.  With closed=False lone endpoints are kept
    as boundary nodes instead.  Endpoints at a cone apex are typed as
    cone nodes, which never propagate visibility.
    """
    tau = np.asarray(tau, dtype=float)
    tau1, tau2, tau = view_frame(tau)
    n = len(segments)
    if n == 0:
        return ViewGraph([], [], tau)
    pts = np.empty((2 * n, 3))
    for i, s in enumerate(segments):
        p0, p1 = s.endpoints()
        pts[2 * i] = p0
        pts[2 * i + 1] = p1
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    tol = CHAIN_TOL_REL * max(diag, 1e-6)

    uf = _UnionFind(2 * n)
    tree = cKDTree(pts)
    for a, b in tree.query_pairs(tol):
        uf.union(a, b)
    clusters = {}
    for slot in range(2 * n):
        clusters.setdefault(uf.find(slot), []).append(slot)

    cone_tree = None
    if cone_positions is not None and len(cone_positions):
        cone_tree = cKDTree(np.asarray(cone_positions, dtype=float))

    nodes = []
    slot_node = {}
    lonely = []
    for slots in clusters.values():
        pos = pts[slots].mean(axis=0)
        kind = "junction"
        if cone_tree is not None and cone_tree.query(pos)[0] < tol:
            kind = "cone-point"
        elif len(slots) == 1:
            if closed:
                lonely.append(pos)
            kind = "contour-boundary-intersection"
        elif len(slots) > 2:
            kind = "interior-junction"
        node = GraphNode(index=len(nodes), kind=kind, position=pos,
                         image=np.array([pos @ tau1, pos @ tau2]),
                         propagating=kind in ("junction", "interior-junction"))
        nodes.append(node)
        for s in slots:
            slot_node[s] = node.index

    if lonely and closed:
        detail = [[float(v) for v in p] for p in lonely[:5]]
        raise VisibilityError(
            "contour chaining left %d dangling endpoint(s) on a closed "
            "surface" % len(lonely), positions=detail)

    edges = [GraphEdge(index=i, segment=s, node0=slot_node[2 * i],
                       node1=slot_node[2 * i + 1])
             for i, s in enumerate(segments)]
    return ViewGraph(nodes, edges, tau)


def _restrict_segment(seg, t0, t1):
    """The sub-arc of a segment on [t0, t1], renormalised."""
    num = bernstein_restrict(seg.space_num, t0, t1)
    den = bernstein_restrict(seg.space_den, t0, t1)
    peak = np.abs(den).max()
    if peak > 0:
        num, den = num / peak, den / peak
    pnum = bernstein_restrict(seg.param.numerator, t0, t1)
    pden = bernstein_restrict(seg.param.denominator, t0, t1)
    ppeak = np.abs(pden).max()
    if ppeak > 0:
        pnum, pden = pnum / ppeak, pden / ppeak
    par = ParamCurve(seg.param.case, seg.param.patch, pnum, pden,
                     seg.param.end_tags)
    return ContourSegment(par, num, den)


def _locate_on_edge(edge, u, v, tol=1e-6):
    """Parameter of domain point (u, v) on an edge's curve, or None."""
    par = edge.segment.param
    best = None
    for axis, target in ((0, u), (1, v)):
        coeffs = par.numerator[:, axis] - target * par.denominator
        mono = np.array([coeffs[0], 2 * (coeffs[1] - coeffs[0]),
                         coeffs[0] + coeffs[2] - 2 * coeffs[1]])
        if np.abs(mono).max() < 1e-12 * max(np.abs(par.numerator).max(), 1.0):
            continue                 # curve is constant along this axis
        for t in quadratic_roots(mono[0], mono[1], mono[2]):
            if not (-1e-9 <= t <= 1 + 1e-9):
                continue
            t = min(1.0, max(0.0, float(t)))
            uv = par.point(np.array([t]))[0]
            err = np.hypot(uv[0] - u, uv[1] - v)
            if err < tol and (best is None or err < best[1]):
                best = (t, err)
        break
    return None if best is None else best[0]


def attach_cusps(graph, cusps):
    """Map interior cusp points onto graph edges as (edge, t) events.

    A cusp that fails to land on any edge of its patch is dropped with
    a warning; this happens when the cusp sits on a contour piece that
    was culled or trimmed away.
    """
    events = []
    by_patch = {}
    for e in graph.edges:
        by_patch.setdefault(e.segment.patch, []).append(e)
    for c in cusps:
        hit = None
        for e in by_patch.get(c.patch, []):
            t = _locate_on_edge(e, c.u, c.v)
            if t is not None:
                hit = (e.index, t)
                break
        if hit is None:
            log.warning("cusp at patch %d (%.4f, %.4f) not on any edge",
                        c.patch, c.u, c.v)
            continue
        events.append((hit[0], hit[1], c))
    return events


def _crossing_sides(tester, upper_patch, lower_seg, t_star):
    """Which side of a crossing the lower curve is occluded on.

    Probes the lower curve a short parameter step before and past the
    crossing against the upper curve's patch.  Near a contour the patch
    image folds, covering one side twice and the other not at all, so
    exactly one probe should report cover.  Returns (before, after)
    occlusion flags or None when the probes disagree with that picture.
    """
    delta = PROBE_DELTA
    for _ in range(3):
        flags = []
        for t in (t_star - delta, t_star + delta):
            t = min(1.0, max(0.0, t))
            p = lower_seg.point(np.array([t]))[0]
            x, y = p @ tester.tau1, p @ tester.tau2
            depth = p @ tester.tau
            hits, ok = tester.patch_hits(upper_patch, x, y)
            band = 1e-9 * tester.depth_scale
            above = [h for h in hits if h[2] < depth - band]
            clean = ok and all(h[3] > BOUNDARY_BAND for h in hits)
            for i in range(len(hits)):
                for j in range(i + 1, len(hits)):
                    if np.hypot(hits[i][0] - hits[j][0],
                                hits[i][1] - hits[j][1]) < 1e-4:
                        clean = False          # tangential graze
            flags.append((len(above) > 0, clean))
        (occ0, ok0), (occ1, ok1) = flags
        if ok0 and ok1 and occ0 != occ1:
            return occ0, occ1
        delta *= 3          # stay well inside the event fencing distance
    return None


def split_at_events(graph, cusp_events, crossings, tester, rim_events=()):
    """Splice event points into the graph edges.

    Every event strictly inside an edge splits it; events within a hair
    of an endpoint retype the endpoint node instead.  Coinciding events
    of different kinds collapse to one non-propagating node, which is
    the conservative reading of an unresolvable configuration.
    `rim_events` are boundary-image crossings on open surfaces; they
    split like other events but never propagate, since the sheet count
    steps by one there and no transfer rule covers that.
    """
    nodes = list(graph.nodes)
    per_edge = {}
    old_segments = {e.index: e.segment for e in graph.edges}
    tau1, tau2, _ = view_frame(graph.tau)

    def new_node(kind, position, tangent=None):
        node = GraphNode(index=len(nodes), kind=kind,
                         position=np.asarray(position, dtype=float),
                         image=np.array([position @ tau1, position @ tau2]),
                         propagating=True, tangent=tangent)
        nodes.append(node)
        return node

    def retype(node, kind):
        # an event landing on an existing node keeps the node in place
        # but stops propagation through it; first event names the kind
        if node.kind in ("junction", "interior-junction"):
            node.kind = kind
        node.propagating = False

    for eidx, t, cusp in cusp_events:
        edge = graph.edges[eidx]
        if t < ENDPOINT_SNAP:
            retype(nodes[edge.node0], "boundary-cusp")
        elif t > 1 - ENDPOINT_SNAP:
            retype(nodes[edge.node1], "boundary-cusp")
        else:
            node = new_node("interior-cusp", cusp.position, cusp.tangent)
            per_edge.setdefault(eidx, []).append([t, node.index])

    for eidx, t, position in rim_events:
        edge = graph.edges[eidx]
        if t < RIM_SNAP:
            retype(nodes[edge.node0], "boundary-occlusion")
        elif t > 1 - RIM_SNAP:
            retype(nodes[edge.node1], "boundary-occlusion")
        else:
            node = new_node("boundary-occlusion", position)
            node.propagating = False
            per_edge.setdefault(eidx, []).append([t, node.index])

    crossing_incidences = []
    for c in crossings:
        pos_a = graph.edges[c.seg_a].segment.point(np.array([c.s]))[0]
        node = None
        ends = []
        for eidx, t in ((c.seg_a, c.s), (c.seg_b, c.t)):
            edge = graph.edges[eidx]
            if t < ENDPOINT_SNAP:
                retype(nodes[edge.node0], "image-intersection")
            elif t > 1 - ENDPOINT_SNAP:
                retype(nodes[edge.node1], "image-intersection")
            else:
                if node is None:
                    node = new_node("image-intersection", pos_a)
                per_edge.setdefault(eidx, []).append([t, node.index])
                ends.append((eidx, t))
        if node is not None and len(ends) == 2:
            crossing_incidences.append((node.index, c))
        elif node is not None:
            # the other end landed on an existing node; without both
            # sides the delta bookkeeping is unsafe, so block here
            node.propagating = False

    # merge events that coincide on one edge; mixed kinds go dark
    for eidx, events in per_edge.items():
        events.sort(key=lambda ev: ev[0])
        merged = [events[0]]
        for t, nid in events[1:]:
            t0, nid0 = merged[-1]
            if t - t0 < EVENT_MERGE_TOL:
                keep = nodes[nid0]
                drop = nodes[nid]
                keep.propagating = False
                if keep.kind != drop.kind:
                    keep.kind = "image-intersection"
                for i, (n_id, c) in enumerate(crossing_incidences):
                    if n_id == drop.index:
                        crossing_incidences[i] = (keep.index, c)
                for other, evs in per_edge.items():
                    for ev in evs:
                        if ev[1] == drop.index:
                            ev[1] = keep.index
                log.warning("merged coinciding events on edge %d at t=%.6f",
                            eidx, t0)
            else:
                merged.append([t, nid])
        per_edge[eidx] = merged

    # events packed tighter than the probe reach (cusp pairs, double
    # crossings on a micro fold) can't be told apart by side probes;
    # fence the whole cluster so each side is seeded by its own ray test
    for eidx, events in per_edge.items():
        for (t0, n0), (t1, n1) in zip(events, events[1:]):
            if t1 - t0 < FENCE_TOL:
                for nid in (n0, n1):
                    if nodes[nid].propagating:
                        nodes[nid].propagating = False
                        log.warning("fenced %s node in an event cluster on "
                                    "edge %d (gap %.1e)", nodes[nid].kind,
                                    eidx, t1 - t0)
        edge = graph.edges[eidx]
        for t, nid in events:
            for t_end, nend in ((0.0, edge.node0), (1.0, edge.node1)):
                end_node = nodes[nend]
                if (end_node.kind not in ("junction", "interior-junction")
                        and abs(t - t_end) < FENCE_TOL
                        and nodes[nid].propagating):
                    nodes[nid].propagating = False
                    log.warning("fenced %s node next to the %s endpoint of "
                                "edge %d", nodes[nid].kind, end_node.kind,
                                eidx)

    # a fold can straddle chain junctions, putting its events on edges
    # that share no old edge; catch those clusters by image distance
    event_nodes = [n for n in nodes
                   if n.kind not in ("junction", "interior-junction")]
    if len(event_nodes) >= 2:
        all_img = np.stack([n.image for n in nodes])
        diag = float(np.linalg.norm(np.ptp(all_img, axis=0)))
        pts = np.stack([n.image for n in event_nodes])
        pairs = cKDTree(pts).query_pairs(1e-5 * max(diag, 1e-6))
        for i, j in pairs:
            for k in (i, j):
                if event_nodes[k].propagating:
                    event_nodes[k].propagating = False
                    log.warning("fenced %s node in an image event cluster "
                                "near (%.6f, %.6f)", event_nodes[k].kind,
                                event_nodes[k].image[0],
                                event_nodes[k].image[1])

    new_edges = []
    splice = {}           # (old edge, node) -> (left new edge, right new edge)
    for edge in graph.edges:
        events = per_edge.get(edge.index, [])
        if not events:
            new_edges.append(GraphEdge(index=len(new_edges),
                                       segment=edge.segment,
                                       node0=edge.node0, node1=edge.node1))
            continue
        prev_t = 0.0
        prev_node = edge.node0
        pieces = []
        for t, nid in events:
            piece = GraphEdge(index=len(new_edges),
                              segment=_restrict_segment(edge.segment,
                                                        prev_t, t),
                              node0=prev_node, node1=nid)
            new_edges.append(piece)
            pieces.append((nid, piece.index))
            prev_t, prev_node = t, nid
        tail = GraphEdge(index=len(new_edges),
                         segment=_restrict_segment(edge.segment, prev_t, 1.0),
                         node0=prev_node, node1=edge.node1)
        new_edges.append(tail)
        for k, (nid, pidx) in enumerate(pieces):
            right = pieces[k + 1][1] if k + 1 < len(pieces) else tail.index
            splice[(edge.index, nid)] = (pidx, right)

    graph.nodes = nodes
    graph.edges = new_edges
    graph.rebuild()

    # crossing deltas: hidden side of the lower curve takes +2
    for nid, c in crossing_incidences:
        node = nodes[nid]
        if not node.propagating:
            continue
        band = DEPTH_TIE_REL * tester.depth_scale
        if abs(c.z_a - c.z_b) <= band:
            node.propagating = False
            log.warning("depth tie at image crossing near %s", node.image)
            continue
        if c.z_a < c.z_b:
            upper, lower = (c.seg_a, c.s), (c.seg_b, c.t)
        else:
            upper, lower = (c.seg_b, c.t), (c.seg_a, c.s)
        upper_edge, _ = upper
        lower_edge, t_star = lower
        sides = _crossing_sides(tester, old_segments[upper_edge].patch,
                                old_segments[lower_edge], t_star)
        if sides is None:
            node.propagating = False
            log.warning("ambiguous occlusion probe at crossing near %s",
                        node.image)
            continue
        occ_before, occ_after = sides
        la, ra = splice[(upper_edge, nid)]
        lb, rb = splice[(lower_edge, nid)]
        node.deltas[(la, 1)] = 0
        node.deltas[(ra, 0)] = 0
        node.deltas[(lb, 1)] = 2 if occ_before else 0
        node.deltas[(rb, 0)] = 2 if occ_after else 0
    return graph


def find_boundary_cusps(graph, patchset, tau):
    """Retype junctions where the projected tangent direction flips.

    The per-patch tangent field is continuous inside a patch but its
    coefficients jump across patch borders; the flip test compares the
    field on both sides of a junction.  The one-sided tangents are taken
    a small parameter step inside each segment: a junction can land
    exactly on a split point where the field of one patch degenerates to
    zero (symmetric meshes under axis-aligned views do this), and the
    field direction just inside the segment is still well defined there.
    Junctions between two pieces of the same patch cannot flip and are
    skipped.
    """
    tau = np.asarray(tau, dtype=float)
    mono = monomial_coefficients(patchset.control)
    fields = {}
    normals = {}
    retyped = []
    pull = 1e-3
    for node in graph.nodes:
        if node.kind != "junction" or graph.degree(node.index) != 2:
            continue
        (e1, end1), (e2, end2) = graph.adjacency[node.index]
        s1 = graph.edges[e1].segment
        s2 = graph.edges[e2].segment
        p1, p2 = s1.patch, s2.patch
        if p1 == p2:
            continue
        for p in (p1, p2):
            if p not in fields:
                fields[p] = tangent_quadratics(mono[p], tau)
                normals[p] = normal_coefficients(mono[p][None])[0]
        t1_in = abs(float(end1) - pull)
        t2_in = abs(float(end2) - pull)
        u1, v1 = s1.param.point(np.array([t1_in]))[0]
        u2, v2 = s2.param.point(np.array([t2_in]))[0]
        t_in = evaluate_quadratic_rows(fields[p1], u1, v1)
        t_out = evaluate_quadratic_rows(fields[p2], u2, v2)
        nrm = evaluate_quadratic_rows(normals[p1], u1, v1)
        if is_boundary_cusp(t_in, t_out, nrm, tau):
            node.kind = "boundary-cusp"
            node.propagating = False
            retyped.append(node.index)
    return retyped

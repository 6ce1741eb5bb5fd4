"""Quantitative invisibility over the contour graph.

Each propagating-connected component of the graph gets one ray-test
seed; the value then spreads by breadth-first search.  Plain junctions
copy the value, interior cusps add one towards the far side of the
fold, and image crossings add two on the hidden side of the lower
curve.  Non-propagating nodes (cones, boundary cusps, mesh
boundary contacts, merged events) fence components off from each
other, so every fenced region pays for its own seed instead of
trusting a transfer rule that does not apply.
"""

import logging

import numpy as np

from .cusps import find_interior_cusps
from .graph import (attach_cusps, chain_across_patches, find_boundary_cusps,
                    split_at_events)
from .intersect import (boundary_arcs, find_image_intersections,
                        find_rim_occlusions)
from .quadratics import VisibilityError
from .raytest import RayTester

log = logging.getLogger(__name__)

SEED_PARAMS = (0.5, 1.0 / 3.0, 2.0 / 3.0)


def _cusp_rule(graph, node, tester):
    """Per-end shift (+1 on the far side, -1 on the near) at a cusp.

    At a cusp the space curve runs along the view direction, so depth
    changes strictly monotonically through the node while the image
    point reverses.  Walking away from the node, the branch that gains
    depth is the far side and carries one more occluder.  The velocity
    there has magnitude comparable to the full tangent, which keeps the
    sign stable no matter how short the incident edges are.  Returns
    None when both branches report the same depth trend, which means
    the node is not a simple cusp after all.
    """
    ends = graph.adjacency[node.index]
    if len(ends) != 2:
        return None
    rule = {}
    trends = []
    for ei, end in ends:
        seg = graph.edges[ei].segment
        w = seg.velocity(np.array([float(end)]))[0]
        if end == 1:
            w = -w
        trends.append(float(np.dot(w, tester.tau)))
    if trends[0] * trends[1] >= 0:
        return None
    for (ei, end), a in zip(ends, trends):
        rule[(ei, end)] = 1 if a > 0 else -1
    return rule


def _seed_test(graph, tester, edge, tpar):
    seg = edge.segment
    p = seg.point(np.array([tpar]))[0]
    u, v = seg.param.point(np.array([tpar]))[0]
    return tester.query(float(p @ tester.tau1), float(p @ tester.tau2),
                        float(p @ tester.tau), own=(seg.patch, u, v))


def propagate_qi(graph, tester):
    """Assign quantitative invisibility to every edge of the graph.

    Returns a stats dict.  Raises when a component has no reliable
    seed, when two propagation paths disagree, or when a transfer
    drives the value negative; the error carries the graph dump so the
    failure can be inspected offline.
    """
    cusp_rules = {}
    for node in graph.nodes:
        if node.kind == "interior-cusp" and node.propagating:
            rule = _cusp_rule(graph, node, tester)
            if rule is None:
                log.warning("degenerate flow at cusp node %d; fencing it",
                            node.index)
                node.propagating = False
            else:
                cusp_rules[node.index] = rule

    stats = {"components": 0, "seeds": 0, "ray_tests": 0, "retries": 0,
             "unreliable_edges": 0}
    assigned = {}
    images = np.stack([n.image for n in graph.nodes])
    sliver_tol = 1e-4 * max(float(np.linalg.norm(np.ptp(images, axis=0))),
                            1e-6)

    def component_image_length(comp):
        total = 0.0
        ts = np.linspace(0.0, 1.0, 5)
        for ei in comp:
            p = graph.edges[ei].segment.point(ts)
            img = np.stack([p @ tester.tau1, p @ tester.tau2], axis=-1)
            total += float(np.linalg.norm(np.diff(img, axis=0), axis=1).sum())
        return total

    def component_of(start):
        comp = [start]
        seen = {start}
        queue = [start]
        while queue:
            ei = queue.pop()
            e = graph.edges[ei]
            for end, nidx in ((0, e.node0), (1, e.node1)):
                node = graph.nodes[nidx]
                if not node.propagating:
                    continue
                for ej, _ in graph.adjacency[nidx]:
                    if ej not in seen:
                        seen.add(ej)
                        comp.append(ej)
                        queue.append(ej)
        return comp

    def transfer(node, qi, from_key, to_key):
        if node.kind in ("junction", "interior-junction"):
            return qi
        if node.kind == "interior-cusp":
            return qi + cusp_rules[node.index][to_key]
        if node.kind == "image-intersection":
            d = node.deltas
            if from_key not in d or to_key not in d:
                return None
            return qi + d[to_key] - d[from_key]
        return None

    for start in range(len(graph.edges)):
        if start in assigned:
            continue
        comp = component_of(start)
        stats["components"] += 1
        seed = None
        for ei in comp:
            for k, tpar in enumerate(SEED_PARAMS):
                res = _seed_test(graph, tester, graph.edges[ei], tpar)
                stats["ray_tests"] += 1
                if k > 0:
                    stats["retries"] += 1
                if res.reliable:
                    seed = (ei, res.count)
                    break
            if seed is not None:
                break
        if seed is None:
            # slivers fenced off around a degenerate event cluster sit
            # exactly where ray answers go unreliable; they are far below
            # visual scale, so take the unreliable count and say so
            # rather than failing the whole view
            if component_image_length(comp) < sliver_tol:
                res = _seed_test(graph, tester, graph.edges[comp[0]], 0.5)
                stats["ray_tests"] += 1
                stats["unreliable_edges"] += len(comp)
                for ei in comp:
                    assigned[ei] = max(res.count, 0)
                    graph.edges[ei].reliable = False
                log.warning("sliver component of %d edge(s) near (%.5f, "
                            "%.5f) seeded from an unreliable ray test",
                            len(comp), graph.nodes[graph.edges[comp[0]].node0]
                            .image[0], graph.nodes[graph.edges[comp[0]].node0]
                            .image[1])
                continue
            raise VisibilityError(
                "no reliable visibility seed in a contour component",
                component_size=len(comp), graph=graph.payload())
        stats["seeds"] += 1
        queue = [seed[0]]
        assigned[seed[0]] = seed[1]
        while queue:
            ei = queue.pop()
            qi = assigned[ei]
            e = graph.edges[ei]
            for end, nidx in ((0, e.node0), (1, e.node1)):
                node = graph.nodes[nidx]
                if not node.propagating:
                    continue
                for ej, end_j in graph.adjacency[nidx]:
                    if ej == ei and end_j == end:
                        continue
                    qi_j = transfer(node, qi, (ei, end), (ej, end_j))
                    if qi_j is None:
                        continue
                    if qi_j < 0:
                        raise VisibilityError(
                            "negative invisibility after transfer",
                            node=nidx, graph=graph.payload())
                    if ej in assigned:
                        if assigned[ej] != qi_j:
                            raise VisibilityError(
                                "conflicting invisibility along two paths",
                                edge=ej, values=(assigned[ej], qi_j),
                                graph=graph.payload())
                    else:
                        assigned[ej] = qi_j
                        queue.append(ej)

    for e in graph.edges:
        e.qi = assigned[e.index]
        e.segment.qi = e.qi
        e.segment.qi_reliable = e.reliable
    return stats


def compute_visibility(patchset, segments, tau, cone_positions=None,
                       use_grid=True, closed=None):
    """Full visibility pass: chain, find events, split, propagate.

    Returns the finished graph; every edge carries a contour piece with
    its quantitative invisibility filled in.  Stats from propagation
    are attached as graph.stats.  `closed` defaults to what the mesh
    reports; on an open mesh, contour endpoints on the surface boundary
    become non-propagating nodes and each boundary-separated piece is
    seeded by its own ray test.
    """
    if closed is None:
        closed = patchset.mesh.is_closed()
    graph = chain_across_patches(segments, tau, cone_positions, closed)
    if not graph.edges:
        graph.stats = {"components": 0, "seeds": 0, "ray_tests": 0,
                       "retries": 0}
        return graph
    involved = sorted({e.segment.patch for e in graph.edges})
    cusps = find_interior_cusps(patchset, tau, patches=np.array(involved))
    cusp_events = attach_cusps(graph, cusps)
    crossings = find_image_intersections([e.segment for e in graph.edges],
                                         tau, use_grid=use_grid)
    tester = RayTester(patchset, tau, use_grid=use_grid)
    rim_events = ()
    if not closed:
        rim_events = find_rim_occlusions(
            [e.segment for e in graph.edges], boundary_arcs(patchset), tau,
            depth_band=1e-7 * tester.depth_scale)
        if rim_events:
            log.info("surface boundary crosses the contour image %d time(s)",
                     len(rim_events))
    split_at_events(graph, cusp_events, crossings, tester, rim_events)
    find_boundary_cusps(graph, patchset, tau)
    graph.stats = propagate_qi(graph, tester)
    return graph

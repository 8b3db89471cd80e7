"""Unstructured triangle meshing of polygonal regions.

Strategy: fixed boundary samples on every ring, hexagonal interior seed
points, scipy Delaunay on the union, centroid-in-region filtering, then a few
Laplacian smoothing passes with re-triangulation. Boundary samples never
move, so ring edges survive smoothing and periodic faces stay matched.

Conformity (every ring segment appears as a mesh edge, possibly split by
inserted midpoints) is verified after filtering; missing segments get
midpoint insertions and a re-triangulation. The final mesh area must agree
with the polygon area to near machine precision, which is what makes the
area-fraction accounting downstream exact.
"""

from dataclasses import dataclass

import numpy as np
import shapely
from scipy.spatial import Delaunay, cKDTree
from shapely.geometry import Polygon


class MeshConformityError(RuntimeError):
    """Triangulation failed to cover the region within tolerance."""


def ring_spacing(ring):
    """Per-vertex local spacing of a closed polyline: mean of the two
    adjacent segment lengths."""
    d_next = np.linalg.norm(np.roll(ring, -1, axis=0) - ring, axis=1)
    d_prev = np.roll(d_next, 1)
    return 0.5 * (d_next + d_prev)


def hex_seeds(bounds, h):
    """Hexagonal-lattice points at spacing h covering a bounding box."""
    xmin, ymin, xmax, ymax = bounds
    dy = h * np.sqrt(3.0) / 2.0
    rows = []
    ny = int(np.floor((ymax - ymin) / dy)) + 1
    for j in range(ny):
        y = ymin + j * dy
        off = 0.5 * h if j % 2 else 0.0
        nx = int(np.floor((xmax - xmin - off) / h)) + 1
        if nx <= 0:
            continue
        x = xmin + off + h * np.arange(nx)
        rows.append(np.column_stack([x, np.full(nx, y)]))
    if not rows:
        return np.zeros((0, 2))
    return np.vstack(rows)


def filter_seeds(seeds, seed_h, region, boundary_pts, boundary_spacing, margin=0.75):
    """Keep seeds inside the region and clear of boundary samples.

    seed_h: scalar or per-seed spacing. A seed is dropped when closer to the
    nearest boundary sample than margin * min(seed_h, local boundary spacing).
    """
    if seeds.shape[0] == 0:
        return seeds
    seed_h = np.asarray(seed_h, dtype=float)
    if seed_h.ndim == 0:
        seed_h = np.full(seeds.shape[0], float(seed_h))
    inside = shapely.contains_xy(region, seeds[:, 0], seeds[:, 1])
    seeds = seeds[inside]
    seed_h = seed_h[inside]
    if seeds.shape[0] == 0:
        return seeds
    dist, idx = cKDTree(boundary_pts).query(seeds)
    keep = dist >= margin * np.minimum(seed_h, boundary_spacing[idx])
    return seeds[keep]


@dataclass
class RegionMesh:
    nodes: np.ndarray
    tris: np.ndarray
    ring_node_ids: list  # per input ring, node ids in ring order

    def segment_chain(self, ring_index, seg_index, chains):
        return chains.get((ring_index, seg_index), None)


def _tri_centroids(pts, tris):
    return pts[tris].mean(axis=1)


def _orient_ccw(pts, tris):
    p = pts[tris]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = cross < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _tri_areas(pts, tris):
    p = pts[tris]
    return 0.5 * np.abs(
        (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
        - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    )


def _kept_tris(pts, tris, region, min_area):
    c = _tri_centroids(pts, tris)
    keep = shapely.contains_xy(region, c[:, 0], c[:, 1])
    keep &= _tri_areas(pts, tris) > min_area
    return tris[keep]


def _edge_set(tris):
    e = np.vstack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    e.sort(axis=1)
    return set(map(tuple, e.tolist()))


def triangulate_region(rings, seeds, region=None, smooth_iters=4, area_tol=1e-8):
    """Mesh the polygon bounded by rings[0] with holes rings[1:].

    rings: list of (k, 2) vertex arrays, no closing duplicate. All ring
    vertices become mesh nodes at exactly the given coordinates.
    Returns a RegionMesh with triangles oriented CCW.
    """
    rings = [np.asarray(r, dtype=float) for r in rings]
    if region is None:
        region = Polygon(rings[0], [r for r in rings[1:]])
    shapely.prepare(region)
    ring_offsets = np.cumsum([0] + [r.shape[0] for r in rings])
    boundary = np.vstack(rings)
    nb = boundary.shape[0]
    pts = np.vstack([boundary, seeds]) if seeds.shape[0] else boundary.copy()

    scale = float(max(np.ptp(boundary[:, 0]), np.ptp(boundary[:, 1])))
    min_area = 1e-14 * scale * scale

    bspace = np.concatenate([ring_spacing(r) for r in rings])
    btree = cKDTree(boundary)

    # segment midpoints inserted during conformity recovery, keyed by
    # (ring index, segment index) -> ordered node ids along the segment
    chains = {}

    def retriangulate(p):
        tris = Delaunay(p).simplices
        return _kept_tris(p, tris, region, min_area)

    tris = retriangulate(pts)

    for _ in range(smooth_iters):
        # neighbor-mean update for movable nodes, then keep only moves that
        # stay inside the region and clear of the boundary samples
        n = pts.shape[0]
        acc = np.zeros((n, 2))
        cnt = np.zeros(n)
        for a, b in ((0, 1), (1, 2), (2, 0)):
            np.add.at(acc, tris[:, a], pts[tris[:, b]])
            np.add.at(cnt, tris[:, a], 1.0)
            np.add.at(acc, tris[:, b], pts[tris[:, a]])
            np.add.at(cnt, tris[:, b], 1.0)
        movable = cnt > 0
        movable[:nb] = False
        new = pts.copy()
        new[movable] = acc[movable] / cnt[movable, None]
        cand = np.flatnonzero(movable)
        ok = shapely.contains_xy(region, new[cand, 0], new[cand, 1])
        dist, idx = btree.query(new[cand])
        ok &= dist >= 0.5 * bspace[idx]
        rejected = cand[~ok]
        new[rejected] = pts[rejected]
        pts = new
        tris = retriangulate(pts)

    # conformity recovery: every ring segment (or its chain of inserted
    # midpoints) must be present as mesh edges
    poly_area = region.area
    for _round in range(4):
        edges = _edge_set(tris)
        missing = []
        for ri, ring in enumerate(rings):
            base = ring_offsets[ri]
            k = ring.shape[0]
            for si in range(k):
                a = base + si
                b = base + (si + 1) % k
                chain = [a] + chains.get((ri, si), []) + [b]
                for u, v in zip(chain[:-1], chain[1:]):
                    if (min(u, v), max(u, v)) not in edges:
                        missing.append((ri, si, u, v))
        mesh_area = float(_tri_areas(pts, tris).sum())
        if not missing and abs(mesh_area - poly_area) <= area_tol * poly_area:
            break
        if not missing:
            # area defect without a missing boundary edge: filtering kept a
            # triangle crossing a hole, which densification also fixes
            missing = [(ri, si, ring_offsets[ri] + si, ring_offsets[ri] + (si + 1) % rings[ri].shape[0]) for ri in range(len(rings)) for si in range(rings[ri].shape[0])]
        for ri, si, u, v in missing:
            mid = 0.5 * (pts[u] + pts[v])
            pts = np.vstack([pts, mid[None, :]])
            mid_id = pts.shape[0] - 1
            chain = chains.setdefault((ri, si), [])
            chain.append(mid_id)
            # keep the chain ordered by distance from the segment start
            a0 = ring_offsets[ri] + si
            chains[(ri, si)] = sorted(chain, key=lambda j: float(np.linalg.norm(pts[j] - pts[a0])))
        tris = retriangulate(pts)
    else:
        raise MeshConformityError("could not recover region boundary in triangulation")

    tris = _orient_ccw(pts, tris)

    # drop unused points and renumber
    used = np.unique(tris)
    remap = -np.ones(pts.shape[0], dtype=int)
    remap[used] = np.arange(used.size)
    lost_boundary = np.flatnonzero(remap[:nb] < 0)
    if lost_boundary.size:
        raise MeshConformityError(f"{lost_boundary.size} boundary samples detached from mesh")
    nodes = pts[used]
    tris = remap[tris]
    ring_node_ids = [remap[np.arange(ring_offsets[i], ring_offsets[i + 1])] for i in range(len(rings))]
    return RegionMesh(nodes=nodes, tris=tris, ring_node_ids=ring_node_ids)


def tri3_to_tri6(nodes, tris):
    """Insert midside nodes. Returns (nodes, tri6 connectivity, edge_map)
    where edge_map maps a sorted corner pair to its midside node id."""
    edge_map = {}
    extra = []
    next_id = nodes.shape[0]
    conn = np.empty((tris.shape[0], 6), dtype=int)
    conn[:, :3] = tris
    for t, (a, b, c) in enumerate(tris):
        for k, (u, v) in enumerate(((a, b), (b, c), (c, a))):
            key = (u, v) if u < v else (v, u)
            mid = edge_map.get(key)
            if mid is None:
                mid = next_id
                next_id += 1
                edge_map[key] = mid
                extra.append(0.5 * (nodes[u] + nodes[v]))
            conn[t, 3 + k] = mid
    all_nodes = np.vstack([nodes, np.asarray(extra)]) if extra else nodes
    return all_nodes, conn, edge_map


def fillet_polygon(vertices, radius, spacing, chord_tol=None):
    """Sample a convex polygon with circular corner fillets as a CCW ring.

    vertices: (k, 2) convex polygon, CCW. radius: fillet radius applied at
    every corner. spacing: target distance between samples on straight
    segments and an upper bound on arc samples. chord_tol: max sagitta of
    the arc chords; defaults to spacing-driven sampling only.

    Raises ValueError when the tangent points of neighboring corners cross,
    i.e. the fillet does not fit.
    """
    v = np.asarray(vertices, dtype=float)
    k = v.shape[0]
    tangents = []
    arcs = []
    for i in range(k):
        p = v[i]
        a = v[(i - 1) % k]
        b = v[(i + 1) % k]
        ua = (a - p) / np.linalg.norm(a - p)
        ub = (b - p) / np.linalg.norm(b - p)
        cos2a = np.clip(np.dot(ua, ub), -1.0, 1.0)
        alpha = 0.5 * np.arccos(cos2a)  # half the interior angle
        t = radius / np.tan(alpha)
        tangents.append(t)
        bis = ua + ub
        bis /= np.linalg.norm(bis)
        center = p + bis * radius / np.sin(alpha)
        pa = p + ua * t
        pb = p + ub * t
        arcs.append((center, pa, pb))
    # fillet feasibility on each edge
    for i in range(k):
        elen = np.linalg.norm(v[(i + 1) % k] - v[i])
        if tangents[i] + tangents[(i + 1) % k] > elen * (1 + 1e-12):
            raise ValueError("fillet radius too large for polygon edge")

    pts = []
    for i in range(k):
        center, pa, pb = arcs[i]
        # arc from pa to pb around center, CCW ring means the arc turns
        # through pi - interior angle
        va = pa - center
        vb = pb - center
        ang_a = np.arctan2(va[1], va[0])
        ang_b = np.arctan2(vb[1], vb[0])
        sweep = (ang_b - ang_a) % (2 * np.pi)
        if sweep > np.pi:
            sweep -= 2 * np.pi
        n_arc = max(2, int(np.ceil(abs(sweep) * radius / spacing)))
        if chord_tol is not None and chord_tol < radius:
            max_seg = 2.0 * np.arccos(max(1.0 - chord_tol / radius, 0.0))
            n_arc = max(n_arc, int(np.ceil(abs(sweep) / max_seg)))
        th = ang_a + sweep * np.arange(n_arc) / n_arc
        pts.append(center + radius * np.column_stack([np.cos(th), np.sin(th)]))
        # straight run to the next corner's first tangent point
        nxt = arcs[(i + 1) % k][1]
        run = nxt - pb
        rlen = np.linalg.norm(run)
        n_seg = max(1, int(round(rlen / spacing)))
        s = np.arange(n_seg) / n_seg
        pts.append(pb[None, :] + s[:, None] * run[None, :])
    ring = np.vstack(pts)
    # guard against near-duplicate points where arcs meet edges
    d = np.linalg.norm(np.roll(ring, -1, axis=0) - ring, axis=1)
    keep = d > 1e-9 * max(radius, spacing)
    return ring[keep]

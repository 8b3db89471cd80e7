"""Triangular lattice cell geometry and mesh generation.

The lattice is spanned by R1 = (1, 0) and R2 = (1/2, sqrt(3)/2) scaled by the
cell size d. One parallelogram cell splits along its short diagonal into two
equilateral triangles; each holds a triangular void with filleted corners.
Struts of width w remain between voids. Void side length is u = d - sqrt(3) w.

Material area fraction of a cell with fillet radius r:

    rho(w) = 1 - (u/d)^2 + (12 - 4 pi / sqrt(3)) (r/d)^2

valid while the fillets fit, u >= 2 sqrt(3) r. The last term accounts for the
six corner regions per cell where the fillet arc replaces the sharp corner.
"""

from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry import Polygon, box

from .mesh import Mesh, element_areas
from .meshing import (
    MeshConformityError,
    fillet_polygon,
    filter_seeds,
    hex_seeds,
    ring_spacing,
    tri3_to_tri6,
    triangulate_region,
)

SQRT3 = np.sqrt(3.0)
R1 = np.array([1.0, 0.0])
R2 = np.array([0.5, SQRT3 / 2.0])

# removed-corner coefficient in the area formula
FILLET_COEF = 12.0 - 4.0 * np.pi / SQRT3

# default fillet radius as a fraction of cell size
DEFAULT_R_REL = 0.05

# density given to void cells below this resolvable width fraction
MIN_DENSITY = 0.02


class InfeasibleDensity(ValueError):
    """Requested density outside the range the fillet geometry can realize."""


def density_bounds(r_rel):
    """(rho_min, rho_max) realizable by the fillet geometry at radius r_rel.

    The lower bound is the fraction left when struts vanish (w = 0); the
    upper bound is where neighboring fillets touch (u = 2 sqrt(3) r).
    """
    lo = FILLET_COEF * r_rel**2
    hi = 1.0 - (4.0 * np.pi / SQRT3) * r_rel**2
    return lo, hi


def density_from_width(w_rel, r_rel):
    """Material fraction of a cell for strut width w and fillet radius r,
    both relative to d."""
    u = 1.0 - SQRT3 * w_rel
    return 1.0 - u * u + FILLET_COEF * r_rel**2


def strut_width_for_volume(rho, r_rel=DEFAULT_R_REL):
    """Strut width (relative to d) producing material fraction rho.

    Bisection on the area expression to 1e-10 relative width resolution.
    Raises InfeasibleDensity outside the realizable range.
    """
    lo, hi = density_bounds(r_rel)
    if not lo <= rho <= hi:
        raise InfeasibleDensity(f"rho={rho:.6g} outside [{lo:.6g}, {hi:.6g}] at r/d={r_rel:.6g}")
    wa, wb = 0.0, (1.0 - 2.0 * SQRT3 * r_rel) / SQRT3
    for _ in range(80):
        wm = 0.5 * (wa + wb)
        if density_from_width(wm, r_rel) < rho:
            wa = wm
        else:
            wb = wm
        if wb - wa <= 1e-10 * max(wb, 1e-30):
            break
    return 0.5 * (wa + wb)


@dataclass(frozen=True)
class UnitCellParams:
    """Geometry of one lattice cell. d in m, rho the material fraction,
    r_rel the fillet radius relative to d."""

    d: float
    rho: float
    r_rel: float = DEFAULT_R_REL

    @property
    def w(self):
        return strut_width_for_volume(self.rho, self.r_rel) * self.d

    @property
    def r(self):
        return self.r_rel * self.d

    @property
    def cell_area(self):
        return SQRT3 / 2.0 * self.d**2


def _void_rings(origin, d, w, r, spacing, chord_tol):
    """Sample the two void rings of the cell anchored at origin."""
    o = np.asarray(origin, dtype=float)
    a = o + d * R1
    b = o + d * (R1 + R2)
    c = o + d * R2
    rings = []
    for tri in ((o, a, c), (a, b, c)):
        tri = np.asarray(tri)
        centroid = tri.mean(axis=0)
        inradius = d / (2.0 * SQRT3)
        scale = (inradius - 0.5 * w) / inradius
        void = centroid + scale * (tri - centroid)
        rings.append(fillet_polygon(void, r, spacing, chord_tol))
    return rings


def void_polygon_area(d, w, r):
    """Exact area of one triangular void with filleted corners."""
    u = d - SQRT3 * w
    return SQRT3 / 4.0 * u * u - (3.0 * SQRT3 - np.pi) * r * r


def _sampled_edge(p0, shift, n):
    """n+1 points from p0 along shift; last point is exactly p0 + shift."""
    t = np.arange(n + 1)[:, None] / n
    pts = p0[None, :] + t * shift[None, :]
    pts[-1] = p0 + shift
    return pts


def mesh_unit_cell(params, kappa=1, target_elements=1200):
    """Mesh a kappa x kappa block of lattice cells with tri6 elements.

    The outer boundary is the parallelogram spanned by kappa*d*R1 and
    kappa*d*R2. Opposite faces carry identical samplings; periodic pairs
    (corner and midside nodes) map each right/top node to its left/bottom
    master, with corner chains resolved to the block origin.
    """
    if params.rho < MIN_DENSITY:
        raise InfeasibleDensity(f"rho={params.rho:.4g} below mesh lower limit {MIN_DENSITY}")
    # beyond the fillet feasibility limit the voids close: solid parallelogram
    solid = params.rho >= density_bounds(params.r_rel)[1]
    d = params.d
    w = 0.0 if solid else params.w
    r = params.r
    L = kappa * d

    # target spacing from the expected element count of the block
    material = params.rho * params.cell_area * kappa**2
    h = float(np.sqrt(material / (0.433 * target_elements)))
    h = min(h, 0.9 * w) if w > 0 else h
    chord_tol = 1e-3 * r

    # outer ring with exactly matching opposite faces
    origin = np.zeros(2)
    n_edge = max(2, int(round(L / h)))
    bottom = _sampled_edge(origin, L * R1, n_edge)
    left = _sampled_edge(origin, L * R2, n_edge)
    right = left + L * R1
    top = bottom + L * R2
    outer = np.vstack([bottom[:-1], right[:-1], top[::-1][:-1], left[::-1][:-1]])

    rings = [outer]
    if not solid:
        for j in range(kappa):
            for i in range(kappa):
                cell_origin = (i * d) * R1 + (j * d) * R2
                rings.extend(_void_rings(cell_origin, d, w, r, h, chord_tol))

    region = Polygon(rings[0], [rg for rg in rings[1:]])
    seeds = hex_seeds(region.bounds, h)
    bpts = np.vstack(rings)
    bspace = np.concatenate([ring_spacing(rg) for rg in rings])
    shapely.prepare(region)
    seeds = filter_seeds(seeds, h, region, bpts, bspace)

    rm = triangulate_region(rings, seeds, region=region)
    nodes, conn, edge_map = tri3_to_tri6(rm.nodes, rm.tris)

    # face node ids in construction order (outer ring concatenation above);
    # forward order runs bottom->top and left->right so opposite faces align
    ids = rm.ring_node_ids[0]
    face = {}
    face["bottom"] = np.concatenate([ids[: n_edge + 1]])
    face["right"] = np.concatenate([ids[n_edge : 2 * n_edge + 1]])
    face["top"] = np.concatenate([ids[2 * n_edge : 3 * n_edge + 1]])[::-1]
    face["left"] = np.concatenate([ids[3 * n_edge :], ids[:1]])[::-1]

    shift1 = L * R1
    shift2 = L * R2

    def midnodes(face_ids):
        out = []
        for a, bpt in zip(face_ids[:-1], face_ids[1:]):
            key = (int(a), int(bpt)) if a < bpt else (int(bpt), int(a))
            out.append(edge_map[key])
        return np.asarray(out, dtype=int)

    masters, slaves, shifts = [], [], []

    def add_pairs(m_ids, s_ids, shift):
        for m, s in zip(m_ids, s_ids):
            if m == s:
                continue
            masters.append(int(m))
            slaves.append(int(s))
            shifts.append(shift)

    add_pairs(face["left"], face["right"], shift1)
    add_pairs(midnodes(face["left"]), midnodes(face["right"]), shift1)
    add_pairs(face["bottom"], face["top"], shift2)
    add_pairs(midnodes(face["bottom"]), midnodes(face["top"]), shift2)

    # resolve slave -> slave chains (block corners) and deduplicate
    m_of = {}
    sh_of = {}
    for m, s, sh in zip(masters, slaves, shifts):
        if s not in m_of:
            m_of[s] = m
            sh_of[s] = np.asarray(sh, dtype=float)
    for s in list(m_of):
        seen = {s}
        while m_of[s] in m_of:
            nxt = m_of[s]
            if nxt in seen:
                raise RuntimeError("periodic pairing produced a cycle")
            seen.add(nxt)
            sh_of[s] = sh_of[s] + sh_of[nxt]
            m_of[s] = m_of[nxt]
    slaves_f = sorted(m_of)
    masters_f = np.asarray([m_of[s] for s in slaves_f], dtype=int)
    shifts_f = np.asarray([sh_of[s] for s in slaves_f])

    mesh = Mesh(
        nodes=nodes,
        elements=conn,
        element_type="tri6",
        boundary_node_sets={k: np.asarray(sorted(set(map(int, v)))) for k, v in face.items()},
        periodic_masters=masters_f,
        periodic_slaves=np.asarray(slaves_f, dtype=int),
        periodic_shifts=shifts_f,
    )
    _check_area_fraction(mesh, 1.0 if solid else params.rho, L * L * SQRT3 / 2.0)
    return mesh


def _check_area_fraction(mesh, rho, domain_area, tol=1e-3):
    frac = float(np.sum(element_areas(mesh))) / domain_area
    if abs(frac - rho) > tol:
        raise MeshConformityError(f"mesh area fraction {frac:.6f} deviates from rho {rho:.6f}")


def mesh_macro_grid(nx, ny, Lx, Ly):
    """Structured quad4 grid on [0, Lx] x [0, Ly], row-major node numbering
    with x fastest. Boundary sets left/right/bottom/top."""
    x = np.linspace(0.0, Lx, nx + 1)
    y = np.linspace(0.0, Ly, ny + 1)
    X, Y = np.meshgrid(x, y, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    ii = ii.ravel()
    jj = jj.ravel()
    conn = np.column_stack([nid(ii, jj), nid(ii + 1, jj), nid(ii + 1, jj + 1), nid(ii, jj + 1)])

    sets = {
        "left": np.asarray([nid(0, j) for j in range(ny + 1)]),
        "right": np.asarray([nid(nx, j) for j in range(ny + 1)]),
        "bottom": np.asarray([nid(i, 0) for i in range(nx + 1)]),
        "top": np.asarray([nid(i, ny) for i in range(nx + 1)]),
    }
    return Mesh(nodes=nodes, elements=conn, element_type="quad4", boundary_node_sets=sets)


@dataclass(frozen=True)
class DensityField:
    """Element-constant densities on a structured macro grid."""

    nx: int
    ny: int
    Lx: float
    Ly: float
    rho: np.ndarray  # (nx * ny,) row-major, x fastest

    def bilinear(self, pts):
        """Bilinear interpolation between element centers, clamped at the
        boundary (nearest-center extension)."""
        hx = self.Lx / self.nx
        hy = self.Ly / self.ny
        cx = (np.arange(self.nx) + 0.5) * hx
        cy = (np.arange(self.ny) + 0.5) * hy
        grid = self.rho.reshape(self.ny, self.nx)
        px = np.clip(pts[:, 0], cx[0], cx[-1])
        py = np.clip(pts[:, 1], cy[0], cy[-1])
        ix = np.clip(((px - cx[0]) / hx).astype(int), 0, self.nx - 2)
        iy = np.clip(((py - cy[0]) / hy).astype(int), 0, self.ny - 2)
        tx = (px - cx[ix]) / hx
        ty = (py - cy[iy]) / hy
        v00 = grid[iy, ix]
        v10 = grid[iy, ix + 1]
        v01 = grid[iy + 1, ix]
        v11 = grid[iy + 1, ix + 1]
        return (1 - tx) * (1 - ty) * v00 + tx * (1 - ty) * v10 + (1 - tx) * ty * v01 + tx * ty * v11


def _lattice_cells_covering(Lx, Ly, d):
    """Cell origins (i d R1 + j d R2) whose parallelogram overlaps the
    rectangle [0,Lx] x [0,Ly]."""
    j_max = int(np.ceil(Ly / (d * R2[1])))
    cells = []
    for j in range(j_max):
        x_off = j * d * R2[0]
        i_min = int(np.floor(-x_off / d)) - 1
        i_max = int(np.ceil((Lx - x_off) / d))
        for i in range(i_min, i_max + 1):
            cells.append((i, j))
    return cells


def dehomogenize(field, n_cells_x, target_elements, r_rel=DEFAULT_R_REL, area_tol=1e-6):
    """Build a tri6 lattice mesh realizing a macro density field.

    The lattice cell size is d = Lx / n_cells_x. Each cell takes its strut
    width from the density interpolated at the cell center. A global width
    rescaling enforces that the realized solid area matches the density
    field within area_tol relative; cells saturated beyond the fillet
    feasibility limit are solid and excluded from the rescaling budget
    (their voids are closed, so width has no effect there). Returns
    (mesh, info dict).
    """
    Lx, Ly = field.Lx, field.Ly
    d = Lx / n_cells_x
    r = r_rel * d
    rho_lo, rho_hi = density_bounds(r_rel)

    cells = _lattice_cells_covering(Lx, Ly, d)
    origins = np.asarray([(i * d) * R1 + (j * d) * R2 for i, j in cells])
    centers = origins + d * (R1 + R2) * 0.5
    rho_c = field.bilinear(centers)
    rho_c = np.clip(rho_c, rho_lo + 1e-9, None)

    # solid cells: density beyond the fillet feasibility limit gets no void
    solid = rho_c >= rho_hi
    w_c = np.zeros(rho_c.shape)
    for k in np.flatnonzero(~solid):
        w_c[k] = strut_width_for_volume(float(rho_c[k]), r_rel) * d

    domain = box(0.0, 0.0, Lx, Ly)
    cell_area = SQRT3 / 2.0 * d * d

    # per-cell in-domain areas; the void budget counts lattice cells only
    cell_poly_area = np.empty(len(cells))
    for k, o in enumerate(origins):
        poly = Polygon([o, o + d * R1, o + d * (R1 + R2), o + d * R2])
        cell_poly_area[k] = poly.area if domain.contains(poly) else poly.intersection(domain).area
    target_area = Lx * Ly - float(np.sum((1.0 - rho_c[~solid]) * cell_poly_area[~solid]))

    # per-cell spacing from an equal share of the element budget, capped so
    # struts keep at least about one element across their width
    n_dom = max(Lx * Ly / cell_area, 1.0)
    n_per_cell = max(40.0, target_elements / n_dom)
    h_c = np.sqrt(np.maximum(rho_c, 0.05) * cell_area / (0.433 * n_per_cell))
    strut_cap = np.where(solid, np.inf, np.maximum(1.15 * w_c, 0.015 * d))
    h_c = np.clip(np.minimum(h_c, strut_cap), 0.008 * d, 0.35 * d)

    def build_rings(gamma):
        """Void rings at width scale gamma, clipped to the domain. Returns
        (interior rings, clipped shapely polys, total void area)."""
        rings = []
        clipped = []
        area = 0.0
        for k, (o, wk) in enumerate(zip(origins, w_c)):
            if solid[k]:
                continue
            wg = gamma * wk
            u = d - SQRT3 * wg
            if u <= 2.0 * SQRT3 * r:
                continue  # scaled width closes the void
            spacing = min(h_c[k], max(0.35 * h_c[k], np.sqrt(8.0 * r * 0.05 * h_c[k])))
            for ring in _void_rings(o, d, wg, r, spacing, chord_tol=None):
                poly = Polygon(ring)
                minx, miny, maxx, maxy = poly.bounds
                if minx >= 0.0 and miny >= 0.0 and maxx <= Lx and maxy <= Ly:
                    rings.append(ring)
                    area += poly.area
                else:
                    inter = poly.intersection(domain)
                    if inter.is_empty or inter.area <= 0.0:
                        continue
                    clipped.append(inter)
                    area += inter.area
        return rings, clipped, area

    def material_area(gamma):
        _, _, void = build_rings(gamma)
        return Lx * Ly - void

    # monotone in gamma: wider struts -> smaller voids -> more material
    from scipy.optimize import brentq

    f = lambda g: material_area(g) - target_area
    if np.all(solid) or abs(f(1.0)) <= 1e-12 * Lx * Ly:
        gamma = 1.0
    else:
        g_lo, g_hi = 0.5, 1.5
        f_lo, f_hi = f(g_lo), f(g_hi)
        while f_lo > 0.0 and g_lo > 0.05:
            g_lo *= 0.5
            f_lo = f(g_lo)
        while f_hi < 0.0 and g_hi < 4.0:
            g_hi *= 1.5
            f_hi = f(g_hi)
        gamma = brentq(f, g_lo, g_hi, xtol=1e-12, rtol=8.9e-16)

    rings, clipped, _ = build_rings(gamma)

    # assemble the region: interior voids as polygon holes, boundary-clipped
    # voids via difference
    # outer rectangle sampled at the local cell spacing
    def rect_edge(p0, p1):
        pts = [np.asarray(p0, dtype=float)]
        total = np.linalg.norm(np.asarray(p1) - np.asarray(p0))
        direction = (np.asarray(p1) - np.asarray(p0)) / total
        s = 0.0
        while True:
            probe = pts[-1] + 1e-6 * total * direction
            hk = h_c[np.argmin(np.linalg.norm(centers - probe, axis=1))]
            step = min(hk, total - s)
            if total - (s + step) < 0.4 * hk:
                break
            s += step
            pts.append(np.asarray(p0) + s * direction)
        pts.append(np.asarray(p1, dtype=float))
        return np.asarray(pts)

    corners = [np.array([0.0, 0.0]), np.array([Lx, 0.0]), np.array([Lx, Ly]), np.array([0.0, Ly])]
    outer = np.vstack(
        [
            rect_edge(corners[0], corners[1])[:-1],
            rect_edge(corners[1], corners[2])[:-1],
            rect_edge(corners[2], corners[3])[:-1],
            rect_edge(corners[3], corners[0])[:-1],
        ]
    )

    region = Polygon(outer, [rg for rg in rings])
    if clipped:
        from shapely.ops import unary_union

        region = region.difference(unary_union(clipped))
        if region.geom_type == "MultiPolygon":
            region = max(region.geoms, key=lambda g: g.area)

    # extract rings from the final region so clipped voids are represented;
    # the boolean ops can emit duplicate consecutive vertices, which would
    # leave unrecoverable zero-length boundary segments
    def clean_ring(ring, tol):
        keep = [0]
        for i in range(1, ring.shape[0]):
            if np.linalg.norm(ring[i] - ring[keep[-1]]) > tol:
                keep.append(i)
        if len(keep) > 1 and np.linalg.norm(ring[keep[-1]] - ring[keep[0]]) <= tol:
            keep.pop()
        return ring[keep]

    tol_dup = 1e-9 * d
    ext = clean_ring(np.asarray(region.exterior.coords)[:-1], tol_dup)
    hole_rings = [clean_ring(np.asarray(g.coords)[:-1], tol_dup) for g in region.interiors]
    all_rings = [ext] + hole_rings
    region = Polygon(ext, hole_rings)

    # interior seeds cell by cell at the local spacing; each seed is kept
    # only by the cell whose parallelogram contains it, so overlapping cell
    # bounding boxes do not double up
    lattice = d * np.column_stack([R1, R2])
    lat_inv = np.linalg.inv(lattice)
    seeds_list = []
    for k, o in enumerate(origins):
        bb = (
            max(min(o[0], o[0] + d * R2[0]), 0.0),
            max(o[1], 0.0),
            min(max(o[0] + d, o[0] + d + d * R2[0]), Lx),
            min(o[1] + d * R2[1], Ly),
        )
        if bb[0] >= bb[2] or bb[1] >= bb[3]:
            continue
        pts = hex_seeds(bb, float(h_c[k]))
        if pts.shape[0] == 0:
            continue
        loc = (pts - o) @ lat_inv.T
        own = np.all((loc >= 0.0) & (loc < 1.0), axis=1)
        pts = pts[own]
        if pts.shape[0]:
            seeds_list.append(np.column_stack([pts, np.full(pts.shape[0], h_c[k])]))
    raw = np.vstack(seeds_list)
    seeds = raw[:, :2]
    seed_h = raw[:, 2]

    bpts = np.vstack(all_rings)
    bspace = np.concatenate([ring_spacing(rg) for rg in all_rings])
    shapely.prepare(region)
    seeds_in = filter_seeds(seeds, seed_h, region, bpts, bspace)

    rm = triangulate_region(all_rings, seeds_in, region=region, smooth_iters=3)
    nodes, conn, _ = tri3_to_tri6(rm.nodes, rm.tris)

    tol = 1e-9 * max(Lx, Ly)
    sets = {
        "left": np.flatnonzero(np.abs(nodes[:, 0]) < tol),
        "right": np.flatnonzero(np.abs(nodes[:, 0] - Lx) < tol),
        "bottom": np.flatnonzero(np.abs(nodes[:, 1]) < tol),
        "top": np.flatnonzero(np.abs(nodes[:, 1] - Ly) < tol),
    }
    mesh = Mesh(nodes=nodes, elements=conn, element_type="tri6", boundary_node_sets=sets)

    achieved = float(np.sum(element_areas(mesh)))
    rel_err = abs(achieved - target_area) / (Lx * Ly)
    if rel_err > area_tol * 10:
        raise MeshConformityError(f"dehomogenized area off target by {rel_err:.3e} relative")
    info = {
        "d": d,
        "gamma": float(gamma),
        "target_area": target_area,
        "achieved_area": achieved,
        "rel_area_error": rel_err,
        "n_cells": int(np.sum(~solid)),
        "n_solid_cells": int(np.sum(solid)),
    }
    return mesh, info

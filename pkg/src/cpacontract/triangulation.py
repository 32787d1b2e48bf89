"""Simplicial triangulation of the phase cylinder [0,T) x R^n.

The complex subdivides each scaled lattice cell into (n+1)! simplices via
the permutation construction, reflects cells with negative coordinates so
that the mesh is symmetric about the coordinate planes, keeps exactly the
simplices meeting the region interior, and identifies vertices at t=0 with
their t=T counterparts (periodic storage slots).

Bulk data is kept in flat numpy arrays; `Simplex` objects are lightweight
views used by the per-simplex APIs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import (
    DisconnectedRegionError,
    EmptySelectionError,
    OutsideDomainError,
    SingularSimplexError,
)

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class ScalingMatrix:
    """Diagonal scaling (1, s1..sn); the leading 1 keeps the mesh periodic."""

    diag: tuple

    def __post_init__(self):
        if len(self.diag) < 2:
            raise ValueError("scaling needs at least the t entry and one spatial entry")
        if self.diag[0] != 1.0:
            raise ValueError("first scaling entry must be exactly 1")
        if any(s <= 0 for s in self.diag):
            raise ValueError("scaling entries must be positive")

    @classmethod
    def identity(cls, n):
        return cls((1.0,) * (n + 1))

    @classmethod
    def from_spatial(cls, spatial):
        return cls((1.0,) + tuple(float(s) for s in spatial))

    @property
    def n(self):
        return len(self.diag) - 1

    @property
    def s_star(self):
        return min(self.diag)

    @property
    def S_star(self):
        return np.sqrt(self.n + 1) * max(self.diag)


@dataclass(frozen=True)
class Geometry:
    X: np.ndarray
    Xinv: np.ndarray
    h: float
    one_norm_inv: float


def simplex_geometry(vertices):
    """Shape matrix, its inverse, diameter, and the 1-norm of the inverse.

    `vertices` is an (n+2, n+1) array; rows of X are v_k - v_0.
    Raises SingularSimplexError for affinely dependent vertex sets.
    """
    verts = np.asarray(vertices, dtype=float)
    d = verts.shape[1]
    if verts.shape[0] != d + 1:
        raise ValueError(f"expected {d + 1} vertices in dimension {d}")
    X = verts[1:] - verts[0]
    try:
        Xinv = np.linalg.inv(X)
    except np.linalg.LinAlgError:
        raise SingularSimplexError("shape matrix is singular") from None
    norm_x = np.abs(X).sum(axis=0).max()
    norm_inv = np.abs(Xinv).sum(axis=0).max()
    if not np.isfinite(norm_inv) or norm_x * norm_inv > _COND_LIMIT:
        raise SingularSimplexError(
            f"shape matrix condition estimate {norm_x * norm_inv:.2e} too large")
    h = 0.0
    for a in range(d + 1):
        dist = np.linalg.norm(verts[a + 1:] - verts[a], axis=1)
        if dist.size:
            h = max(h, float(dist.max()))
    return Geometry(X=X, Xinv=Xinv, h=h, one_norm_inv=float(norm_inv))


def _permutation_patterns(n):
    """For each permutation sigma of 0..n, the 0/1 increments of the
    n+2 simplex vertices: patt[p, k, c] = 1 iff c in sigma[:k]."""
    perms = list(itertools.permutations(range(n + 1)))
    patt = np.zeros((len(perms), n + 2, n + 1), dtype=np.int64)
    for p, sigma in enumerate(perms):
        for k in range(1, n + 2):
            patt[p, k, list(sigma[:k])] = 1
    return perms, patt


def reference_shape_constant(n):
    """Complex-wide constant X*: the largest 1-norm of the inverse shape
    matrix over the reference simplices of the unit cell (reflections do
    not change the value, so permutations suffice)."""
    _, patt = _permutation_patterns(n)
    worst = 0.0
    for p in range(patt.shape[0]):
        verts = patt[p].astype(float)
        X = verts[1:] - verts[0]
        worst = max(worst, float(np.abs(np.linalg.inv(X)).sum(axis=0).max()))
    return worst


def _normalize_region(region):
    boxes = []
    for b in region:
        arr = np.asarray(b, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("region box must be a list of [lo, hi] pairs")
        if np.any(arr[:, 0] >= arr[:, 1]):
            raise ValueError("region box has empty interior")
        boxes.append(arr)
    if not boxes:
        raise ValueError("region must contain at least one box")
    dims = {b.shape[0] for b in boxes}
    if len(dims) != 1:
        raise ValueError("region boxes have inconsistent dimensions")
    return boxes


def _check_region_connected(boxes):
    """Interior of the union must be connected: boxes adjacent when their
    overlap is full-dimensional or a positive-measure shared facet."""
    nb = len(boxes)
    if nb == 1:
        return
    adj = [[] for _ in range(nb)]
    for i in range(nb):
        for j in range(i + 1, nb):
            lo = np.maximum(boxes[i][:, 0], boxes[j][:, 0])
            hi = np.minimum(boxes[i][:, 1], boxes[j][:, 1])
            width = hi - lo
            if np.any(width < 0):
                continue
            degenerate = int(np.sum(width == 0))
            if degenerate <= 1 and np.all(width[width != 0] > 0) and (
                    degenerate == 0 or np.sum(width > 0) == len(width) - 1):
                adj[i].append(j)
                adj[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        for j in adj[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    if len(seen) != nb:
        raise DisconnectedRegionError(
            "region boxes do not form a connected-interior union")


class Simplex:
    """View of one simplex of a complex (geometry caches included)."""

    __slots__ = ("complex", "index")

    def __init__(self, cx, index):
        self.complex = cx
        self.index = int(index)

    @property
    def vertex_ids(self):
        return self.complex.simp_verts[self.index]

    @property
    def vertices(self):
        return self.complex.vert_xyz[self.complex.simp_verts[self.index]]

    @property
    def slots(self):
        return self.complex.vert_slot[self.complex.simp_verts[self.index]]

    @property
    def X(self):
        return self.complex.X[self.index]

    @property
    def Xinv(self):
        return self.complex.Xinv[self.index]

    @property
    def h(self):
        return float(self.complex.h[self.index])

    @property
    def one_norm_inv(self):
        return float(self.complex.Xinv_1norm[self.index])

    @property
    def B2(self):
        if self.complex.B2 is None:
            return None
        return float(self.complex.B2[self.index])

    @property
    def B3(self):
        if self.complex.B3 is None:
            return None
        return float(self.complex.B3[self.index])

    @property
    def generator(self):
        """(slab, x-cell tuple, permutation index)."""
        g = self.complex.simp_gen[self.index]
        return int(g[0]), tuple(int(v) for v in g[1:-1]), int(g[-1])

    def barycentric(self, point, tol=1e-9):
        from .cpa import barycentric
        return barycentric(self, point, tol)


def barycentric_weights(Xinv, v0, point):
    """All n+2 barycentric weights of a point, first weight for v0."""
    lam = Xinv.T @ (np.asarray(point, dtype=float) - v0)
    return np.concatenate(([1.0 - lam.sum()], lam))


@dataclass
class ValidationReport:
    face_violations: list = field(default_factory=list)
    duplicate_simplices: list = field(default_factory=list)
    unpaired_vertices: list = field(default_factory=list)
    cover_ok: bool = True
    cover_failures: list = field(default_factory=list)
    pairs_checked: int = 0

    @property
    def ok(self):
        return (not self.face_violations and not self.duplicate_simplices
                and not self.unpaired_vertices and self.cover_ok)


class SimplicialComplex:
    """Cylinder triangulation with geometry caches and periodic pairing.

    Attributes (bulk arrays):
        vert_q     (Nv, n+1) integer lattice coordinates, t index unwrapped
        vert_xyz   (Nv, n+1) real coordinates
        vert_slot  (Nv,) periodic storage slot per geometric vertex
        simp_verts (S, n+2) geometric vertex ids, generator order
        simp_gen   (S, n+3) generator key (slab, cell.., perm index)
        X, Xinv    (S, n+1, n+1) shape matrices and inverses
        h          (S,) diameters
        Xinv_1norm (S,)
        B2, B3     (S,) derivative-bound caches, None until filled
    """

    def __init__(self, n, T, K, scaling, region_boxes):
        self.n = n
        self.T = float(T)
        self.K = int(K)
        self.scaling = scaling
        self.region = region_boxes
        self.rho = self.T * 2.0 ** (-self.K)
        self.n_slabs = 2 ** self.K
        self.B2 = None
        self.B3 = None
        self.X_star = reference_shape_constant(n)

    # ---- construction helpers (filled by build_complex) ----

    @property
    def n_simplices(self):
        return self.simp_verts.shape[0]

    @property
    def n_vertices(self):
        return self.vert_xyz.shape[0]

    @property
    def n_slots(self):
        return self._n_slots

    def simplex(self, i):
        return Simplex(self, i)

    def simplices(self):
        for i in range(self.n_simplices):
            yield Simplex(self, i)

    @property
    def cell_sizes(self):
        return self.rho * np.asarray(self.scaling.diag)

    def slot_coordinates(self):
        """Representative (t in [0,T)) coordinates per storage slot."""
        return self.vert_xyz[self.slot_rep]

    def wrap_time(self, t):
        tw = t - self.T * np.floor(t / self.T)
        return np.where(tw >= self.T, 0.0, tw) if isinstance(tw, np.ndarray) else (
            0.0 if tw >= self.T else tw)

    def _cell_key(self, slab, cell):
        return (int(slab),) + tuple(int(c) for c in cell)

    def candidate_simplices(self, point, neighbors=True):
        """Simplex ids whose cells could contain the point."""
        p = np.asarray(point, dtype=float)
        tw = self.wrap_time(p[0])
        sizes = self.cell_sizes
        slab = min(int(np.floor(tw / self.rho)), self.n_slabs - 1)
        cell = np.floor(p[1:] / sizes[1:]).astype(int)
        keys = [self._cell_key(slab, cell)]
        if neighbors:
            offs = itertools.product((-1, 0, 1), repeat=self.n + 1)
            for off in offs:
                if all(o == 0 for o in off):
                    continue
                sl = (slab + off[0]) % self.n_slabs
                keys.append(self._cell_key(sl, cell + np.asarray(off[1:])))
        out = []
        seen = set()
        for key in keys:
            rng = self._cell_map.get(key)
            if rng is not None:
                for sid in range(rng[0], rng[1]):
                    if sid not in seen:
                        seen.add(sid)
                        out.append(sid)
        return sorted(out)

    def containing(self, point, tol=1e-9):
        """All (simplex id, barycentric weights) containing the point."""
        p = np.asarray(point, dtype=float)
        p = np.concatenate(([self.wrap_time(p[0])], p[1:]))
        hits = []
        for sid in self.candidate_simplices(p):
            lam = barycentric_weights(self.Xinv[sid],
                                      self.vert_xyz[self.simp_verts[sid, 0]], p)
            if lam.min() >= -tol:
                hits.append((sid, lam))
        return hits

    def locate(self, point, tol=1e-9):
        hits = self.containing(point, tol)
        if not hits:
            raise OutsideDomainError(f"point {point} not in the triangulated domain")
        return hits[0]


def build_complex(region, T, K, scaling=None, selection_margin=1e-12):
    """Construct the level-K triangulation of [0,T) x region.

    `region` is a list of boxes in x (each a list of [lo, hi] pairs with
    connected-interior union). Keeps the simplices whose interior meets
    the region interior; the test is exact (vertex membership fast path,
    then a small LP on barycentric coordinates per region box).
    """
    boxes = _normalize_region(region)
    n = boxes[0].shape[0]
    _check_region_connected(boxes)
    if K < 0 or int(K) != K:
        raise ValueError("K must be a nonnegative integer")
    if scaling is None:
        scaling = ScalingMatrix.identity(n)
    if scaling.n != n:
        raise ValueError("scaling dimension does not match region dimension")

    cx = SimplicialComplex(n, T, K, scaling, boxes)
    rho = cx.rho
    sizes = cx.cell_sizes  # (n+1,), entry 0 is the t step

    # Candidate x-cells: integer cells whose closure meets some box.
    per_dim = []
    for j in range(n):
        vals = set()
        for b in boxes:
            cmin = int(np.floor(b[j, 0] / sizes[j + 1])) - 1
            cmax = int(np.ceil(b[j, 1] / sizes[j + 1])) + 1
            vals.update(range(cmin, cmax + 1))
        per_dim.append(np.array(sorted(vals), dtype=np.int64))
    grids = np.meshgrid(*per_dim, indexing="ij") if n > 1 else [per_dim[0]]
    cells = np.stack([g.ravel() for g in grids], axis=1)  # (Nc, n)

    cell_lo = cells * sizes[1:]
    cell_hi = (cells + 1) * sizes[1:]
    meets_any = np.zeros(len(cells), dtype=bool)
    inside_any = np.zeros(len(cells), dtype=bool)
    for b in boxes:
        meets = np.all((cell_lo <= b[:, 1]) & (cell_hi >= b[:, 0]), axis=1)
        meets_any |= meets
        inside_any |= np.all((cell_lo >= b[:, 0]) & (cell_hi <= b[:, 1]), axis=1)
    cells = cells[meets_any]
    cell_inside = inside_any[meets_any]
    if len(cells) == 0:
        raise EmptySelectionError("no lattice cell meets the region")

    perms, patt = _permutation_patterns(n)
    n_perm = len(perms)
    n_slabs = cx.n_slabs
    Nc = len(cells)

    # Vertex lattice coordinates of every simplex of every cell, one slab.
    # x part: independent of the slab; t part added later.
    cell_rep = np.repeat(cells, n_perm, axis=0)              # (Nc*P, n)
    patt_rep = np.tile(patt, (Nc, 1, 1))                     # (Nc*P, n+2, n+1)
    xq = np.where(
        (cell_rep >= 0)[:, None, :],
        cell_rep[:, None, :] + patt_rep[:, :, 1:],
        cell_rep[:, None, :] + 1 - patt_rep[:, :, 1:],
    )                                                        # (Nc*P, n+2, n)

    # Selection on the x-projection (identical for every slab).
    x_real = xq * sizes[1:]
    keep = np.repeat(cell_inside, n_perm)
    pending = np.nonzero(~keep)[0]
    if pending.size:
        # fast path: any vertex or the centroid strictly inside some box
        cent = x_real[pending].mean(axis=1)
        for b in boxes:
            vin = np.all((x_real[pending] > b[:, 0]) & (x_real[pending] < b[:, 1]),
                         axis=2).any(axis=1)
            cin = np.all((cent > b[:, 0]) & (cent < b[:, 1]), axis=1)
            keep[pending[vin | cin]] = True
        pending = np.nonzero(~keep)[0]
    scale = max(1.0, float(np.max(np.abs(x_real))) if x_real.size else 1.0)
    for idx in pending:
        pts = x_real[idx]
        for b in boxes:
            if np.any(pts.max(axis=0) <= b[:, 0]) or np.any(pts.min(axis=0) >= b[:, 1]):
                continue
            if _meets_box_interior(pts, b, selection_margin * scale):
                keep[idx] = True
                break
    if not np.any(keep):
        raise EmptySelectionError("no simplex meets the region interior")

    kept = np.nonzero(keep)[0]
    cell_of_kept = cell_rep[kept]
    perm_of_kept = (kept % n_perm).astype(np.int64)
    xq_kept = xq[kept]
    patt_kept = patt_rep[kept]
    S_per_slab = len(kept)

    # Replicate across slabs; t lattice coordinate is slab + pattern.
    slab_ids = np.repeat(np.arange(n_slabs, dtype=np.int64), S_per_slab)
    xq_all = np.tile(xq_kept, (n_slabs, 1, 1))
    tq_all = slab_ids[:, None] + np.tile(patt_kept[:, :, 0], (n_slabs, 1))
    simp_q = np.concatenate([tq_all[:, :, None], xq_all], axis=2)  # (S, n+2, n+1)

    cx.simp_gen = np.concatenate(
        [slab_ids[:, None], np.tile(cell_of_kept, (n_slabs, 1)),
         np.tile(perm_of_kept, n_slabs)[:, None]], axis=1)

    flat_q = simp_q.reshape(-1, n + 1)
    vert_q, inverse = np.unique(flat_q, axis=0, return_inverse=True)
    cx.vert_q = vert_q
    cx.simp_verts = inverse.reshape(-1, n + 2).astype(np.int64)
    cx.vert_xyz = vert_q * sizes

    slot_keys = vert_q.copy()
    slot_keys[:, 0] %= n_slabs
    uniq_slots, slot_inverse = np.unique(slot_keys, axis=0, return_inverse=True)
    cx.vert_slot = slot_inverse.astype(np.int64)
    cx._n_slots = uniq_slots.shape[0]

    # Representative vertex per slot: the copy with unwrapped t < T.
    rep = np.full(cx._n_slots, -1, dtype=np.int64)
    wrapped = vert_q[:, 0] < n_slabs
    rep[cx.vert_slot[wrapped]] = np.nonzero(wrapped)[0]
    cx.slot_rep = rep

    # Periodic pairing (t=0 vertex, t=T vertex) with identical x.
    at0 = np.nonzero(vert_q[:, 0] == 0)[0]
    atT = np.nonzero(vert_q[:, 0] == n_slabs)[0]
    byx = {tuple(vert_q[v, 1:]): v for v in atT}
    cx.pairing = np.array(
        [(v, byx[tuple(vert_q[v, 1:])]) for v in at0 if tuple(vert_q[v, 1:]) in byx],
        dtype=np.int64).reshape(-1, 2)

    verts_xyz = cx.vert_xyz[cx.simp_verts]  # (S, n+2, n+1)
    X = verts_xyz[:, 1:, :] - verts_xyz[:, :1, :]
    cx.X = X
    cx.Xinv = np.linalg.inv(X)
    cx.Xinv_1norm = np.abs(cx.Xinv).sum(axis=1).max(axis=1)

    h = np.zeros(cx.n_simplices)
    for a in range(n + 2):
        for b2 in range(a + 1, n + 2):
            d = np.linalg.norm(verts_xyz[:, a, :] - verts_xyz[:, b2, :], axis=1)
            h = np.maximum(h, d)
    cx.h = h

    # Cell map for point location: simplices are sorted by generator key
    # (slab-major, cells, permutation), so each cell is one contiguous run.
    order = np.lexsort(tuple(cx.simp_gen[:, k] for k in range(n + 1, -1, -1)))
    _reorder(cx, order)
    cell_map = {}
    gen = cx.simp_gen
    start = 0
    for i in range(1, cx.n_simplices + 1):
        if i == cx.n_simplices or not np.array_equal(gen[i, :-1], gen[start, :-1]):
            key = (int(gen[start, 0]),) + tuple(int(v) for v in gen[start, 1:-1])
            cell_map[key] = (start, i)
            start = i
    cx._cell_map = cell_map
    return cx


def _reorder(cx, order):
    cx.simp_gen = cx.simp_gen[order]
    cx.simp_verts = cx.simp_verts[order]
    cx.X = cx.X[order]
    cx.Xinv = cx.Xinv[order]
    cx.Xinv_1norm = cx.Xinv_1norm[order]
    cx.h = cx.h[order]


def _meets_box_interior(points, box, margin):
    """Exact test whether co(points) meets the open box: maximize the
    margin delta with lo + delta <= sum(lam p) <= hi - delta over the
    barycentric simplex."""
    m, n = points.shape
    c = np.zeros(m + 1)
    c[-1] = -1.0
    a_ub = np.zeros((2 * n, m + 1))
    b_ub = np.zeros(2 * n)
    a_ub[:n, :m] = points.T
    a_ub[:n, -1] = 1.0
    b_ub[:n] = box[:, 1]
    a_ub[n:, :m] = -points.T
    a_ub[n:, -1] = 1.0
    b_ub[n:] = -box[:, 0]
    a_eq = np.zeros((1, m + 1))
    a_eq[0, :m] = 1.0
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
                  bounds=[(0, None)] * m + [(0, None)], method="highs")
    return res.status == 0 and res.x is not None and res.x[-1] > margin


# ---------------------------------------------------------------------------
# Validation


def check_complex(cx, cover_samples=200, seed=0):
    """Structural validation: face-to-face property, periodic pairing,
    and sampled confirmation that the domain covers the region."""
    report = ValidationReport()

    order = np.sort(cx.simp_verts, axis=1)
    _, first, counts = np.unique(order, axis=0, return_index=True, return_counts=True)
    for idx in first[counts > 1]:
        report.duplicate_simplices.append(int(idx))

    # Face property is checked on the exact integer lattice coordinates
    # (the real mesh is their image under a positive diagonal scaling,
    # which preserves convex structure). Identical translation classes
    # share one verdict.
    pairs = _candidate_pairs(cx)
    report.pairs_checked = len(pairs)
    vq = cx.vert_q
    cache = {}
    for i, j, wrap in pairs:
        qa = vq[cx.simp_verts[i]]
        qb = vq[cx.simp_verts[j]].copy()
        if wrap:
            qb[:, 0] += cx.n_slabs
        base = np.minimum(qa.min(axis=0), qb.min(axis=0))
        key = (qa - base).tobytes() + b"|" + (qb - base).tobytes()
        verdict = cache.get(key)
        if verdict is None:
            verdict = _pair_violates_face_property(qa.astype(float),
                                                   qb.astype(float))
            cache[key] = verdict
        if verdict:
            report.face_violations.append((int(i), int(j)))

    # periodic pairing: every t=0 vertex needs a t=T twin and vice versa
    n_slabs = cx.n_slabs
    at0 = {tuple(cx.vert_q[v, 1:]) for v in np.nonzero(cx.vert_q[:, 0] == 0)[0]}
    atT = {tuple(cx.vert_q[v, 1:]) for v in np.nonzero(cx.vert_q[:, 0] == n_slabs)[0]}
    for x in sorted(at0 - atT):
        report.unpaired_vertices.append(("t=0", x))
    for x in sorted(atT - at0):
        report.unpaired_vertices.append(("t=T", x))
    paired = {(int(a), int(b)) for a, b in cx.pairing}
    for a, b in paired:
        if cx.vert_slot[a] != cx.vert_slot[b]:
            report.unpaired_vertices.append(("slot-mismatch", (a, b)))

    rng = np.random.default_rng(seed)
    pts = _region_sample_points(cx, cover_samples, rng)
    for p in pts:
        try:
            cx.locate(p, tol=1e-9)
        except OutsideDomainError:
            report.cover_ok = False
            report.cover_failures.append(tuple(p))
    return report


def _candidate_pairs(cx):
    """Simplex pairs in identical or adjacent cells (with t-wrap)."""
    pairs = []
    n_slabs = cx.n_slabs
    for key, (a0, a1) in cx._cell_map.items():
        for i in range(a0, a1):
            for j in range(i + 1, a1):
                pairs.append((i, j, False))
        for off in itertools.product((-1, 0, 1), repeat=cx.n + 1):
            if all(o == 0 for o in off):
                continue
            slab = key[0] + off[0]
            wrap = 0
            if slab < 0:
                slab += n_slabs
                wrap = -1
            elif slab >= n_slabs:
                slab -= n_slabs
                wrap = 1
            nkey = (slab,) + tuple(k + o for k, o in zip(key[1:], off[1:]))
            rng2 = cx._cell_map.get(nkey)
            if rng2 is None:
                continue
            for i in range(a0, a1):
                for j in range(rng2[0], rng2[1]):
                    if wrap == 0 and j <= i:
                        continue
                    if wrap == -1:
                        continue  # counted from the other side as wrap == 1
                    pairs.append((i, j, wrap == 1))
    return pairs


def check_face_property(vertex_coords, simplices):
    """Standalone face-to-face check for hand-built simplex sets.

    Returns the list of violating index pairs. All-pairs with a bounding
    box prefilter; intended for small inputs.
    """
    verts = np.asarray(vertex_coords, dtype=float)
    simp = np.asarray(simplices, dtype=int)
    out = []
    for i in range(len(simp)):
        vi = verts[simp[i]]
        for j in range(i + 1, len(simp)):
            vj = verts[simp[j]]
            if np.any(vi.max(axis=0) < vj.min(axis=0) - 1e-12) or \
               np.any(vj.max(axis=0) < vi.min(axis=0) - 1e-12):
                continue
            if _pair_violates_face_property(vi, vj):
                out.append((i, j))
    return out


def _pair_violates_face_property(va, vb):
    """True when co(va) and co(vb) intersect in more than the convex hull
    of their shared vertices.

    Coordinates where the two bounding boxes merely touch pin the
    intersection to a hyperplane; the remaining free coordinates feed a
    joint barycentric feasibility problem whose basic solutions enumerate
    the vertices of the intersection polytope.
    """
    scale = max(1.0, float(np.max(np.abs(va))), float(np.max(np.abs(vb))))
    mtol = 1e-9 * scale

    shared_a = np.zeros(len(va), dtype=bool)
    shared_b = np.zeros(len(vb), dtype=bool)
    for ai in range(len(va)):
        d = np.max(np.abs(vb - va[ai]), axis=1)
        hit = np.nonzero(d <= mtol)[0]
        if hit.size:
            shared_a[ai] = True
            shared_b[hit[0]] = True

    keep_a = np.ones(len(va), dtype=bool)
    keep_b = np.ones(len(vb), dtype=bool)
    free = []
    for c in range(va.shape[1]):
        ov_lo = max(va[:, c].min(), vb[:, c].min())
        ov_hi = min(va[:, c].max(), vb[:, c].max())
        if ov_hi < ov_lo - mtol:
            return False  # disjoint
        if ov_hi - ov_lo <= mtol:
            v = 0.5 * (ov_lo + ov_hi)
            keep_a &= np.abs(va[:, c] - v) <= mtol
            keep_b &= np.abs(vb[:, c] - v) <= mtol
        else:
            free.append(c)
    if not keep_a.any() or not keep_b.any():
        return False

    ia = np.nonzero(keep_a)[0]
    ib = np.nonzero(keep_b)[0]
    if shared_a[ia].all() and shared_b[ib].all():
        # both restrictions consist purely of common vertices, so the
        # intersection is exactly their (equal) convex hull
        return False
    pa = va[ia][:, free] if free else va[ia][:, :0]
    pb = vb[ib][:, free] if free else vb[ib][:, :0]

    if not free:
        # intersection is a single point; fine iff it is a shared vertex
        return not (shared_a[ia].all() and shared_b[ib].all())

    p, q = len(ia), len(ib)
    d = len(free)
    E = np.zeros((d + 2, p + q))
    E[0, :p] = 1.0
    E[1, p:] = 1.0
    E[2:, :p] = pa.T
    E[2:, p:] = -pb.T
    rhs = np.zeros(d + 2)
    rhs[0] = rhs[1] = 1.0

    r = d + 2
    if p + q < r:
        return False  # not enough vertices to meet in the free space
    wtol = 1e-7
    found_basis = False
    for cols in itertools.combinations(range(p + q), r):
        sub = E[:, cols]
        det = np.linalg.det(sub)
        if abs(det) <= 1e-10:
            continue
        found_basis = True
        z = np.linalg.solve(sub, rhs)
        if z.min() < -wtol:
            continue
        full = np.zeros(p + q)
        full[list(cols)] = z
        bad_a = np.any((full[:p] > wtol) & ~shared_a[ia])
        bad_b = np.any((full[p:] > wtol) & ~shared_b[ib])
        if bad_a or bad_b:
            return True
    if not found_basis:
        return _face_check_lp_fallback(E, rhs, p, q, shared_a[ia], shared_b[ib])
    return False


def _face_check_lp_fallback(E, rhs, p, q, shared_a, shared_b):
    """Degenerate geometry: maximize each non-shared weight by LP."""
    for k in range(p + q):
        is_shared = shared_a[k] if k < p else shared_b[k - p]
        if is_shared:
            continue
        c = np.zeros(p + q)
        c[k] = -1.0
        res = linprog(c, A_eq=E, b_eq=rhs, bounds=[(0, None)] * (p + q),
                      method="highs")
        if res.status == 0 and res.x is not None and res.x[k] > 1e-7:
            return True
    return False


def _region_sample_points(cx, budget, rng):
    pts = []
    n = cx.n
    t_grid = np.linspace(0.0, cx.T, 5, endpoint=False)
    for b in cx.region:
        grid_1d = [np.linspace(b[j, 0], b[j, 1], 3) for j in range(n)]
        mesh = np.meshgrid(*grid_1d, indexing="ij") if n > 1 else [grid_1d[0]]
        xs = np.stack([g.ravel() for g in mesh], axis=1)
        for t in t_grid:
            for x in xs:
                pts.append(np.concatenate(([t], x)))
    for _ in range(max(0, budget - len(pts))):
        b = cx.region[rng.integers(len(cx.region))]
        x = rng.uniform(b[:, 0], b[:, 1])
        t = rng.uniform(0.0, cx.T)
        pts.append(np.concatenate(([t], x)))
    return pts[: max(budget, 1)] if len(pts) > budget else pts

"""Nystrom matrix entries: plain Gauss weights for far pairs, corrected weights near.

For a target x_i and a source panel tau the exact contribution of the panel
to mode n is

    sqrt(2 pi) int_tau k_n(x_i, y(s)) sigma(s) r(s) ds.

Far from tau the 10-point Gauss rule is used directly, giving
a_ij = sqrt(2 pi) k_n(x_i, x_j) r_j w_j. Near tau (see
:func:`axibie.geometry.near_panel_targets`) sigma is replaced by its degree-9
interpolant on the panel nodes and the products k_n L_j r are integrated
by adaptive Gauss-Kronrod quadrature. The interval is split at the point of
tau closest to x_i, graded geometrically toward it, and the interval
touching that point is mapped by s = s* + delta u^6 which removes the
logarithmic endpoint singularity. The resulting auxiliary nodes carry weights
v_pj = sqrt(2 pi) w_p L_j(s_p) r(s_p) that depend on the curve only.

Adaptivity runs on all requested modes and all ten cardinal functions at
once, so one grid serves every mode.
"""

from dataclasses import dataclass
import logging

import numpy as np
from numpy.polynomial.legendre import leggauss

from .constants import NODES_PER_PANEL, SQRT_2PI
from .errors import CorrectionFailure

logger = logging.getLogger(__name__)

# QUADPACK 7-point Gauss / 15-point Kronrod pair on [-1, 1]
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])

GK_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
GK_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss weights on the same 15 nodes (zero at Kronrod-only nodes)
G_WEIGHTS = np.zeros(15)
_gauss_pos = [1, 3, 5, 7]
for _k, _w in zip(_gauss_pos, _WG):
    G_WEIGHTS[_k] = _w
    G_WEIGHTS[14 - _k] = _w
del _k, _w

_GL_X, _GL_W = leggauss(NODES_PER_PANEL)
# barycentric weights for Lagrange interpolation on the Gauss-Legendre nodes
_BARY = np.array([1.0 / np.prod(_GL_X[j] - np.delete(_GL_X, j)) for j in range(NODES_PER_PANEL)])

GRADING = 0.25
SINGULAR_POWER = 6
DEFAULT_TOL = 1e-12
MIN_INTERVAL = 1e-15
# an interval is accepted once its error is below tol * max(fraction of the panel, LOCAL_FLOOR);
# the floor stops bisection chasing rounding noise on tiny intervals
LOCAL_FLOOR = 1e-2
MAX_ROUNDS = 80
_SCALE_FLOOR = 1e-4
_CHUNK_VALUES = 6_000_000


def lagrange_basis(x):
    """Cardinal functions of the 10 Gauss-Legendre nodes at x in [-1, 1]; shape (..., 10)."""
    x = np.asarray(x, dtype=float)
    diff = x[..., None] - _GL_X
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = _BARY / diff
        out = terms / np.sum(terms, axis=-1, keepdims=True)
    hit = np.any(exact, axis=-1)
    if np.any(hit):
        out[hit] = exact[hit].astype(float)
    return out


def far_entry(kernel_values, weight, r_src):
    """Nystrom entry sqrt(2 pi) k_n r_j w_j for a far pair (broadcasts over modes)."""
    return SQRT_2PI * np.asarray(kernel_values) * (r_src * weight)


@dataclass(frozen=True)
class NearCorrection:
    """Corrected weights for one (target, panel) pair.

    ``aux_s`` are auxiliary arc-length nodes on the panel with positions
    ``aux_r``, ``aux_z`` and normals; ``aux_weights`` has shape (m, 10):
    the entry for panel node j and any kernel is sum_p k(x_i, y_p) v_pj.
    """

    target_index: int
    panel_id: int
    aux_s: np.ndarray
    aux_r: np.ndarray
    aux_z: np.ndarray
    aux_nr: np.ndarray
    aux_nz: np.ndarray
    aux_weights: np.ndarray

    @property
    def m(self):
        return self.aux_s.size

    def apply(self, kernel_values):
        """Row segment (..., 10) from kernel values at the auxiliary nodes, shape (m, ...)."""
        kv = np.asarray(kernel_values)
        return np.einsum("pj,p...->...j", self.aux_weights, kv)


def _foot_points(mesh, targets, panels):
    """Arc length on each panel closest to each (off-panel) target."""
    curve = mesh.curve
    a = mesh.bounds[panels]
    h = mesh.panel_length
    u = np.linspace(0.0, 1.0, 129)
    s = a[:, None] + h * u[None, :]
    r, z = curve.position(s)
    d2 = (r - mesh.r[targets, None]) ** 2 + (z - mesh.z[targets, None]) ** 2
    k = np.argmin(d2, axis=1)
    # parabolic refinement on the sampled distance
    km = np.clip(k, 1, u.size - 2)
    rows = np.arange(len(k))
    f0, f1, f2 = d2[rows, km - 1], d2[rows, km], d2[rows, km + 1]
    den = f0 - 2.0 * f1 + f2
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = np.where(den > 0, 0.5 * (f0 - f2) / den, 0.0)
    shift = np.clip(shift, -1.0, 1.0)
    s_star = a + h * (u[km] + shift * (u[1] - u[0]))
    s_star = np.where((k == 0) | (k == u.size - 1), s[rows, k], s_star)
    dist = np.sqrt(np.min(d2, axis=1))
    return np.clip(s_star, a, a + h), dist


class _Intervals:
    """Struct-of-arrays list of integration intervals, s = s0 + delta * u^p."""

    def __init__(self, pair, s0, delta, power, ulo, uhi):
        self.pair = np.asarray(pair, dtype=np.int64)
        self.s0 = np.asarray(s0, dtype=float)
        self.delta = np.asarray(delta, dtype=float)
        self.power = np.asarray(power, dtype=float)
        self.ulo = np.asarray(ulo, dtype=float)
        self.uhi = np.asarray(uhi, dtype=float)

    def __len__(self):
        return self.pair.size

    def take(self, idx):
        return _Intervals(self.pair[idx], self.s0[idx], self.delta[idx], self.power[idx], self.ulo[idx], self.uhi[idx])

    def bisect(self):
        mid = 0.5 * (self.ulo + self.uhi)
        cat = np.concatenate
        return _Intervals(cat([self.pair, self.pair]), cat([self.s0, self.s0]), cat([self.delta, self.delta]),
                          cat([self.power, self.power]), cat([self.ulo, mid]), cat([mid, self.uhi]))

    def s_length(self):
        return np.abs(self.delta * (self.uhi ** self.power - self.ulo ** self.power))

    def nodes(self):
        """Arc-length nodes (K, 15), Kronrod and Gauss weights in s (K, 15), offsets from s0."""
        half = 0.5 * (self.uhi - self.ulo)
        u = (0.5 * (self.uhi + self.ulo))[:, None] + half[:, None] * GK_NODES
        p = self.power[:, None]
        ds = self.delta[:, None] * u ** p
        s = self.s0[:, None] + ds
        jac = np.abs(self.delta[:, None] * p * u ** (p - 1.0)) * half[:, None]
        return s, ds, jac * GK_WEIGHTS, jac * G_WEIGHTS


def _initial_intervals(mesh, targets, panels, s_star, dist):
    h = mesh.panel_length
    a = mesh.bounds[panels]
    b = a + h
    pairs, s0s, deltas, powers, ulos, uhis = [], [], [], [], [], []
    for q in range(len(targets)):
        ss = s_star[q]
        # levels of geometric grading: down to the target's distance scale
        scale = max(dist[q], 0.0)
        for side, length in ((-1.0, ss - a[q]), (1.0, b[q] - ss)):
            if length <= MIN_INTERVAL * h:
                continue
            if scale > 0:
                levels = int(np.clip(np.ceil(np.log(max(scale, 1e-300) / length) / np.log(GRADING)), 1, 12))
            else:
                levels = 4
            edges = length * GRADING ** np.arange(levels + 1)
            for j in range(levels):
                lo, hi = sorted((ss + side * edges[j + 1], ss + side * edges[j]))
                pairs.append(q); s0s.append(0.0); deltas.append(1.0); powers.append(1.0)
                ulos.append(lo); uhis.append(hi)
            # interval touching s*: s = s* + side * edges[-1] * u^6
            pairs.append(q); s0s.append(ss); deltas.append(side * edges[-1]); powers.append(float(SINGULAR_POWER))
            ulos.append(0.0); uhis.append(1.0)
    return _Intervals(pairs, s0s, deltas, powers, ulos, uhis)


def _evaluate(mesh, kernel, n_max, targets, panels, iv):
    """Kronrod and Gauss estimates (K, 10, n_max+1) plus node data for intervals ``iv``."""
    curve = mesh.curve
    s, ds, wk, wg = iv.nodes()
    q = iv.pair
    r, z = curve.position(s)
    nr, nz = curve.normal(s)
    a = mesh.bounds[panels[q]]
    x = (2.0 * (s - a[:, None]) / mesh.panel_length) - 1.0
    basis = lagrange_basis(x)  # (K, 15, 10)
    ti = targets[q]
    dr = r - mesh.r[ti, None]
    dz = z - mesh.z[ti, None]
    own = mesh.panel_id[ti] == panels[q]
    if np.any(own):
        # on the target's own panel the separation is integrated along the curve; intervals
        # graded into the target carry their exact offset (s0 is the target's s there)
        offset = np.where((iv.power > 1.0)[:, None], ds, s - mesh.s[ti, None])
        dr_own, dz_own = curve.separation(mesh.s[ti[own], None], offset=offset[own])
        dr[own] = dr_own
        dz[own] = dz_own
    kv = kernel.near_coeffs(mesh.r[ti, None], mesh.z[ti, None], r, z, nr, nz, n_max, sep=(dr, dz))  # (K, 15, n+1)
    base = SQRT_2PI * r
    vk = (wk * base)[..., None] * basis
    vg = (wg * base)[..., None] * basis
    # batched (20, 15) @ (15, n+1) products: Kronrod and Gauss rows at once
    KG = np.matmul(np.concatenate([vk, vg], axis=2).transpose(0, 2, 1), kv)
    K, G = KG[:, :NODES_PER_PANEL], KG[:, NODES_PER_PANEL:]
    absK = np.matmul((wk * np.abs(base))[:, None, :], np.abs(kv))[:, 0]
    return K, G, absK, (s, r, z, nr, nz, vk)


def near_correction_entries(mesh, kernel, n_max, targets, panels, tol=DEFAULT_TOL, keep_nodes=False):
    """Corrected row segments for many (target, panel) pairs at once.

    Parameters
    ----------
    mesh : PanelMesh
    kernel : LayerKernel
    n_max : int
    targets, panels : int arrays of equal length
    tol : float
        Relative accuracy target for each entry, measured against the
        L1 size of the integrand for that pair and mode.
    keep_nodes : bool
        Also return a list of :class:`NearCorrection` records.

    Returns
    -------
    entries : ndarray (pairs, 10, n_max + 1)
    stats : dict
    corrections : list of NearCorrection, only if ``keep_nodes``
    """
    targets = np.asarray(targets, dtype=np.int64)
    panels = np.asarray(panels, dtype=np.int64)
    npairs = targets.size
    dtype = kernel.dtype
    entries = np.zeros((npairs, NODES_PER_PANEL, n_max + 1), dtype=dtype)
    if npairs == 0:
        return (entries, {"aux_nodes": 0}, []) if keep_nodes else (entries, {"aux_nodes": 0})

    on_panel = mesh.panel_id[targets] == panels
    s_star = np.empty(npairs)
    dist = np.zeros(npairs)
    s_star[on_panel] = mesh.s[targets[on_panel]]
    off = ~on_panel
    if np.any(off):
        s_star[off], dist[off] = _foot_points(mesh, targets[off], panels[off])
    active = _initial_intervals(mesh, targets, panels, s_star, dist)

    h = mesh.panel_length
    scale = None
    kept = [[] for _ in range(npairs)] if keep_nodes else None
    aux_count = 0
    per_point = NODES_PER_PANEL * (n_max + 1) + 2 * (n_max + 1)
    chunk = max(64, _CHUNK_VALUES // (15 * per_point))
    for rnd in range(MAX_ROUNDS):
        if len(active) == 0:
            break
        results = []
        for c0 in range(0, len(active), chunk):
            results.append(_evaluate(mesh, kernel, n_max, targets, panels, active.take(slice(c0, c0 + chunk))))
        K = np.concatenate([res[0] for res in results])
        G = np.concatenate([res[1] for res in results])
        absK = np.concatenate([res[2] for res in results])
        if scale is None:
            # L1 size of the integrand per pair and mode, floored relative to the pair's largest mode
            scale = np.zeros((npairs, n_max + 1))
            np.add.at(scale, active.pair, absK)
            peak = np.max(scale, axis=1, keepdims=True)
            scale = np.maximum(scale, _SCALE_FLOOR * peak)
            scale = np.where(scale > 0, scale, 1.0)
        err = np.max(np.abs(K - G), axis=1)  # (K, n+1)
        frac = active.s_length() / h
        ratio = np.max(err / scale[active.pair], axis=1)
        tiny = frac <= MIN_INTERVAL
        done = (ratio <= tol * np.maximum(frac, LOCAL_FLOOR)) | tiny
        if np.any(done):
            np.add.at(entries, active.pair[done], K[done])
            aux_count += int(np.count_nonzero(done)) * 15
            if keep_nodes:
                offset = 0
                for res in results:
                    s, r, z, nr, nz, vk = res[3]
                    nloc = s.shape[0]
                    sel = np.flatnonzero(done[offset: offset + nloc])
                    for k in sel:
                        kept[active.pair[offset + k]].append((s[k], r[k], z[k], nr[k], nz[k], vk[k]))
                    offset += nloc
        active = active.take(~done).bisect() if np.any(~done) else active.take(slice(0, 0))
    else:
        bad = int(active.pair[0])
        raise CorrectionFailure("adaptive near quadrature did not converge", target_index=int(targets[bad]),
                                panel_id=int(panels[bad]))
    stats = {"aux_nodes": aux_count, "rounds": rnd, "pairs": npairs}
    if not keep_nodes:
        return entries, stats
    corrections = []
    for q in range(npairs):
        parts = kept[q]
        cat = lambda i: np.concatenate([p[i] for p in parts])  # noqa: E731
        corrections.append(NearCorrection(int(targets[q]), int(panels[q]), cat(0), cat(1), cat(2), cat(3), cat(4),
                                          np.concatenate([p[5] for p in parts], axis=0)))
    return entries, stats, corrections


def build_near_correction(mesh, target_index, panel_id, kernel, n_max, tol=DEFAULT_TOL):
    """Corrected entries (10, n_max + 1) and the auxiliary node record for one pair."""
    entries, _, corr = near_correction_entries(mesh, kernel, n_max, [target_index], [panel_id], tol=tol,
                                               keep_nodes=True)
    return entries[0], corr[0]


# split rule used to check the plain Gauss rule on far pairs: the panel halves, 10 points each
_SPLIT_X = np.concatenate([0.5 * (_GL_X - 1.0), 0.5 * (_GL_X + 1.0)])
_SPLIT_W = 0.5 * np.concatenate([_GL_W, _GL_W])
_SPLIT_BASIS = lagrange_basis(_SPLIT_X)  # (20, 10)
# test densities at the panel nodes: 1 and a linear function of arc length
_TEST_DENSITIES = np.stack([np.ones(NODES_PER_PANEL), _GL_X])


def far_rule_defects(mesh, kernel, targets, panels, chunk=1000):
    """Relative error of the plain Gauss row for each (target, panel) pair.

    The mode-0 row segment of the 10-point rule is compared with the same
    integral done by a 10-point rule on each half panel, for a constant
    and a linear density. The result is measured against the L1 size of
    the pair's integrand. Large values flag pairs where the plain rule is
    not accurate though the target is outside the near circle, typically
    on panels whose curvature is not yet resolved.
    """
    targets = np.asarray(targets, dtype=np.int64)
    panels = np.asarray(panels, dtype=np.int64)
    out = np.zeros(targets.size)
    h = mesh.panel_length
    local = np.arange(NODES_PER_PANEL)
    for c in range(0, targets.size, chunk):
        ti = targets[c: c + chunk]
        pj = panels[c: c + chunk]
        a = mesh.bounds[pj]
        s = a[:, None] + 0.5 * h * (_SPLIT_X + 1.0)
        r, z = mesh.curve.position(s)
        nr, nz = mesh.curve.normal(s)
        kv = kernel.near_coeffs(mesh.r[ti, None], mesh.z[ti, None], r, z, nr, nz, 0)[..., 0]
        ref = (SQRT_2PI * kv * r * (0.5 * h * _SPLIT_W)) @ _SPLIT_BASIS  # (pairs, 10)
        js = pj[:, None] * NODES_PER_PANEL + local
        kg = kernel.near_coeffs(mesh.r[ti, None], mesh.z[ti, None], mesh.r[js], mesh.z[js], mesh.nr[js],
                                mesh.nz[js], 0)[..., 0]
        plain = SQRT_2PI * kg * mesh.r[js] * mesh.w[js]
        err = np.max(np.abs((plain - ref) @ _TEST_DENSITIES.T), axis=1)
        size = np.sum(np.abs(ref), axis=1)
        out[c: c + chunk] = err / np.where(size > 0, size, 1.0)
    return out


def corrected_pairs(mesh, kernel, tol=DEFAULT_TOL):
    """(targets, panels) that receive near corrections, and how many were added by the guard.

    These are the near pairs of :func:`axibie.geometry.near_pairs` plus any
    far pair whose plain Gauss row fails :func:`far_rule_defects` at ``tol``.
    """
    from .geometry import near_pairs

    ti, pj = near_pairs(mesh)
    near = np.zeros((mesh.n_nodes, mesh.n_panels), dtype=bool)
    near[ti, pj] = True
    fi, fp = np.nonzero(~near)
    if fi.size:
        with np.errstate(divide="ignore", invalid="ignore"):
            bad = far_rule_defects(mesh, kernel, fi, fp) > tol
        near[fi[bad], fp[bad]] = True
        added = int(np.count_nonzero(bad))
    else:
        added = 0
    ti, pj = np.nonzero(near)
    return ti, pj, added

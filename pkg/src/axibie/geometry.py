"""Generating curves and equal-arc-length Gauss panel meshes.

A body of revolution is described by its meridian, a planar curve
``(r(t), z(t))`` in the half plane ``r >= 0``. Two topologies are supported:

* ``closed_through_axis``: the curve starts and ends on ``r = 0`` (sphere,
  ellipsoid, bodies with two poles).
* ``closed_loop``: a periodic curve with ``r > 0`` everywhere (tori).

Curves are reparameterized by arc length ``s in [0, L]``. Arc length is
integrated with a composite Gauss rule refined until the total length is
stable; the inverse map ``s -> t`` is stored as piecewise Chebyshev
interpolants whose accuracy is checked against a Newton solve.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from numpy.polynomial import chebyshev as C
from numpy.polynomial.legendre import leggauss

from .constants import NODES_PER_PANEL
from .errors import GeometryError

_GL_X, _GL_W = leggauss(NODES_PER_PANEL)
_ARC_X, _ARC_W = leggauss(24)
_SEP_X, _SEP_W = leggauss(16)
_CHEB_DEG = 24
_ARC_TOL = 1e-15
_INV_TOL = 1e-14


def _as_pair(out):
    r, z = out
    return np.asarray(r, dtype=float), np.asarray(z, dtype=float)


@dataclass(frozen=True, eq=False)
class GeneratingCurve:
    """Meridian curve of a body of revolution, parameterized by arc length.

    Do not call the constructor directly; use :func:`build_curve` or one of
    the family helpers (:func:`sphere`, :func:`ellipse`, ...).

    Attributes
    ----------
    name : str
    total_length : float
        Arc length L of the meridian.
    closed_loop : bool
        True for periodic curves that never touch the axis.
    """

    name: str
    xy: object
    dxy: object
    t0: float
    t1: float
    closed_loop: bool
    total_length: float
    orientation: float
    params: dict = field(default_factory=dict)
    _t_knots: np.ndarray = field(default=None, repr=False)
    _s_knots: np.ndarray = field(default=None, repr=False)
    _inv_knots: np.ndarray = field(default=None, repr=False)
    _inv_coef: np.ndarray = field(default=None, repr=False)
    _linear: bool = False

    @property
    def closed_through_axis(self):
        return not self.closed_loop

    # -- arc length ---------------------------------------------------------
    def speed_t(self, t):
        dr, dz = _as_pair(self.dxy(t))
        return np.hypot(dr, dz)

    def arc_length(self, t):
        """s(t), the arc length from t0 to t."""
        t = np.asarray(t, dtype=float)
        if self._linear:
            return (t - self.t0) * (self.total_length / (self.t1 - self.t0))
        k = np.clip(np.searchsorted(self._t_knots, t, side="right") - 1, 0, len(self._t_knots) - 2)
        ta = self._t_knots[k]
        half = 0.5 * (t - ta)
        nodes = ta[..., None] + half[..., None] * (_ARC_X + 1.0)
        part = half * np.sum(_ARC_W * self.speed_t(nodes), axis=-1)
        return self._s_knots[k] + part

    def _newton_t(self, s):
        """Solve s(t) = s by Newton iteration from a linear knot guess."""
        s = np.asarray(s, dtype=float)
        t = np.interp(s, self._s_knots, self._t_knots)
        for _ in range(30):
            step = (self.arc_length(t) - s) / self.speed_t(t)
            t = np.clip(t - step, self.t0, self.t1)
            if np.all(np.abs(step) <= 1e-16 * (self.t1 - self.t0)):
                break
        return t

    def param_at(self, s):
        """Original parameter t for arc length s (vectorized)."""
        s = np.asarray(s, dtype=float)
        if self._linear:
            return self.t0 + s * ((self.t1 - self.t0) / self.total_length)
        knots = self._inv_knots
        k = np.clip(np.searchsorted(knots, s, side="right") - 1, 0, len(knots) - 2)
        a = knots[k]
        b = knots[k + 1]
        x = (2.0 * s - a - b) / (b - a)
        return C.chebval(x, self._inv_coef[:, k], tensor=False)

    # -- geometry at arc length ----------------------------------------------
    def position(self, s):
        """(r, z) at arc length s."""
        r, z = _as_pair(self.xy(self.param_at(s)))
        if not self.closed_loop:
            r = np.maximum(r, 0.0)
        return r, z

    def tangent(self, s):
        """Unit tangent (dr/ds, dz/ds)."""
        dr, dz = _as_pair(self.dxy(self.param_at(s)))
        sp = np.hypot(dr, dz)
        return dr / sp, dz / sp

    def separation(self, s_from, s_to=None, offset=None):
        """x(s_from + offset) - x(s_from) as (dr, dz), integrated along the curve.

        Give either ``s_to`` or the arc-length ``offset`` itself; the
        offset form stays accurate when it is far below the rounding
        unit of ``s_from``. Accurate relative to the separation itself,
        unlike the difference of two rounded positions.
        """
        if offset is None:
            offset = np.asarray(s_to, float) - np.asarray(s_from, float)
        s_from, offset = np.broadcast_arrays(np.asarray(s_from, float), np.asarray(offset, float))
        half = 0.5 * offset
        sig = (s_from + half)[..., None] + half[..., None] * _SEP_X
        tr, tz = self.tangent(sig)
        return half * np.sum(_SEP_W * tr, axis=-1), half * np.sum(_SEP_W * tz, axis=-1)

    def deriv_map(self, s):
        return self.tangent(s)

    def normal(self, s):
        """Outward unit normal (n_r, n_z) in the meridian plane."""
        tr, tz = self.tangent(s)
        return self.orientation * tz, -self.orientation * tr

    def sample(self, n=2001):
        s = np.linspace(0.0, self.total_length, n)
        return (s,) + self.position(s)

    def bounding_radius(self, center_z=0.0):
        _, r, z = self.sample(4001)
        return float(np.max(np.hypot(r, z - center_z)))

    def centroid(self):
        """Area centroid (r_c, z_c) of the region enclosed by the meridian (and the axis)."""
        t, w = _composite_table(self.t0, self.t1, 256)
        r, z = _as_pair(self.xy(t))
        dr, dz = _as_pair(self.dxy(t))
        # Green's theorem: A = 1/2 oint (r dz - z dr), closing leg on r = 0 adds nothing
        area = 0.5 * np.sum(w * (r * dz - z * dr))
        rc = np.sum(w * r * r * dz) / (2.0 * area)
        zc = -np.sum(w * z * z * dr) / (2.0 * area)
        return float(rc), float(zc)

    def axis_center(self):
        """Reference interior point for test placement: on the axis for pole-to-pole curves."""
        rc, zc = self.centroid()
        return (0.0, zc) if not self.closed_loop else (rc, zc)

    def inscribed_radius(self, center=None):
        """Distance from an interior reference point to the nearest point of the curve."""
        rc, zc = self.axis_center() if center is None else center
        _, r, z = self.sample(8001)
        return float(np.min(np.hypot(r - rc, z - zc)))


def _composite_table(t0, t1, m):
    edges = np.linspace(t0, t1, m + 1)
    half = 0.5 * np.diff(edges)
    t = edges[:-1, None] + half[:, None] * (_ARC_X + 1.0)
    w = half[:, None] * _ARC_W
    return t.ravel(), w.ravel()


def _arc_table(dxy, t0, t1):
    m = 16
    prev = None
    for _ in range(16):
        edges = np.linspace(t0, t1, m + 1)
        half = 0.5 * np.diff(edges)
        nodes = edges[:-1, None] + half[:, None] * (_ARC_X + 1.0)
        dr, dz = _as_pair(dxy(nodes))
        seg = half * np.sum(_ARC_W * np.hypot(dr, dz), axis=-1)
        total = float(np.sum(seg))
        if prev is not None and abs(total - prev) <= _ARC_TOL * total:
            return edges, np.concatenate([[0.0], np.cumsum(seg)])
        prev = total
        m *= 2
    raise GeometryError("arc length integral did not converge")


def _fit_inverse(curve):
    """Piecewise Chebyshev interpolants of t(s), refined until Newton agrees."""
    L = curve.total_length
    nodes = np.cos(np.pi * (np.arange(_CHEB_DEG + 1) + 0.5) / (_CHEB_DEG + 1))
    m = 8
    span = curve.t1 - curve.t0
    for _ in range(12):
        knots = np.linspace(0.0, L, m + 1)
        a, b = knots[:-1], knots[1:]
        s = 0.5 * (a + b)[None, :] + 0.5 * (b - a)[None, :] * nodes[:, None]
        t = curve._newton_t(s)
        coef = np.empty_like(t)
        for k in range(m):
            coef[:, k] = C.chebfit(nodes, t[:, k], _CHEB_DEG)
        # check halfway between interpolation nodes
        mid = np.cos(np.pi * np.arange(1, _CHEB_DEG + 1) / (_CHEB_DEG + 1))
        s_chk = 0.5 * (a + b)[None, :] + 0.5 * (b - a)[None, :] * mid[:, None]
        t_ref = curve._newton_t(s_chk)
        t_fit = C.chebval(mid, coef).T
        if np.max(np.abs(t_fit - t_ref)) <= _INV_TOL * span:
            return knots, coef
        m *= 2
    raise GeometryError("arc-length inverse could not be resolved")


def from_parameterization(xy, dxy, t_range, closed_loop, name="custom", params=None, constant_speed=False):
    """Build a :class:`GeneratingCurve` from a vectorized parameterization.

    Parameters
    ----------
    xy : callable
        ``t -> (r, z)``; must accept ndarrays.
    dxy : callable
        ``t -> (dr/dt, dz/dt)``.
    t_range : (float, float)
    closed_loop : bool
        Periodic curve with r > 0 (torus) if True, otherwise a pole-to-pole
        meridian whose endpoints lie on the axis.
    constant_speed : bool
        If the parameterization is already proportional to arc length the
        inverse map is exact and linear.
    """
    t0, t1 = map(float, t_range)
    if not t1 > t0:
        raise GeometryError("empty parameter range")
    tt = np.linspace(t0, t1, 4001)
    r, z = _as_pair(xy(tt))
    dr, dz = _as_pair(dxy(tt))
    if np.any(~np.isfinite(r)) or np.any(~np.isfinite(z)):
        raise GeometryError("curve is not finite")
    scale = max(float(np.max(np.abs(r))), float(np.max(np.abs(z))), 1e-300)
    speed = np.hypot(dr, dz)
    if np.any(speed <= 1e-12 * scale / (t1 - t0)):
        raise GeometryError("parameterization has a zero-speed point")
    if np.any(r < -1e-13 * scale):
        raise GeometryError("curve crosses into r < 0")
    if closed_loop:
        if np.any(r <= 0):
            raise GeometryError("closed loop must stay off the axis")
        if math.hypot(r[0] - r[-1], z[0] - z[-1]) > 1e-12 * scale:
            raise GeometryError("closed loop is not periodic over t_range")
    else:
        if abs(r[0]) > 1e-12 * scale or abs(r[-1]) > 1e-12 * scale:
            raise GeometryError("pole-to-pole meridian must start and end on the axis")
        if np.any(r[1:-1] <= 0):
            raise GeometryError("meridian touches the axis away from its endpoints")

    t_knots, s_knots = _arc_table(dxy, t0, t1)
    length = float(s_knots[-1])
    # orientation from the signed area of the closed meridian
    tq, wq = _composite_table(t0, t1, 256)
    rq, zq = _as_pair(xy(tq))
    drq, dzq = _as_pair(dxy(tq))
    area = 0.5 * float(np.sum(wq * (rq * dzq - zq * drq)))
    if area == 0.0:
        raise GeometryError("meridian encloses no area")
    orientation = 1.0 if area > 0 else -1.0

    curve = GeneratingCurve(
        name=name, xy=xy, dxy=dxy, t0=t0, t1=t1, closed_loop=bool(closed_loop),
        total_length=length, orientation=orientation, params=dict(params or {}),
        _t_knots=t_knots, _s_knots=s_knots, _linear=bool(constant_speed),
    )
    if not constant_speed:
        knots, coef = _fit_inverse(curve)
        object.__setattr__(curve, "_inv_knots", knots)
        object.__setattr__(curve, "_inv_coef", coef)
    return curve


# -- built-in families ---------------------------------------------------------

def sphere(radius=1.0):
    R = float(radius)
    if R <= 0:
        raise GeometryError("radius must be positive")
    curve = from_parameterization(
        lambda t: (R * np.sin(t), -R * np.cos(t)),
        lambda t: (R * np.cos(t), R * np.sin(t)),
        (0.0, np.pi), closed_loop=False, name="sphere", params={"radius": R}, constant_speed=True,
    )
    # exact half circumference
    object.__setattr__(curve, "total_length", np.pi * R)
    return curve


def ellipse(a=0.25, c=1.0):
    """Meridian of the spheroid with semi-axis a in r and c along the axis."""
    a, c = float(a), float(c)
    if a <= 0 or c <= 0:
        raise GeometryError("semi-axes must be positive")
    return from_parameterization(
        lambda t: (a * np.sin(t), -c * np.cos(t)),
        lambda t: (a * np.cos(t), c * np.sin(t)),
        (0.0, np.pi), closed_loop=False, name="ellipse", params={"a": a, "c": c},
        constant_speed=(a == c),
    )


def circle_torus(center_r=2.0, radius=0.5):
    R, rho = float(center_r), float(radius)
    if rho <= 0 or R <= rho:
        raise GeometryError("torus needs 0 < radius < center_r")
    curve = from_parameterization(
        lambda t: (R + rho * np.cos(t), rho * np.sin(t)),
        lambda t: (-rho * np.sin(t), rho * np.cos(t)),
        (0.0, 2.0 * np.pi), closed_loop=True, name="circle_torus",
        params={"center_r": R, "radius": rho}, constant_speed=True,
    )
    object.__setattr__(curve, "total_length", 2.0 * np.pi * rho)
    return curve


def starfish_torus(center_r=2.0, radius=0.5, amplitude=0.2, arms=5):
    """Torus whose cross-section radius is modulated, rho (1 + beta cos(q phi))."""
    R, rho, beta, q = float(center_r), float(radius), float(amplitude), int(arms)
    if not (0 <= beta < 1) or rho * (1 + beta) >= R:
        raise GeometryError("starfish torus must stay off the axis with |beta| < 1")

    def xy(t):
        p = rho * (1.0 + beta * np.cos(q * t))
        return R + p * np.cos(t), p * np.sin(t)

    def dxy(t):
        p = rho * (1.0 + beta * np.cos(q * t))
        dp = -rho * beta * q * np.sin(q * t)
        return dp * np.cos(t) - p * np.sin(t), dp * np.sin(t) + p * np.cos(t)

    return from_parameterization(xy, dxy, (0.0, 2.0 * np.pi), closed_loop=True, name="starfish_torus",
                                 params={"center_r": R, "radius": rho, "amplitude": beta, "arms": q})


def wavy_block(a=0.75, c=0.75, wave=0.08, waves=8, squash=0.3):
    """Pole-to-pole meridian of a rounded block with a superposed radial ripple.

    r(t) = sin t (a + wave cos(p t)),  z(t) = -c cos t (1 + squash sin^2 t).
    """
    a, c, al, p, ka = float(a), float(c), float(wave), int(waves), float(squash)
    if a <= abs(al) or c <= 0:
        raise GeometryError("ripple amplitude must be smaller than the radius")

    def xy(t):
        return np.sin(t) * (a + al * np.cos(p * t)), -c * np.cos(t) * (1.0 + ka * np.sin(t) ** 2)

    def dxy(t):
        st, ct = np.sin(t), np.cos(t)
        dr = ct * (a + al * np.cos(p * t)) - st * al * p * np.sin(p * t)
        dz = c * st * (1.0 + ka * st * st) - c * ct * (2.0 * ka * st * ct)
        return dr, dz

    return from_parameterization(xy, dxy, (0.0, np.pi), closed_loop=False, name="wavy_block",
                                 params={"a": a, "c": c, "wave": al, "waves": p, "squash": ka})


_FAMILIES = {
    "sphere": sphere,
    "ellipse": ellipse,
    "circle_torus": circle_torus,
    "starfish_torus": starfish_torus,
    "wavy_block": wavy_block,
}


def build_curve(spec):
    """Curve from a family name or a parameter mapping.

    ``spec`` is a :class:`GeneratingCurve` (returned as is), a family name,
    or a mapping ``{"kind": name, **params}``. A custom parameterization is
    passed as ``{"kind": "custom", "xy": f, "dxy": df, "t_range": (t0, t1),
    "closed_loop": bool}``.
    """
    if isinstance(spec, GeneratingCurve):
        return spec
    if isinstance(spec, str):
        spec = {"kind": spec}
    if not isinstance(spec, dict) or "kind" not in spec:
        raise GeometryError("curve spec needs a 'kind'")
    params = dict(spec)
    kind = params.pop("kind")
    if kind == "custom":
        try:
            return from_parameterization(params.pop("xy"), params.pop("dxy"), params.pop("t_range"),
                                         params.pop("closed_loop", False), **params)
        except KeyError as exc:
            raise GeometryError(f"custom curve missing {exc}") from None
    if kind not in _FAMILIES:
        raise GeometryError(f"unknown curve family {kind!r}")
    try:
        return _FAMILIES[kind](**params)
    except TypeError as exc:
        raise GeometryError(str(exc)) from None


# -- enclosing circles -------------------------------------------------------------

def _circle_two(p, q):
    c = 0.5 * (p + q)
    return c, float(np.hypot(*(p - c)))


def _circle_three(p, q, s):
    ax, ay = p
    bx, by = q
    cx, cy = s
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if abs(d) < 1e-300:
        # collinear: widest pair
        best = max(((p, q), (p, s), (q, s)), key=lambda pr: np.hypot(*(pr[0] - pr[1])))
        return _circle_two(*best)
    a2, b2, c2 = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d
    uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d
    c = np.array([ux, uy])
    return c, float(np.hypot(*(p - c)))


def smallest_enclosing_circle(points, seed=0):
    """Welzl-type incremental minimum enclosing circle of 2-D points.

    Returns (center, radius). Deterministic for a fixed seed.
    """
    pts = np.array(points, dtype=float)
    rng = np.random.default_rng(seed)
    pts = pts[rng.permutation(len(pts))]
    tol = 1e-12

    def inside(c, rad, p):
        return np.hypot(*(p - c)) <= rad * (1.0 + tol) + 1e-300

    c, rad = pts[0].copy(), 0.0
    for i in range(1, len(pts)):
        if inside(c, rad, pts[i]):
            continue
        c, rad = pts[i].copy(), 0.0
        for j in range(i):
            if inside(c, rad, pts[j]):
                continue
            c, rad = _circle_two(pts[i], pts[j])
            for k in range(j):
                if not inside(c, rad, pts[k]):
                    c, rad = _circle_three(pts[i], pts[j], pts[k])
    return c, rad


# -- panel mesh -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PanelMesh:
    """Composite 10-point Gauss-Legendre rule on equal-arc-length panels.

    Node arrays are flat with length ``I = 10 * n_panels``; node ``i``
    belongs to panel ``i // 10``. Weights include the arc-length
    Jacobian, so ``sum(w) == L``.
    """

    curve: GeneratingCurve
    n_panels: int
    bounds: np.ndarray
    s: np.ndarray
    r: np.ndarray
    z: np.ndarray
    w: np.ndarray
    nr: np.ndarray
    nz: np.ndarray
    panel_id: np.ndarray
    circle_centers: np.ndarray
    circle_radii: np.ndarray

    @property
    def n_nodes(self):
        return self.s.size

    @property
    def panel_length(self):
        return self.curve.total_length / self.n_panels

    def panel_slice(self, panel_id):
        return slice(NODES_PER_PANEL * panel_id, NODES_PER_PANEL * (panel_id + 1))

    def panel_nodes_s(self, panel_id):
        return self.s[self.panel_slice(panel_id)]


def build_mesh(curve, n_panels):
    """Split the curve into ``n_panels`` panels of equal arc length."""
    n_panels = int(n_panels)
    if n_panels < 1:
        raise GeometryError("n_panels must be at least 1")
    L = curve.total_length
    bounds = np.linspace(0.0, L, n_panels + 1)
    h = L / n_panels
    s = (bounds[:-1, None] + 0.5 * h * (_GL_X + 1.0)).ravel()
    w = np.tile(0.5 * h * _GL_W, n_panels)
    r, z = curve.position(s)
    nr, nz = curve.normal(s)
    panel_id = np.repeat(np.arange(n_panels), NODES_PER_PANEL)

    centers = np.empty((n_panels, 2))
    radii = np.empty(n_panels)
    u = np.linspace(0.0, 1.0, 65)
    for p in range(n_panels):
        pr, pz = curve.position(bounds[p] + h * u)
        centers[p], radii[p] = smallest_enclosing_circle(np.column_stack([pr, pz]), seed=p)
    return PanelMesh(curve=curve, n_panels=n_panels, bounds=bounds, s=s, r=r, z=z, w=w, nr=nr, nz=nz,
                     panel_id=panel_id, circle_centers=centers, circle_radii=radii)


def near_panel_targets(mesh, panel_id, points=None):
    """Indices of targets inside twice the smallest enclosing circle of a panel.

    With ``points=None`` the mesh nodes are the targets and the panel's own
    nodes are always included. ``points`` may be an (m, 2) array of (r, z).
    """
    c = mesh.circle_centers[panel_id]
    rad = 2.0 * mesh.circle_radii[panel_id]
    if points is None:
        d = np.hypot(mesh.r - c[0], mesh.z - c[1])
        near = d < rad
        near[mesh.panel_slice(panel_id)] = True
    else:
        points = np.asarray(points, dtype=float)
        near = np.hypot(points[:, 0] - c[0], points[:, 1] - c[1]) < rad
    return np.flatnonzero(near)


def near_pairs(mesh):
    """All (target index, panel id) pairs classified near, as two int arrays."""
    dr = mesh.r[:, None] - mesh.circle_centers[None, :, 0]
    dz = mesh.z[:, None] - mesh.circle_centers[None, :, 1]
    near = np.hypot(dr, dz) < 2.0 * mesh.circle_radii[None, :]
    near[np.arange(mesh.n_nodes), mesh.panel_id] = True
    ti, pj = np.nonzero(near)
    return ti, pj

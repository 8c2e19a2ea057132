"""Bounded planar domains and their cell-centred Cartesian discretisations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

MIN_RESOLUTION = 8
DOMAIN_KINDS = ("disk", "annulus", "rectangle")


@dataclass(frozen=True)
class Domain:
    """A disk, annulus or axis-aligned rectangle.

    ``radius`` is the outer radius of disks and annuli, ``inner`` the hole
    radius of an annulus. Rectangles are centred on ``center``.
    """

    kind: str
    radius: float = 0.0
    inner: float = 0.0
    width: float = 0.0
    height: float = 0.0
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in DOMAIN_KINDS:
            raise InvalidArgument(f"unknown domain kind {self.kind!r}")
        vals = (self.radius, self.inner, self.width, self.height, *self.center)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidArgument("domain parameters must be finite")
        if self.kind == "disk" and not self.radius > 0:
            raise InvalidArgument("disk radius must be positive")
        if self.kind == "annulus" and not (0 < self.inner < self.radius):
            raise InvalidArgument("annulus needs 0 < inner < radius")
        if self.kind == "rectangle" and not (self.width > 0 and self.height > 0):
            raise InvalidArgument("rectangle needs positive width and height")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @classmethod
    def disk(cls, radius=1.0, center=(0.0, 0.0)):
        return cls("disk", radius=radius, center=center)

    @classmethod
    def annulus(cls, inner, radius, center=(0.0, 0.0)):
        return cls("annulus", radius=radius, inner=inner, center=center)

    @classmethod
    def rectangle(cls, width, height, center=(0.0, 0.0)):
        return cls("rectangle", width=width, height=height, center=center)

    @property
    def extent(self):
        """Half-widths of the bounding box."""
        if self.kind == "rectangle":
            return 0.5 * self.width, 0.5 * self.height
        return self.radius, self.radius

    @property
    def area(self):
        if self.kind == "disk":
            return np.pi * self.radius**2
        if self.kind == "annulus":
            return np.pi * (self.radius**2 - self.inner**2)
        return self.width * self.height

    @property
    def perimeter(self):
        if self.kind == "disk":
            return 2 * np.pi * self.radius
        if self.kind == "annulus":
            return 2 * np.pi * (self.radius + self.inner)
        return 2 * (self.width + self.height)

    def contains(self, x, y):
        """Strict point-in-domain test; boundary points are outside."""
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        if self.kind == "rectangle":
            hx, hy = self.extent
            return (np.abs(dx) < hx) & (np.abs(dy) < hy)
        r2 = dx * dx + dy * dy
        inside = r2 < self.radius**2
        if self.kind == "annulus":
            inside &= r2 > self.inner**2
        return inside

    def exit_fraction(self, px, py, qx, qy):
        """Smallest t in (0, 1] where the segment p + t(q - p) leaves the domain.

        ``p`` must lie inside and ``q`` outside. Used by the cut-cell
        Laplacian to place the Dirichlet boundary.
        """
        px, py, qx, qy = (np.asarray(a, dtype=float) for a in (px, py, qx, qy))
        px = px - self.center[0]
        qx = qx - self.center[0]
        py = py - self.center[1]
        qy = qy - self.center[1]
        dx, dy = qx - px, qy - py
        t = np.ones(np.broadcast(px, py, qx, qy).shape)
        if self.kind == "rectangle":
            hx, hy = self.extent
            for d, p, half in ((dx, px, hx), (dy, py, hy)):
                with np.errstate(divide="ignore", invalid="ignore"):
                    tp = np.where(d > 0, (half - p) / d, np.inf)
                    tm = np.where(d < 0, (-half - p) / d, np.inf)
                t = np.minimum(t, np.minimum(tp, tm))
            return np.clip(t, 0.0, 1.0)
        t = np.minimum(t, _circle_crossing(px, py, dx, dy, self.radius))
        if self.kind == "annulus":
            t = np.minimum(t, _circle_crossing(px, py, dx, dy, self.inner))
        return np.clip(t, 0.0, 1.0)


def _circle_crossing(px, py, dx, dy, radius):
    # roots of |p + t d|^2 = R^2; keep the smallest one in (0, 1]
    a = dx * dx + dy * dy
    b = 2 * (px * dx + py * dy)
    c = px * px + py * py - radius**2
    disc = b * b - 4 * a * c
    out = np.full(np.shape(disc), np.inf)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    for root in ((-b - sq) / (2 * a), (-b + sq) / (2 * a)):
        good = ok & (root > 0) & (root <= 1) & (root < out)
        out = np.where(good, root, out)
    return out


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform square-cell grid covering a domain's bounding box.

    Arrays are indexed ``[i, j]`` with ``x = origin[0] + (i + 1/2) h``.
    One ring of exterior padding cells surrounds the bounding box, so every
    interior cell has four neighbours inside the array.
    """

    domain: Domain
    nx: int
    ny: int
    h: float
    origin: tuple
    mask: np.ndarray = field(repr=False)
    # placement centre; when set, coordinates are measured from it so the mask and centers() agree bitwise
    center: tuple | None = None

    @property
    def cell_area(self):
        return self.h * self.h

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def n_interior(self):
        return int(self.mask.sum())

    @property
    def interior_area(self):
        return self.n_interior * self.cell_area

    def axes(self):
        if self.center is not None:
            return (
                _symmetric_axis(self.nx, self.h, self.center[0]),
                _symmetric_axis(self.ny, self.h, self.center[1]),
            )
        x = self.origin[0] + (np.arange(self.nx) + 0.5) * self.h
        y = self.origin[1] + (np.arange(self.ny) + 0.5) * self.h
        return x, y

    def centers(self):
        x, y = self.axes()
        return np.meshgrid(x, y, indexing="ij")

    def zeros(self):
        return np.zeros(self.shape)

    def same_as(self, other):
        return (
            self is other
            or (
                self.shape == other.shape
                and self.h == other.h
                and self.origin == other.origin
                and np.array_equal(self.mask, other.mask)
            )
        )

    def check_field(self, a, name="field"):
        a = np.asarray(a, dtype=float)
        if a.shape != self.shape:
            raise InvalidArgument(f"{name} has shape {a.shape}, grid is {self.shape}")
        return a


def _symmetric_axis(n, h, c):
    # centred placement so reflections about c map cell centres onto cell centres exactly
    return c + (np.arange(n) + 0.5 - 0.5 * n) * h


def build_grid(domain, resolution):
    """Discretise ``domain`` with ``resolution`` cells across its longer side."""
    if not isinstance(domain, Domain):
        raise InvalidArgument("domain must be a Domain")
    if int(resolution) != resolution or resolution < MIN_RESOLUTION:
        raise InvalidArgument(f"resolution must be an integer >= {MIN_RESOLUTION}, got {resolution}")
    resolution = int(resolution)
    hx, hy = domain.extent
    h = 2 * max(hx, hy) / resolution
    # cells needed to cover each half-extent, plus one padding ring
    nx = 2 * int(np.ceil(hx / h - 1e-9)) + 2
    ny = 2 * int(np.ceil(hy / h - 1e-9)) + 2
    cx, cy = domain.center
    x = _symmetric_axis(nx, h, cx)
    y = _symmetric_axis(ny, h, cy)
    X, Y = np.meshgrid(x, y, indexing="ij")
    mask = domain.contains(X, Y)
    # centres on the boundary up to roundoff can land on either side; dropping
    # them everywhere keeps the mask exactly symmetric
    mask = mask & mask[::-1, :] & mask[:, ::-1]
    if nx == ny and hx == hy:
        mask = mask & mask.T
    mask[[0, -1], :] = False
    mask[:, [0, -1]] = False
    if not mask.any():
        raise InvalidArgument("grid has no interior cells")
    mask.setflags(write=False)
    origin = (float(x[0] - 0.5 * h), float(y[0] - 0.5 * h))
    return Grid(domain=domain, nx=nx, ny=ny, h=h, origin=origin, mask=mask, center=(cx, cy))


def measure(grid, indicator):
    """Area carried by a per-cell indicator (boolean or fraction) on interior cells."""
    ind = np.asarray(indicator, dtype=float)
    if ind.shape != grid.shape:
        raise InvalidArgument(f"indicator shape {ind.shape} does not match grid {grid.shape}")
    return float(ind[grid.mask].sum() * grid.cell_area)


def interface_cells(grid, indicator):
    """Interior cells of a set that touch an interior cell outside it, or vice versa."""
    s = np.asarray(indicator, dtype=bool) & grid.mask
    edge = np.zeros_like(s)
    for axis in (0, 1):
        for shift in (1, -1):
            nb = np.roll(s, shift, axis=axis)
            nb_in = np.roll(grid.mask, shift, axis=axis)
            edge |= (s != nb) & nb_in
    return edge & grid.mask

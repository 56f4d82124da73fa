"""Bounded 2D domains and their cell/face discretizations.

A :class:`Domain` is an open subset of the plane described by a vectorized
membership predicate plus a bounding box, a list of exit segments on its
boundary and an interior-sphere radius declaring how round the boundary is.
:func:`build_grid` lays a uniform cell grid over the bounding box and
classifies cells (interior / obstacle / exterior) by sampling the predicate
at cell centers; :func:`classify_faces` tags every cell face as internal,
wall or exit.  Density is only ever stored on interior cells; wall faces
carry zero flux and exit faces let mass leave.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "CellKind",
    "FaceKind",
    "Domain",
    "Grid",
    "CellMask",
    "build_grid",
    "classify_faces",
    "check_interior_sphere",
]

# Rectangles are stored as (x0, x1, y0, y1), segments as ((ax, ay), (bx, by)).
Rect = tuple[float, float, float, float]
Segment = tuple[tuple[float, float], tuple[float, float]]


class CellKind(IntEnum):
    INTERIOR = 0
    OBSTACLE = 1
    EXTERIOR = 2


class FaceKind(IntEnum):
    INACTIVE = 0  # neither side is an interior cell
    INTERNAL = 1  # interior on both sides
    WALL = 2      # interior on one side, no outflow
    EXIT = 3      # interior on one side, outflow allowed


def _segment_point_distance(px, py, seg: Segment):
    """Distance from points (px, py) to a closed segment, vectorized."""
    (ax, ay), (bx, by) = seg
    vx, vy = bx - ax, by - ay
    norm2 = vx * vx + vy * vy
    if norm2 == 0.0:
        return np.hypot(px - ax, py - ay)
    t = np.clip(((px - ax) * vx + (py - ay) * vy) / norm2, 0.0, 1.0)
    return np.hypot(px - (ax + t * vx), py - (ay + t * vy))


@dataclass(frozen=True)
class Domain:
    """Open bounded region with declared exits and boundary roundness.

    ``inside`` must accept numpy arrays (x, y) and return a boolean array;
    points exactly on the boundary count as outside (open-set convention,
    which makes boundary ties conservative everywhere downstream).
    ``interior_sphere_radius`` is the radius r for which the region is
    supposed to satisfy the uniform interior-sphere property away from
    corners; the factory constructors probe it at a few boundary points and
    reject declarations that are plainly too large.
    """

    bounding_box: Rect
    inside: Callable[[np.ndarray, np.ndarray], np.ndarray]
    exits: tuple[Segment, ...]
    interior_sphere_radius: float
    obstacles: tuple[Rect, ...] = ()

    @staticmethod
    def rectangle(
        bounds: Rect,
        exits: Sequence[Segment] = (),
        obstacles: Sequence[Rect] = (),
        interior_sphere_radius: float = 0.1,
    ) -> "Domain":
        """Axis-aligned rectangle, minus closed rectangular obstacles."""
        x0, x1, y0, y1 = (float(v) for v in bounds)
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"degenerate rectangle bounds {bounds}")
        obs = tuple(tuple(float(v) for v in r) for r in obstacles)
        for ox0, ox1, oy0, oy1 in obs:
            if not (ox1 > ox0 and oy1 > oy0):
                raise ValueError(f"degenerate obstacle ({ox0}, {ox1}, {oy0}, {oy1})")
            if ox0 < x0 or ox1 > x1 or oy0 < y0 or oy1 > y1:
                raise ValueError("obstacle sticks out of the bounding rectangle")

        def inside(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            ok = (x > x0) & (x < x1) & (y > y0) & (y < y1)
            for ox0, ox1, oy0, oy1 in obs:
                ok &= ~((x >= ox0) & (x <= ox1) & (y >= oy0) & (y <= oy1))
            return ok

        dom = Domain(
            bounding_box=(x0, x1, y0, y1),
            inside=inside,
            exits=tuple(exits),
            interior_sphere_radius=float(interior_sphere_radius),
            obstacles=obs,
        )
        dom._validate_rectangle_exits()
        dom._validate_sphere_radius()
        return dom

    @staticmethod
    def disc(
        center: tuple[float, float],
        radius: float,
        exits: Sequence[Segment] = (),
        interior_sphere_radius: float | None = None,
    ) -> "Domain":
        """Open disc; a disc of any radius up to its own fits everywhere."""
        cx, cy = float(center[0]), float(center[1])
        radius = float(radius)
        if radius <= 0.0:
            raise ValueError(f"disc radius must be positive, got {radius}")
        r_sphere = radius if interior_sphere_radius is None else float(interior_sphere_radius)
        if r_sphere > radius:
            raise ValueError("interior sphere radius exceeds the disc radius")

        def inside(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            return (x - cx) ** 2 + (y - cy) ** 2 < radius * radius

        for (ax, ay), (bx, by) in exits:
            for px, py in ((ax, ay), (bx, by)):
                if abs(math.hypot(px - cx, py - cy) - radius) > 1e-9 * radius:
                    raise ValueError("exit segment endpoints must lie on the circle")

        return Domain(
            bounding_box=(cx - radius, cx + radius, cy - radius, cy + radius),
            inside=inside,
            exits=tuple(exits),
            interior_sphere_radius=r_sphere,
            obstacles=(),
        )

    # -- construction-time validation ------------------------------------

    def _validate_rectangle_exits(self) -> None:
        x0, x1, y0, y1 = self.bounding_box
        tol = 1e-9 * max(x1 - x0, y1 - y0)
        for seg in self.exits:
            (ax, ay), (bx, by) = seg
            on_vertical = (abs(ax - bx) <= tol) and (
                abs(ax - x0) <= tol or abs(ax - x1) <= tol
            )
            on_horizontal = (abs(ay - by) <= tol) and (
                abs(ay - y0) <= tol or abs(ay - y1) <= tol
            )
            if not (on_vertical or on_horizontal):
                raise ValueError(f"exit segment {seg} does not lie on a boundary edge")
            if on_vertical and not (y0 - tol <= min(ay, by) and max(ay, by) <= y1 + tol):
                raise ValueError(f"exit segment {seg} extends past the boundary edge")
            if on_horizontal and not (x0 - tol <= min(ax, bx) and max(ax, bx) <= x1 + tol):
                raise ValueError(f"exit segment {seg} extends past the boundary edge")

    def _validate_sphere_radius(self) -> None:
        """Probe the declared interior-sphere radius at edge midpoints.

        Corners of rectangular domains genuinely violate the property for
        every positive radius, so only straight-edge midpoints (outer walls,
        obstacle walls, exits) are probed: pull the midpoint inward by r and
        require the pulled disc to stay inside.
        """
        r = self.interior_sphere_radius
        if r <= 0.0:
            raise ValueError(f"interior sphere radius must be positive, got {r}")
        x0, x1, y0, y1 = self.bounding_box
        probes: list[tuple[float, float, float, float]] = [  # point + inward normal
            (x0, 0.5 * (y0 + y1), 1.0, 0.0),
            (x1, 0.5 * (y0 + y1), -1.0, 0.0),
            (0.5 * (x0 + x1), y0, 0.0, 1.0),
            (0.5 * (x0 + x1), y1, 0.0, -1.0),
        ]
        for ox0, ox1, oy0, oy1 in self.obstacles:
            mx, my = 0.5 * (ox0 + ox1), 0.5 * (oy0 + oy1)
            probes += [
                (ox0, my, -1.0, 0.0),  # inward for the domain = away from the obstacle
                (ox1, my, 1.0, 0.0),
                (mx, oy0, 0.0, -1.0),
                (mx, oy1, 0.0, 1.0),
            ]
        for seg in self.exits:
            (ax, ay), (bx, by) = seg
            mx, my = 0.5 * (ax + bx), 0.5 * (ay + by)
            # find the inward direction by probing along both axis normals
            for nx_, ny_ in ((1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)):
                if bool(self.inside(np.array(mx + 1e-6 * nx_), np.array(my + 1e-6 * ny_))):
                    probes.append((mx, my, nx_, ny_))
                    break
        angles = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False)
        ring = (1.0 - 1e-9) * r
        for px, py, nx_, ny_ in probes:
            cx, cy = px + r * nx_, py + r * ny_
            xs = cx + ring * np.cos(angles)
            ys = cy + ring * np.sin(angles)
            if not bool(np.all(self.inside(xs, ys))):
                raise ValueError(
                    f"interior sphere radius {r} does not fit at boundary point "
                    f"({px}, {py})"
                )


@dataclass(frozen=True)
class Grid:
    """Uniform cell grid; values live at cell centers, indexed [ix, iy]."""

    nx: int
    ny: int
    dx: float
    dy: float
    origin: tuple[float, float]

    def __post_init__(self) -> None:
        if self.nx <= 0 or self.ny <= 0:
            raise ValueError(f"grid must have positive extents, got {self.nx}x{self.ny}")
        if self.dx <= 0.0 or self.dy <= 0.0:
            raise ValueError(f"grid spacing must be positive, got ({self.dx}, {self.dy})")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def x_centers(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.dx

    def y_centers(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.dy

    def center_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x_centers(), self.y_centers(), indexing="ij")


@dataclass
class CellMask:
    """Cell and face classification for one (domain, grid) pair.

    ``cells`` holds :class:`CellKind` codes with shape (nx, ny);
    ``face_x`` has shape (nx+1, ny) for faces normal to x (face f sits
    between cells ix = f-1 and f), ``face_y`` has shape (nx, ny+1).
    """

    cells: np.ndarray
    face_x: np.ndarray
    face_y: np.ndarray
    interior: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        nx, ny = self.cells.shape
        if self.face_x.shape != (nx + 1, ny) or self.face_y.shape != (nx, ny + 1):
            raise ValueError("face arrays do not match the cell array shape")
        self.interior = self.cells == CellKind.INTERIOR

    @property
    def interior_count(self) -> int:
        return int(np.count_nonzero(self.interior))


def build_grid(domain: Domain, h: float) -> tuple[Grid, CellMask]:
    """Discretize the bounding box with square cells of side h.

    h must divide both box extents to within rounding; cells are classified
    by their center point: inside the domain -> interior, inside an obstacle
    rectangle -> obstacle, anything else -> exterior.
    """
    if h <= 0.0:
        raise ValueError(f"mesh size must be positive, got {h}")
    x0, x1, y0, y1 = domain.bounding_box
    lx, ly = x1 - x0, y1 - y0
    nx = int(round(lx / h))
    ny = int(round(ly / h))
    if nx == 0 or ny == 0:
        raise ValueError(f"mesh size {h} is larger than the domain box")
    if abs(nx * h - lx) > 1e-9 * max(1.0, lx) or abs(ny * h - ly) > 1e-9 * max(1.0, ly):
        raise ValueError(f"mesh size {h} does not divide the box extents ({lx}, {ly})")

    grid = Grid(nx=nx, ny=ny, dx=h, dy=h, origin=(x0, y0))
    xx, yy = grid.center_mesh()
    ins = domain.inside(xx, yy)
    cells = np.full(grid.shape, CellKind.EXTERIOR, dtype=np.int8)
    cells[ins] = CellKind.INTERIOR
    for ox0, ox1, oy0, oy1 in domain.obstacles:
        in_obstacle = (xx >= ox0) & (xx <= ox1) & (yy >= oy0) & (yy <= oy1)
        cells[in_obstacle & ~ins] = CellKind.OBSTACLE
    if not ins.any():
        raise ValueError("no interior cells: mesh too coarse or domain empty")

    face_x, face_y = classify_faces(grid, domain, cells)
    return grid, CellMask(cells=cells, face_x=face_x, face_y=face_y)


def classify_faces(
    grid: Grid, domain: Domain, cells: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Tag every face as inactive / internal / wall / exit.

    A face with interior cells on both sides is internal.  A face with an
    interior cell on exactly one side is an exit when its midpoint lies
    within half a cell of one of the domain's exit segments (strictly, so a
    face one cell past the segment end is still a wall) and a wall
    otherwise.  Faces not touching any interior cell are inactive.
    Raises if some exit segment claims no face at all.
    """
    nx, ny = grid.shape
    interior = cells == CellKind.INTERIOR
    pad = np.zeros((nx + 2, ny + 2), dtype=bool)
    pad[1:-1, 1:-1] = interior

    x0, y0 = grid.origin
    xc = grid.x_centers()
    yc = grid.y_centers()
    tol = 0.5 * min(grid.dx, grid.dy)

    def classify(left_int, right_int, mx, my):
        kinds = np.full(left_int.shape, FaceKind.INACTIVE, dtype=np.int8)
        kinds[left_int & right_int] = FaceKind.INTERNAL
        boundary = left_int ^ right_int
        if boundary.any():
            kinds[boundary] = FaceKind.WALL
            if domain.exits:
                dist = np.full(left_int.shape, np.inf)
                for seg in domain.exits:
                    dist = np.minimum(dist, _segment_point_distance(mx, my, seg))
                kinds[boundary & (dist < tol)] = FaceKind.EXIT
        return kinds

    # faces normal to x: midpoint (x0 + f*dx, yc[j])
    fx_mx, fx_my = np.meshgrid(x0 + np.arange(nx + 1) * grid.dx, yc, indexing="ij")
    face_x = classify(pad[:-1, 1:-1], pad[1:, 1:-1], fx_mx, fx_my)
    # faces normal to y: midpoint (xc[i], y0 + f*dy)
    fy_mx, fy_my = np.meshgrid(xc, y0 + np.arange(ny + 1) * grid.dy, indexing="ij")
    face_y = classify(pad[1:-1, :-1], pad[1:-1, 1:], fy_mx, fy_my)

    for seg in domain.exits:
        claimed = 0
        if (face_x == FaceKind.EXIT).any():
            d = _segment_point_distance(fx_mx, fx_my, seg)
            claimed += int(np.count_nonzero((face_x == FaceKind.EXIT) & (d < tol)))
        if (face_y == FaceKind.EXIT).any():
            d = _segment_point_distance(fy_mx, fy_my, seg)
            claimed += int(np.count_nonzero((face_y == FaceKind.EXIT) & (d < tol)))
        if claimed == 0:
            raise ValueError(f"exit segment {seg} does not touch the discrete boundary")

    return face_x, face_y


def check_interior_sphere(domain: Domain, kernel_support: float) -> bool:
    """True when the declared boundary roundness is fine enough for a kernel.

    The averaging normalizer stays bounded away from zero when the domain
    admits interior spheres of radius at most a quarter of the kernel
    support; this is the pairing test used by scenario setup.
    """
    if kernel_support <= 0.0:
        raise ValueError(f"kernel support must be positive, got {kernel_support}")
    return domain.interior_sphere_radius <= 0.25 * kernel_support

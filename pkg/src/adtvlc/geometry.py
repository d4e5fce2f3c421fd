"""Room geometry: vectors, azimuth/elevation directions, surfaces and meshing.

Coordinate frame: x runs across the room width, y along its length and z up,
with the floor at z = 0. Every surface normal points into the room.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

# Tolerance for deciding whether an element side divides an edge exactly.
_DIVISIBILITY_TOL = 1e-9


def vec(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


def unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalise a zero vector")
    return np.asarray(v, dtype=float) / n


@dataclass(frozen=True)
class Orientation:
    """Pointing direction as azimuth (from +x toward +y) and elevation (up positive)."""

    azimuth_deg: float
    elevation_deg: float

    def __post_init__(self):
        if not -90.0 <= self.elevation_deg <= 90.0:
            raise ValueError(f"elevation {self.elevation_deg} outside [-90, 90]")
        # Azimuth is wrapped rather than rejected so that 360 and -45 are usable.
        object.__setattr__(self, "azimuth_deg", self.azimuth_deg % 360.0)

    @property
    def direction(self) -> np.ndarray:
        return direction_from_az_el(self)


def direction_from_az_el(o: Orientation) -> np.ndarray:
    el = math.radians(o.elevation_deg)
    # Exact values at the poles and axes keep normals like (0, 0, -1) clean.
    cos_el = 0.0 if abs(o.elevation_deg) == 90.0 else math.cos(el)
    sin_el = math.copysign(1.0, el) if abs(o.elevation_deg) == 90.0 else math.sin(el)
    return np.array([cos_el * _cos_deg(o.azimuth_deg), cos_el * _sin_deg(o.azimuth_deg), sin_el])


def az_el_from_direction(d: np.ndarray) -> Orientation:
    """Inverse of :func:`direction_from_az_el`; azimuth is 0 at the poles."""
    d = unit(d)
    el = math.degrees(math.asin(max(-1.0, min(1.0, d[2]))))
    if math.hypot(d[0], d[1]) < 1e-15:
        return Orientation(0.0, el)
    return Orientation(math.degrees(math.atan2(d[1], d[0])), el)


def _cos_deg(a: float) -> float:
    a = a % 360.0
    return {0.0: 1.0, 90.0: 0.0, 180.0: -1.0, 270.0: 0.0}.get(a, math.cos(math.radians(a)))


def _sin_deg(a: float) -> float:
    a = a % 360.0
    return {0.0: 0.0, 90.0: 1.0, 180.0: 0.0, 270.0: -1.0}.get(a, math.sin(math.radians(a)))


@dataclass(frozen=True, eq=False)
class Surface:
    """A rectangular room face spanned by ``origin + s*u + t*v`` for s, t in [0, 1]."""

    id: str
    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    normal: np.ndarray
    rho: float
    lambertian_order: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"surface {self.id}: reflectivity {self.rho} outside [0, 1]")
        if abs(float(np.dot(self.normal, self.u))) > 1e-12 or abs(float(np.dot(self.normal, self.v))) > 1e-12:
            raise ValueError(f"surface {self.id}: normal is not perpendicular to its edges")

    @property
    def area(self) -> float:
        return float(np.linalg.norm(self.u) * np.linalg.norm(self.v))


@dataclass(frozen=True, eq=False)
class SurfaceElement:
    center: np.ndarray
    area: float
    normal: np.ndarray
    rho: float
    surface_id: str


@dataclass(frozen=True, eq=False)
class Mesh:
    """Array-backed collection of surface elements.

    Iterating yields :class:`SurfaceElement` objects; the channel code works on
    the arrays directly. ``surface_index`` refers into ``surface_ids``.
    """

    centers: np.ndarray
    normals: np.ndarray
    areas: np.ndarray
    rho: np.ndarray
    surface_index: np.ndarray
    surface_ids: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.areas)

    def __iter__(self) -> Iterator[SurfaceElement]:
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, i: int) -> SurfaceElement:
        return SurfaceElement(
            center=self.centers[i],
            area=float(self.areas[i]),
            normal=self.normals[i],
            rho=float(self.rho[i]),
            surface_id=self.surface_ids[self.surface_index[i]],
        )

    @classmethod
    def concatenate(cls, meshes: list[Mesh]) -> Mesh:
        ids: list[str] = []
        index_parts = []
        for m in meshes:
            index_parts.append(m.surface_index + len(ids))
            ids.extend(m.surface_ids)
        return cls(
            centers=np.concatenate([m.centers for m in meshes]),
            normals=np.concatenate([m.normals for m in meshes]),
            areas=np.concatenate([m.areas for m in meshes]),
            rho=np.concatenate([m.rho for m in meshes]),
            surface_index=np.concatenate(index_parts),
            surface_ids=tuple(ids),
        )


def _edge_cells(length: float, side: float, strict: bool) -> np.ndarray:
    """Cell boundaries along one edge, in units of length."""
    ratio = length / side
    n = round(ratio)
    if abs(ratio - n) <= _DIVISIBILITY_TOL * max(1.0, ratio) and n >= 1:
        return np.arange(n + 1) * (length / n)
    if strict:
        raise ValueError(f"element side {side} m does not divide edge length {length} m")
    # Final row/column truncated to fit the edge.
    n_full = int(math.floor(ratio))
    edges = np.arange(n_full + 1) * side
    return np.append(edges, length)


def mesh_surface(s: Surface, element_side: float, strict: bool = True) -> Mesh:
    """Divide a surface into a regular grid of elements, row-major in (u, v)."""
    if not element_side > 0.0:
        raise ValueError(f"element side must be positive, got {element_side}")
    lu = float(np.linalg.norm(s.u))
    lv = float(np.linalg.norm(s.v))
    eu = _edge_cells(lu, element_side, strict)
    ev = _edge_cells(lv, element_side, strict)
    cu = 0.5 * (eu[:-1] + eu[1:]) / lu
    cv = 0.5 * (ev[:-1] + ev[1:]) / lv
    au = np.diff(eu)
    av = np.diff(ev)

    su, sv = np.meshgrid(cu, cv, indexing="ij")
    centers = s.origin + su.reshape(-1, 1) * s.u + sv.reshape(-1, 1) * s.v
    areas = np.outer(au, av).reshape(-1)
    n = len(areas)
    return Mesh(
        centers=centers,
        normals=np.tile(s.normal, (n, 1)),
        areas=areas,
        rho=np.full(n, s.rho),
        surface_index=np.zeros(n, dtype=int),
        surface_ids=(s.id,),
    )


@dataclass(frozen=True)
class RoomConfig:
    width: float = 4.0
    length: float = 8.0
    height: float = 3.0
    rho_ceiling: float = 0.8
    rho_walls: float = 0.8
    rho_floor: float = 0.3
    first_order_side: float = 0.05
    second_order_side: float = 0.20
    strict_mesh: bool = True


@dataclass(frozen=True, eq=False)
class Room:
    config: RoomConfig
    surfaces: tuple[Surface, ...]
    mesh_first: Mesh
    mesh_second: Mesh

    @property
    def width(self) -> float:
        return self.config.width

    @property
    def length(self) -> float:
        return self.config.length

    @property
    def height(self) -> float:
        return self.config.height

    def contains(self, p: np.ndarray, tol: float = 1e-12) -> bool:
        return bool(
            -tol <= p[0] <= self.width + tol
            and -tol <= p[1] <= self.length + tol
            and -tol <= p[2] <= self.height + tol
        )


def room_surfaces(config: RoomConfig) -> tuple[Surface, ...]:
    w, l, h = config.width, config.length, config.height
    rc, rw, rf = config.rho_ceiling, config.rho_walls, config.rho_floor
    return (
        Surface("ceiling", vec(0, 0, h), vec(w, 0, 0), vec(0, l, 0), vec(0, 0, -1), rc),
        Surface("floor", vec(0, 0, 0), vec(w, 0, 0), vec(0, l, 0), vec(0, 0, 1), rf),
        Surface("wall1", vec(0, 0, 0), vec(w, 0, 0), vec(0, 0, h), vec(0, 1, 0), rw),
        Surface("wall2", vec(w, 0, 0), vec(0, l, 0), vec(0, 0, h), vec(-1, 0, 0), rw),
        Surface("wall3", vec(0, l, 0), vec(w, 0, 0), vec(0, 0, h), vec(0, -1, 0), rw),
        Surface("wall4", vec(0, 0, 0), vec(0, l, 0), vec(0, 0, h), vec(1, 0, 0), rw),
    )


def mesh_room(surfaces: tuple[Surface, ...], side: float, strict: bool = True) -> Mesh:
    return Mesh.concatenate([mesh_surface(s, side, strict) for s in surfaces])


def build_room(config: RoomConfig | None = None) -> Room:
    config = config or RoomConfig()
    if min(config.width, config.length, config.height) <= 0.0:
        raise ValueError("room dimensions must be positive")
    surfaces = room_surfaces(config)
    return Room(
        config=config,
        surfaces=surfaces,
        mesh_first=mesh_room(surfaces, config.first_order_side, config.strict_mesh),
        mesh_second=mesh_room(surfaces, config.second_order_side, config.strict_mesh),
    )

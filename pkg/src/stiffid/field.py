"""Displacement fields sampled at mesh nodes, and virtual sensor regions.

All coordinates and displacements are stored in millimetres.  A field is
"centered" once node positions are expressed relative to the reference
point at which the deflection is reported; estimators require centered
fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field as _field
from typing import Iterator, NamedTuple

import numpy as np

from .errors import (
    AlreadyCentered,
    EmptyField,
    EmptySelection,
    FieldFileError,
)

# Boundary nodes of a sensor region count as inside within this tolerance (mm).
BOUNDARY_TOL = 1e-9

_AXES = {"x": 0, "y": 1, "z": 2}

CSV_HEADER = ("x", "y", "z", "dx", "dy", "dz")


class Node(NamedTuple):
    position: np.ndarray
    displacement: np.ndarray


def _as_points(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValueError(f"{name} must have shape (n, 3), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


@dataclass(frozen=True)
class DisplacementField:
    """Nodal positions and displacements of one loading experiment.

    Parameters
    ----------
    positions : (n, 3) array
        Node coordinates, mm.
    displacements : (n, 3) array
        Nodal displacement vectors, mm.
    reference_point : (3,) array
        Point at which the body deflection is reported, mm.
    centered : bool
        True once positions are relative to the reference point.
    """

    positions: np.ndarray
    displacements: np.ndarray
    reference_point: np.ndarray = _field(default_factory=lambda: np.zeros(3))
    centered: bool = False

    def __post_init__(self):
        pos = _as_points(self.positions, "positions")
        disp = _as_points(self.displacements, "displacements")
        if pos.shape != disp.shape:
            raise ValueError("positions and displacements must have equal shape")
        ref = np.asarray(self.reference_point, dtype=float).reshape(3)
        if not np.all(np.isfinite(ref)):
            raise ValueError("reference_point contains non-finite values")
        for name, arr in (("positions", pos), ("displacements", disp),
                          ("reference_point", ref)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def __len__(self) -> int:
        return self.n

    def node(self, i: int) -> Node:
        return Node(self.positions[i], self.displacements[i])

    def __iter__(self) -> Iterator[Node]:
        return (self.node(i) for i in range(self.n))


def center_field(field: DisplacementField) -> DisplacementField:
    """Shift node positions so they are relative to the reference point.

    Displacements are untouched.  The reference point is kept for
    provenance.  Centering twice raises :class:`AlreadyCentered`.
    """
    if field.centered:
        raise AlreadyCentered("field is already centered on its reference point")
    return DisplacementField(
        field.positions - field.reference_point,
        field.displacements,
        field.reference_point,
        centered=True,
    )


def uncenter_field(field: DisplacementField) -> DisplacementField:
    """Restore absolute node coordinates.  Inverse of :func:`center_field`."""
    if not field.centered:
        raise ValueError("field is not centered")
    return DisplacementField(
        field.positions + field.reference_point,
        field.displacements,
        field.reference_point,
        centered=False,
    )


def centroid(field: DisplacementField) -> np.ndarray:
    """Arithmetic mean of the node positions."""
    if field.n == 0:
        raise EmptyField("cannot take the centroid of an empty field")
    return field.positions.mean(axis=0)


@dataclass(frozen=True)
class SensorRegion:
    """Geometric region selecting the nodes of a virtual sensor.

    Construct through :meth:`cube`, :meth:`square`, :meth:`layer` or
    :meth:`sphere`.  Coordinates are relative to the reference point of
    the (centered) field the region is applied to.  Boundary nodes are
    inside within ``BOUNDARY_TOL``.
    """

    shape: str
    center: np.ndarray
    edge: float = 0.0
    axis: int = 0
    coordinate: float = 0.0
    thickness: float = 0.0
    radius: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3)
        c.flags.writeable = False
        object.__setattr__(self, "center", c)

    @staticmethod
    def _axis_index(axis: int | str) -> int:
        if isinstance(axis, str):
            try:
                return _AXES[axis.lower()]
            except KeyError:
                raise ValueError(f"axis must be one of x, y, z, got {axis!r}") from None
        if axis not in (0, 1, 2):
            raise ValueError(f"axis index must be 0, 1 or 2, got {axis}")
        return int(axis)

    @classmethod
    def cube(cls, edge: float, center=(0.0, 0.0, 0.0)) -> "SensorRegion":
        if edge <= 0:
            raise ValueError("cube edge must be positive")
        return cls("cube", center, edge=float(edge))

    @classmethod
    def square(cls, edge: float, axis: int | str, center=(0.0, 0.0, 0.0)) -> "SensorRegion":
        """Planar square sensor of zero thickness, normal to `axis`."""
        if edge <= 0:
            raise ValueError("square edge must be positive")
        return cls("square", center, edge=float(edge), axis=cls._axis_index(axis))

    @classmethod
    def layer(cls, axis: int | str, coordinate: float, thickness: float) -> "SensorRegion":
        """Slab of nodes with the `axis` coordinate near `coordinate`."""
        if thickness <= 0:
            raise ValueError("layer thickness must be positive")
        ax = cls._axis_index(axis)
        center = np.zeros(3)
        center[ax] = coordinate
        return cls("layer", center, axis=ax, coordinate=float(coordinate),
                   thickness=float(thickness))

    @classmethod
    def sphere(cls, radius: float, center=(0.0, 0.0, 0.0)) -> "SensorRegion":
        if radius <= 0:
            raise ValueError("sphere radius must be positive")
        return cls("sphere", center, radius=float(radius))

    def mask(self, positions: np.ndarray) -> np.ndarray:
        """Boolean inclusion mask for an (n, 3) position array."""
        rel = positions - self.center
        if self.shape == "cube":
            return np.all(np.abs(rel) <= self.edge / 2 + BOUNDARY_TOL, axis=1)
        if self.shape == "square":
            others = [i for i in range(3) if i != self.axis]
            on_plane = np.abs(rel[:, self.axis]) <= BOUNDARY_TOL
            inside = np.all(np.abs(rel[:, others]) <= self.edge / 2 + BOUNDARY_TOL, axis=1)
            return on_plane & inside
        if self.shape == "layer":
            d = np.abs(positions[:, self.axis] - self.coordinate)
            return d <= self.thickness / 2 + BOUNDARY_TOL
        if self.shape == "sphere":
            return np.linalg.norm(rel, axis=1) <= self.radius + BOUNDARY_TOL
        raise ValueError(f"unknown region shape {self.shape!r}")


def select_sensor(field: DisplacementField, region: SensorRegion) -> DisplacementField:
    """Restrict a centered field to the nodes inside a sensor region.

    Node order is preserved.  Raises :class:`EmptySelection` when no node
    falls inside the region.
    """
    if not field.centered:
        raise ValueError("select_sensor needs a centered field")
    keep = region.mask(field.positions)
    if not np.any(keep):
        raise EmptySelection(f"no nodes inside {region.shape} sensor region")
    return DisplacementField(
        field.positions[keep],
        field.displacements[keep],
        field.reference_point,
        centered=True,
    )


def read_field_csv(path, reference_point=(0.0, 0.0, 0.0),
                   length_scale: float = 1.0) -> DisplacementField:
    """Read a nodal field from CSV with columns x,y,z,dx,dy,dz.

    Lines starting with '#' and blank lines are skipped.  The first data
    line must be the header.  `length_scale` converts the file's length
    unit to mm (1000.0 for metres).  The returned field is not centered.
    """
    path = str(path)
    rows = []
    header_seen = False
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise FieldFileError(path, None, str(exc)) from exc
    with handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if not header_seen:
                if tuple(p.lower() for p in parts) != CSV_HEADER:
                    raise FieldFileError(
                        path, lineno,
                        f"expected header {','.join(CSV_HEADER)}, got {line!r}")
                header_seen = True
                continue
            if len(parts) != 6:
                raise FieldFileError(path, lineno,
                                     f"expected 6 columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise FieldFileError(path, lineno,
                                     f"non-numeric value in {line!r}") from None
    if not header_seen:
        raise FieldFileError(path, None, "missing header line")
    if not rows:
        raise FieldFileError(path, None, "no data rows")
    data = np.asarray(rows, dtype=float) * length_scale
    ref = np.asarray(reference_point, dtype=float) * length_scale
    return DisplacementField(data[:, :3], data[:, 3:], ref, centered=False)


def write_field_csv(path, field: DisplacementField, comments=()) -> None:
    """Write a field to CSV (mm).  Centered fields are written with
    absolute coordinates so the file round-trips through
    :func:`read_field_csv` plus :func:`center_field`.
    """
    pos = field.positions
    if field.centered:
        pos = pos + field.reference_point
    with open(str(path), "w", encoding="utf-8", newline="\n") as handle:
        for comment in comments:
            handle.write(f"# {comment}\n")
        handle.write(",".join(CSV_HEADER) + "\n")
        for p, d in zip(pos, field.displacements):
            handle.write(",".join(repr(float(v)) for v in (*p, *d)) + "\n")

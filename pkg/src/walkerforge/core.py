"""Parametric walker model: design vector, materials, tube sections,
frame-graph construction and geometric feasibility checks.

Axis convention (used everywhere downstream): X longitudinal (forward),
Y lateral, Z vertical. The base-rectangle midpoint is the origin and the
four leg tips lie on the z = 0 plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import InfeasibleDesign, InvalidSection, UnknownMaterial
from .units import in_to_m

MATERIAL_NAMES = ("Aluminum", "Steel", "Titanium")

#: Continuous design parameters in canonical (CSV / sampling) order.
CONTINUOUS_FIELDS = (
    "overall_height",
    "base_length",
    "base_width",
    "handle_distance",
    "handle_length",
    "side_crossbeam_height",
    "front_upper_crossbeam_height",
    "front_lower_crossbeam_height",
    "front_crossbeam_bend_angle",
    "frame_tube_inner_diameter",
    "front_crossbeam_inner_diameter",
    "side_crossbeam_inner_diameter",
    "frame_tube_thickness",
    "crossbeam_tube_thickness",
)

CATEGORICAL_FIELDS = ("front_crossbeam_material", "frame_material")

ALL_FIELDS = CONTINUOUS_FIELDS + CATEGORICAL_FIELDS

#: Geometry-relation lengths (in). Diameters/thicknesses and the bend angle
#: are excluded: scaling these 8 scales the frame uniformly.
GEOMETRY_LENGTH_FIELDS = (
    "overall_height",
    "base_length",
    "base_width",
    "handle_distance",
    "handle_length",
    "side_crossbeam_height",
    "front_upper_crossbeam_height",
    "front_lower_crossbeam_height",
)


@dataclass(frozen=True)
class DesignVector:
    """One walker design: 14 continuous parameters (in / deg) and 2 materials."""

    overall_height: float
    base_length: float
    base_width: float
    handle_distance: float
    handle_length: float
    side_crossbeam_height: float
    front_upper_crossbeam_height: float
    front_lower_crossbeam_height: float
    front_crossbeam_bend_angle: float
    frame_tube_inner_diameter: float
    front_crossbeam_inner_diameter: float
    side_crossbeam_inner_diameter: float
    frame_tube_thickness: float
    crossbeam_tube_thickness: float
    front_crossbeam_material: str
    frame_material: str

    def continuous(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in CONTINUOUS_FIELDS], dtype=float)

    def materials(self) -> tuple[str, str]:
        return (self.front_crossbeam_material, self.frame_material)

    @classmethod
    def from_arrays(cls, cont, mats) -> "DesignVector":
        kw = dict(zip(CONTINUOUS_FIELDS, (float(v) for v in cont)))
        kw.update(zip(CATEGORICAL_FIELDS, mats))
        return cls(**kw)

    def outer_diameters(self) -> dict[str, float]:
        """Outer diameter (in) per tube group."""
        return {
            "frame": self.frame_tube_inner_diameter + 2.0 * self.frame_tube_thickness,
            "front_crossbeam": self.front_crossbeam_inner_diameter
            + 2.0 * self.crossbeam_tube_thickness,
            "side_crossbeam": self.side_crossbeam_inner_diameter
            + 2.0 * self.crossbeam_tube_thickness,
        }


@dataclass(frozen=True)
class MaterialSpec:
    name: str
    elastic_modulus: float  # Pa
    poisson_ratio: float
    shear_modulus: float  # Pa
    density: float  # kg/m^3
    tensile_strength: float  # Pa
    yield_strength: float  # Pa


_GPA = 1e9
_MPA = 1e6

_MATERIALS = {
    "Aluminum": MaterialSpec("Aluminum", 69 * _GPA, 0.330, 26 * _GPA, 2700.0, 310 * _MPA, 275 * _MPA),
    "Steel": MaterialSpec("Steel", 205 * _GPA, 0.285, 80 * _GPA, 7850.0, 731 * _MPA, 460 * _MPA),
    "Titanium": MaterialSpec("Titanium", 105 * _GPA, 0.310, 41 * _GPA, 4429.0, 1050 * _MPA, 827 * _MPA),
}


def material_properties(name: str) -> MaterialSpec:
    """Material constants for one of the three supported alloys."""
    try:
        return _MATERIALS[name]
    except KeyError:
        raise UnknownMaterial(f"unknown material category: {name!r}") from None


@dataclass(frozen=True)
class TubeSection:
    """Annular (or solid) circular section, SI units."""

    outer_diameter: float  # m
    inner_diameter: float  # m
    area: float  # m^2
    bending_inertia: float  # m^4
    torsion_constant: float  # m^4


def section_from(inner_diameter: float, thickness: float) -> TubeSection:
    """Section properties for a tube of given inner diameter and wall
    thickness (both in inches)."""
    if thickness <= 0.0:
        raise InvalidSection(f"tube thickness must be positive, got {thickness}")
    if inner_diameter < 0.0:
        raise InvalidSection(f"inner diameter must be non-negative, got {inner_diameter}")
    d_i = in_to_m(inner_diameter)
    d_o = in_to_m(inner_diameter + 2.0 * thickness)
    area = math.pi / 4.0 * (d_o**2 - d_i**2)
    inertia = math.pi / 64.0 * (d_o**4 - d_i**4)
    return TubeSection(d_o, d_i, area, inertia, 2.0 * inertia)


# ---------------------------------------------------------------------------
# Feasibility
# ---------------------------------------------------------------------------

VIOLATION_CODES = (
    "NonPositiveLength",
    "CrosspieceAboveHeight",
    "ImproperJunction",
    "DiameterAboveMax",
    "DiameterBelowMin",
    "HandleClearance",
)


@dataclass(frozen=True)
class FeasibilityLimits:
    """Configurable bounds used by the geometric validity checks (inches)."""

    max_outer_diameter: float = 1.25
    min_outer_diameter: float = 0.2
    handle_clearance: tuple[float, float] = (10.0, 30.0)


@dataclass(frozen=True)
class FeasibilityReport:
    valid: bool
    violations: tuple[str, ...]


def check_feasibility(d: DesignVector, limits: FeasibilityLimits = FeasibilityLimits()) -> FeasibilityReport:
    """Run all geometric validity checks; infeasibility is data, not an error."""
    violations = []

    positives = list(CONTINUOUS_FIELDS)  # bend angle must be positive too
    if any(getattr(d, f) <= 0.0 for f in positives):
        violations.append("NonPositiveLength")

    crossbeam_heights = (
        d.side_crossbeam_height,
        d.front_upper_crossbeam_height,
        d.front_lower_crossbeam_height,
    )
    if any(h >= d.overall_height for h in crossbeam_heights):
        violations.append("CrosspieceAboveHeight")

    od = d.outer_diameters()
    # Crossbeams terminate on frame tubes: a wider tube cannot land flush
    # on a narrower host.
    if od["front_crossbeam"] > od["frame"] or od["side_crossbeam"] > od["frame"]:
        violations.append("ImproperJunction")

    if any(v > limits.max_outer_diameter for v in od.values()):
        violations.append("DiameterAboveMax")
    if any(v < limits.min_outer_diameter for v in od.values()):
        violations.append("DiameterBelowMin")

    lo, hi = limits.handle_clearance
    if not (lo <= d.handle_distance <= hi):
        violations.append("HandleClearance")

    return FeasibilityReport(valid=not violations, violations=tuple(violations))


# ---------------------------------------------------------------------------
# Frame graph
# ---------------------------------------------------------------------------

MEMBER_GROUPS = ("frame", "front_crossbeam", "side_crossbeam")


@dataclass(frozen=True)
class Member:
    node_a: int
    node_b: int
    section: TubeSection
    material: MaterialSpec
    group: str


@dataclass
class FrameGraph:
    """Node/member skeleton of one walker frame (SI, meters).

    ``sensors`` maps role -> (left_node, right_node) pairs for handle tips,
    handle midpoints, front leg tips and rear leg tips.
    """

    nodes: np.ndarray  # (n, 3)
    members: list[Member]
    sensors: dict[str, tuple[int, int]] = field(default_factory=dict)

    def member_length(self, m: Member) -> float:
        return float(np.linalg.norm(self.nodes[m.node_b] - self.nodes[m.node_a]))

    def is_connected(self) -> bool:
        n = len(self.nodes)
        adj = [[] for _ in range(n)]
        for m in self.members:
            adj[m.node_a].append(m.node_b)
            adj[m.node_b].append(m.node_a)
        seen = {0}
        stack = [0]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == n


class _NodeTable:
    """Deduplicating node registry (coordinates in meters)."""

    def __init__(self, tol=1e-9):
        self.coords: list[tuple[float, float, float]] = []
        self._index: dict[tuple[int, int, int], int] = {}
        self.tol = tol

    def add(self, p) -> int:
        key = tuple(int(round(c / self.tol)) for c in p)
        if key in self._index:
            return self._index[key]
        idx = len(self.coords)
        self.coords.append(tuple(float(c) for c in p))
        self._index[key] = idx
        return idx


def build_frame(d: DesignVector, limits: FeasibilityLimits = FeasibilityLimits()) -> FrameGraph:
    """Construct the frame graph for a feasible design.

    Each side assembly is front leg + rear leg + handle (split at its
    midpoint for load application) + side crossbeam; two bent front
    crossbeams join the front legs, with the apex pushed forward by the
    bend angle (180 deg = straight).
    """
    report = check_feasibility(d, limits)
    if not report.valid:
        raise InfeasibleDesign(f"design fails feasibility checks: {report.violations}")

    frame_sec = section_from(d.frame_tube_inner_diameter, d.frame_tube_thickness)
    front_sec = section_from(d.front_crossbeam_inner_diameter, d.crossbeam_tube_thickness)
    side_sec = section_from(d.side_crossbeam_inner_diameter, d.crossbeam_tube_thickness)
    frame_mat = material_properties(d.frame_material)
    front_mat = material_properties(d.front_crossbeam_material)

    H = in_to_m(d.overall_height)
    bl = in_to_m(d.base_length)
    bw = in_to_m(d.base_width)
    l2 = in_to_m(d.handle_distance)
    hl = in_to_m(d.handle_length)

    nodes = _NodeTable()
    members: list[Member] = []

    def leg_point(tip, top, z):
        t = z / H
        return tip + t * (top - tip)

    def chain(points, section, material, group):
        for a, b in zip(points[:-1], points[1:]):
            if a != b:  # coincident attachment heights collapse to one node
                members.append(Member(a, b, section, material, group))

    sensors: dict[str, list[int]] = {
        "handle_tip": [],
        "handle_mid": [],
        "front_tip": [],
        "rear_tip": [],
    }

    front_attach: dict[float, dict[int, int]] = {}  # z -> side -> node id
    h_upper = in_to_m(d.front_upper_crossbeam_height)
    h_lower = in_to_m(d.front_lower_crossbeam_height)
    h_side = in_to_m(d.side_crossbeam_height)
    side_attach: dict[int, tuple[int, int]] = {}

    for s in (+1, -1):  # +1 = right (+Y), -1 = left
        rear_tip = np.array([-bl / 2.0, s * bw / 2.0, 0.0])
        front_tip = np.array([bl / 2.0, s * bw / 2.0, 0.0])
        rear_top = np.array([-hl / 2.0, s * l2 / 2.0, H])
        front_top = np.array([hl / 2.0, s * l2 / 2.0, H])
        handle_mid = np.array([0.0, s * l2 / 2.0, H])

        i_rear_tip = nodes.add(rear_tip)
        i_front_tip = nodes.add(front_tip)
        i_rear_top = nodes.add(rear_top)
        i_front_top = nodes.add(front_top)
        i_handle_mid = nodes.add(handle_mid)

        sensors["rear_tip"].append(i_rear_tip)
        sensors["front_tip"].append(i_front_tip)
        sensors["handle_tip"].append(i_rear_top)
        sensors["handle_mid"].append(i_handle_mid)

        # Rear leg with side-crossbeam attachment.
        i_rear_side = nodes.add(leg_point(rear_tip, rear_top, h_side))
        chain([i_rear_tip, i_rear_side, i_rear_top], frame_sec, frame_mat, "frame")

        # Front leg with side-crossbeam and front-crossbeam attachments.
        attach_z = sorted({h_lower, h_upper, h_side})
        ids = [i_front_tip]
        for z in attach_z:
            idx = nodes.add(leg_point(front_tip, front_top, z))
            ids.append(idx)
            if abs(z - h_side) < 1e-12:
                i_front_side = idx
            for h in (h_lower, h_upper):
                if abs(z - h) < 1e-12:
                    front_attach.setdefault(h, {})[s] = idx
        ids.append(i_front_top)
        chain(ids, frame_sec, frame_mat, "frame")

        # Handle, split at its midpoint (load application node).
        chain([i_rear_top, i_handle_mid, i_front_top], frame_sec, frame_mat, "frame")

        side_attach[s] = (i_front_side, i_rear_side)

    # Side crossbeams (one per side) between the legs.
    for s in (+1, -1):
        a, b = side_attach[s]
        members.append(Member(a, b, side_sec, frame_mat, "side_crossbeam"))

    # Front crossbeams: two-segment bend with apex on the midplane,
    # offset forward by half_span / tan(angle/2); 180 deg -> straight.
    half_angle = math.radians(d.front_crossbeam_bend_angle) / 2.0
    coords = np.asarray(nodes.coords)
    for h in sorted({h_lower, h_upper}):
        left = front_attach[h][-1]
        right = front_attach[h][+1]
        p_r = coords[right]
        half_span = abs(p_r[1])
        tan_half = math.tan(half_angle)
        offset = half_span / tan_half if tan_half > 1e-12 else 0.0
        if abs(offset) < 1e-12:
            members.append(Member(left, right, front_sec, front_mat, "front_crossbeam"))
        else:
            apex = nodes.add(np.array([p_r[0] + offset, 0.0, h]))
            members.append(Member(left, apex, front_sec, front_mat, "front_crossbeam"))
            members.append(Member(apex, right, front_sec, front_mat, "front_crossbeam"))

    sensor_pairs = {k: (v[1], v[0]) for k, v in sensors.items()}  # (left, right)
    return FrameGraph(np.asarray(nodes.coords, dtype=float), members, sensor_pairs)


def mass_properties(f: FrameGraph) -> tuple[float, np.ndarray]:
    """Total mass (kg) and center of mass (m) relative to the base-rectangle
    midpoint, from the line-density tube model."""
    total = 0.0
    moment = np.zeros(3)
    for m in f.members:
        length = f.member_length(m)
        mass = m.material.density * m.section.area * length
        mid = 0.5 * (f.nodes[m.node_a] + f.nodes[m.node_b])
        total += mass
        moment += mass * mid
    com = moment / total
    # Base midpoint: centroid of the four leg tips at z = 0.
    tips = [*f.sensors["front_tip"], *f.sensors["rear_tip"]]
    base_mid = f.nodes[list(tips)].mean(axis=0)
    return total, com - base_mid


# ---------------------------------------------------------------------------
# Reference fixture
# ---------------------------------------------------------------------------


def original_design() -> DesignVector:
    """The 'original' walker fixture: a typical commercial 2-wheeled walker
    (35 in tall, 22 in base width, 19 in handle spacing, ~170 deg crossbeam
    bend, aluminum throughout, ~7.5 lbs)."""
    return DesignVector(
        overall_height=35.0,
        base_length=20.0,
        base_width=22.0,
        handle_distance=19.0,
        handle_length=8.0,
        side_crossbeam_height=16.0,
        front_upper_crossbeam_height=26.0,
        front_lower_crossbeam_height=12.0,
        front_crossbeam_bend_angle=170.0,
        frame_tube_inner_diameter=0.76,
        front_crossbeam_inner_diameter=0.76,
        side_crossbeam_inner_diameter=0.76,
        frame_tube_thickness=0.1217,
        crossbeam_tube_thickness=0.1217,
        front_crossbeam_material="Aluminum",
        frame_material="Aluminum",
    )


def scaled_design(d: DesignVector, k: float) -> DesignVector:
    """Scale the 8 geometry-relation lengths by k (sections untouched)."""
    return replace(d, **{f: getattr(d, f) * k for f in GEOMETRY_LENGTH_FIELDS})

"""Linear static 3D beam-element solver for walker frames.

Each member is subdivided into 2-node, 12-DOF Euler-Bernoulli space-frame
elements (axial + torsion + biaxial bending). Rear leg tips are pinned,
front leg tips are rollers (the wheel idealization: free to translate
longitudinally). The load case is a total downward handle force split
equally between the two handle midpoints plus a lateral outward force per
handle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import (
    DesignVector,
    FeasibilityLimits,
    FrameGraph,
    Member,
    build_frame,
    mass_properties,
)
from .errors import MechanismDetected, MeshError, SimulationFailure
from .units import in_to_m, kg_to_lb, lbf_to_n, m_to_in

#: Safety-factor cap for unstressed elements (avoids division blow-ups).
SAFETY_FACTOR_CAP = 1e6

#: Default beam-subdivision cap, inches.
DEFAULT_ELEMENT_CAP_IN = 1.0


@dataclass(frozen=True)
class LoadCase:
    """Handle loading in lbf: total downward force (split per handle) and
    per-handle lateral outward force."""

    handle_down_force: float = 350.0
    handle_lateral_force: float = 17.5

    def __post_init__(self):
        if self.handle_down_force < 0 or self.handle_lateral_force < 0:
            raise ValueError("forces must be non-negative")


@dataclass(frozen=True)
class BoundarySpec:
    """Support conditions at the leg tips.

    rear: pinned (all translations fixed); front: roller (lateral and
    vertical translations fixed, longitudinal free). Rotations free at all
    supports.
    """

    rear_fixed_dofs: tuple[int, ...] = (0, 1, 2)  # ux, uy, uz
    front_fixed_dofs: tuple[int, ...] = (1, 2)  # uy, uz


@dataclass
class DiscretizedFrame:
    nodes: np.ndarray  # (n, 3) m
    elements: list[tuple[int, int, Member]]  # mesh node pair + parent member
    sensors: dict[str, tuple[int, int]]
    frame: FrameGraph
    _element_cache: list | None = None


@dataclass(frozen=True)
class PerformanceRecord:
    """The 8 simulated performance values plus the stability annotation."""

    mass_lbs: float
    handle_dx_in: float
    handle_dy_in: float
    handle_dz_in: float
    leg_displ_in: float
    min_safety_factor: float
    com_longitudinal_in: float
    com_vertical_in: float
    theta_deg: float | None = None
    tip_status: str | None = None

    def with_stability(self, theta_deg, tip_status) -> "PerformanceRecord":
        return replace(self, theta_deg=theta_deg, tip_status=tip_status)


#: Performance target names in canonical order (8 simulated values + theta).
TARGET_NAMES = (
    "mass_lbs",
    "handle_dx_in",
    "handle_dy_in",
    "handle_dz_in",
    "leg_displ_in",
    "min_safety_factor",
    "com_longitudinal_in",
    "com_vertical_in",
    "theta_deg",
)


def discretize(f: FrameGraph, max_element_length_in: float = DEFAULT_ELEMENT_CAP_IN) -> DiscretizedFrame:
    """Split every member into ceil(L / cap) equal elements; frame nodes keep
    their ids, so the sensor map carries over unchanged."""
    if max_element_length_in <= 0:
        raise MeshError(f"element length cap must be positive, got {max_element_length_in}")
    cap = in_to_m(max_element_length_in)
    coords = [tuple(p) for p in f.nodes]
    elements: list[tuple[int, int, Member]] = []
    for m in f.members:
        pa, pb = f.nodes[m.node_a], f.nodes[m.node_b]
        length = float(np.linalg.norm(pb - pa))
        if length < 1e-12:
            raise MeshError(f"zero-length member between nodes {m.node_a} and {m.node_b}")
        n_el = max(1, math.ceil(length / cap - 1e-12))
        prev = m.node_a
        for i in range(1, n_el + 1):
            if i == n_el:
                nxt = m.node_b
            else:
                coords.append(tuple(pa + (i / n_el) * (pb - pa)))
                nxt = len(coords) - 1
            elements.append((prev, nxt, m))
            prev = nxt
    return DiscretizedFrame(np.asarray(coords), elements, dict(f.sensors), f)


def _cross(a, b):
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def _local_axes(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    """Orthonormal local axes, rows = (ex, ey, ez). Orientation about the
    member axis is arbitrary for circular tubes."""
    ex = pb - pa
    ex = ex / np.linalg.norm(ex)
    ref = np.array([0.0, 0.0, 1.0]) if abs(ex[2]) < 0.99 else np.array([1.0, 0.0, 0.0])
    ey = _cross(ref, ex)
    ey = ey / np.linalg.norm(ey)
    ez = _cross(ex, ey)
    return np.vstack([ex, ey, ez])


def _element_stiffness_local(E, G, A, Iy, Iz, J, L) -> np.ndarray:
    """Standard 12x12 Euler-Bernoulli space-frame stiffness in local axes.

    DOF order per node: ux, uy, uz, rx, ry, rz.
    """
    k = np.zeros((12, 12))
    ea, gj = E * A / L, G * J / L
    # axial
    k[np.ix_([0, 6], [0, 6])] += ea * np.array([[1, -1], [-1, 1]])
    # torsion
    k[np.ix_([3, 9], [3, 9])] += gj * np.array([[1, -1], [-1, 1]])
    # bending about local z (displacement uy, rotation rz)
    eiz = E * Iz
    kb = (eiz / L**3) * np.array(
        [
            [12, 6 * L, -12, 6 * L],
            [6 * L, 4 * L**2, -6 * L, 2 * L**2],
            [-12, -6 * L, 12, -6 * L],
            [6 * L, 2 * L**2, -6 * L, 4 * L**2],
        ]
    )
    k[np.ix_([1, 5, 7, 11], [1, 5, 7, 11])] += kb
    # bending about local y (displacement uz, rotation ry; sign-flipped)
    eiy = E * Iy
    kb = (eiy / L**3) * np.array(
        [
            [12, -6 * L, -12, -6 * L],
            [-6 * L, 4 * L**2, 6 * L, 2 * L**2],
            [-12, 6 * L, 12, 6 * L],
            [-6 * L, 2 * L**2, 6 * L, 4 * L**2],
        ]
    )
    k[np.ix_([2, 4, 8, 10], [2, 4, 8, 10])] += kb
    return k


def _element_matrices(mesh: DiscretizedFrame):
    """(ia, ib, k_global, k_local, T) per element, cached on the mesh."""
    if mesh._element_cache is None:
        mesh._element_cache = list(_build_element_matrices(mesh))
    return mesh._element_cache


def _build_element_matrices(mesh: DiscretizedFrame):
    for ia, ib, m in mesh.elements:
        pa, pb = mesh.nodes[ia], mesh.nodes[ib]
        L = float(np.linalg.norm(pb - pa))
        R = _local_axes(pa, pb)
        T = np.zeros((12, 12))
        for blk in range(4):
            T[3 * blk : 3 * blk + 3, 3 * blk : 3 * blk + 3] = R
        sec, mat = m.section, m.material
        k_loc = _element_stiffness_local(
            mat.elastic_modulus,
            mat.shear_modulus,
            sec.area,
            sec.bending_inertia,
            sec.bending_inertia,
            sec.torsion_constant,
            L,
        )
        yield ia, ib, T.T @ k_loc @ T, k_loc, T


def _fixed_dofs(mesh: DiscretizedFrame, bc: BoundarySpec) -> list[int]:
    fixed = []
    for node in mesh.sensors["rear_tip"]:
        fixed.extend(6 * node + d for d in bc.rear_fixed_dofs)
    for node in mesh.sensors["front_tip"]:
        fixed.extend(6 * node + d for d in bc.front_fixed_dofs)
    return sorted(fixed)


def _load_vector(mesh: DiscretizedFrame, loads: LoadCase) -> np.ndarray:
    F = np.zeros(6 * len(mesh.nodes))
    down = lbf_to_n(loads.handle_down_force) / 2.0
    lateral = lbf_to_n(loads.handle_lateral_force)
    for node in mesh.sensors["handle_mid"]:
        F[6 * node + 2] -= down
        outward = np.sign(mesh.nodes[node][1])  # +Y on the right handle
        F[6 * node + 1] += outward * lateral
    return F


def assemble_stiffness(mesh: DiscretizedFrame) -> sp.csr_matrix:
    n_dof = 6 * len(mesh.nodes)
    rows, cols, vals = [], [], []
    for ia, ib, k_glob, _, _ in _element_matrices(mesh):
        dofs = np.r_[6 * ia : 6 * ia + 6, 6 * ib : 6 * ib + 6]
        rows.append(np.repeat(dofs, 12))
        cols.append(np.tile(dofs, 12))
        vals.append(k_glob.ravel())
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_dof, n_dof),
    )
    return K.tocsr()


def solve_constrained(mesh: DiscretizedFrame, F: np.ndarray, fixed: list[int]) -> np.ndarray:
    """Solve K u = F with the given DOFs fixed to zero."""
    K = assemble_stiffness(mesh)
    free = np.setdiff1d(np.arange(K.shape[0]), fixed)
    Kff = K[np.ix_(free, free)].tocsc()
    u = np.zeros(K.shape[0])
    if not np.any(F):
        return u
    try:
        lu = spla.splu(Kff)
        u_free = lu.solve(F[free])
    except RuntimeError as exc:
        raise MechanismDetected(f"singular constrained system: {exc}") from None
    if not np.all(np.isfinite(u_free)):
        raise MechanismDetected("non-finite solution; frame is a mechanism")
    resid = np.linalg.norm(Kff @ u_free - F[free]) / max(np.linalg.norm(F[free]), 1e-30)
    if resid > 1e-6:
        raise MechanismDetected(f"ill-conditioned system, residual {resid:.2e}")
    u[free] = u_free
    return u


def assemble_and_solve(
    mesh: DiscretizedFrame, loads: LoadCase, bc: BoundarySpec = BoundarySpec()
) -> np.ndarray:
    """Solve the walker load case: nodal displacement/rotation field (6/node)."""
    return solve_constrained(mesh, _load_vector(mesh, loads), _fixed_dofs(mesh, bc))


def reaction_forces(mesh: DiscretizedFrame, u: np.ndarray, loads: LoadCase, bc: BoundarySpec = BoundarySpec()):
    """Reactions at the constrained DOFs: R = K u - F there."""
    K = assemble_stiffness(mesh)
    F = _load_vector(mesh, loads)
    fixed = _fixed_dofs(mesh, bc)
    R = np.zeros_like(u)
    r_full = K @ u - F
    R[fixed] = r_full[fixed]
    return R


def element_stresses(mesh: DiscretizedFrame, u: np.ndarray) -> np.ndarray:
    """Max combined (von Mises) stress per element from the end-section
    forces: extreme-fiber axial+bending normal stress plus torsional shear."""
    out = np.empty(len(mesh.elements))
    for i, (ia, ib, _, k_loc, T) in enumerate(_element_matrices(mesh)):
        m = mesh.elements[i][2]
        u_el = np.r_[u[6 * ia : 6 * ia + 6], u[6 * ib : 6 * ib + 6]]
        f_loc = k_loc @ (T @ u_el)
        sec = m.section
        c = sec.outer_diameter / 2.0
        A, I, J = sec.area, sec.bending_inertia, sec.torsion_constant
        worst = 0.0
        for end in (0, 6):
            N = f_loc[end]
            Tq = f_loc[end + 3]
            M = math.hypot(f_loc[end + 4], f_loc[end + 5])
            sigma = abs(N) / A + M * c / I
            tau = abs(Tq) * c / J
            worst = max(worst, math.sqrt(sigma**2 + 3.0 * tau**2))
        out[i] = worst
    return out


def min_safety_factor(mesh: DiscretizedFrame, u: np.ndarray) -> float:
    sf = SAFETY_FACTOR_CAP
    stresses = element_stresses(mesh, u)
    for (_, _, m), s in zip(mesh.elements, stresses):
        if s > 0:
            sf = min(sf, m.material.yield_strength / s)
    return min(sf, SAFETY_FACTOR_CAP)


def simulate(
    d: DesignVector,
    loads: LoadCase = LoadCase(),
    bc: BoundarySpec = BoundarySpec(),
    max_element_length_in: float = DEFAULT_ELEMENT_CAP_IN,
    limits: FeasibilityLimits = FeasibilityLimits(),
    design_id: int | None = None,
) -> PerformanceRecord:
    """Build, mesh and solve one design; returns the 8 performance values
    (theta left unset for the stability module)."""
    try:
        frame = build_frame(d, limits)
        mesh = discretize(frame, max_element_length_in)
        u = assemble_and_solve(mesh, loads, bc)
    except Exception as exc:
        raise SimulationFailure(str(exc), design_id=design_id) from exc

    left, right = mesh.sensors["handle_tip"]
    u_l = u[6 * left : 6 * left + 3]
    u_r = u[6 * right : 6 * right + 3]
    dx = (u_l[0] + u_r[0]) / 2.0
    # lateral displacement reported outward-positive (right handle is +Y)
    dy = (u_r[1] - u_l[1]) / 2.0
    dz = (u_l[2] + u_r[2]) / 2.0

    fl, fr = mesh.sensors["front_tip"]
    leg = (
        np.linalg.norm(u[6 * fl : 6 * fl + 3]) + np.linalg.norm(u[6 * fr : 6 * fr + 3])
    ) / 2.0

    mass_kg, com = mass_properties(frame)
    return PerformanceRecord(
        mass_lbs=kg_to_lb(mass_kg),
        handle_dx_in=m_to_in(dx),
        handle_dy_in=m_to_in(dy),
        handle_dz_in=m_to_in(dz),
        leg_displ_in=m_to_in(leg),
        min_safety_factor=min_safety_factor(mesh, u),
        com_longitudinal_in=m_to_in(com[0]),
        com_vertical_in=m_to_in(com[2]),
    )

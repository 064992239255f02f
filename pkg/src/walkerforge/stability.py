"""Static tipping-angle index and the dynamic-stability proxy (COM height).

The tipping angle is the angle from vertical at which an outward force F on
the handles starts to tip the frame about one side of its base:

    phi   = arcsin( m*g*L1 / (2*F*sqrt(H^2 + ((L1-L2)/2)^2)) )
    theta = phi + arctan( (L1-L2) / (2*H) )

with L1 the lateral leg spacing at the base, L2 the handle spacing and H the
handle height. When the arcsin argument exceeds 1 no angle tips the walker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import FrameGraph, mass_properties
from .errors import IncompleteRecord, InvalidStabilityInput
from .units import G_ACCEL, in_to_m, lb_to_kg, lbf_to_n, m_to_in

#: Default hypothetical tipping force (lbf); large enough that theta is
#: defined for almost all designs yet still discriminates between them.
DEFAULT_TIP_FORCE_LBF = 400.0

TIP_STATUS_TIPS = "tips"
TIP_STATUS_NO_TIP = "no_tip"


@dataclass(frozen=True)
class StabilityInput:
    """SI inputs for the tipping-angle formula."""

    mass: float  # kg
    leg_width: float  # m, L1
    handle_distance: float  # m, L2
    height: float  # m, H
    tip_force: float  # N, F
    g: float = G_ACCEL


@dataclass(frozen=True)
class StabilityResult:
    phi: float | None  # rad; None when no angle tips the walker
    theta: float | None  # rad; None <=> no_tip
    status: str

    @property
    def theta_deg(self) -> float | None:
        return None if self.theta is None else math.degrees(self.theta)


def tipping_angle(s: StabilityInput) -> StabilityResult:
    """Evaluate the tipping-angle formula; returns no_tip when the arcsin
    argument is out of domain."""
    if s.height <= 0 or s.tip_force <= 0:
        raise InvalidStabilityInput(
            f"height and tip force must be positive, got H={s.height}, F={s.tip_force}"
        )
    if s.mass <= 0 or s.leg_width <= 0 or s.handle_distance <= 0:
        raise InvalidStabilityInput("mass and lateral dimensions must be positive")

    half_splay = (s.leg_width - s.handle_distance) / 2.0
    arg = (s.mass * s.g * s.leg_width) / (
        2.0 * s.tip_force * math.sqrt(s.height**2 + half_splay**2)
    )
    if abs(arg) > 1.0:
        return StabilityResult(phi=None, theta=None, status=TIP_STATUS_NO_TIP)
    phi = math.asin(arg)
    theta = phi + math.atan(half_splay / s.height)
    return StabilityResult(phi=phi, theta=theta, status=TIP_STATUS_TIPS)


def tipping_angle_imperial(
    mass_lbs: float,
    leg_width_in: float,
    handle_distance_in: float,
    height_in: float,
    force_lbf: float = DEFAULT_TIP_FORCE_LBF,
) -> StabilityResult:
    """Convenience wrapper taking imperial-unit quantities."""
    return tipping_angle(
        StabilityInput(
            mass=lb_to_kg(mass_lbs),
            leg_width=in_to_m(leg_width_in),
            handle_distance=in_to_m(handle_distance_in),
            height=in_to_m(height_in),
            tip_force=lbf_to_n(force_lbf),
        )
    )


def dynamic_stability(f: FrameGraph) -> float:
    """Elevation of the center of mass above the base plane (inches);
    lower values restore better after a tipping disturbance."""
    _, com = mass_properties(f)
    return m_to_in(com[2])


def annotate_records(records, designs, force_lbf: float = DEFAULT_TIP_FORCE_LBF):
    """Fill theta (deg) and tip status for parallel lists of performance
    records and designs. Records must carry a simulated mass in lbs."""
    out = []
    for rec, d in zip(records, designs):
        if rec.mass_lbs is None:
            raise IncompleteRecord("record is missing the simulated mass")
        res = tipping_angle_imperial(
            rec.mass_lbs, d.base_width, d.handle_distance, d.overall_height, force_lbf
        )
        out.append(rec.with_stability(res.theta_deg, res.status))
    return out

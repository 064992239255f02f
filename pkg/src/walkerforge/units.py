"""Unit conversions between the imperial I/O boundary and internal SI.

All geometry, loads and material math inside the package is SI; design
vectors, config files and CSV output use inches / lbf / lbs / degrees.
"""

M_PER_IN = 0.0254
N_PER_LBF = 4.4482216152605
KG_PER_LB = 0.45359237
G_ACCEL = 9.80665  # m/s^2


def in_to_m(x):
    return x * M_PER_IN


def m_to_in(x):
    return x / M_PER_IN


def lbf_to_n(x):
    return x * N_PER_LBF


def n_to_lbf(x):
    return x / N_PER_LBF


def lb_to_kg(x):
    return x * KG_PER_LB


def kg_to_lb(x):
    return x / KG_PER_LB

"""Exact experiments on random walks in the group of invertible upper-triangular
rational matrices: drifts, Bruhat cells, boundary limits, adelic gauges, entropy."""

from .boundary import BoundaryPoint, assemble_boundary_point, iterate_projective, snl_series
from .bruhat import CellDescriptor, WeylPerm, boundary_action, cell_of, factorize_u, weyl_from_drifts
from .entropy import GroupDistribution, convolve, derriennic_check, entropy, entropy_sequence
from .gauge import (
    AdelePoint,
    HPoint,
    adelic_length,
    enumerate_gauge,
    estimgauge_statistic,
    height,
    height_plus,
    pi_np,
    qn_approximant,
    qni_statistic,
)
from .rational import INF, LogCombination, Place, norm_log, parse_rational, valuation
from .triangular import SubspaceBasis, TriMatrix, inverse, multiply, split_ud, wedge_rep
from .walk import StepMeasure, Trajectory, drift_profile, moment_value, relevant_places

__version__ = "0.1.0"

"""Numeric configuration.  Every default lives in this one table.

==================  =========  ==================================================
field               default    meaning
==================  =========  ==================================================
grid_size           1024       sample points on the working interval
scan_size           1024       sample points when locating the working interval
margin_rel          1e-8       |f_n| floor = margin_rel * (1 + max sampled |f_n|)
quad_tol            1e-10      adaptive Simpson tolerance per panel
quad_max_depth      40         adaptive Simpson refinement depth limit
offset_span_factor  10.0       offset search range = +-factor * table span
offset_seeds        512        coarse seeds across the offset range
tol_const           1e-6       spread tolerance for the candidate constant
residual_tol        1e-6       pass factor: residual <= tol * (1 + max |f_k|)
merge_tol           1e-6       offset merge tolerance, times table span
blowup_limit        1e12       |u| or |u'| bound before integration aborts
boundary_rel        1e-9       relative margin kept from the interval ends
==================  =========  ==================================================
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple


@dataclass(frozen=True)
class ClassifyConfig:
    grid_size: int = 1024
    scan_size: int = 1024
    margin_rel: float = 1e-8
    quad_tol: float = 1e-10
    quad_max_depth: int = 40
    offset_span_factor: float = 10.0
    offset_seeds: int = 512
    tol_const: float = 1e-6
    residual_tol: float = 1e-6
    merge_tol: float = 1e-6
    offset_range: Optional[Tuple[float, float]] = None  # overrides the factor


@dataclass(frozen=True)
class JetBox:
    """Sampling box on (t, u, u') for prolongation residuals.

    u covers the inner ``u_margin`` fraction of the working interval; u'
    is sampled at Chebyshev points so every power up to the polynomial
    degree is well separated.
    """

    t_lo: float = 0.0
    t_hi: float = 1.0
    n_t: int = 5
    u_margin: float = 0.1
    n_u: int = 9
    udot_lo: float = -2.0
    udot_hi: float = 2.0
    n_udot: int = 9


DEFAULT_CONFIG = ClassifyConfig()
DEFAULT_JET_BOX = JetBox()

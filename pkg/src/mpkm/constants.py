"""The coupled constant table driving every pipeline threshold.

All thresholds used by the facility-location steps are fixed closed-form
functions of a single parameter gamma >= 1, the distance-approximation
factor certified by the metric graph. The closed forms are only *proven*
to interact correctly for gamma >= 5 ("theory mode"); smaller gamma keeps
the same formulas but makes desk-scale instances non-degenerate
("practical mode", theory_valid=False).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InputError


@dataclass(frozen=True)
class ConstantTable:
    gamma: float
    c_r: float        # radius-estimate slack (step I)
    c_d_minus: float  # dual lower quantization (step II)
    c_d_plus: float   # dual upper quantization (step II)
    gamma1: float     # problematic-client must-flag radius (step III)
    gamma2: float     # problematic-client may-flag radius (step III)
    q: float          # problematic-client dual gap (step III)
    c_a: float        # dual amplification for non-problematic clients
    kappa: float      # approximate-payment slack (step IV)
    eta: float        # paid-facility search budget (Lemma on paid facility)
    zeta: float       # radius ratio of conflicting facilities
    rho: float        # dual-to-radius bound for contributors
    c_h1: float       # dependency-edge radius ratio
    c_h2: float       # dependency-edge distance factor
    theory_valid: bool

    def as_dict(self):
        return {
            "gamma": self.gamma, "c_r": self.c_r, "c_d_minus": self.c_d_minus,
            "c_d_plus": self.c_d_plus, "gamma1": self.gamma1,
            "gamma2": self.gamma2, "q": self.q, "c_a": self.c_a,
            "kappa": self.kappa, "eta": self.eta, "zeta": self.zeta,
            "rho": self.rho, "c_h1": self.c_h1, "c_h2": self.c_h2,
            "theory_valid": self.theory_valid,
        }


def make_constants(gamma: float) -> ConstantTable:
    """Build the constant table for a given approximation factor gamma.

    gamma >= 5 yields the proof-regime table (theory_valid=True); values in
    [1, 5) are permitted for non-degenerate desk-scale runs but are outside
    the proof regime.
    """
    if not gamma >= 1:
        raise InputError(f"gamma must be >= 1, got {gamma}")
    g = float(gamma)
    c_r = 9.0 * g
    c_d_minus = 2.0 * g**2
    c_d_plus = 8.0 * g**4
    q = 8.0 * g**4
    c_a = 8.0 * g**8
    kappa = g**2
    zeta = 1.0 + 16.0 * math.sqrt(2.0) * g**7
    rho = c_a * c_d_plus * q / c_d_minus**2   # = 128 * g**12
    # Lemma-level derivation (two dependency hops of per-edge ratio
    # 2*c_r^2*zeta) rather than the weaker one-hop form.
    c_h1 = 4.0 * c_r**4 * zeta**2
    c_h2 = 12.0 * math.sqrt(kappa * rho) * c_r**3 * zeta**2
    return ConstantTable(
        gamma=g, c_r=c_r, c_d_minus=c_d_minus, c_d_plus=c_d_plus,
        gamma1=4.0 * g**4, gamma2=9.0 * g**4, q=q, c_a=c_a, kappa=kappa,
        eta=8000.0 * g**12, zeta=zeta, rho=rho, c_h1=c_h1, c_h2=c_h2,
        theory_valid=g >= 5.0,
    )


THEORY_GAMMA = 5.0
PRACTICAL_GAMMA = 1.0

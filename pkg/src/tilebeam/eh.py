"""Non-linear RF energy harvesting model and its constraint transform.

The harvester is modelled by a saturating logistic curve with a
zero-input/zero-output correction.  The minimum-harvested-energy
constraint is converted into an equivalent linear threshold on the
received RF power, which is what the convex subproblems consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class EhParams:
    """Rectifier circuit parameters, all in watts except ``rho`` (1/W).

    a     saturation level of the harvested power
    c     input power at the sigmoid midpoint
    rho   sigmoid steepness
    e_req minimum harvested power demanded from the circuit
    """

    a: float = 0.02
    c: float = 0.003
    rho: float = 6400.0
    e_req: float = 1e-4

    def __post_init__(self):
        if self.a <= 0.0:
            raise ValueError(f"saturation power a must be positive, got {self.a}")
        if self.rho <= 0.0:
            raise ValueError(f"sigmoid slope rho must be positive, got {self.rho}")
        if self.c < 0.0:
            raise ValueError(f"sigmoid center c must be nonnegative, got {self.c}")
        if not 0.0 <= self.e_req:
            raise ValueError(f"required energy must be nonnegative, got {self.e_req}")

    def scaled(self, factor: float) -> "EhParams":
        """Same circuit shape operated at a different power scale."""
        return EhParams(
            a=self.a * factor,
            c=self.c * factor,
            rho=self.rho / factor,
            e_req=self.e_req * factor,
        )


def _sigmoid(x: float) -> float:
    # numerically safe logistic; exact symmetry is not needed, but the
    # x <= 0 branch must be used consistently so that zero input gives
    # exactly zero output in harvested_power.
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def harvested_power(p_rf: float, params: EhParams) -> float:
    """Harvested power (W) for a given received RF power (W).

    Zero input maps to exactly zero output and the result saturates
    strictly below ``params.a``.
    """
    if p_rf < 0.0:
        raise ValueError(f"RF power must be nonnegative, got {p_rf}")
    xi = _sigmoid(-params.rho * params.c)
    lam = _sigmoid(params.rho * (p_rf - params.c))
    return params.a * (lam - xi) / (1.0 - xi)


def c_req(params: EhParams) -> float:
    """Threshold constant of the transformed harvesting constraint.

    The requirement harvested_power(p) >= e_req is equivalent to
    exp(-rho * p) <= c_req(params); the constant is positive whenever
    the requirement is attainable (e_req < a).
    """
    if params.e_req >= params.a:
        raise ValueError(
            f"required energy {params.e_req} W is not attainable, "
            f"saturation is {params.a} W"
        )
    xi = _sigmoid(-params.rho * params.c)
    ratio = params.a / (params.e_req * (1.0 - xi) + params.a * xi)
    return (ratio - 1.0) * math.exp(-params.rho * params.c)


def min_rf_power(params: EhParams) -> float:
    """Smallest received RF power (W) meeting the harvesting requirement."""
    cr = c_req(params)
    if cr >= 1.0:
        return 0.0
    return -math.log(cr) / params.rho


def linear_harvested_power(p_rf: float, efficiency: float = 0.5) -> float:
    """Idealized linear harvester: a fixed fraction of the RF power."""
    if not 0.0 < efficiency <= 1.0:
        raise ValueError(f"efficiency must be in (0, 1], got {efficiency}")
    if p_rf < 0.0:
        raise ValueError(f"RF power must be nonnegative, got {p_rf}")
    return efficiency * p_rf

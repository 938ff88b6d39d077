"""Saddle point of the dual integral and the associated masses."""
from __future__ import annotations

import math
from dataclasses import dataclass


class DomainError(ValueError):
    """Energy outside the open band |E| < 2."""


@dataclass(frozen=True)
class SaddleData:
    E: float
    calE: complex          # E/2 - i sqrt(1 - E^2/4)
    calE_r: float
    calE_i: float          # positive: calE = calE_r - i calE_i
    a_plus: complex
    a_minus: complex
    b_plus: complex
    b_minus: complex
    mr2: float
    mi2: float
    sigma: float

    @property
    def mr(self) -> float:
        return math.sqrt(self.mr2)

    @property
    def kappa(self) -> float:
        """Imaginary mass sigma_E * m_i^2, so that B^-1 = C^-1 + i kappa."""
        return self.sigma * self.mi2

    @property
    def complex_mass(self) -> complex:
        return 1.0 - self.calE ** 2


def saddle_data(E: float) -> SaddleData:
    E = float(E)
    if not abs(E) < 2:
        raise DomainError(f"|E| must be < 2, got {E}")
    root = math.sqrt(1.0 - E * E / 4.0)
    er, ei = E / 2.0, root
    return SaddleData(
        E=E,
        calE=complex(er, -ei),
        calE_r=er,
        calE_i=ei,
        a_plus=complex(er, -ei),
        a_minus=complex(er, ei),
        b_plus=complex(-ei, -er),
        b_minus=complex(ei, -er),
        mr2=2.0 * (1.0 - E * E / 4.0),
        mi2=abs(E) * root,
        sigma=float((E > 0) - (E < 0)),
    )

"""Closed-form kernels, bounds, and the ballistic scaling window.

Everything here is an exact formula or a certified quadrature; Monte Carlo
enters only through drift_kernel_mc, which exists to cross-check the closed
form. Bound evaluators take the window constants c1, c2 explicitly, with
defaults c1 = 1/3 and c2 = 7*sqrt(beta).

Several bounds come in a literal and a "doubled" variant. The literal chain
bounds the double integral of a function of t - s by T times its single
integral; writing the double integral as the exact convolution
2*int_0^T (T-u) f(u) du shows that chain to be off by a factor of two, which
propagates to the partition-function bound. Both variants are exposed so the
discrepancy can be audited numerically instead of inherited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import erf

from .core import C1_DEFAULT, DomainError, Estimate, SeedSpec, default_c2, event_thresholds

E_SQUARED = math.e**2
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
KERNEL_CROSSOVER = math.pi / 2.0
SMALL_BETA_COEFF = (8.0 / 3.0) * SQRT_2_OVER_PI

__all__ = [
    "DriftedEnergy",
    "E_SQUARED",
    "KERNEL_CROSSOVER",
    "SMALL_BETA_COEFF",
    "ScalingWindow",
    "drift_kernel",
    "drift_kernel_bound",
    "drift_kernel_mc",
    "drifted_energy",
    "drifted_energy_closed_bound",
    "drifted_energy_log_bound",
    "large_radius_prob_bound",
    "partition_lower_bound",
    "partition_small_beta",
    "scaling_window",
    "small_radius_weight_bound",
    "tilted_large_radius_bound",
    "tilted_small_radius_bound",
]


def _require_positive(u, name: str = "u"):
    if np.any(np.asarray(u) <= 0.0):
        raise DomainError(f"{name} must be > 0")


def _exp(x: float) -> float:
    """exp that saturates to inf instead of raising; large positive exponents
    make a bound vacuous, not invalid."""
    if x > 709.0:
        return math.inf
    return math.exp(x)


def drift_kernel(u):
    """E[1/|Z_u|] for Z_u ~ Gaussian(u e1, u I3), in closed form erf(sqrt(u/2))/u.

    Scalar in, scalar out; arrays broadcast elementwise.
    """
    _require_positive(u)
    u = np.asarray(u, dtype=np.float64)
    value = erf(np.sqrt(u / 2.0)) / u
    return float(value) if value.ndim == 0 else value


def drift_kernel_bound(u):
    """Upper bound min(sqrt(2/(pi u)), 1/u); branches cross at u = pi/2."""
    _require_positive(u)
    u = np.asarray(u, dtype=np.float64)
    value = np.minimum(np.sqrt(2.0 / (np.pi * u)), 1.0 / u)
    return float(value) if value.ndim == 0 else value


def drift_kernel_mc(u: float, m: int, seed: SeedSpec) -> Estimate:
    """Monte Carlo mean of 1/|Z| over m draws Z ~ Gaussian(u e1, u I3)."""
    _require_positive(u)
    if m < 100:
        raise DomainError(f"need m >= 100 draws, got {m}")
    rng = seed.generator()
    z = rng.standard_normal((m, 3)) * math.sqrt(u)
    z[:, 0] += u
    inv = 1.0 / np.sqrt(np.einsum("ij,ij->i", z, z))
    return Estimate(
        value=float(inv.mean()),
        std_error=float(inv.std(ddof=1) / math.sqrt(m)),
        n_effective=float(m),
        method="naive",
    )


@dataclass(frozen=True)
class DriftedEnergy:
    """Mean Coulomb energy under the unit-drift path law.

    exact: the convolution identity 2*int_0^T (T-u) k(u) du by quadrature.
    time_integral_form: T*int_0^T k(u) du, the single-integral majorant whose
    doubled value bounds `exact`.
    """

    horizon_T: float
    exact: float
    time_integral_form: float


def _quad_sqrt_substituted(f, T: float) -> float:
    # substitute u = v^2 so the 1/sqrt(u) endpoint of the kernel is smooth
    value, err = quad(
        lambda v: 2.0 * v * f(v * v),
        0.0,
        math.sqrt(T),
        epsabs=1e-10,
        epsrel=1e-8,
        limit=200,
    )
    return value


def drifted_energy(T: float) -> DriftedEnergy:
    """Quadrature of the drifted-kernel energy integral, exact and loose forms."""
    _require_positive(T, "T")

    def kernel(u):
        return erf(math.sqrt(u / 2.0)) / u

    exact = _quad_sqrt_substituted(lambda u: 2.0 * (T - u) * kernel(u), T)
    loose = T * _quad_sqrt_substituted(kernel, T)
    return DriftedEnergy(horizon_T=T, exact=exact, time_integral_form=loose)


def drifted_energy_closed_bound(T: float, doubled: bool = False) -> float:
    """Closed bound 2T*sqrt(2/pi) + T ln T on the time-integral form (T >= e^2,
    boundary inclusive); doubled=True gives the factor-two-corrected bound on
    the exact integral."""
    if not (T >= E_SQUARED):
        raise DomainError(f"closed bound needs T >= e^2, got {T}")
    base = 2.0 * T * SQRT_2_OVER_PI + T * math.log(T)
    return 2.0 * base if doubled else base


def drifted_energy_log_bound(T: float) -> float:
    """Final literal bound 2 T ln T on the time-integral form, for T >= e^2."""
    if not (T >= E_SQUARED):
        raise DomainError(f"log bound needs T >= e^2, got {T}")
    return 2.0 * T * math.log(T)


def small_radius_weight_bound(T: float, beta: float, c1: float = C1_DEFAULT) -> float:
    """Upper bound exp(-beta T ln T / c1) on the Gibbs-weighted small-radius event."""
    if T <= 1.0:
        raise DomainError(f"bound needs T > 1, got {T}")
    if not (beta > 0.0) or not (c1 > 0.0):
        raise DomainError(f"bound needs beta > 0 and c1 > 0, got {beta}, {c1}")
    return math.exp(-beta * T * math.log(T) / c1)


def large_radius_prob_bound(T: float, c2: float) -> float:
    """Reflection-principle bound (24/c2) exp(-c2^2 T ln T / 24), for T > e."""
    if T <= math.e:
        raise DomainError(f"bound needs T > e, got {T}")
    if not (c2 > 0.0):
        raise DomainError(f"bound needs c2 > 0, got {c2}")
    return (24.0 / c2) * math.exp(-c2 * c2 * T * math.log(T) / 24.0)


def partition_lower_bound(T: float, beta: float, doubled: bool = False) -> float:
    """Lower bound exp(-2 beta T ln T - T/2) on the partition function (T > e^2).

    doubled=True applies the audit factor two to the energy term, giving
    exp(-4 beta T ln T - T/2).
    """
    if T <= E_SQUARED:
        raise DomainError(f"bound needs T > e^2, got {T}")
    if not (beta > 0.0):
        raise DomainError(f"bound needs beta > 0, got {beta}")
    factor = 4.0 if doubled else 2.0
    return math.exp(-factor * beta * T * math.log(T) - T / 2.0)


def tilted_small_radius_bound(T: float, beta: float, c1: float = C1_DEFAULT) -> float:
    """Upper bound exp((2 - 1/c1) beta T ln T) on the tilted small-radius event."""
    if T <= E_SQUARED:
        raise DomainError(f"bound needs T > e^2, got {T}")
    if not (beta > 0.0) or not (c1 > 0.0):
        raise DomainError(f"bound needs beta > 0 and c1 > 0, got {beta}, {c1}")
    return _exp((2.0 - 1.0 / c1) * beta * T * math.log(T))


def tilted_large_radius_bound(T: float, beta: float, c2: float | None = None) -> float:
    """Upper bound (24/c2) exp(2 beta T ln T + T/2 - c2^2 T ln T / 24)."""
    if T <= E_SQUARED:
        raise DomainError(f"bound needs T > e^2, got {T}")
    if not (beta > 0.0):
        raise DomainError(f"bound needs beta > 0, got {beta}")
    if c2 is None:
        c2 = default_c2(beta)
    if not (c2 > 0.0):
        raise DomainError(f"bound needs c2 > 0, got {c2}")
    tlt = T * math.log(T)
    return (24.0 / c2) * _exp(2.0 * beta * tlt + T / 2.0 - c2 * c2 * tlt / 24.0)


def partition_small_beta(T: float, beta: float) -> float:
    """First order in beta: 1 - beta * (8/3) sqrt(2/pi) T^(3/2)."""
    _require_positive(T, "T")
    if beta < 0.0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    return 1.0 - beta * SMALL_BETA_COEFF * T**1.5


@dataclass(frozen=True)
class ScalingWindow:
    """The radius window [c1 T/ln T, c2 T sqrt(ln T)] probed by the scaling run.

    valid marks T > e^2, the regime where all the closed-form estimates that
    drive the window to probability one hold simultaneously.
    """

    T: float
    beta: float
    c1: float
    c2: float
    low: float
    high: float
    valid: bool

    def contains(self, radius):
        return (radius >= self.low) & (radius <= self.high)

    def fraction_inside(self, radii: np.ndarray) -> float:
        return float(np.mean(self.contains(np.asarray(radii))))


def scaling_window(
    T: float, beta: float, c1: float = C1_DEFAULT, c2: float | None = None
) -> ScalingWindow:
    """Window with defaults c1 = 1/3, c2 = 7 sqrt(beta); needs T > 1, beta > 0."""
    if not (beta > 0.0):
        raise DomainError(f"window needs beta > 0, got {beta}")
    if c2 is None:
        c2 = default_c2(beta)
    low, high = event_thresholds(T, c1, c2)
    return ScalingWindow(
        T=T, beta=beta, c1=c1, c2=c2, low=low, high=high, valid=T > E_SQUARED
    )

"""Odd theta function, Eisenstein and Kronecker functions on C/(Z + tau Z).

Every function accepts complex scalars or numpy arrays (broadcast together)
and returns the same shape.  Derivatives are analytic: either closed forms
built from theta derivatives or term-wise differentiation of the theta
series.  Arguments are reduced into the fundamental parallelogram before
the series is summed and the quasi-periodicity factor is applied exactly.
"""

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import PoleProximity, ZeroArgument

POLE_EPS = 1e-6
MIN_TERMS = 20
REL_CUTOFF = 1e-18
MAX_DZ_ORDER = 4

TWO_PI_I = 2j * math.pi


def check_tau(tau):
    """Return ``tau`` as a complex number, rejecting Im(tau) <= 0."""
    tau = complex(tau)
    if not tau.imag > 0:
        raise ValueError(f"modulus must have Im(tau) > 0, got {tau!r}")
    return tau


@dataclass(frozen=True)
class Modulus:
    tau: complex

    def __post_init__(self):
        object.__setattr__(self, "tau", check_tau(self.tau))


@dataclass(frozen=True)
class LatticeFraction:
    """The point omega = (a1 + a2 tau)/N attached to a mode (a1, a2)."""

    alpha: tuple
    n: int
    tau: complex

    @property
    def omega(self):
        a1, a2 = self.alpha
        return (a1 + a2 * complex(self.tau)) / self.n

    @property
    def dtau(self):
        return self.alpha[1] / self.n


def omega(alpha, n, tau):
    a1, a2 = alpha
    return (a1 + a2 * tau) / n


def _as_array(z):
    return np.asarray(z, dtype=complex)


def _unwrap(x):
    return x[()] if isinstance(x, np.ndarray) and x.ndim == 0 else x


def _reduce(z, tau):
    """Split z = z0 + p + q*tau with z0 in the centred fundamental cell."""
    q = np.round(z.imag / tau.imag)
    w = z - q * tau
    p = np.round(w.real)
    return w - p, p, q


def _lattice_distance(z0, tau):
    # z0 is already reduced, so the nearest lattice point is one of nine
    best = np.abs(z0)
    for j in (-1, 0, 1):
        for k in (-1, 0, 1):
            if j or k:
                best = np.minimum(best, np.abs(z0 - j - k * tau))
    return best


def lattice_distance(z, tau):
    """Distance from ``z`` to the nearest point of Z + tau Z."""
    tau = check_tau(tau)
    z0, _, _ = _reduce(_as_array(z), tau)
    return _unwrap(_lattice_distance(z0, tau))


def _guard(z, tau, name):
    z = _as_array(z)
    z0, _, _ = _reduce(z, tau)
    if np.any(_lattice_distance(z0, tau) < POLE_EPS):
        raise PoleProximity(f"{name} lies within {POLE_EPS:g} of the lattice", name)


def _truncation(z0, tau, dz_order, dtau_order):
    """Smallest K >= MIN_TERMS whose boundary terms fall below the cutoff."""
    y = np.max(np.abs(z0.imag)) if z0.size else 0.0
    k = MIN_TERMS
    while True:
        half = np.arange(-k, k + 1) + 0.5
        log_mag = -math.pi * tau.imag * half**2 + 2 * math.pi * y * np.abs(half)
        weight = dz_order * np.log(2 * math.pi * np.abs(half))
        if dtau_order:
            weight = weight + np.log(math.pi * half**2)
        log_mag = log_mag + weight
        edge = max(log_mag[0], log_mag[-1])
        if edge < log_mag.max() + math.log(REL_CUTOFF):
            return k
        k += 8


def _series(z0, tau, max_dz, with_dtau):
    """Term-wise theta derivatives at reduced points.

    Returns ``(dz, dzdtau)`` where ``dz[j]`` is the j-th z-derivative and
    ``dzdtau[j]`` its tau-derivative (``None`` unless requested).
    """
    k = _truncation(z0, tau, max_dz, 1 if with_dtau else 0)
    half = np.arange(-k, k + 1) + 0.5
    phase = np.exp(
        1j * math.pi * tau * half**2
        + 2j * math.pi * (z0[..., None] + 0.5) * half
    )
    factor = 2j * math.pi * half
    dz = []
    cur = phase
    for _ in range(max_dz + 1):
        dz.append(cur.sum(axis=-1))
        cur = cur * factor
    dzdtau = None
    if with_dtau:
        tau_factor = 1j * math.pi * half**2
        dzdtau = []
        cur = phase * tau_factor
        for _ in range(max_dz + 1):
            dzdtau.append(cur.sum(axis=-1))
            cur = cur * factor
    return dz, dzdtau


def theta(z, tau, dz_order=0, dtau_order=0):
    """Odd theta function and its derivatives.

    ``dz_order`` up to 4 and ``dtau_order`` 0 or 1.  Satisfies
    theta(z + 1) = -theta(z) and theta(z + tau) = -exp(-pi i tau - 2 pi i z) theta(z).
    """
    tau = check_tau(tau)
    if not 0 <= dz_order <= MAX_DZ_ORDER:
        raise ValueError(f"dz_order must be in [0, {MAX_DZ_ORDER}], got {dz_order}")
    if dtau_order not in (0, 1):
        raise ValueError(f"dtau_order must be 0 or 1, got {dtau_order}")
    z = _as_array(z)
    z0, p, q = _reduce(z, tau)
    dz, dzdtau = _series(z0, tau, dz_order + dtau_order, bool(dtau_order))
    sign = np.where((p + q) % 2 == 0, 1.0, -1.0)
    shift = sign * np.exp(-1j * math.pi * q * q * tau - TWO_PI_I * q * z0)
    out = np.zeros_like(z)
    for j in range(dz_order + 1):
        if dtau_order:
            piece = (
                1j * math.pi * q * q * dz[j] - q * dz[j + 1] + dzdtau[j]
            )
        else:
            piece = dz[j]
        out = out + math.comb(dz_order, j) * (-TWO_PI_I * q) ** (dz_order - j) * piece
    return _unwrap(shift * out)


@functools.lru_cache(maxsize=256)
def _theta_constants(tau):
    z = np.zeros(1, dtype=complex)
    dz, _ = _series(z, tau, 3, False)
    return complex(dz[1][0]), complex(dz[3][0])


def theta_prime0(tau):
    """theta'(0 | tau)."""
    return _theta_constants(check_tau(tau))[0]


def eta1_const(tau):
    """The constant theta'''(0)/theta'(0) linking E1, E2 to zeta, wp."""
    d1, d3 = _theta_constants(check_tau(tau))
    return d3 / d1


def _log_derivatives(z, tau, name="z"):
    tau = check_tau(tau)
    z = _as_array(z)
    z0, _, q = _reduce(z, tau)
    if np.any(_lattice_distance(z0, tau) < POLE_EPS):
        raise PoleProximity(f"{name} lies within {POLE_EPS:g} of the lattice", name)
    dz, _ = _series(z0, tau, 3, False)
    t0 = dz[0]
    return dz[1] / t0, dz[2] / t0, dz[3] / t0, q, tau


def e1(z, tau):
    """First Eisenstein function theta'(z)/theta(z)."""
    l1, _, _, q, _ = _log_derivatives(z, tau)
    return _unwrap(l1 - TWO_PI_I * q)


def e2(z, tau):
    """Second Eisenstein function -dE1/dz."""
    l1, l2, _, _, _ = _log_derivatives(z, tau)
    return _unwrap(l1 * l1 - l2)


def wp(z, tau):
    """Weierstrass wp(z) = E2(z) + theta'''(0)/(3 theta'(0))."""
    return e2(z, tau) + eta1_const(tau) / 3.0


def wp_prime(z, tau):
    """Derivative of wp (equal to the derivative of E2)."""
    l1, l2, l3, _, _ = _log_derivatives(z, tau)
    return _unwrap(-(l3 - 3.0 * l2 * l1 + 2.0 * l1**3))


def e1_dtau(z, tau):
    """Partial tau-derivative of E1 at fixed z."""
    l1, l2, l3, q, tau = _log_derivatives(z, tau)
    e2_red = l1 * l1 - l2
    return _unwrap(q * e2_red + (l3 - l1 * l2) / (4j * math.pi))


def _kronecker_guard(z, u, tau):
    _guard(z, tau, "z")
    _guard(u, tau, "u")
    _guard(_as_array(z) + _as_array(u), tau, "z+u")


def kronecker(z, u, tau):
    """Kronecker function theta'(0) theta(z+u) / (theta(z) theta(u)).

    Symmetric in its arguments, simple pole with residue 1 at z = 0, and
    phi(z + tau, u) = exp(-2 pi i u) phi(z, u).
    """
    tau = check_tau(tau)
    z = _as_array(z)
    u = _as_array(u)
    _kronecker_guard(z, u, tau)
    val = theta_prime0(tau) * theta(z + u, tau) / (theta(z, tau) * theta(u, tau))
    return _unwrap(np.asarray(val))


def kronecker_du(z, u, tau):
    """f(z, u) = d phi / du = phi(z, u) (E1(z+u) - E1(u))."""
    z = _as_array(z)
    u = _as_array(u)
    return kronecker(z, u, tau) * (e1(z + u, tau) - e1(u, tau))


def kronecker_dz(z, u, tau):
    z = _as_array(z)
    u = _as_array(u)
    return kronecker(z, u, tau) * (e1(z + u, tau) - e1(z, tau))


def kronecker_dzdu(z, u, tau):
    """Mixed derivative d^2 phi / dz du."""
    z = _as_array(z)
    u = _as_array(u)
    phi = kronecker(z, u, tau)
    e_zu = e1(z + u, tau)
    return phi * ((e_zu - e1(u, tau)) * (e_zu - e1(z, tau)) - e2(z + u, tau))


def kronecker_dtau(z, u, tau):
    """Tau-derivative from the heat equation 2 pi i d_tau phi = d_z d_u phi."""
    return kronecker_dzdu(z, u, tau) / TWO_PI_I


def _shifted_u(hbar, alpha, n, tau):
    tau = check_tau(tau)
    u = omega(alpha, n, tau) + _as_array(hbar)
    if alpha[0] % n == 0 and alpha[1] % n == 0:
        if np.any(_as_array(lattice_distance(u, tau)) < POLE_EPS):
            raise ZeroArgument("zero mode needs a shift hbar off the lattice")
    return u, alpha[1] / n, tau


def _twist(z, c):
    return np.exp(TWO_PI_I * c * _as_array(z))


def phi_alpha(hbar, z, alpha, n, tau):
    """Twisted section exp(2 pi i z a2/N) phi(z, omega_alpha + hbar)."""
    u, c, tau = _shifted_u(hbar, alpha, n, tau)
    return _unwrap(_twist(z, c) * kronecker(z, u, tau))


def f_alpha(z, alpha, n, tau, hbar=0.0):
    """Twisted u-derivative exp(2 pi i z a2/N) f(z, omega_alpha + hbar)."""
    u, c, tau = _shifted_u(hbar, alpha, n, tau)
    return _unwrap(_twist(z, c) * kronecker_du(z, u, tau))


def phi_alpha_dz(hbar, z, alpha, n, tau):
    u, c, tau = _shifted_u(hbar, alpha, n, tau)
    z = _as_array(z)
    val = TWO_PI_I * c * kronecker(z, u, tau) + kronecker_dz(z, u, tau)
    return _unwrap(_twist(z, c) * val)


def f_alpha_dz(z, alpha, n, tau, hbar=0.0):
    u, c, tau = _shifted_u(hbar, alpha, n, tau)
    z = _as_array(z)
    val = TWO_PI_I * c * kronecker_du(z, u, tau) + kronecker_dzdu(z, u, tau)
    return _unwrap(_twist(z, c) * val)


def phi_alpha_dtau(hbar, z, alpha, n, tau):
    """Total tau-derivative at fixed z and hbar (omega_alpha moves with tau)."""
    u, c, tau = _shifted_u(hbar, alpha, n, tau)
    z = _as_array(z)
    val = c * kronecker_du(z, u, tau) + kronecker_dtau(z, u, tau)
    return _unwrap(_twist(z, c) * val)


def twisted(z, u, c, tau, kind="phi"):
    """exp(2 pi i c z) g(z, u) for the twisted family ``kind``.

    ``u`` and ``c`` may be arrays (one entry per mode).  ``kind`` selects
    g: ``phi``, ``f`` (u-derivative), ``phi_dz``, ``f_dz`` (z-derivatives of
    the twisted products) or ``phi_dtau`` (total tau-derivative when
    u = omega moves as c per unit tau).
    """
    tau = check_tau(tau)
    z = _as_array(z)
    c = np.asarray(c, dtype=float)
    twist = _twist(z, c)
    if kind == "phi":
        val = kronecker(z, u, tau)
    elif kind == "f":
        val = kronecker_du(z, u, tau)
    elif kind == "phi_dz":
        val = TWO_PI_I * c * kronecker(z, u, tau) + kronecker_dz(z, u, tau)
    elif kind == "f_dz":
        val = TWO_PI_I * c * kronecker_du(z, u, tau) + kronecker_dzdu(z, u, tau)
    elif kind == "phi_dtau":
        val = c * kronecker_du(z, u, tau) + kronecker_dtau(z, u, tau)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return _unwrap(twist * np.asarray(val))

"""Seeded identity suites for the elliptic kernel and the top models.

Each check draws its own sample points from a shared generator and returns
``(lhs, rhs)`` arrays; the verifier records the worst relative residual in
an ``IdentityReport`` like the R-matrix suite does.
"""

import math

import numpy as np

from . import flows as F
from . import kernel as K
from . import rmatrix as Rm
from . import tops as T
from .errors import PoleProximity, UnknownIdentity

MARGIN = 0.05
MAX_RETRIES = 10
LAURENT_RADIUS = 0.02


class PointSampler:
    """Seeded points u + v tau with u, v in (-1/2 + margin, 1/2 - margin)."""

    def __init__(self, rng, tau):
        self.rng = rng
        self.tau = tau

    def point(self, scale=1.0):
        u, v = self.rng.uniform(-0.5 + MARGIN, 0.5 - MARGIN, size=2)
        return complex((u + v * self.tau) * scale)

    def away(self, min_dist=0.05, scale=1.0):
        # keep quadrature circles and quasi-periodic shifts well clear of poles
        for _ in range(100):
            z = self.point(scale)
            if K.lattice_distance(z, self.tau) > min_dist:
                return z
        raise PoleProximity("could not draw a point away from the lattice", "z")


def _laurent(fn, center=0.0, orders=(-1, 0, 1)):
    theta = 2 * math.pi * np.arange(64) / 64
    vals = np.asarray(fn(center + LAURENT_RADIUS * np.exp(1j * theta)))
    return {k: np.mean(vals * np.exp(-1j * k * theta)) / LAURENT_RADIUS**k for k in orders}


# ------------------------------------------------------------------ kernel checks


def _fay(s):
    tau = s.tau
    z, w, q, u = (s.away() for _ in range(4))
    phi = lambda a, b: K.kronecker(a, b, tau)
    lhs = phi(z, q) * phi(w, u)
    rhs = phi(z - w, q) * phi(w, q + u) + phi(w - z, u) * phi(z, q + u)
    return np.array([lhs]), np.array([rhs])


def _degen_sum(s):
    tau = s.tau
    z, w, q = (s.away() for _ in range(3))
    lhs = K.kronecker(z, q, tau) * K.kronecker(w, q, tau)
    e = lambda x: K.e1(x, tau)
    rhs = K.kronecker(z + w, q, tau) * (e(z) + e(w) + e(q) - e(z + w + q))
    return np.array([lhs]), np.array([rhs])


def _degen_e2(s):
    tau = s.tau
    z, x, y = (s.away() for _ in range(3))
    lhs = K.kronecker(z, x, tau) * K.kronecker_du(z, y, tau) - K.kronecker(z, y, tau) * K.kronecker_du(z, x, tau)
    rhs = K.kronecker(z, x + y, tau) * (K.e2(x, tau) - K.e2(y, tau))
    return np.array([lhs]), np.array([rhs])


def _degen_wp(s):
    tau = s.tau
    h, z = s.away(), s.away()
    lhs = K.kronecker(h, z, tau) * K.kronecker(h, -z, tau)
    rhs = K.wp(h, tau) - K.wp(z, tau)
    return np.array([lhs]), np.array([rhs])


def _degen_wp_prime(s):
    tau = s.tau
    z, x = s.away(), s.away()
    lhs = K.kronecker(z, x, tau) * K.kronecker_du(z, -x, tau) - K.kronecker(z, -x, tau) * K.kronecker_du(z, x, tau)
    return np.array([lhs]), np.array([K.wp_prime(x, tau)])


def _theta_ratio_dtau(z, u, tau):
    """Tau-derivative of theta'(0) theta(z+u)/(theta(z) theta(u)) term by term."""
    parts = [(K.theta(0.0, tau, 1, 0), K.theta(0.0, tau, 1, 1), 1),
             (K.theta(z + u, tau), K.theta(z + u, tau, 0, 1), 1),
             (K.theta(z, tau), K.theta(z, tau, 0, 1), -1),
             (K.theta(u, tau), K.theta(u, tau, 0, 1), -1)]
    log_d = sum(sign * d / v for v, d, sign in parts)
    return K.kronecker(z, u, tau) * log_d


def _heat(s):
    tau = s.tau
    z, u = s.away(), s.away()
    lhs = K.kronecker_dtau(z, u, tau)
    rhs = _theta_ratio_dtau(z, u, tau)
    scale = abs(K.kronecker(z, u, tau))
    return np.array([lhs / scale]), np.array([rhs / scale])


def _quasi(s):
    tau = s.tau
    z, u = s.away(), s.away()
    n = 3
    alpha = tuple(s.rng.integers(0, n, size=2))
    if alpha == (0, 0):
        alpha = (1, 1)
    phi = K.kronecker(z, u, tau)
    pa = K.phi_alpha(0.0, z, alpha, n, tau)
    lhs = [K.kronecker(z + 1, u, tau), K.kronecker(z + tau, u, tau),
           K.phi_alpha(0.0, z + 1, alpha, n, tau), K.phi_alpha(0.0, z + tau, alpha, n, tau)]
    rhs = [phi, np.exp(-2j * math.pi * u) * phi,
           np.exp(2j * math.pi * alpha[1] / n) * pa, np.exp(-2j * math.pi * alpha[0] / n) * pa]
    return np.array(lhs), np.array(rhs)


def _local_expansion(s):
    """Laurent data at z = 0 of phi(., u), f(., u) and E1."""
    tau = s.tau
    u = s.away(0.1)
    c_phi = _laurent(lambda z: K.kronecker(z, u, tau))
    c_f = _laurent(lambda z: K.kronecker_du(z, u, tau), orders=(-1, 0))
    c_e = _laurent(lambda z: K.e1(z, tau))
    e1u = K.e1(u, tau)
    lhs = [c_phi[-1], c_phi[0], c_phi[1], c_f[-1], c_f[0], c_e[-1], c_e[0], c_e[1]]
    rhs = [1.0, e1u, 0.5 * (e1u**2 - K.wp(u, tau)), 0.0, -K.e2(u, tau),
           1.0, 0.0, K.eta1_const(tau) / 3.0]
    return np.array(lhs), np.array(rhs)


KERNEL_CATALOGUE = {
    "FAY": _fay,
    "DEGEN-SUM": _degen_sum,
    "DEGEN-E2": _degen_e2,
    "DEGEN-WP": _degen_wp,
    "DEGEN-WP-PRIME": _degen_wp_prime,
    "HEAT": _heat,
    "QUASI-PERIODIC": _quasi,
    "LOCAL-EXPANSION": _local_expansion,
}


# ------------------------------------------------------------------ model checks


def _model_state(kind, s, n, m, z2):
    seed = int(s.rng.integers(0, 2**31))
    return T.random_state(kind, n, m, tau=s.tau, seed=seed, z2=z2)


def _lax_check(kind, z2=False):
    def check(s, n, m):
        st = _model_state(kind, s, n, m, z2)
        z = s.away()
        return np.array([F.lax_residual(st, z)]), np.zeros(1)
    return check


def _monodromy_check(kind):
    def check(s, n, m):
        st = _model_state(kind, s, n, m, True)
        w = s.away()
        return np.array([F.monodromy_residual(st, T.rhs(st), w)]), np.zeros(1)
    return check


MODEL_CATALOGUE = {
    "LAX-NONREL": _lax_check("nonrel-top"),
    "LAX-REL": _lax_check("rel-top"),
    "LAX-MATRIX": _lax_check("matrix-top", z2=True),
    "LAX-MATRIX-REL": _lax_check("matrix-rel-top", z2=True),
    "LAX-GAUDIN": _lax_check("gaudin", z2=True),
    "LAX-GYROSTAT": _lax_check("gyrostat"),
    "MONODROMY-TOP": _monodromy_check("matrix-top"),
    "MONODROMY-PVI": _monodromy_check("pvi"),
    "MONODROMY-GAUDIN": _monodromy_check("gaudin"),
}

# model families defined only for N = 2
N2_ONLY = {"LAX-GYROSTAT", "MONODROMY-PVI"}
# families whose size is fixed by N alone
NO_M = {"LAX-NONREL", "LAX-REL", "LAX-GAUDIN", "MONODROMY-GAUDIN"}


def _run(check, args, sample_count, seed, tau):
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    sampler = PointSampler(rng, K.check_tau(tau))
    worst, retries = 0.0, 0
    for _ in range(sample_count):
        for attempt in range(MAX_RETRIES + 1):
            try:
                lhs, rhs = check(sampler, *args)
                break
            except PoleProximity:
                retries += 1
                if attempt == MAX_RETRIES:
                    raise
        worst = max(worst, Rm.rel_residual(lhs, rhs))
    return worst, retries


def verify_kernel_identity(identity_id, tau=1j, sample_count=100, tol=1e-10, seed=0):
    key = identity_id.upper()
    if key not in KERNEL_CATALOGUE:
        raise UnknownIdentity(identity_id)
    tau = K.check_tau(tau)
    worst, retries = _run(KERNEL_CATALOGUE[key], (), sample_count, seed, tau)
    return Rm.IdentityReport(key, 1, 1, sample_count, worst, tol, worst < tol, seed,
                             {"retries": retries, "tau": [tau.real, tau.imag]})


def verify_model_identity(identity_id, n=2, m=1, tau=1j, sample_count=20, tol=1e-9, seed=0):
    key = identity_id.upper()
    if key not in MODEL_CATALOGUE:
        raise UnknownIdentity(identity_id)
    if key in N2_ONLY:
        n = 2
    if key in NO_M:
        m = 1
    worst, retries = _run(MODEL_CATALOGUE[key], (n, m), sample_count, seed, tau)
    return Rm.IdentityReport(key, n, m, sample_count, worst, tol, worst < tol, seed,
                             {"retries": retries})


def model_negative_control(n=2, m=2, tau=1j, seed=0, z_count=20):
    """Lax residual of a matrix top whose zero mode is a random non-scalar matrix."""
    rng = np.random.default_rng(seed)
    st = T.random_state("matrix-rel-top", n, m, tau=tau, seed=seed, scalar_zero=False)
    sampler = PointSampler(rng, K.check_tau(tau))
    return F.lax_residual(st, [sampler.away() for _ in range(z_count)])

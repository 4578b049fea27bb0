"""Integrable top models: states, inertia, equations of motion, Lax pairs.

Mode coordinates are stored as arrays indexed by the canonical position
a1*N + a2 (see ``algebra.modes``).  Scalar models use shape (N^2,), matrix
models (N^2, M, M).  T_{-a} always denotes the inverse of T_a, so the Z2
constraint S_a = S_{-a} reads h S h^{-1} = S at the matrix level.
"""

import math
from dataclasses import dataclass, field, replace
from typing import ClassVar

import numpy as np

from . import kernel as K
from .algebra import (
    TensorOperator,
    build_basis,
    compose,
    decompose_matrix,
    involution_h,
    kappa,
    mode_position,
    modes,
    negation_sign,
    product_table,
)
from .errors import ConstraintViolation, SchemaError, ZeroMode
from .rmatrix import (
    R,
    R0,
    RMatrixSpec,
    classical_r,
    m_coeff,
    m_coeff_at_zero,
    r0,
)

TWO_PI_I = 2j * math.pi
CONSTRAINT_TOL = 1e-10

# Pauli basis for N = 2: sigma_a = sign * T_mode, with omega = tau/2, (1+tau)/2, 1/2
GYRO_MODES = ((0, 1), (1, 1), (1, 0))
GYRO_SIGNS = (1.0, 1.0, -1.0)


# ------------------------------------------------------------------ helpers


def _as_mat(coords):
    c = np.asarray(coords, dtype=complex)
    return c.reshape(c.shape[0], 1, 1) if c.ndim == 1 else c


def _like(result, coords):
    return result.reshape(np.shape(coords))


def mode_data(n, tau):
    """omega_a and d omega_a / d tau for all canonical modes."""
    idx = np.array(modes(n), dtype=float)
    return (idx[:, 0] + idx[:, 1] * tau) / n, idx[:, 1] / n


def sections(z, n, tau, kind="phi", shift=None):
    """Twisted sections over all modes at u = omega_a (+ shift).

    Without a shift the zero mode is left at 0 (it has no finite value).
    """
    om, c = mode_data(n, tau)
    out = np.zeros(n * n, dtype=complex)
    if shift is None:
        if n > 1:
            out[1:] = K.twisted(z, om[1:], c[1:], tau, kind)
        return out
    return np.asarray(K.twisted(z, om + shift, c, tau, kind), dtype=complex)


def _negation_tables(n):
    pos = np.array([mode_position((-a.a1, -a.a2), n) for a in modes(n)])
    sign = np.array([negation_sign(a, n) for a in modes(n)], dtype=float)
    return pos, sign


def involute_coords(coords, n):
    """Coefficients of h S h^{-1} given those of S."""
    c = np.asarray(coords, dtype=complex)
    pos, sign = _negation_tables(n)
    out = np.empty_like(c)
    shape = (-1,) + (1,) * (c.ndim - 1)
    out[pos] = c * sign.reshape(shape)
    return out


def _compose(coords, n):
    """Operator sum_a T_a (x) S_a as an (NM x NM) array."""
    c = _as_mat(coords)
    return compose(c, n)


def _lift_h(n, m):
    return np.kron(involution_h(n), np.eye(m))


# ------------------------------------------------------------------ inertia


def inertia(alpha, n, tau):
    """J_a = -E2(omega_a)."""
    if alpha[0] % n == 0 and alpha[1] % n == 0:
        raise ZeroMode("inertia is defined for nonzero modes only")
    return -K.e2(K.omega(alpha, n, K.check_tau(tau)), tau)


def inertia_eta(alpha, eta, n, tau):
    """J^eta_a = E1(eta + omega_a) - E1(omega_a)."""
    if alpha[0] % n == 0 and alpha[1] % n == 0:
        raise ZeroMode("inertia is defined for nonzero modes only")
    w = K.omega(alpha, n, K.check_tau(tau))
    return K.e1(eta + w, tau) - K.e1(w, tau)


def inertia_vector(n, tau):
    om, _ = mode_data(n, tau)
    out = np.zeros(n * n, dtype=complex)
    if n > 1:
        out[1:] = -np.asarray(K.e2(om[1:], tau))
    return out


def inertia_eta_vector(eta, n, tau):
    om, _ = mode_data(n, tau)
    out = np.zeros(n * n, dtype=complex)
    if n > 1:
        out[1:] = np.asarray(K.e1(eta + om[1:], tau)) - np.asarray(K.e1(om[1:], tau))
    return out


def eta_weights(eta, n, tau):
    """phi_a(eta, omega_a) for a != 0 and 1 for the zero mode."""
    om, c = mode_data(n, tau)
    out = np.ones(n * n, dtype=complex)
    if n > 1:
        out[1:] = K.twisted(eta, om[1:], c[1:], tau, "phi")
    return out


def bracket_sum(coords, weights, n):
    """sum_{b+c=a} (k_{b,c} S_b S_c - k_{c,b} S_c S_b) w_c with the exact T-products."""
    g = product_table(n)
    s = _as_mat(coords)
    pairs = np.einsum("bij,cjk->bcik", s, s)
    w = np.asarray(weights, dtype=complex)
    out = np.einsum("abc,bcik,c->aik", g, pairs, w) - np.einsum("acb,cbik,c->aik", g, pairs, w)
    return _like(out, coords)


# ------------------------------------------------------------------ states


def _check_tau_field(obj):
    object.__setattr__(obj, "tau", K.check_tau(obj.tau))


@dataclass(frozen=True, eq=False)
class TopState:
    """Non-relativistic elliptic top, S = sum_a T_a S_a."""

    n: int
    coords: np.ndarray
    tau: complex = 1j
    traceless: bool = True
    z2_reduced: bool = False
    model: ClassVar[str] = "nonrel-top"

    def __post_init__(self):
        _check_tau_field(self)
        c = np.array(self.coords, dtype=complex)
        if c.shape != (self.n * self.n,):
            raise SchemaError(f"expected {self.n * self.n} coordinates, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)
        if self.traceless and abs(c[0]) > CONSTRAINT_TOL:
            raise ConstraintViolation("traceless state has S_0 != 0")
        if self.z2_reduced and z2_check(self) > CONSTRAINT_TOL:
            raise ConstraintViolation("state flagged z2_reduced violates S_a = S_-a")

    def matrix(self):
        return _compose(self.coords, self.n)


@dataclass(frozen=True, eq=False)
class RelTopState:
    """Relativistic elliptic top with deformation parameter eta."""

    n: int
    eta: complex
    coords: np.ndarray
    tau: complex = 1j
    z2_reduced: bool = False
    model: ClassVar[str] = "rel-top"

    def __post_init__(self):
        _check_tau_field(self)
        c = np.array(self.coords, dtype=complex)
        if c.shape != (self.n * self.n,):
            raise SchemaError(f"expected {self.n * self.n} coordinates, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "eta", complex(self.eta))
        om, _ = mode_data(self.n, self.tau)
        if np.any(np.asarray(K.lattice_distance(self.eta + om, self.tau)) < K.POLE_EPS):
            raise ConstraintViolation("eta + omega_a hits the lattice for some mode")
        if self.z2_reduced and z2_check(self) > CONSTRAINT_TOL:
            raise ConstraintViolation("state flagged z2_reduced violates the eta-weighted constraint")

    def matrix(self):
        return _compose(self.coords, self.n)


@dataclass(frozen=True, eq=False)
class MatrixTopState:
    """Matrix (noncommutative) top: coordinates are M x M matrices.

    ``eta`` is None for the non-relativistic model.
    """

    n: int
    m: int
    coords: np.ndarray
    tau: complex = 1j
    eta: complex = None
    z2_reduced: bool = False

    def __post_init__(self):
        _check_tau_field(self)
        c = np.array(self.coords, dtype=complex)
        if c.shape != (self.n * self.n, self.m, self.m):
            raise SchemaError(
                f"expected coordinates of shape {(self.n * self.n, self.m, self.m)}, got {c.shape}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)
        if self.eta is not None:
            object.__setattr__(self, "eta", complex(self.eta))
        if self.z2_reduced:
            if z2_check(self) > CONSTRAINT_TOL:
                raise ConstraintViolation("state flagged z2_reduced violates the Z2 constraint")
            if scalar_zero_defect(self) > CONSTRAINT_TOL:
                raise ConstraintViolation("zero mode is not a multiple of the identity")

    @property
    def model(self):
        return "matrix-top" if self.eta is None else "matrix-rel-top"

    def matrix(self):
        return _compose(self.coords, self.n)


@dataclass(frozen=True, eq=False)
class GyrostatState:
    """N = 2 gyrostat in the Pauli basis, S = (1/2i) sum sigma_a S_a.

    ``coords`` has shape (3, M, M); ``nu`` holds the four constants
    nu_0..nu_3.  ``model`` is "gyrostat" (autonomous) or "pvi".
    """

    coords: np.ndarray
    nu: np.ndarray
    tau: complex = 1j
    model: str = "pvi"

    def __post_init__(self):
        _check_tau_field(self)
        c = np.array(self.coords, dtype=complex)
        if c.ndim == 1:
            c = c.reshape(3, 1, 1)
        if c.ndim != 3 or c.shape[0] != 3 or c.shape[1] != c.shape[2]:
            raise SchemaError(f"gyrostat coordinates must have shape (3, M, M), got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)
        nu = np.array(self.nu, dtype=complex)
        if nu.shape != (4,):
            raise SchemaError("nu must hold four constants")
        nu.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        if self.model not in ("gyrostat", "pvi"):
            raise SchemaError(f"unknown gyrostat model {self.model!r}")

    @property
    def m(self):
        return self.coords.shape[1]

    n: ClassVar[int] = 2


@dataclass(frozen=True, eq=False)
class GaudinState:
    """Special elliptic Gaudin model: A^a are N x N matrices, A^0 = S_0 1."""

    n: int
    coords: np.ndarray
    tau: complex = 1j
    z2_reduced: bool = False
    model: ClassVar[str] = "gaudin"

    def __post_init__(self):
        _check_tau_field(self)
        c = np.array(self.coords, dtype=complex)
        if c.shape != (self.n * self.n, self.n, self.n):
            raise SchemaError(f"expected A of shape {(self.n ** 2, self.n, self.n)}, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)
        if scalar_zero_defect(self) > CONSTRAINT_TOL:
            raise ConstraintViolation("A^0 must be a multiple of the identity")
        if self.z2_reduced and z2_check(self) > CONSTRAINT_TOL:
            raise ConstraintViolation("state flagged z2_reduced violates A^a = A^-a")


def with_coords(state, coords):
    return replace(state, coords=coords)


def with_tau(state, tau):
    return replace(state, tau=tau)


# ------------------------------------------------------------------ Z2 machinery


def _nonrel_coords(state):
    """Coordinates in which the Z2 constraint is plain h-invariance."""
    if isinstance(state, RelTopState) or (isinstance(state, MatrixTopState) and state.eta is not None):
        w = eta_weights(state.eta, state.n, state.tau)
        shape = (-1,) + (1,) * (state.coords.ndim - 1)
        return state.coords / w.reshape(shape), w.reshape(shape)
    return state.coords, None


def z2_check(state):
    """Max defect of the Z2 constraint (0 on the reduced surface)."""
    if isinstance(state, GaudinState):
        pos, _ = _negation_tables(state.n)
        c = state.coords
        return float(np.max(np.abs(c[1:] - c[pos][1:]))) if state.n > 1 else 0.0
    if isinstance(state, GyrostatState):
        return 0.0
    c, _ = _nonrel_coords(state)
    return float(np.max(np.abs(involute_coords(c, state.n) - c)))


def z2_project(state):
    """Symmetrise onto the Z2 surface (eta-weighted for relativistic models)."""
    if isinstance(state, GaudinState):
        pos, _ = _negation_tables(state.n)
        c = 0.5 * (state.coords + state.coords[pos])
        c[0] = state.coords[0]
        return replace(state, coords=c, z2_reduced=True)
    if isinstance(state, GyrostatState):
        return state
    c, w = _nonrel_coords(state)
    proj = 0.5 * (c + involute_coords(c, state.n))
    if w is not None:
        proj = proj * w
    if isinstance(state, MatrixTopState):
        proj[0] = _scalar_part(proj[0])
    return replace(state, coords=proj, z2_reduced=True)


def _scalar_part(mat):
    m = mat.shape[0]
    return np.trace(mat) / m * np.eye(m)


def scalar_zero_defect(state):
    """Distance of the zero mode from a multiple of the identity."""
    if isinstance(state, (MatrixTopState, GaudinState)):
        z0 = state.coords[0]
        return float(np.max(np.abs(z0 - _scalar_part(z0))))
    return 0.0


def involution_lax_defect(state, z):
    """max |h L(-z) h^-1 + L(z)| for the non-relativistic Lax matrix."""
    plus, _ = lax_split(state, z)
    return float(np.max(np.abs(plus)))


def lax_split(state, z):
    """L^(+-)(z) = (L(z) +- h L(-z) h^-1)/2."""
    lz, _ = lax_pair(state, z)
    lm, _ = lax_pair(state, -z)
    m = getattr(state, "m", 1)
    h = _lift_h(state.n, m)
    sig = h @ lm @ np.linalg.inv(h)
    return 0.5 * (lz + sig), 0.5 * (lz - sig)


# ------------------------------------------------------------------ gyrostat data


def nu_tilde(nu):
    n0, n1, n2, n3 = np.asarray(nu, dtype=complex)
    return 0.5 * np.array([
        n0 + n1 + n2 + n3,
        n0 + n1 - n2 - n3,
        n0 - n1 + n2 - n3,
        n0 - n1 - n2 + n3,
    ])


def half_periods(tau):
    return [K.omega(a, 2, tau) for a in GYRO_MODES]


def c_alpha(tau):
    """-exp(-2 pi i omega_a d_tau omega_a) (theta'(0)/theta(omega_a))^2, a = 1, 2, 3."""
    tau = K.check_tau(tau)
    out = []
    t1 = K.theta_prime0(tau)
    for a in GYRO_MODES:
        w = K.omega(a, 2, tau)
        c = a[1] / 2
        out.append(-np.exp(-TWO_PI_I * w * c) * (t1 / K.theta(w, tau)) ** 2)
    return np.array(out)


def c_alpha_product(z, tau):
    """phi_a(z, omega_a) phi_a(z - omega_a, omega_a): z-independent, equals c_alpha."""
    out = []
    for a in GYRO_MODES:
        w = K.omega(a, 2, tau)
        out.append(K.phi_alpha(0.0, z, a, 2, tau) * K.phi_alpha(0.0, z - w, a, 2, tau))
    return np.array(out)


def nu_prime(nu, tau):
    """nu'_a = c_a(tau) nu~_a for a = 1, 2, 3."""
    return c_alpha(tau) * nu_tilde(nu)[1:]


def gyro_to_modes(coords):
    """Pauli-basis coordinates (3, M, M) to N = 2 mode coordinates (4, M, M)."""
    c = np.asarray(coords, dtype=complex)
    c = c.reshape(3, 1, 1) if c.ndim == 1 else c
    out = np.zeros((4,) + c.shape[1:], dtype=complex)
    for k, (a, s) in enumerate(zip(GYRO_MODES, GYRO_SIGNS)):
        out[mode_position(a, 2)] = s * c[k] / 2j
    return out


def modes_to_gyro(coords):
    c = _as_mat(coords)
    out = np.zeros((3,) + c.shape[1:], dtype=complex)
    for k, (a, s) in enumerate(zip(GYRO_MODES, GYRO_SIGNS)):
        out[k] = s * 2j * c[mode_position(a, 2)]
    return out


# gyrostat external-field coupling in the Pauli-basis equations of motion
GYRO_FIELD_FACTOR = 1.0


def rhs_gyrostat(state):
    """d S_a = (S_b S_c + S_c S_b)(E2(w_b) - E2(w_c))/2 + S_b nu'_c - S_c nu'_b, cyclic."""
    tau = state.tau
    e2 = np.array([K.e2(w, tau) for w in half_periods(tau)])
    nup = nu_prime(state.nu, tau) * GYRO_FIELD_FACTOR
    s = state.coords
    out = np.empty_like(s)
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        sym = 0.5 * (s[b] @ s[c] + s[c] @ s[b])
        out[a] = sym * (e2[b] - e2[c]) + s[b] * nup[c] - s[c] * nup[b]
    return out


def rhs_gyrostat_scalar(s, nu, tau):
    """Commutative gyrostat: dS_a = S_b S_c (E2(w_b) - E2(w_c)) + S_b nu'_c - S_c nu'_b."""
    s = np.asarray(s, dtype=complex)
    e2 = np.array([K.e2(w, tau) for w in half_periods(tau)])
    nup = nu_prime(nu, tau)
    b, c = [1, 2, 0], [2, 0, 1]
    return s[b] * s[c] * (e2[b] - e2[c]) + s[b] * nup[c] - s[c] * nup[b]


# ------------------------------------------------------------------ equations of motion


def rhs_nonrel(state):
    """d S_a = sum_{b+c=a} (k_{b,c} - k_{c,b}) S_b S_c J_c."""
    return bracket_sum(state.coords, inertia_vector(state.n, state.tau), state.n)


def rhs_rel(state):
    """Relativistic top: inertia J^eta, and the zero mode is conserved."""
    out = bracket_sum(state.coords, inertia_eta_vector(state.eta, state.n, state.tau), state.n)
    out[0] = 0.0
    return out


def zero_mode_residual(state):
    """The zero mode of the Lax equation, which must vanish on the constraints.

    Non-relativistic: sum_b [S_b, S_-b] E2'(omega_b).  Relativistic: the
    zero mode of [S, J^eta(S)].
    """
    n = state.n
    c = _as_mat(state.coords)
    if isinstance(state, MatrixTopState) and state.eta is not None:
        w = inertia_eta_vector(state.eta, n, state.tau)
        return bracket_sum(c, w, n)[0]
    if isinstance(state, GaudinState):
        g = None
    else:
        g = product_table(n)
    om, _ = mode_data(n, state.tau)
    pos, _ = _negation_tables(n)
    out = np.zeros(c.shape[1:], dtype=complex)
    for b in range(1, n * n):
        nb = pos[b]
        weight = K.wp_prime(om[b], state.tau)
        coef = 1.0 if g is None else g[0, b, nb]
        out += coef * (c[b] @ c[nb] - c[nb] @ c[b]) * weight * 0.5
    return out


def rhs_matrix(state, tol=1e-12):
    """Matrix top equations with matrix products kept in order."""
    n = state.n
    if state.eta is None:
        w = inertia_vector(n, state.tau)
    else:
        w = inertia_eta_vector(state.eta, n, state.tau)
    out = bracket_sum(state.coords, w, n)
    if state.z2_reduced:
        res = float(np.max(np.abs(zero_mode_residual(state))))
        if res > tol * max(1.0, float(np.max(np.abs(state.coords))) ** 2):
            raise ConstraintViolation(f"zero-mode residual {res:.3e} exceeds tolerance")
    out[0] = 0.0
    return out


def rhs_gaudin(state):
    """d A^a = sum_{b+c=a} [A^b, A^c] J_c, with A^0 conserved."""
    n = state.n
    j = inertia_vector(n, state.tau)
    a = state.coords
    pairs = np.einsum("bij,cjk->bcik", a, a)
    comm = pairs - pairs.transpose(1, 0, 2, 3)
    out = np.zeros_like(a)
    for b in range(n * n):
        for c in range(1, n * n):
            mb, mc = modes(n)[b], modes(n)[c]
            out[mode_position((mb.a1 + mc.a1, mb.a2 + mc.a2), n)] += comm[b, c] * j[c]
    out[0] = 0.0
    return out


def rhs(state):
    """Dispatch to the model's equations of motion."""
    if isinstance(state, TopState):
        return rhs_nonrel(state)
    if isinstance(state, RelTopState):
        return rhs_rel(state)
    if isinstance(state, MatrixTopState):
        return rhs_matrix(state)
    if isinstance(state, GyrostatState):
        return rhs_gyrostat(state)
    if isinstance(state, GaudinState):
        return rhs_gaudin(state)
    raise TypeError(f"unsupported state {type(state).__name__}")


# ------------------------------------------------------------------ eta substitution


def eta_substitution(state, weights=None):
    """Map a relativistic state to eta-independent coordinates S_a / phi_a(eta, omega_a).

    ``weights`` overrides phi_a(eta, omega_a) (zero mode excluded).
    """
    w = eta_weights(state.eta, state.n, state.tau) if weights is None else np.asarray(weights)
    c = state.coords / w
    return TopState(state.n, c, state.tau, traceless=False)


def inverse_eta_substitution(state, eta, weights=None):
    w = eta_weights(eta, state.n, state.tau) if weights is None else np.asarray(weights)
    return RelTopState(state.n, eta, state.coords * w, state.tau)


# ------------------------------------------------------------------ Lax pairs


def _tensor_sum(coeffs, fn_values, n):
    """sum_a T_a (x) (coeffs_a * fn_a) for scalar or matrix coefficients."""
    c = _as_mat(coeffs)
    return compose(c * np.asarray(fn_values).reshape(-1, 1, 1), n)


def _gyro_lax_parts(state, w, kind="phi"):
    """Pauli-basis pieces of the gyrostat Lax matrix as mode coefficients."""
    tau = state.tau
    s = state.coords
    m = s.shape[1]
    nut = nu_tilde(state.nu)
    coeff_s = np.zeros((4, m, m), dtype=complex)
    coeff_nu = np.zeros((4, m, m), dtype=complex)
    for k, (a, sg) in enumerate(zip(GYRO_MODES, GYRO_SIGNS)):
        pos = mode_position(a, 2)
        om = K.omega(a, 2, tau)
        c = a[1] / 2
        if kind == "phi":
            fs = K.twisted(w, om, c, tau, "phi")
            fn = K.twisted(w - om, om, c, tau, "phi")
        elif kind == "dz":
            fs = K.twisted(w, om, c, tau, "phi_dz")
            fn = K.twisted(w - om, om, c, tau, "phi_dz")
        elif kind == "dtau":
            fs = K.twisted(w, om, c, tau, "phi_dtau")
            # the argument w - omega_a also moves with tau
            fn = K.twisted(w - om, om, c, tau, "phi_dtau") - c * K.twisted(w - om, om, c, tau, "phi_dz")
        else:
            raise ValueError(kind)
        coeff_s[pos] = sg * s[k] * fs / 2j
        coeff_nu[pos] = sg * nut[k + 1] * fn * np.eye(m) / 2j
    return coeff_s, coeff_nu


def _gyro_m_zv(state, w, derivative=False):
    tau = state.tau
    s = state.coords
    m = s.shape[1]
    phis, dphis = [], []
    for a in GYRO_MODES:
        om = K.omega(a, 2, tau)
        phis.append(K.twisted(w, om, a[1] / 2, tau, "phi"))
        dphis.append(K.twisted(w, om, a[1] / 2, tau, "phi_dz"))
    coeff = np.zeros((4, m, m), dtype=complex)
    for k, (a, sg) in enumerate(zip(GYRO_MODES, GYRO_SIGNS)):
        b, c = (k + 1) % 3, (k + 2) % 3
        if derivative:
            prod = dphis[b] * phis[c] + phis[b] * dphis[c]
        else:
            prod = phis[b] * phis[c]
        coeff[mode_position(a, 2)] = -sg * s[k] * prod / 2j
    return compose(coeff, 2)


def lax_pair(state, z):
    """(L(z), M(z)) as dense arrays on Mat(N) (x) Mat(M)."""
    n, tau = state.n, state.tau
    if isinstance(state, TopState) or (isinstance(state, MatrixTopState) and state.eta is None):
        lv = _tensor_sum(state.coords, sections(z, n, tau, "phi"), n)
        mv = _tensor_sum(state.coords, sections(z, n, tau, "f"), n)
        return lv, mv
    if isinstance(state, (RelTopState, MatrixTopState)):
        lv = _tensor_sum(state.coords, sections(z, n, tau, "phi", shift=state.eta), n)
        mv = -_tensor_sum(state.coords, sections(z, n, tau, "phi"), n)
        return lv, mv
    if isinstance(state, GyrostatState):
        cs, cn = _gyro_lax_parts(state, z)
        lv = compose(cs + cn, 2)
        mv = _gyro_m_zv(state, z)
        if state.model == "pvi":
            mv = mv + K.e1(z, tau) * lv
        return lv, mv
    if isinstance(state, GaudinState):
        a = state.coords
        phi = sections(z, n, tau, "phi")
        f = sections(z, n, tau, "f")
        lv = a[0] + np.einsum("a,aij->ij", phi[1:], a[1:])
        mv = np.einsum("a,aij->ij", f[1:], a[1:])
        return lv, mv
    raise TypeError(f"unsupported state {type(state).__name__}")


def lax_tau_data(state, w):
    """(L, M, explicit d_tau L, d_w M) at w for the isomonodromic checks."""
    n, tau = state.n, state.tau
    lv, mv = lax_pair(state, w)
    if isinstance(state, TopState) or (isinstance(state, MatrixTopState) and state.eta is None):
        dl = _tensor_sum(state.coords, sections(w, n, tau, "phi_dtau"), n)
        dm = _tensor_sum(state.coords, sections(w, n, tau, "f_dz"), n)
        return lv, mv, dl, dm
    if isinstance(state, GaudinState):
        a = state.coords
        dl = np.einsum("a,aij->ij", sections(w, n, tau, "phi_dtau")[1:], a[1:])
        dm = np.einsum("a,aij->ij", sections(w, n, tau, "f_dz")[1:], a[1:])
        return lv, mv, dl, dm
    if isinstance(state, GyrostatState):
        cs, cn = _gyro_lax_parts(state, w, "dtau")
        dl = compose(cs + cn, 2)
        ds, dn = _gyro_lax_parts(state, w, "dz")
        dlw = compose(ds + dn, 2)
        dm = _gyro_m_zv(state, w, derivative=True)
        if state.model == "pvi":
            dm = dm - K.e2(w, tau) * lv + K.e1(w, tau) * dlw
        return lv, mv, dl, dm
    raise TypeError(f"no isomonodromic data for {type(state).__name__}")


def lax_linear_part(state, coords, z):
    """L(z) built from ``coords`` alone (no constant terms such as nu)."""
    if isinstance(state, GyrostatState):
        probe = replace(state, coords=coords, nu=np.zeros(4))
        return lax_pair(probe, z)[0]
    if isinstance(state, GaudinState):
        a = np.asarray(coords)
        phi = sections(z, state.n, state.tau, "phi")
        return a[0] + np.einsum("a,aij->ij", phi[1:], a[1:])
    return lax_pair(_unchecked(state, coords), z)[0]


def _unchecked(state, coords):
    """Copy of ``state`` with new coordinates and the constraint flags cleared."""
    kwargs = {"coords": coords}
    if hasattr(state, "z2_reduced"):
        kwargs["z2_reduced"] = False
    if isinstance(state, TopState):
        kwargs["traceless"] = False
    return replace(state, **kwargs)


# ------------------------------------------------------------------ trace forms


def _contract(op, site_matrix):
    """tr_2(op (1 (x) S_2)) for a two-site operator."""
    d = op.dims[1]
    s2 = TensorOperator(site_matrix, (d,)).embed(op.dims, [1])
    return (op @ s2).partial_trace([1]).data


def trace_form_lax(state, z=None, which="L"):
    """Partial-trace constructions of L, M or J from R-matrix coefficients.

    Relations to the elliptic forms (checked in the test suite):
    tr_2(r(z) S_2) = N L(z) + E1(z) tr(S) 1, tr_2(m(0) S_2) = N J(S) + (c/3) tr(S) 1
    with c = theta'''(0)/theta'(0), tr_2(R^eta(z) S_2) = N L^eta(z) and
    -tr_2(r(z) Sbar_2) = N M^eta(z).
    """
    n, tau = state.n, state.tau
    m = getattr(state, "m", 1)
    spec = RMatrixSpec(n, m, tau)
    s = state.matrix()
    rel = isinstance(state, RelTopState) or (isinstance(state, MatrixTopState) and state.eta is not None)
    if which == "L":
        op = R(state.eta, z, spec) if rel else classical_r(z, spec)
        return _contract(op, s)
    if which == "M":
        if rel:
            coeffs = np.array(state.coords, dtype=complex)
            coeffs[0] = 0.0
            return -_contract(classical_r(z, spec), _compose(coeffs, n))
        return _contract(m_coeff(z, spec), s)
    if which == "J":
        if rel:
            return _contract(R0(state.eta, spec) - r0(spec), s)
        return _contract(m_coeff_at_zero(spec), s)
    raise ValueError(f"which must be L, M or J, got {which!r}")


def elliptic_inertia(state):
    """J(S) = sum_{a != 0} T_a S_a J_a (J^eta for relativistic models)."""
    n, tau = state.n, state.tau
    rel = isinstance(state, RelTopState) or (isinstance(state, MatrixTopState) and state.eta is not None)
    w = inertia_eta_vector(state.eta, n, tau) if rel else inertia_vector(n, tau)
    return _tensor_sum(state.coords, w, n)


# ------------------------------------------------------------------ random states


def random_state(kind, n=2, m=1, tau=1j, eta=None, seed=0, z2=False, scalar_zero=True):
    """Seeded random state of the requested family (used by tests and CLI)."""
    rng = np.random.default_rng(seed)

    def cplx(*shape):
        return rng.normal(size=shape) + 1j * rng.normal(size=shape)

    if kind == "nonrel-top":
        c = cplx(n * n)
        c[0] = 0.0
        st = TopState(n, c, tau)
    elif kind == "rel-top":
        st = RelTopState(n, 0.17 if eta is None else eta, cplx(n * n), tau)
    elif kind in ("matrix-top", "matrix-rel-top"):
        c = cplx(n * n, m, m)
        if kind == "matrix-top":
            c[0] = 0.0
        elif scalar_zero:
            c[0] = c[0, 0, 0] * np.eye(m)
        e = None if kind == "matrix-top" else (0.17 if eta is None else eta)
        st = MatrixTopState(n, m, c, tau, e)
    elif kind in ("gyrostat", "pvi"):
        st = GyrostatState(cplx(3, m, m), cplx(4), tau, kind)
    elif kind == "gaudin":
        c = cplx(n * n, n, n)
        c[0] = c[0, 0, 0] * np.eye(n)
        st = GaudinState(n, c, tau)
    else:
        raise SchemaError(f"unknown model {kind!r}")
    return z2_project(st) if z2 else st


# ------------------------------------------------------------------ JSON I/O

MODELS = ("nonrel-top", "rel-top", "matrix-top", "matrix-rel-top", "gyrostat", "pvi", "gaudin",
          "pvi-scalar")


def _cjson(x):
    return [float(np.real(x)), float(np.imag(x))]


def _cparse(v, what):
    if isinstance(v, (int, float)):
        return complex(v)
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise SchemaError(f"{what}: expected [re, im]")
    return complex(float(v[0]), float(v[1]))


def _mparse(v, m, what):
    arr = np.asarray(v, dtype=float)
    if arr.shape == (2,) and m == 1:
        return np.array([[complex(arr[0], arr[1])]])
    if arr.shape != (m, m, 2):
        raise SchemaError(f"{what}: expected an {m}x{m} array of [re, im]")
    return arr[..., 0] + 1j * arr[..., 1]


def state_to_dict(state):
    """Serialise a state to the ModelState JSON schema."""
    doc = {"model": state.model, "N": state.n, "M": getattr(state, "m", 1),
           "tau": _cjson(state.tau)}
    eta = getattr(state, "eta", None)
    if eta is not None:
        doc["eta"] = _cjson(eta)
    if isinstance(state, GyrostatState):
        doc["nu"] = [_cjson(v) for v in state.nu]
        labels = [(k + 1, 0) for k in range(3)]
    else:
        labels = [tuple(a) for a in modes(state.n)]
    coords = []
    for lab, val in zip(labels, state.coords):
        val = np.asarray(val)
        if val.ndim == 0 or val.size == 1 and not isinstance(state, (MatrixTopState, GaudinState)):
            enc = _cjson(val.reshape(-1)[0])
        else:
            enc = [[_cjson(x) for x in row] for row in val]
        coords.append({"alpha": list(lab), "value": enc})
    doc["coords"] = coords
    doc["flags"] = {"z2_reduced": bool(getattr(state, "z2_reduced", False)),
                    "traceless": bool(getattr(state, "traceless", False))}
    return doc


def state_from_dict(doc):
    """Parse a ModelState document; raises SchemaError or ConstraintViolation."""
    if not isinstance(doc, dict):
        raise SchemaError("state document must be an object")
    for key in ("model", "N", "tau", "coords"):
        if key not in doc:
            raise SchemaError(f"missing field {key!r}")
    model = doc["model"]
    if model not in MODELS or model == "pvi-scalar":
        raise SchemaError(f"unsupported model {model!r}")
    n = int(doc["N"])
    m = int(doc.get("M", 1))
    if n < 1 or m < 1:
        raise SchemaError("N and M must be positive")
    try:
        tau = K.check_tau(_cparse(doc["tau"], "tau"))
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    flags = doc.get("flags", {}) or {}
    z2 = bool(flags.get("z2_reduced", False))
    eta = _cparse(doc["eta"], "eta") if doc.get("eta") is not None else None
    entries = doc["coords"]
    if not isinstance(entries, list):
        raise SchemaError("coords must be a list")

    if model in ("gyrostat", "pvi"):
        if "nu" not in doc or len(doc["nu"]) != 4:
            raise SchemaError("gyrostat models need four nu constants")
        nu = np.array([_cparse(v, "nu") for v in doc["nu"]])
        coords = np.zeros((3, m, m), dtype=complex)
        for e in entries:
            k = int(e["alpha"][0])
            if k not in (1, 2, 3):
                raise SchemaError("gyrostat alpha must be [1..3, 0]")
            coords[k - 1] = _mparse(e["value"], m, "coords")
        return GyrostatState(coords, nu, tau, model)

    size = n * n
    inner = n if model == "gaudin" else m
    matrix_valued = model in ("matrix-top", "matrix-rel-top", "gaudin")
    coords = np.zeros((size, inner, inner) if matrix_valued else (size,), dtype=complex)
    for e in entries:
        try:
            alpha = (int(e["alpha"][0]), int(e["alpha"][1]))
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise SchemaError("each coordinate needs an integer pair 'alpha'") from exc
        pos = mode_position(alpha, n)
        if matrix_valued:
            coords[pos] = _mparse(e["value"], inner, "coords")
        else:
            coords[pos] = _cparse(e["value"], "coords")
    if model == "nonrel-top":
        return TopState(n, coords, tau, traceless=bool(flags.get("traceless", False)), z2_reduced=z2)
    if model == "rel-top":
        if eta is None:
            raise SchemaError("rel-top needs eta")
        return RelTopState(n, eta, coords, tau, z2_reduced=z2)
    if model == "matrix-top":
        return MatrixTopState(n, m, coords, tau, None, z2_reduced=z2)
    if model == "matrix-rel-top":
        if eta is None:
            raise SchemaError("matrix-rel-top needs eta")
        return MatrixTopState(n, m, coords, tau, eta, z2_reduced=z2)
    return GaudinState(n, coords, tau, z2_reduced=z2)

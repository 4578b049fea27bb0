"""Time integration of Lax flows and isomonodromic flows, with diagnostics.

All integrators are fixed-step classical RK4 acting directly on the complex
mode coordinates of a state.  Isomonodromic flows use tau itself as time
and move it along a straight segment in the upper half-plane.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernel as K
from . import tops as T
from .errors import PoleProximity, StepRejected

TWO_PI_I = 2j * math.pi


@dataclass(frozen=True)
class TauPath:
    """Straight segment tau(s) = tau0 + s (tau1 - tau0), s in [0, 1]."""

    tau0: complex
    tau1: complex

    def __post_init__(self):
        # Im tau is linear in s, so checking the endpoints suffices
        object.__setattr__(self, "tau0", K.check_tau(self.tau0))
        object.__setattr__(self, "tau1", K.check_tau(self.tau1))

    def __call__(self, s):
        return self.tau0 + s * (self.tau1 - self.tau0)

    @property
    def velocity(self):
        return self.tau1 - self.tau0

    @property
    def length(self):
        return abs(self.tau1 - self.tau0)


@dataclass
class Trajectory:
    times: list
    states: list
    diagnostics: list = field(default_factory=list)
    probes: tuple = ()

    @property
    def final(self):
        return self.states[-1]

    def max_diagnostic(self, key):
        vals = [d[key] for d in self.diagnostics if key in d]
        return max(vals) if vals else 0.0

    def drift(self, key):
        """Max deviation of a recorded invariant from its initial value."""
        first = np.asarray(self.diagnostics[0][key])
        return max(float(np.max(np.abs(np.asarray(d[key]) - first))) for d in self.diagnostics)


# ------------------------------------------------------------------ diagnostics


def spectral_invariants(state, z, kmax=None):
    """tr L(z)^k for k = 1..kmax (kmax defaults to the size of L)."""
    lv, _ = T.lax_pair(state, z)
    kmax = lv.shape[0] if kmax is None else kmax
    if kmax > lv.shape[0]:
        raise ValueError(f"kmax must not exceed {lv.shape[0]}")
    out, p = [], np.eye(lv.shape[0], dtype=complex)
    for _ in range(kmax):
        p = p @ lv
        out.append(complex(np.trace(p)))
    return np.array(out)


def _scale(*arrays):
    return max(1.0, *(float(np.max(np.abs(a))) for a in arrays))


def lax_residual(state, z_samples):
    """Max relative defect of L(z, rhs) = [L(z), M(z)] over the samples."""
    velocity = T.rhs(state)
    worst = 0.0
    for z in np.atleast_1d(z_samples):
        lv, mv = T.lax_pair(state, z)
        lhs = T.lax_linear_part(state, velocity, z)
        defect = lhs - (lv @ mv - mv @ lv)
        worst = max(worst, float(np.max(np.abs(defect))) / _scale(lv) / _scale(mv))
    return worst


def monodromy_residual(state, state_tau_derivative, w_samples):
    """Max relative defect of d_tau L - (1/2 pi i) d_w M = [L, M].

    ``state_tau_derivative`` is dS/dtau in the state's coordinate layout; the
    explicit tau-dependence of the sections is added analytically.
    """
    worst = 0.0
    for w in np.atleast_1d(w_samples):
        lv, mv, dl_explicit, dm = T.lax_tau_data(state, w)
        dl = dl_explicit + T.lax_linear_part(state, state_tau_derivative, w)
        defect = dl - dm / TWO_PI_I - (lv @ mv - mv @ lv)
        worst = max(worst, float(np.max(np.abs(defect))) / _scale(lv) / _scale(mv))
    return worst


# ------------------------------------------------------------------ integrators


def _unchecked(state, coords, tau=None):
    kwargs = {"coords": coords}
    if tau is not None:
        kwargs["tau"] = tau
    if hasattr(state, "z2_reduced"):
        kwargs["z2_reduced"] = False
    if isinstance(state, T.TopState):
        kwargs["traceless"] = False
    return replace(state, **kwargs)


def _rk4(field_fn, y, t, h):
    k1 = field_fn(t, y)
    k2 = field_fn(t + h / 2, y + h / 2 * k1)
    k3 = field_fn(t + h / 2, y + h / 2 * k2)
    k4 = field_fn(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _steps(t0, t1, dt):
    if dt <= 0:
        raise ValueError("step size must be positive")
    span = t1 - t0
    if span < 0:
        raise ValueError("t1 must not precede t0")
    count = int(round(span / dt))
    if span > 0 and count == 0:
        count = 1
    return count, (span / count if count else 0.0)


def _advance(field_fn, y, t, h):
    try:
        y_new = _rk4(field_fn, y, t, h)
    except PoleProximity as exc:
        raise StepRejected(f"step at t={t:.6g} touched a pole: {exc}") from exc
    if not np.all(np.isfinite(y_new)):
        raise StepRejected(f"non-finite state after step at t={t:.6g}")
    return y_new


def integrate_autonomous(state, t0, t1, dt, probe_z=(0.31 + 0.17j,), kmax=None, record_every=1):
    """RK4 integration of dS/dt = rhs(S) with spectral diagnostics.

    Diagnostics per recorded step: ``inv`` (list of tr L(z)^k per probe z)
    and ``z2`` (constraint defect).
    """
    count, h = _steps(t0, t1, dt)
    probes = tuple(complex(z) for z in probe_z)

    def field_fn(_t, y):
        return T.rhs(_unchecked(state, y))

    def diag(st):
        out = {"z2": T.z2_check(st), "zero": T.scalar_zero_defect(st)}
        if probes:
            out["inv"] = np.array([spectral_invariants(st, z, kmax) for z in probes])
        return out

    y = np.array(state.coords, dtype=complex)
    traj = Trajectory([t0], [state], [diag(state)], probes)
    for i in range(count):
        t = t0 + i * h
        y = _advance(field_fn, y, t, h)
        if (i + 1) % record_every == 0 or i + 1 == count:
            st = _unchecked(state, y.copy())
            traj.times.append(t0 + (i + 1) * h)
            traj.states.append(st)
            traj.diagnostics.append(diag(st))
    return traj


def integrate_isomonodromic(state, path, ds, w_samples=(0.31 + 0.17j,), record_every=1):
    """Integrate d/dtau S = rhs(S; tau) along ``path`` (tau as time).

    All tau-dependent coefficients are re-evaluated at every RK stage.
    Diagnostics record the monodromy residual at the ``w_samples``.
    """
    count, h = _steps(0.0, 1.0, ds) if path.length > 0 else (0, 0.0)
    v = path.velocity
    samples = tuple(complex(w) for w in w_samples)

    def field_fn(s, y):
        return v * T.rhs(_unchecked(state, y, tau=path(s)))

    def diag(st):
        if not samples:
            return {}
        return {"residual": monodromy_residual(st, T.rhs(st), samples)}

    start = _unchecked(state, np.array(state.coords, dtype=complex), tau=path(0.0))
    y = np.array(start.coords, dtype=complex)
    traj = Trajectory([0.0], [start], [diag(start)], samples)
    for i in range(count):
        y = _advance(field_fn, y, i * h, h)
        if (i + 1) % record_every == 0 or i + 1 == count:
            s = (i + 1) * h
            st = _unchecked(state, y.copy(), tau=path(s))
            traj.times.append(s)
            traj.states.append(st)
            traj.diagnostics.append(diag(st))
    return traj


def gyrostat_scalar(s0, nu, path, ds):
    """Commutative non-autonomous gyrostat along ``path``; returns the final S."""
    count, h = _steps(0.0, 1.0, ds) if path.length > 0 else (0, 0.0)
    v = path.velocity

    def field_fn(s, y):
        return v * T.rhs_gyrostat_scalar(y, nu, path(s))

    y = np.array(s0, dtype=complex)
    for i in range(count):
        y = _advance(field_fn, y, i * h, h)
    return y


def pvi_scalar(u0, udot0, nu, path, ds):
    """d^2 u / d tau^2 = sum_a nu_a^2 wp'(u + omega_a), omega = (0, 1/2, tau/2, (1+tau)/2).

    Integrated along ``path`` as a first-order system in s; ``udot0`` is
    du/dtau.  Diagnostics record an energy-like quantity
    udot^2/2 - sum_a nu_a^2 wp(u + omega_a) (not conserved, tau moves).
    """
    nu = np.asarray(nu, dtype=complex)
    v = path.velocity

    def half_periods(tau):
        return np.array([0.0, 0.5, tau / 2, (1 + tau) / 2])

    def field_fn(s, y):
        tau = path(s)
        force = sum(nu[a] ** 2 * K.wp_prime(y[0] + w, tau) for a, w in enumerate(half_periods(tau)) if nu[a] != 0)
        return v * np.array([y[1], force], dtype=complex)

    def energy(y, tau):
        pot = sum(nu[a] ** 2 * K.wp(y[0] + w, tau) for a, w in enumerate(half_periods(tau)) if nu[a] != 0)
        return complex(0.5 * y[1] ** 2 - pot)

    count, h = _steps(0.0, 1.0, ds) if path.length > 0 else (0, 0.0)
    y = np.array([u0, udot0], dtype=complex)
    traj = Trajectory([0.0], [y.copy()], [{"energy": energy(y, path(0.0))}])
    for i in range(count):
        y = _advance(field_fn, y, i * h, h)
        s = (i + 1) * h
        traj.times.append(s)
        traj.states.append(y.copy())
        traj.diagnostics.append({"energy": energy(y, path(s))})
    return traj


# ------------------------------------------------------------------ output


def _coord_labels(state):
    if isinstance(state, T.GyrostatState):
        labels = [f"alpha_{k + 1}_0" for k in range(3)]
    else:
        labels = [f"alpha_{a.a1}_{a.a2}" for a in T.modes(state.n)]
    shape = np.shape(state.coords)[1:]
    cols = []
    for lab in labels:
        if shape:
            for i in range(shape[0]):
                for j in range(shape[1]):
                    cols += [f"{lab}_{i}_{j}_re", f"{lab}_{i}_{j}_im"]
        else:
            cols += [f"{lab}_re", f"{lab}_im"]
    return cols


def _fmt(x):
    return repr(float(x))


def write_trajectory_csv(traj, path_or_file, time_label="s_or_t"):
    """One row per recorded step: time, coordinates, invariants, residual."""
    first = traj.states[0]
    inv0 = traj.diagnostics[0].get("inv")
    n_inv = 0 if inv0 is None else np.asarray(inv0).shape[-1]
    header = [time_label] + _coord_labels(first)
    for k in range(1, n_inv + 1):
        header += [f"inv_k{k}_re", f"inv_k{k}_im"]
    header.append("residual")

    def rows():
        for t, st, d in zip(traj.times, traj.states, traj.diagnostics):
            row = [_fmt(t)]
            for x in np.asarray(st.coords).reshape(-1):
                row += [_fmt(x.real), _fmt(x.imag)]
            if n_inv:
                # the first probe z is written
                for x in np.asarray(d["inv"])[0]:
                    row += [_fmt(x.real), _fmt(x.imag)]
            row.append(_fmt(d.get("residual", d.get("z2", 0.0))))
            yield row

    if hasattr(path_or_file, "write"):
        writer = csv.writer(path_or_file, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows())
    else:
        with open(path_or_file, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows())

"""Acceptance criteria 1-8, each reported as one PASS/FAIL line."""

import cmath
import math
import time

import numpy as np
import pytest

from conftest import record_criterion
from etop import checks as C
from etop import flows as F
from etop import kernel as K
from etop import rmatrix as Rm
from etop import tops as T
from etop.algebra import build_basis, kappa, modes

TAUS = (1j, 0.2 + 1.1j)
# classical-limit identities that do not survive the matrix extension
CLASSICAL_M2 = {"CYBE", "DEGEN-26", "DEGEN-32", "M-IDENT-934", "M-IDENT-935"}
RMATRIX_IDS = [k for k in Rm.CATALOGUE if k != "FAILURE-TERM"]
ISO_PATH = F.TauPath(1j, 1j + 0.3 * cmath.exp(0.5j))
ISO_W = (0.31 + 0.17j, -0.2 + 0.33j, 0.12 + 0.4j)
PROBES = (0.31 + 0.17j, -0.12 + 0.43j, 0.27 - 0.21j)


def scaled(st, factor):
    return F._unchecked(st, np.asarray(st.coords) * factor)


def test_criterion_1_kernel_identities():
    start = time.perf_counter()
    worst = {}
    for tau in TAUS:
        for ident in C.KERNEL_CATALOGUE:
            rep = C.verify_kernel_identity(ident, tau, sample_count=100, tol=1e-10, seed=1)
            worst[ident] = max(worst.get(ident, 0.0), rep.max_rel_residual)
    elapsed = time.perf_counter() - start
    failed = [k for k, v in worst.items() if not v < 1e-10]
    passed = not failed and elapsed < 10
    record_criterion(1, passed, f"max residual {max(worst.values()):.1e}, {elapsed:.1f} s"
                     + (f", failing {failed}" if failed else ""))
    assert passed


@pytest.fixture(scope="module")
def rmatrix_grid():
    start = time.perf_counter()
    reports = {}
    for n in (1, 2, 3):
        for m in (1, 2):
            spec = Rm.RMatrixSpec(n, m, 1j)
            for ident in RMATRIX_IDS:
                reports[(ident, n, m)] = Rm.verify_identity(ident, spec, 100, 1e-9, seed=2)
    return reports, time.perf_counter() - start


@pytest.mark.xfail(strict=True, reason="classical-limit identities fail at M = 2, see decisions ledger")
def test_criterion_2_rmatrix_suite(rmatrix_grid):
    reports, elapsed = rmatrix_grid
    failed = sorted({f"{i}@M={m}" for (i, n, m), r in reports.items() if not r.passed})
    passed = not failed and elapsed < 120
    detail = f"{len(reports)} runs, {elapsed:.0f} s"
    if failed:
        detail += f", unattainable: {', '.join(failed)}"
    record_criterion(2, passed, detail)
    assert passed


def test_criterion_2_attainable_part(rmatrix_grid):
    reports, elapsed = rmatrix_grid
    for (ident, n, m), rep in reports.items():
        if m == 2 and ident in CLASSICAL_M2:
            assert not rep.passed
        else:
            assert rep.passed, (ident, n, m, rep.max_rel_residual)
    assert elapsed < 120


def test_criterion_3_lax_pairs():
    rng = np.random.default_rng(3)
    worst = 0.0
    cases = [("nonrel-top", n, 1) for n in (2, 3)] + [("rel-top", n, 1) for n in (2, 3)]
    cases += [("matrix-top", 2, 2), ("matrix-rel-top", 2, 2)]
    for kind, n, m in cases:
        st = T.random_state(kind, n, m, tau=1j, seed=int(rng.integers(1 << 30)), z2=kind.startswith("matrix"))
        zs = [C.PointSampler(rng, 1j).away() for _ in range(20)]
        worst = max(worst, F.lax_residual(st, zs))
    control = C.model_negative_control(2, 2, 1j, seed=3)
    passed = worst < 1e-9 and control > 1e-3
    record_criterion(3, passed, f"max lax residual {worst:.1e}, unconstrained S0 control {control:.2f}")
    assert passed


def test_criterion_4_constraints():
    st = scaled(T.random_state("nonrel-top", 3, tau=1j, seed=4, z2=True), 0.1)
    traj = F.integrate_autonomous(st, 0.0, 1.0, 1e-3, probe_z=())
    half = F.integrate_autonomous(st, 0.0, 1.0, 5e-4, probe_z=())
    err = float(np.max(np.abs(np.asarray(traj.final.coords) - np.asarray(half.final.coords))))
    z2 = traj.max_diagnostic("z2")
    rel = T.random_state("rel-top", 3, tau=1j, seed=4, z2=True)
    zero_rel = T.rhs_rel(rel)[0]
    zero_modes = []
    for kind in ("matrix-top", "matrix-rel-top"):
        mt = T.random_state(kind, 3, 2, tau=1j, seed=4, z2=True)
        zero_modes.append(float(np.max(np.abs(T.zero_mode_residual(mt)))))
    passed = z2 < 10 * err and zero_rel == 0 and max(zero_modes) < 1e-12
    record_criterion(4, passed, f"z2 defect {z2:.1e} vs integration error {err:.1e}, "
                                f"(rhs_rel)_0 = {abs(zero_rel)}, zero mode {max(zero_modes):.1e}")
    assert passed


def test_criterion_5_conservation():
    drifts = []
    for n in (2, 3):
        st = scaled(T.random_state("nonrel-top", n, tau=1j, seed=5), 0.1)
        drifts.append(F.integrate_autonomous(st, 0.0, 1.0, 1e-3, probe_z=PROBES).drift("inv"))
    euler = T.TopState(2, T.gyro_to_modes(np.array([0.3, -0.2, 0.25])).reshape(4), 1j, traceless=False)
    traj = F.integrate_autonomous(euler, 0.0, 1.0, 1e-3, probe_z=())
    cas = [np.sum(T.modes_to_gyro(s.coords) ** 2) for s in traj.states]
    cas_drift = max(abs(c - cas[0]) for c in cas)
    ref = np.asarray(F.integrate_autonomous(euler, 0, 1, 1e-5, probe_z=()).final.coords)
    errs = [np.max(np.abs(np.asarray(F.integrate_autonomous(euler, 0, 1, h, probe_z=()).final.coords) - ref))
            for h in (0.02, 0.01)]
    ratio = errs[0] / errs[1]
    passed = max(drifts) < 1e-6 and cas_drift < 1e-10 and 14 < ratio < 18
    record_criterion(5, passed, f"invariant drift {max(drifts):.1e}, Casimir drift {cas_drift:.1e}, "
                                f"step-halving ratio {ratio:.2f}")
    assert passed


def test_criterion_6_isomonodromy():
    assert math.isclose(ISO_PATH.length, 0.3)
    cases = [("nonrel-top", 3, 1), ("pvi", 2, 1), ("pvi", 2, 2), ("gaudin", 2, 1)]
    worst = 0.0
    for kind, n, m in cases:
        st = scaled(T.random_state(kind, n, m, tau=1j, seed=6, z2=kind != "pvi"), 0.2)
        if kind == "pvi":
            assert np.all(np.asarray(st.nu) != 0)
        traj = F.integrate_isomonodromic(st, ISO_PATH, 0.01, w_samples=ISO_W, record_every=10)
        worst = max(worst, traj.max_diagnostic("residual"))
    st = scaled(T.random_state("pvi", 2, 1, tau=1j, seed=7), 0.2)
    nc = F.integrate_isomonodromic(st, ISO_PATH, 0.01, w_samples=()).final
    scalar = F.gyrostat_scalar(np.asarray(st.coords).reshape(3), st.nu, ISO_PATH, 0.01)
    diff = float(np.max(np.abs(np.asarray(nc.coords).reshape(3) - scalar)))
    passed = worst < 1e-8 and diff < 1e-10
    record_criterion(6, passed, f"max monodromy residual {worst:.1e}, M=1 vs scalar endpoint {diff:.1e}")
    assert passed


def test_criterion_7_gaudin():
    n, tau = 2, 0.2 + 1.1j
    st = T.random_state("gaudin", n, tau=tau, seed=8, z2=True)
    nodes = 1e-2 * np.exp(2j * math.pi * np.arange(32) / 32)
    res_err = 0.0
    for alpha in modes(n, include_zero=False):
        centre = n * K.omega(alpha, n, tau)
        res = sum(T.lax_pair(st, centre + w)[0] * w for w in nodes) / 32
        expected = sum(kappa(b, alpha, n) ** 2 * st.coords[i] for i, b in enumerate(modes(n)) if i)
        res_err = max(res_err, float(np.max(np.abs(res - expected))))
    red_err = 0.0
    for m in (2, 3):
        top = T.random_state("nonrel-top", m, tau=tau, seed=8)
        basis = build_basis(m).stack
        g = T.GaudinState(m, basis * top.coords[:, None, None], tau)
        red_err = max(red_err, float(np.max(np.abs(T.rhs_gaudin(g) - basis * T.rhs_nonrel(top)[:, None, None]))))
    per_err = 0.0
    for z in PROBES:
        base = T.lax_pair(st, z)[0]
        for shift in (n, n * tau):
            per_err = max(per_err, float(np.max(np.abs(T.lax_pair(st, z + shift)[0] - base))))
    passed = res_err < 1e-8 and red_err < 1e-12 and per_err < 1e-9
    record_criterion(7, passed, f"residue {res_err:.1e}, reduction {red_err:.1e}, periodicity {per_err:.1e}")
    assert passed


def test_criterion_8_equivalences():
    sub_err = 0.0
    for n in (2, 3):
        st = T.random_state("rel-top", n, tau=0.2 + 1.1j, seed=9)
        w = T.eta_weights(st.eta, n, st.tau)
        sub_err = max(sub_err, float(np.max(np.abs(T.rhs_nonrel(T.eta_substitution(st)) - T.rhs_rel(st) / w))))
    z_pair = (0.31 + 0.17j, -0.12 + 0.43j)
    form_err = 0.0
    for n in (2, 3):
        top = T.random_state("nonrel-top", n, tau=1j, seed=10)
        rel = T.random_state("rel-top", n, tau=1j, seed=10)
        mat = T.random_state("matrix-rel-top", n, 2, tau=1j, seed=10, z2=True)
        for z in z_pair:
            form_err = max(form_err,
                           np.max(np.abs(T.trace_form_lax(top, z, "L") - n * T.lax_pair(top, z)[0])),
                           np.max(np.abs(T.trace_form_lax(rel, z, "L") - n * T.lax_pair(rel, z)[0])),
                           np.max(np.abs(T.trace_form_lax(rel, z, "M") - n * T.lax_pair(rel, z)[1])),
                           np.max(np.abs(T.trace_form_lax(mat, z, "L") - n * T.lax_pair(mat, z)[0])))
            diff = T.trace_form_lax(top, z, "M") - n * T.lax_pair(top, z)[1]
            form_err = max(form_err, np.max(np.abs(diff - diff[0, 0] * np.eye(n))))
        form_err = max(form_err, np.max(np.abs(T.trace_form_lax(top, None, "J") - n * T.elliptic_inertia(top))))
        expected = n * (T.elliptic_inertia(rel) + K.e1(rel.eta, 1j) * rel.coords[0] * np.eye(n))
        form_err = max(form_err, np.max(np.abs(T.trace_form_lax(rel, None, "J") - expected)))
    passed = sub_err < 1e-12 and form_err < 1e-10
    record_criterion(8, passed, f"eta-substitution {sub_err:.1e}, trace forms {form_err:.1e}")
    assert passed

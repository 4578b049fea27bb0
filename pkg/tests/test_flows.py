import io
import math

import numpy as np
import pytest

from etop import flows as F
from etop import kernel as K
from etop import tops as T
from etop.errors import StepRejected

PATH = F.TauPath(1j, 0.2 + 1.2j)
# real Euler top in Pauli coordinates
EULER = T.TopState(2, T.gyro_to_modes(np.array([0.3, -0.2, 0.25])).reshape(4), 1j, traceless=False)


def scaled(st, factor):
    return F._unchecked(st, np.asarray(st.coords) * factor)


class TestAutonomous:
    def test_euler_top_casimir(self):
        traj = F.integrate_autonomous(EULER, 0.0, 1.0, 1e-3)
        cas = [np.sum(T.modes_to_gyro(s.coords) ** 2) for s in traj.states]
        assert max(abs(c - cas[0]) for c in cas) < 1e-12

    def test_n3_invariants(self):
        st = scaled(T.random_state("nonrel-top", 3, tau=1j, seed=3), 0.1)
        traj = F.integrate_autonomous(st, 0.0, 1.0, 1e-3)
        assert traj.drift("inv") < 1e-6

    def test_zero_state_fixed(self):
        st = T.TopState(3, np.zeros(9, dtype=complex), 1j)
        traj = F.integrate_autonomous(st, 0.0, 1.0, 0.1)
        assert np.all(np.asarray(traj.final.coords) == 0)

    def test_rk4_order(self):
        ref = np.asarray(F.integrate_autonomous(EULER, 0, 1, 1e-4, probe_z=()).final.coords)
        errs = [np.max(np.abs(np.asarray(F.integrate_autonomous(EULER, 0, 1, h, probe_z=()).final.coords) - ref))
                for h in (0.02, 0.01)]
        assert 12 < errs[0] / errs[1] < 20

    def test_z2_preserved(self):
        st = scaled(T.random_state("nonrel-top", 3, tau=1j, seed=5, z2=True), 0.1)
        traj = F.integrate_autonomous(st, 0.0, 1.0, 0.02)
        assert traj.max_diagnostic("z2") < 1e-10

    def test_matrix_zero_mode_preserved(self):
        st = scaled(T.random_state("matrix-top", 2, 2, tau=1j, seed=6, z2=True), 0.2)
        traj = F.integrate_autonomous(st, 0.0, 1.0, 0.02)
        assert traj.max_diagnostic("zero") < 1e-10

    def test_bad_step(self):
        st = T.random_state("nonrel-top", 2, tau=1j, seed=1)
        with pytest.raises(ValueError):
            F.integrate_autonomous(st, 0, 1, 0)
        with pytest.raises(ValueError):
            F.integrate_autonomous(st, 1, 0, 0.1)

    def test_blowup_rejected(self):
        st = F._unchecked(T.random_state("nonrel-top", 3, tau=1j, seed=2),
                          np.asarray(T.random_state("nonrel-top", 3, tau=1j, seed=2).coords) * 1e150)
        with pytest.raises(StepRejected):
            F.integrate_autonomous(st, 0, 1, 0.5, probe_z=())


class TestSpectral:
    def test_first_invariant_vanishes(self):
        st = T.random_state("nonrel-top", 3, tau=1j, seed=4)
        assert abs(F.spectral_invariants(st, 0.3 + 0.2j)[0]) < 1e-12

    def test_kmax_bound(self):
        st = T.random_state("nonrel-top", 2, tau=1j, seed=4)
        with pytest.raises(ValueError):
            F.spectral_invariants(st, 0.3, kmax=3)

    def test_gaudin_double_poles(self):
        # tr L^2 has double poles at the marked points, none at 0 for traceless residues
        n = 2
        st = T.random_state("gaudin", n, tau=1j, seed=7, z2=True)
        centre = n * K.omega((1, 0), n, 1j)
        small = [abs(F.spectral_invariants(st, centre + e, 2)[1]) * e**2 for e in (1e-3, 5e-4)]
        assert abs(small[0] - small[1]) / abs(small[1]) < 1e-2
        assert small[1] > 1e-6


class TestIsomonodromic:
    @pytest.mark.parametrize("kind,n,m", [("matrix-top", 2, 1), ("matrix-top", 2, 2), ("pvi", 2, 2), ("gaudin", 2, 1)])
    def test_monodromy_along_path(self, kind, n, m):
        st = scaled(T.random_state(kind, n, m, tau=1j, seed=8, z2=kind != "pvi"), 0.2)
        traj = F.integrate_isomonodromic(st, PATH, 0.05, record_every=5)
        assert traj.max_diagnostic("residual") < 1e-10
        assert abs(traj.final.tau - PATH.tau1) < 1e-15

    def test_zero_velocity_control(self):
        st = T.random_state("pvi", 2, 2, tau=1j, seed=9)
        zero = np.zeros_like(np.asarray(st.coords))
        assert F.monodromy_residual(st, zero, [0.31 + 0.17j, -0.2 + 0.3j]) > 1e-3

    def test_autonomous_gyrostat_not_isomonodromic(self):
        st = T.random_state("gyrostat", 2, tau=1j, seed=9)
        assert F.monodromy_residual(st, T.rhs(st), 0.31 + 0.17j) > 1e-3

    def test_m1_matches_scalar_gyrostat(self):
        st = scaled(T.random_state("pvi", 2, 1, tau=1j, seed=10), 0.2)
        final = F.integrate_isomonodromic(st, PATH, 0.02, w_samples=()).final
        scalar = F.gyrostat_scalar(np.asarray(st.coords).reshape(3), st.nu, PATH, 0.02)
        assert np.max(np.abs(np.asarray(final.coords).reshape(3) - scalar)) < 1e-12

    def test_constant_path(self):
        st = T.random_state("pvi", 2, 2, tau=1j, seed=11)
        traj = F.integrate_isomonodromic(st, F.TauPath(1j, 1j), 0.1)
        assert len(traj.states) == 1
        assert np.array_equal(traj.final.coords, st.coords)

    def test_path_in_upper_half_plane(self):
        with pytest.raises(Exception):
            F.TauPath(1j, -0.5j)
        assert math.isclose(PATH.length, abs(0.2 + 0.2j))


class TestPainleve:
    def test_free_motion(self):
        traj = F.pvi_scalar(0.1 + 0.2j, 0.3, np.zeros(4), PATH, 0.1)
        expected = 0.1 + 0.2j + 0.3 * PATH.velocity
        assert abs(traj.final[0] - expected) < 1e-13
        assert abs(traj.final[1] - 0.3) < 1e-15

    def test_initial_acceleration(self):
        nu = np.array([0.4, 0.3, 0.2, 0.1])
        u0 = 0.21 + 0.13j
        y = np.array([u0, 0.0])
        ds = 1e-4
        path = F.TauPath(1j, 1j + ds)
        traj = F.pvi_scalar(u0, 0.0, nu, path, 1.0)
        w = [0.0, 0.5, 0.5j, 0.5 + 0.5j]
        force = sum(n**2 * K.wp_prime(u0 + wa, 1j) for n, wa in zip(nu, w))
        assert abs(traj.final[1] / ds - force) < 1e-3 * abs(force)
        assert y[1] == 0


class TestCsv:
    def test_header_and_rows(self):
        st = T.random_state("nonrel-top", 2, tau=1j, seed=12)
        traj = F.integrate_autonomous(scaled(st, 0.1), 0.0, 0.1, 0.05)
        buf = io.StringIO()
        F.write_trajectory_csv(traj, buf, time_label="t")
        lines = buf.getvalue().strip().split("\n")
        header = lines[0].split(",")
        assert header[0] == "t" and header[-1] == "residual"
        assert "alpha_0_1_re" in header and "inv_k2_im" in header
        assert len(lines) == 1 + len(traj.states)
        assert all(len(l.split(",")) == len(header) for l in lines[1:])

import numpy as np
import pytest

from etop import kernel as K
from etop import rmatrix as Rm
from etop.algebra import TensorOperator, permutation
from etop.errors import PoleProximity, UnknownIdentity

TAU = 1j
H, Z = 0.11, 0.23 + 0.31j


def spec(n=2, m=1, tau=TAU):
    return Rm.RMatrixSpec(n, m, tau)


def close(a, b, tol=1e-10):
    return Rm.rel_residual(a, b) < tol


def test_unitarity_at_spec_point():
    s = spec()
    lhs = Rm.R(H, Z, s) @ Rm.R(H, -Z, s).swap()
    scalar = 4 * (K.wp(2 * H, TAU) - K.wp(Z, TAU))
    assert close(lhs.data, scalar * np.eye(4))


def test_skew_symmetry_at_spec_point():
    s = spec()
    assert close(Rm.R(H, Z, s).data, -Rm.R(-H, -Z, s).swap().data)


def test_n1_is_kronecker():
    s = spec(1)
    assert close(Rm.R(H, Z, s).data[0, 0], K.kronecker(Z, H, TAU), 1e-14)
    assert close(Rm.dR_dhbar(H, Z, s).data[0, 0], K.kronecker_du(Z, H, TAU), 1e-14)


def test_m_closed_form():
    s = spec()
    z = 0.3 + 0.2j
    r = Rm.classical_r(z, s).data
    alt = 0.5 * (r @ r - 4 * K.wp(z, TAU) * np.eye(4))
    assert close(Rm.m_coeff(z, s).data, alt)
    assert close(Rm.m_coeff_alt(z, s).data, alt)


def test_classical_symmetries():
    s = spec(3)
    z = 0.27 + 0.41j
    assert close(Rm.classical_r(z, s).data, -Rm.classical_r(-z, s).swap().data)
    assert close(Rm.m_coeff(z, s).data, Rm.m_coeff(-z, s).swap().data)


def test_hbar_expansion_by_richardson():
    s = spec()
    z = 0.3 + 0.2j
    r = Rm.classical_r(z, s).data

    def approx(h):
        return (Rm.R(h, z, s).data - np.eye(4) / h - r) / h

    h = 1e-4
    rich = 2 * approx(h / 2) - approx(h)
    # cancellation in R - 1/h costs about eps/h^2 of accuracy here
    assert close(rich, Rm.m_coeff(z, s).data, 1e-4)


def test_dr_dhbar_finite_difference():
    s = spec()
    step = 1e-5
    fd = (Rm.R(H + step, Z, s).data - Rm.R(H - step, Z, s).data) / (2 * step)
    assert close(Rm.dR_dhbar(H, Z, s).data, fd, 1e-6)


def test_dr_dtau_finite_difference():
    s = spec(tau=0.1 + 1.1j)
    step = 1e-5
    plus = Rm.R(H, Z, spec(tau=0.1 + 1.1j + step)).data
    minus = Rm.R(H, Z, spec(tau=0.1 + 1.1j - step)).data
    assert close(Rm.dR_dtau(H, Z, s).data, (plus - minus) / (2 * step), 1e-6)


def test_z_pole_structure():
    s = spec()
    p = permutation(2).data
    small = 1e-4
    r_reg = Rm.classical_r(small, s).data - 2 * p / small
    assert close(r_reg, Rm.r0(s).data, 1e-3)
    big_reg = Rm.R(H, small, s).data - 2 * p / small
    assert close(big_reg, Rm.R0(H, s).data, 1e-3)


def test_r0_skew():
    s = spec(3)
    assert close(Rm.r0(s).data, -Rm.r0(s).swap().data)
    assert close(Rm.R0(H, s).data, -Rm.R0(-H, s).swap().data)


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("identity", sorted(Rm.CATALOGUE))
def test_catalogue_scalar(identity, n):
    rep = Rm.verify_identity(identity, spec(n, 1, 0.2 + 1.1j), sample_count=8, seed=3)
    assert rep.passed, rep


ATTAINABLE_M2 = ["QYBE", "UNITARITY", "AYBE", "SKEW", "SKEW-CLASSICAL", "DEGEN-931",
                 "DEGEN-932", "DEGEN-933", "HEAT-R", "EXPANSION", "EXT-QYBE", "EXT-UNIT",
                 "EXT-AYBE", "EXT-EXPANSION", "FAILURE-TERM"]
CLASSICAL_M2 = ["CYBE", "DEGEN-26", "DEGEN-32", "M-IDENT-934", "M-IDENT-935"]


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("identity", ATTAINABLE_M2)
def test_catalogue_extension(identity, n):
    rep = Rm.verify_identity(identity, spec(n, 2), sample_count=5, seed=3)
    assert rep.passed, rep


@pytest.mark.parametrize("identity", CLASSICAL_M2)
def test_classical_identities_break_under_extension(identity):
    # the extended R has leading coefficient 1 (x) 1 (x) P~, not the identity
    rep = Rm.verify_identity(identity, spec(2, 2), sample_count=3, seed=3)
    assert not rep.passed
    assert rep.max_rel_residual > 0.1


def test_ext_expansion_negative_control():
    rep = Rm.verify_identity("EXT-EXPANSION", spec(2, 2), sample_count=3)
    assert rep.passed
    assert rep.details["identity_distance"] > 0.5


def test_aybe_n1_is_fay():
    rep = Rm.verify_identity("AYBE", spec(1), sample_count=30, tol=1e-10)
    assert rep.passed


def test_failure_term_contraction_control():
    s = spec(2, 2)
    assert Rm.failure_negative_control(s, seed=1) > 1e-2
    rep = Rm.verify_identity("FAILURE-TERM", s, sample_count=3)
    assert rep.passed
    assert rep.details["unconstrained_contraction"] > 1e-2


def test_verify_errors():
    with pytest.raises(UnknownIdentity):
        Rm.verify_identity("NOPE", spec())
    with pytest.raises(ValueError):
        Rm.verify_identity("QYBE", spec(), sample_count=0)


def test_report_serialisation():
    rep = Rm.verify_identity("qybe", spec(), sample_count=2, seed=9)
    d = rep.to_dict()
    assert set(d) == {"id", "N", "M", "samples", "max_rel_residual", "tolerance", "passed", "seed"}
    assert d["id"] == "QYBE" and d["seed"] == 9
    assert d["passed"] == (d["max_rel_residual"] < d["tolerance"])


def test_report_is_deterministic():
    a = Rm.verify_identity("AYBE", spec(3), sample_count=4, seed=5)
    b = Rm.verify_identity("AYBE", spec(3), sample_count=4, seed=5)
    assert a.max_rel_residual == b.max_rel_residual


def test_pole_proximity():
    with pytest.raises(PoleProximity):
        Rm.R(H, 0.0, spec())

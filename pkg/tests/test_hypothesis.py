import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pqlap.energy import ProblemSpec
from pqlap.errors import HypothesisViolation, InvalidArgument, SpecInconsistency
from pqlap.hypothesis import (_compare, build_report, check_H, check_resonance, estimate_limits,
                              fr_check, geometry_check)
from pqlap.mesh import build_interval_mesh
from pqlap.nonlinearity import NonlinearitySpec
from pqlap.quasi_eigen import eta_sequence, nu_sequence

GRIDS = [(np.logspace(-8, -2, 25), np.logspace(2, 8, 25)),
         (np.logspace(-6, -3, 13), np.logspace(3, 6, 13)),
         (np.logspace(-10, -4, 31), np.logspace(4, 10, 31))]


# -- limits ----------------------------------------------------------------------------

@pytest.mark.parametrize("grids", GRIDS, ids=["default", "narrow", "wide"])
def test_estimate_limits_builtins(grids):
    est = estimate_limits(NonlinearitySpec("rational_decay", ell0=5.0, s=2.0), 4.0, grids)
    assert est.ell0_estimate == pytest.approx(5.0, abs=1e-3) and est.infinity_verdict == "decays-to-0"
    est = estimate_limits(NonlinearitySpec("gaussian_decay", ell0=-3.0), 4.0, grids)
    assert est.ell0_estimate == pytest.approx(-3.0, rel=1e-2) and est.infinity_verdict == "decays-to-0"
    est = estimate_limits(NonlinearitySpec("zero"), 4.0, grids)
    assert est.ell0_estimate == 0.0 and est.infinity_verdict == "decays-to-0"
    est = estimate_limits(NonlinearitySpec("power_resonant", mu=1.0, r=2.0), 4.0, grids)
    assert est.ell0_kind == "-inf" and est.ell0_estimate == -math.inf
    assert est.log_slope_0 == pytest.approx(2.0 - 4.0, abs=1e-6)
    assert est.infinity_verdict == "decays-to-0"


def test_estimate_limits_slow_decay():
    # ratio 5 / (1 + t^0.5): slow convergence at 0, still within 1%
    est = estimate_limits(NonlinearitySpec("rational_decay", ell0=5.0, s=0.5), 4.0)
    assert est.ell0_estimate == pytest.approx(5.0, rel=1e-2)


def test_estimate_limits_mismatch():
    lying = NonlinearitySpec("custom", ell0=1.0, f=lambda x, t: 2.0 * t ** 3, F=lambda x, t: t ** 4 / 2)
    with pytest.raises(SpecInconsistency):
        estimate_limits(lying, 4.0)
    honest = NonlinearitySpec("custom", ell0=2.0, f=lambda x, t: 2.0 * t ** 3, F=lambda x, t: t ** 4 / 2)
    assert estimate_limits(honest, 4.0).infinity_verdict == "nonzero-limit"


# -- resonance -------------------------------------------------------------------------

SPECTRUM = [73.06, 1165.0, 5900.0]


def test_resonance_examples():
    v = check_resonance(2 * SPECTRUM[0], SPECTRUM, NonlinearitySpec("zero"), 4.0)
    assert not v["possibly_resonant"] and v["fr"] is None
    v = check_resonance(SPECTRUM[0], SPECTRUM, NonlinearitySpec("power_resonant", mu=1.0, r=2.0), 4.0)
    assert v["possibly_resonant"] and v["fr"]["holds"]
    with pytest.raises(HypothesisViolation) as exc:
        check_resonance(SPECTRUM[0], SPECTRUM, NonlinearitySpec("zero"), 4.0)
    assert exc.value.verdict["possibly_resonant"]


def test_fr_check_decaying_family_fails():
    # f t - q F tends to a constant for the decaying families
    assert not fr_check(NonlinearitySpec("gaussian_decay", ell0=-3.0), 4.0)["holds"]
    assert fr_check(NonlinearitySpec("power_resonant", mu=2.0, r=3.0), 4.0)["holds"]


# -- (H-) / (H+) ------------------------------------------------------------------------

LAM = 73.06
ETA0 = [LAM, 1165.0, 5900.0, 18600.0]
NU0 = [LAM, 1180.0, 6000.0]
NU1 = [LAM * 1.2, 1300.0, 6400.0]


def test_check_H_desk_example():
    r = check_H(-1.5 * LAM, 2.0 * LAM, 2.0, 4.0, ETA0, NU0)
    assert r["feasible"]["H-"] == [(1, 1)] and r["predicted_pairs"] == 1
    assert r["feasibility_status"]["H-:1,1"] == "verified"
    assert all(s["tag"] == "upper-bound" for s in r["spectrum"]["eta0"])


def test_check_H_below_lambda1():
    r = check_H(-1.5 * LAM, 0.5 * LAM, 2.0, 4.0, ETA0, NU0)
    assert r["feasible"]["H-"] == [] and r["predicted_pairs"] == 0 and r["best"] is None


def test_check_H_ell0_zero_never_compatible():
    for ell_inf in (0.5 * LAM, LAM, 2 * LAM, 100 * LAM):
        r = check_H(0.0, ell_inf, 2.0, 4.0, ETA0, NU0, NU1, case="H-")
        assert r["feasible"]["H-"] == []


@given(ell_inf=st.floats(0.0, 1e5), nus=st.lists(st.floats(1.0, 1e5), min_size=1, max_size=4),
       etas=st.lists(st.floats(1.0, 1e5), min_size=1, max_size=4))
@settings(max_examples=100, deadline=None)
def test_check_H_ell0_zero_property(ell_inf, nus, etas):
    nus, etas = sorted(nus), sorted(etas)
    if nus[0] < etas[0]:
        return  # the chain eta_h <= nu_k is a precondition of the property
    r = check_H(0.0, ell_inf, 2.0, 4.0, etas, nus, case="H-")
    pairs = [(h, k) for h, k in r["feasible"]["H-"] if nus[k - 1] >= etas[h - 1]]
    assert pairs == []


@given(ell0=st.floats(-1e4, 1e4), ell_inf=st.floats(0, 1e4))
@settings(max_examples=100, deadline=None)
def test_check_H_purity(ell0, ell_inf):
    a = check_H(ell0, ell_inf, 2.0, 4.0, ETA0, NU0, NU1)
    b = check_H(ell0, ell_inf, 2.0, 4.0, ETA0, NU0, NU1)
    assert a == b
    # re-evaluating the inequalities from the stored spectrum reproduces feasibility
    eta = [s["value"] for s in a["spectrum"]["eta0"]]
    nu0 = [s["value"] for s in a["spectrum"]["nu0"]]
    nu1 = [s["value"] for s in a["spectrum"]["nu1"]]
    for h, k in a["feasible"].get("H-", []):
        assert 0 < ell0 + ell_inf < eta[h - 1] and ell_inf > nu0[k - 1]
    for h, k in a["feasible"].get("H+", []):
        assert ell_inf < eta[h - 1] and ell_inf + ell0 > 2.0 * nu1[k - 1]
    if a["predicted_pairs"] >= 1:
        assert a["best"] is not None and a["best"][1] >= a["best"][0]


def test_check_H_plus():
    r = check_H(5 * LAM, 0.5 * LAM, 2.0, 4.0, ETA0, NU0, NU1)
    assert r["cases"] == ["H+"] and (1, 1) in r["feasible"]["H+"]
    r = check_H(math.inf, 0.5 * LAM, 2.0, 4.0, ETA0, NU0)
    assert r["unbounded"] and r["predicted_pairs"] == math.inf


def test_check_H_minus_infinity_ell0():
    r = check_H(-math.inf, 2.0 * LAM, 2.0, 4.0, ETA0, NU0)
    assert (1, 1) in r["feasible"]["H-"]


def test_check_H_rejects_wrong_case():
    with pytest.raises(InvalidArgument):
        check_H(1.0, LAM, 2.0, 4.0, ETA0, NU0, NU1, case="H-")
    with pytest.raises(InvalidArgument):
        check_H(-1.0, LAM, 2.0, 4.0, ETA0, NU0, NU1, case="H+")


def test_check_H_eta1_alternative_is_separate():
    eta1 = [v * 1.3 for v in ETA0]
    a = check_H(-1.5 * LAM, 2.0 * LAM, 2.0, 4.0, ETA0, NU0)
    b = check_H(-1.5 * LAM, 2.0 * LAM, 2.0, 4.0, ETA0, NU0, eta1=eta1)
    assert a["feasible"] == b["feasible"] and b["alternative_eta1"] and not a["alternative_eta1"]


def test_compare_directions():
    # ell_inf > nu_hat: the true nu is below its upper bound, so this is safe
    assert _compare("x", 2.0, ">", 1.0, "nu upper bound", 1e-8)["status"] == "verified"
    # x < eta_hat with a tiny margin cannot be trusted
    c = _compare("x", 1.0, "<", 1.0 + 5e-8, "eta upper bound", 1e-8)
    assert c["holds"] and c["status"] == "unverified-direction" and not c["conservative"]
    assert _compare("x", 1.0, "<", 1.0 + 1e-9, "eta upper bound", 1e-8)["status"] == "indeterminate"
    assert _compare("x", 1.0, "<", 0.5, None, 1e-8)["status"] == "violated"


def test_build_report_rejects_growth():
    spec = NonlinearitySpec("custom", ell0=1.0, f=lambda x, t: t ** 3, F=lambda x, t: t ** 4 / 4)
    with pytest.raises(HypothesisViolation):
        build_report(spec, 2 * LAM, 2.0, 4.0, ETA0, NU0)


def test_report_serializes():
    rep = build_report(NonlinearitySpec("gaussian_decay", ell0=-1.5 * LAM), 2 * LAM, 2.0, 4.0, ETA0, NU0)
    d = rep.to_dict()
    assert d["predicted_pairs"] == 1 and "predicted pairs" in rep.summary()
    rep = build_report(NonlinearitySpec("power_resonant", mu=1.0, r=2.0), LAM, 2.0, 4.0, ETA0, NU0)
    assert rep.to_dict()["ell0_declared"] == "-inf"


# -- sampled geometry --------------------------------------------------------------------

@pytest.fixture(scope="module")
def geo():
    mesh = build_interval_mesh(48)
    eta = eta_sequence(mesh, 0.0, None, 4.0, 2)
    nu = nu_sequence(mesh, 0.0, None, 4.0, 1, eta)
    lam = eta[0].value
    desk = ProblemSpec(2.0, 4.0, 2 * lam, NonlinearitySpec("gaussian_decay", ell0=-1.5 * lam), mesh)
    zero = ProblemSpec(2.0, 4.0, 0.0, NonlinearitySpec("zero"), mesh)
    return desk, zero, eta, [nu[0].phi]


def test_geometry_desk_detected(geo):
    desk, _, eta, V = geo
    c0, c_inf, rep = geometry_check(desk, 1, 1, eta, V, n_samples=40)
    assert rep["detected"] and c0 > 0 and c_inf > c0
    assert rep["rho"] is not None and 1e-3 <= rep["rho"] <= 1.0


def test_geometry_zero_not_detected(geo):
    _, zero, eta, V = geo
    c0, c_inf, rep = geometry_check(zero, 1, 1, eta, V, n_samples=20)
    assert c_inf is None and not rep["rays_diverge"]
    assert rep["note"] == "geometry-not-detected"


def test_geometry_monotone_in_samples(geo):
    desk, _, eta, V = geo
    prev = None
    for n in (5, 15, 40):
        c0, c_inf, _ = geometry_check(desk, 1, 1, eta, V, n_samples=n, seed=3)
        if prev is not None:
            assert c0 <= prev[0] and c_inf >= prev[1]
        prev = (c0, c_inf)


def test_geometry_rejects_short_basis(geo):
    desk, _, eta, V = geo
    with pytest.raises(InvalidArgument):
        geometry_check(desk, 1, 2, eta, V)
    with pytest.raises(InvalidArgument):
        geometry_check(desk, 1, 1, eta, V, case="H0")

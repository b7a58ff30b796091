import numpy as np
import pytest

from ctrl_dos import numerics
from ctrl_dos.analysis import (DecayReport, SweepResult, decay_coefficient, evaluate_lambda,
                               find_lambda_bar, interpolate_lambda_for_C, lambda_grid,
                               lambda_min_gram_inv, mu, sweep)
from ctrl_dos.controller import closed_loop, jordan_chain, synthesize_gain
from ctrl_dos.errors import InvalidInput, NumericalFailure
from ctrl_dos.plant import JammerProfile
from ctrl_dos.trigger import compute_tau

from mp_oracle import decay_terms, rel


def test_mu_values():
    m = mu(np.array([[-2.0, 0.0], [0.0, -1.0]]))
    assert m.mu_raw == pytest.approx(-1.0)
    assert m.mu_M == pytest.approx(2.0)


def test_mu_bounds_exponential():
    rng = np.random.default_rng(11)
    for _ in range(20):
        M = rng.standard_normal((3, 3))
        assert numerics.spectral_norm(numerics.expm(M)) <= np.exp(mu(M).mu_raw) * (1 + 1e-12)


def test_gram_eigenvalue_forms_agree(canon3):
    lam = 20.0
    jd = jordan_chain(closed_loop(canon3, synthesize_gain(3, lam, canon3.a)), lam)
    Ti = jd.T_lambda_inv
    direct = np.linalg.eigvalsh(Ti.T @ Ti)[0]
    assert lambda_min_gram_inv(jd) == pytest.approx(direct, rel=1e-8)


@pytest.mark.parametrize("lam,toff", [(50.0, 0.1), (1500.0, 0.1), (210.0, 0.5)])
def test_decay_coefficient_vs_mpmath(canon3, lam, toff):
    g = synthesize_gain(3, lam, canon3.a)
    jd = jordan_chain(closed_loop(canon3, g), lam)
    j = JammerProfile(1.0, toff)
    r = decay_coefficient(canon3, g, jd, compute_tau(canon3, g, 0.1), j, 0.1)
    tau, C1, C2, C3 = decay_terms(canon3.a, lam, 0.1, 1.0, toff)
    assert rel(r.tau_lambda, tau) < 1e-9
    assert rel(r.C1, C1) < 1e-9 and rel(r.C2, C2) < 1e-9 and rel(r.C3, C3) < 1e-9
    assert r.C == pytest.approx(r.C1 * (r.C2 + r.C3), rel=1e-15)


def test_c3_half_exponent_variant(canon3, jammer90):
    lam = 300.0
    g = synthesize_gain(3, lam, canon3.a)
    jd = jordan_chain(closed_loop(canon3, g), lam)
    tau = compute_tau(canon3, g, 0.1)
    full = decay_coefficient(canon3, g, jd, tau, jammer90, 0.1)
    half = decay_coefficient(canon3, g, jd, tau, jammer90, 0.1, c3_half_exponent=True)
    assert half.C3 > full.C3
    assert rel(half.C3, decay_terms(canon3.a, lam, 0.1, 1.0, 0.1, c3_half_exponent=True)[3]) < 1e-9


def test_decay_coefficient_overflow_is_reported(canon3):
    lam = 10.0
    g = synthesize_gain(3, lam, canon3.a)
    jd = jordan_chain(closed_loop(canon3, g), lam)
    with pytest.raises(NumericalFailure):
        decay_coefficient(canon3, g, jd, 1e-4, JammerProfile(1000.0, 0.5), 0.1)


def test_tau_stop_at_f_changes_tau(canon3, jammer90):
    base = evaluate_lambda(100.0, canon3, jammer90, 0.1)
    alt = evaluate_lambda(100.0, canon3, jammer90, 0.1, tau_stop_at_F=True)
    assert alt.tau_lambda != base.tau_lambda
    assert alt.C1 == base.C1 and alt.C2 == base.C2


def _reports(Cs):
    return [DecayReport(lam=float(10 * (i + 1)), tau_lambda=0.0, C1=0.0, C2=0.0, C3=0.0, C=c)
            for i, c in enumerate(Cs)]


def test_find_lambda_bar_uses_trailing_run():
    assert find_lambda_bar(_reports([2.0, 0.5, 3.0, 0.9, 0.4])) == 40.0
    assert find_lambda_bar(_reports([0.5, 0.4])) == 10.0
    assert find_lambda_bar(_reports([0.5, 1.2])) is None
    assert find_lambda_bar(_reports([1.0])) is None


def test_interpolation_inverts_tail():
    res = SweepResult(reports=tuple(_reports([5.0, 3.0, 1.5, 0.5])), lambda_bar=40.0)
    assert interpolate_lambda_for_C(res, 1.0) == pytest.approx(35.0)
    assert interpolate_lambda_for_C(res, 3.0) == 20.0
    with pytest.raises(InvalidInput):
        interpolate_lambda_for_C(res, 10.0)


def test_lambda_grid():
    g = lambda_grid(10, 2000, 10)
    assert len(g) == 200 and g[0] == 10.0 and g[-1] == 2000.0
    assert lambda_grid(0.01, 10, 0.01)[-1] == 10.0
    assert lambda_grid(5, 5, 1) == [5.0]
    with pytest.raises(InvalidInput):
        lambda_grid(1, 2, 0)


def test_sweep_single_point(canon3, jammer50):
    res = sweep(canon3, jammer50, 0.1, [500.0])
    assert len(res.reports) == 1 and res.lambda_bar == 500.0


def test_sweep_validation(canon3, jammer90):
    with pytest.raises(InvalidInput):
        sweep(canon3, jammer90, 0.1, [])
    with pytest.raises(InvalidInput):
        sweep(canon3, jammer90, 0.1, [20.0, 10.0])
    with pytest.raises(InvalidInput):
        sweep(canon3, jammer90, 0.1, [1.5, 10.0])


def test_parallel_sweep_is_identical(canon3, jammer90):
    grid = lambda_grid(100, 400, 50)
    serial = sweep(canon3, jammer90, 0.1, grid)
    parallel = sweep(canon3, jammer90, 0.1, grid, jobs=2)
    assert serial == parallel

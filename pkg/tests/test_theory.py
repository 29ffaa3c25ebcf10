import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agsam.optim import ResearchEtaConfig, StepTrace, research_eta_step
from agsam.params import ParamVector
from agsam.quadratic import Quadratic, quadratic_loss
from agsam.theory import (BoundInputs, HvpOracle, congruence_suite, monotonicity_cube, monotonicity_suite,
                          pac_bayes_complexity, quadratic_oracle, random_congruence_instance, theorem2_caps,
                          verify_congruence)

# reference values evaluated at 50 significant digits
BASE = dict(loss_bound=1.0, n_val=1000, model_size=10, rho=0.05, theta_norm_sq=100.0, delta=0.1)


def test_bound_at_zero_norm():
    val = pac_bayes_complexity(BoundInputs(**{**BASE, "theta_norm_sq": 0.0}))
    assert val == pytest.approx(0.89466986488751902762, rel=1e-14)
    assert val == pytest.approx(4 / math.sqrt(1000) * (2 * math.sqrt(math.log(1010 / 0.1)) + 1), rel=1e-15)


def test_bound_reference_points():
    base = pac_bayes_complexity(BoundInputs(**BASE))
    assert base == pytest.approx(2.2690938283835441487, rel=1e-14)
    doubled_n = pac_bayes_complexity(BoundInputs(**{**BASE, "n_val": 2000}))
    assert doubled_n == pytest.approx(1.6262059753139414131, rel=1e-14)
    bigger_k = pac_bayes_complexity(BoundInputs(**{**BASE, "model_size": 100}))
    assert bigger_k == pytest.approx(5.1055168167334039975, rel=1e-14)
    assert doubled_n < base < bigger_k


def test_bound_input_validation():
    for bad in ({"delta": 1.0}, {"n_val": 0}, {"rho": 0.0}, {"theta_norm_sq": -1.0}, {"loss_bound": 0.0}):
        with pytest.raises(ValueError):
            BoundInputs(**{**BASE, **bad})


def test_monotonicity_suites_pass():
    results = monotonicity_suite()
    assert {r.axis for r in results} == {"n_val", "model_size", "loss_bound", "theta_norm_sq", "delta"}
    assert all(r.passed for r in results)
    assert all(len(r.values) >= 5 for r in results)
    passed, total = monotonicity_cube(5)
    assert passed == total == 375


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10**6), st.integers(1, 10**4), st.floats(1e-3, 10.0), st.floats(0.0, 1e6),
       st.floats(1e-4, 0.9), st.floats(0.01, 100.0))
def test_bound_monotone_property(n, k, rho, norm_sq, delta, loss_bound):
    base = dict(loss_bound=loss_bound, n_val=n, model_size=k, rho=rho, theta_norm_sq=norm_sq, delta=delta)
    f = lambda **kw: pac_bayes_complexity(BoundInputs(**{**base, **kw}))
    here = f()
    assert f(model_size=k + 1) > here
    assert f(loss_bound=loss_bound * 1.5) > here
    assert f(delta=delta / 2) > here
    assert f(theta_norm_sq=norm_sq * 2 + 1.0) > here


def _trace(gt, gv, theta=(1.0, 0.0)):
    gt, gv = ParamVector(np.array(gt, float)), ParamVector(np.array(gv, float))
    th = ParamVector(np.array(theta, float))
    return StepTrace(th, 0.0, math.nan, gt, th, gt, grad_v_pert=gv, theta_v=th)


def _oracle(ht, hv):
    return HvpOracle(lambda v: ParamVector(np.asarray(ht) @ v.values), lambda v: ParamVector(np.asarray(hv) @ v.values))


def test_caps_identity_hessian_parallel_gradients():
    caps = theorem2_caps(_trace([1, 0], [1, 0]), _oracle(np.eye(2), np.eye(2)))
    assert caps.eta1_cap == pytest.approx(1 / 12, rel=1e-15)
    assert caps.eta2_cap == pytest.approx(1 / 6, rel=1e-15)


def test_caps_orthogonal_gradients_are_zero():
    h = np.ones((2, 2))
    caps = theorem2_caps(_trace([1, 0], [0, 1]), _oracle(h, h))
    assert caps.eta1_cap == 0.0 and caps.eta2_cap == 0.0
    assert caps.bound_rhs == 0.0


def test_caps_zero_hessian_are_infinite():
    caps = theorem2_caps(_trace([1, 2], [3, 1]), _oracle(np.zeros((2, 2)), np.zeros((2, 2))))
    assert math.isinf(caps.eta1_cap) and math.isinf(caps.eta2_cap)


def test_eta1_cap_scales_inversely_with_hessian(rng):
    a = rng.standard_normal((4, 4))
    h = a + a.T
    tr = _trace(rng.standard_normal(4), rng.standard_normal(4), theta=np.zeros(4))
    base = theorem2_caps(tr, _oracle(h, h)).eta1_cap
    for lam in (0.5, 3.0, 40.0):
        assert theorem2_caps(tr, _oracle(lam * h, lam * h)).eta1_cap == pytest.approx(base / lam, rel=1e-12)


def test_caps_need_trace_fields():
    tr = _trace([1, 0], [1, 0])
    tr.grad_v_pert = None
    with pytest.raises(ValueError):
        theorem2_caps(tr, _oracle(np.eye(2), np.eye(2)))


def test_congruence_rhs_by_sign():
    pos = verify_congruence(_trace([1, 0], [2, 0]))
    assert pos.dot_before == 2.0 and pos.bound_rhs == 1.0 and pos.satisfied
    neg = verify_congruence(_trace([1, 0], [-2, 0]))
    assert neg.bound_rhs == -3.0 and neg.satisfied
    zero = verify_congruence(_trace([1, 0], [0, 1]))
    assert zero.bound_rhs == 0.0 and zero.satisfied


def test_identical_quadratics_keep_half_the_alignment():
    q = Quadratic(np.diag([2.0, 0.5]), np.zeros(2))
    theta = ParamVector(np.array([1.0, 0.0]))
    caps = theorem2_caps(research_eta_step(ResearchEtaConfig(0.0, 0.01, 0.1), theta, q, q, quadratic_loss)[1],
                         quadratic_oracle(q, q))
    _, tr = research_eta_step(ResearchEtaConfig(caps.eta1_cap / 2, 0.01, 0.1), theta, q, q, quadratic_loss)
    res = verify_congruence(tr)
    assert res.dot_after >= 0.5 * res.dot_before


def test_congruence_suite_all_satisfied():
    results = congruence_suite(100, seed=0)
    assert len(results) == 100
    assert {r.hessian_kind for r in results} == {"spd", "indefinite"}
    assert {r.dim for r in results} <= set(range(2, 11))
    bad = [r.describe() for r in results if not r.satisfied]
    assert not bad, bad
    for r in results:
        assert r.eta1 <= r.eta1_cap and r.eta2 <= r.eta2_cap


def test_instances_are_reproducible():
    a = random_congruence_instance(7, seed=3)
    b = random_congruence_instance(7, seed=3)
    assert a[0] == b[0] and np.array_equal(a[1].A, b[1].A)

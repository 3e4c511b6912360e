import math

import numpy as np
import pytest

from segpart.catalog import entry
from segpart.errors import ComponentCollapse, NegativeInput, NonConvergence
from segpart.partition import (PartitionOptions, beta_sweep, evaluate_I_beta, evaluate_I_infty, fit_gap_slope,
                               gamma, gamma_prime, gradient_I_beta, interaction, interaction_bound_check,
                               lambda_identity_check, max_overlap, minimize_I_beta, perturbed_start,
                               restricted_eigen_oracle, segregate, segregated_upper_bound)
from segpart.sphere import Field


def test_gamma_known_values():
    assert gamma(3, 12.0) == pytest.approx(3.0, rel=1e-15)
    assert gamma(2, 9.0) == 3.0
    assert gamma(3, 0.0) == 0.0
    assert gamma(3, 2.0) == pytest.approx(1.0, rel=1e-15)
    # small t stays accurate: gamma ~ t / (N - 2)
    assert gamma(3, 1e-14) == pytest.approx(1e-14, rel=1e-12)
    with pytest.raises(NegativeInput):
        gamma(3, -1.0)
    assert gamma_prime(3, 12.0) == pytest.approx(1 / 7)


def test_gradient_matches_finite_differences(dihedral2_small, rng):
    tr, mesh = dihedral2_small
    u = tr.witness.values + 0.05 * rng.random(tr.witness.values.shape)
    beta = 50.0
    val, g = gradient_I_beta(mesh, u, beta)
    assert val == pytest.approx(evaluate_I_beta(mesh, u, beta))
    d = rng.standard_normal(u.shape)
    eps = 1e-6
    fd = (evaluate_I_beta(mesh, u + eps * d, beta) - evaluate_I_beta(mesh, u - eps * d, beta)) / (2 * eps)
    assert abs(fd - np.sum(g * d)) < 1e-5 * max(1.0, abs(fd))


def test_witness_value_exact_on_circle(dihedral2_small):
    tr, mesh = dihedral2_small
    h = 2 * math.pi / mesh.n
    # positive parts of cos(2 theta) with nodes on vertices keep the discrete eigenvalue
    expected = 2 * math.sin(h) / h
    assert evaluate_I_infty(mesh, tr.witness) == pytest.approx(expected, rel=1e-10)
    assert evaluate_I_beta(mesh, tr.witness, 1e6) == pytest.approx(expected, rel=1e-10)


def test_I_infty_rejects_overlap(dihedral2_small):
    tr, mesh = dihedral2_small
    assert math.isinf(evaluate_I_infty(mesh, Field(mesh, tr.witness.values + 0.1)))


def test_minimizer_basics(dihedral1_small):
    tr, mesh = dihedral1_small
    f0 = perturbed_start(tr, mesh, tr.witness.values, 0, 0.01)
    r = minimize_I_beta(tr, mesh, 100.0, f0)
    assert r.residual <= 1e-9
    assert 0 < r.ell_beta < 1
    assert np.all(r.field.values >= 0)
    assert np.allclose(r.field.masses(), 1)
    assert all(b <= a + 1e-12 for a, b in zip(r.history, r.history[1:]))
    assert r.interaction == pytest.approx(interaction(mesh, r.field.values, 100.0))


def test_minimizer_errors(dihedral1_small):
    tr, mesh = dihedral1_small
    f0 = perturbed_start(tr, mesh, tr.witness.values, 0, 0.01)
    with pytest.raises(NegativeInput):
        minimize_I_beta(tr, mesh, -1.0, f0)
    with pytest.raises(NonConvergence):
        minimize_I_beta(tr, mesh, 100.0, f0, PartitionOptions(max_iters=2))
    r = minimize_I_beta(tr, mesh, 100.0, f0, PartitionOptions(max_iters=2, raise_on_nonconvergence=False))
    assert r.iterations == 2
    with pytest.raises(ComponentCollapse):
        minimize_I_beta(tr, mesh, 1.0, Field(mesh, np.zeros((2, mesh.n))))


def test_segregation_upper_bound(dihedral1_small):
    tr, mesh = dihedral1_small
    f0 = perturbed_start(tr, mesh, tr.witness.values, 0, 0.01)
    r = minimize_I_beta(tr, mesh, 400.0, f0)
    s = segregate(r.field)
    assert max_overlap(s.values) == 0
    up, _ = segregated_upper_bound(tr, mesh, r.field)
    assert r.ell_beta < up
    assert abs(up - 1) < 5e-3


def test_sweep_monotone_and_deterministic(dihedral1_small):
    tr, mesh = dihedral1_small
    betas = [10, 40, 160, 640]
    a = beta_sweep(tr, mesh, betas)
    assert all(x < y for x, y in zip(a.ell_betas, a.ell_betas[1:]))
    assert a.ell_betas[-1] < a.ell_upper
    assert abs(a.ell_upper - 1) < 5e-3
    assert fit_gap_slope(betas, a.ell_betas, a.ell_upper) < 0
    chk = interaction_bound_check(a.results)
    assert chk["interaction_decreasing_tail"]
    b = beta_sweep(tr, mesh, betas, workers=2)
    assert a.ell_betas == b.ell_betas
    assert lambda_identity_check(a.results[-1], 1.0, 2) < 1.0
    with pytest.raises(ValueError):
        beta_sweep(tr, mesh, [10, 5])


def test_spec_examples_intervals(dihedral1_small, xyz_small):
    # at beta = 400 the discrete values sit strictly below the limit and increase with beta
    for (tr, mesh), ell in ((dihedral1_small, 1.0), (xyz_small, 3.0)):
        vals = beta_sweep(tr, mesh, [100, 400], PartitionOptions(n_seeds=1)).ell_betas
        assert 0 < vals[0] < vals[1] < ell


@pytest.mark.parametrize("cid", ["dihedral2d(1)", "dihedral2d(3)", "xyz_r3"])
def test_beta_zero_oracle(cid):
    e = entry(cid)
    tr, mesh = e.make(e.build_mesh(n=240) if cid.startswith("dihedral") else None)
    assert abs(restricted_eigen_oracle(tr, mesh)) < 1e-6

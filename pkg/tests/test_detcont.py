import math
import warnings

import numpy as np
import pytest
import scipy.sparse as sp

from cqac.detcont import (
    BRANCH_POINT,
    FOLD,
    ContinuationSettings,
    bifurcation_summary,
    continue_branch,
    locate_singularity,
    newton_correct,
    parameter_regime,
    sample_branch,
    stability_eig,
    switch_branch,
    trivial_start,
)
from cqac.errors import ConvergenceError
from cqac.grid import assemble_laplacian, build_grid, jacobian, residual

from .conftest import nu_h


def test_newton_zero_is_fixed_point(default_grid):
    u = newton_correct(np.zeros(default_grid.J), 1.0, default_grid)
    assert np.array_equal(u, np.zeros(default_grid.J))


def test_newton_decays_to_zero_below_first_fold(default_grid):
    u = newton_correct(np.full(default_grid.J, 0.05), 0.5, default_grid)
    assert np.max(np.abs(u)) <= 1e-10


def test_newton_scalar_root(scalar_grid):
    u = newton_correct(np.array([0.9]), 0.0, scalar_grid)
    assert abs(u[0]) < 1e-10


def test_newton_failure_carries_iterate(small_grid):
    with pytest.raises(ConvergenceError) as exc:
        newton_correct(np.full(small_grid.J, 5.0), 0.5, small_grid, maxit=1)
    assert exc.value.iterate.shape == (small_grid.J,)
    assert exc.value.residual > 0


def test_stability_eig_examples(default_grid):
    assert stability_eig(sp.csr_matrix([[-2.0]])) == pytest.approx(-2.0)
    lap = assemble_laplacian(default_grid)
    nu1 = nu_h(default_grid, 1, 1)
    assert stability_eig(jacobian(np.zeros(default_grid.J), 1.0, lap)) == pytest.approx(4 - nu1, abs=1e-5)
    assert abs(stability_eig(jacobian(np.zeros(default_grid.J), nu1 / 4, lap))) <= 1e-6


def test_settings_validation():
    with pytest.raises(ValueError):
        ContinuationSettings(step=1.0, max_step=0.5)
    with pytest.raises(ValueError):
        ContinuationSettings(direction=0)


def test_small_grid_continuation(small_grid):
    st = ContinuationSettings(mu_max=2.5)
    br = continue_branch(trivial_start(small_grid, 0.0, st), st, small_grid, "Gamma0")
    lap = assemble_laplacian(small_grid)
    for p in br:
        assert np.max(np.abs(residual(p.state, p.mu, lap)), initial=0) <= st.newton_tol
        assert p.stable == (p.min_stability_eig < 0)
        t = p.tangent
        assert small_grid.hx * small_grid.hy * (t[:-1] @ t[:-1]) + t[-1] ** 2 == pytest.approx(1.0, abs=1e-12)
    bps = br.singular_points(BRANCH_POINT)
    assert bps[0].mu == pytest.approx(nu_h(small_grid, 1, 1) / 4, abs=1e-6)
    # consecutive points within twice the largest step, in the continuation metric
    w = small_grid.hx * small_grid.hy
    for a, b in zip(br.points[:-1], br.points[1:]):
        d = b.x - a.x
        assert math.sqrt(w * d[:-1] @ d[:-1] + d[-1] ** 2) <= 2 * st.max_step + 1e-12


def test_locate_rejects_bracket_without_sign_change(small_grid):
    st = ContinuationSettings(mu_max=1.0, locate=False)
    br = continue_branch(trivial_start(small_grid, 0.0, st), st, small_grid)
    with pytest.raises(ValueError):
        locate_singularity(br, (0, 1))
    with pytest.raises(ValueError):
        locate_singularity(br, (0, 2))


@pytest.mark.slow
class TestDefaultGrid:
    def test_gamma0_stable_up_to_1p3(self, default_branches):
        g0 = default_branches["Gamma0"]
        early = [p for p in g0 if p.mu <= 1.3]
        assert early[-1].mu >= 1.25 or any(p.mu >= 1.3 for p in g0)
        assert all(p.stable and np.max(np.abs(p.state)) == 0.0 for p in early)

    def test_gamma0_eigenvalue_affine(self, default_branches, default_grid):
        nu1 = nu_h(default_grid, 1, 1)
        g0 = default_branches["Gamma0"]
        idx = np.linspace(0, len(g0) - 1, 5).astype(int)
        for i in idx:
            p = g0[i]
            assert p.min_stability_eig == pytest.approx(4 * p.mu - nu1, abs=1e-8)

    def test_branch_points(self, default_branches, default_grid):
        got = [p.mu for p in default_branches["Gamma0"].singular_points(BRANCH_POINT)][:3]
        want = [nu_h(default_grid, 1, 1) / 4, nu_h(default_grid, 2, 1) / 4, nu_h(default_grid, 1, 2) / 4]
        assert got == pytest.approx(want, abs=1e-4)
        assert got == pytest.approx([1.37788, 3.2254, 3.6579], abs=1e-3)

    def test_fold_on_gamma1(self, default_branches):
        folds = default_branches["Gamma1"].singular_points(FOLD)
        assert folds and 1.15 <= folds[0].mu <= 1.21
        assert abs(folds[0].tangent[-1]) <= 1e-6

    def test_test_functions_change_sign(self, default_branches):
        for br in default_branches.values():
            for i, p in enumerate(br.points[1:-1], start=1):
                if p.kind == FOLD:
                    assert br[i - 1].tangent[-1] * br[i + 1].tangent[-1] < 0

    def test_switch_at_first_branch_point(self, default_branches, default_grid):
        bp = default_branches["Gamma0"].singular_points(BRANCH_POINT)[0]
        p = switch_branch(bp, default_grid)
        assert np.max(np.abs(p.state)) > 0.01
        assert p.residual_norm(default_grid) <= 1e-8
        assert not p.failed_switch

    def test_zero_kick_fails(self, default_branches, default_grid):
        bp = default_branches["Gamma0"].singular_points(BRANCH_POINT)[0]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p = switch_branch(bp, default_grid, kick=0.0)
        assert p.failed_switch and np.all(p.state == 0)

    def test_switch_at_second_branch_point_has_21_pattern(self, default_branches, default_grid):
        bp = default_branches["Gamma0"].singular_points(BRANCH_POINT)[1]
        p = switch_branch(bp, default_grid)
        arr = default_grid.to_array(p.state)  # (M-1, N-1), x first
        mid_row = arr[:, arr.shape[1] // 2]
        signs = np.sign(mid_row[np.abs(mid_row) > 1e-3 * np.abs(mid_row).max()])
        assert np.count_nonzero(np.diff(signs)) == 1
        mid_col = arr[arr.shape[0] // 4, :]
        assert np.all(np.sign(mid_col[np.abs(mid_col) > 1e-3 * np.abs(mid_col).max()]) == np.sign(mid_col.sum()))

    def test_sample_branch_hits_targets(self, default_branches, default_grid):
        g1 = default_branches["Gamma1"]
        muf = g1.singular_points(FOLD)[0].mu
        s = sample_branch(g1, [muf + 0.01, muf + 0.05])
        for p, target in zip(s, [muf + 0.01, muf + 0.05]):
            assert p.mu == target and p.stable
            assert p.residual_norm(default_grid) <= 1e-10

    def test_regimes(self, default_branches):
        summary = bifurcation_summary(list(default_branches.values()))
        r = summary["regimes"]
        assert list(r) == ["R0", "R1", "R2", "R3", "R4"]
        edges = [r["R0"][0]] + [v[1] for v in r.values()]
        assert all(a < b for a, b in zip(edges[:-1], edges[1:]))
        assert parameter_regime(0.5, r) == "R0"
        assert parameter_regime(4.0, r) == "R4"

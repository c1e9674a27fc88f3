import math

import pytest

from pcgap.errors import NoSignChange, StabilityViolation
from pcgap.gap_analysis import (ETA0, IB_BETAS, ParamPoint, delta_gap,
                                find_bifurcation, grid_configs_160, ib_sweep,
                                linear_grid_sweep, measure_robustness,
                                verify_counterexample)
from pcgap.lingauss import solve_covariance_closed_form
from pcgap.risk import Encoder, latent_risk
from pcgap.rng import generator


class TestParamPoint:
    def test_domain_enforced(self):
        with pytest.raises(StabilityViolation):
            ParamPoint(1.0, 0.0, 0.5, 0.1, 0.1)
        with pytest.raises(StabilityViolation):
            ParamPoint(0.5, 0.0, 0.5, 0.0, 0.1)

    def test_eta0(self):
        assert ETA0.as_tuple() == (0.05, -0.90, 0.98, 0.05, 0.10)


class TestDeltaGap:
    def test_eta0_positive(self):
        assert delta_gap(ETA0) > 0

    def test_tie_case_zero(self):
        # c=0 with equal noises: NZ and env risks coincide
        p = ParamPoint(0.5, 0.0, 0.8, 0.1, 0.1)
        assert delta_gap(p) == pytest.approx(0.0, abs=1e-14)

    def test_diagonal_noise_dominated(self):
        p = ParamPoint(0.5, 0.0, 0.8, 0.2, 0.1)
        sig11 = 0.2 / (1 - 0.25)
        assert delta_gap(p) == pytest.approx(sig11 * (0.2 - 0.1), abs=1e-12)

    def test_equivalence_with_risk_ordering(self):
        rng = generator(13)
        for _ in range(2000):
            p = ParamPoint(rng.uniform(-0.95, 0.95), rng.uniform(-1.5, 1.5),
                           rng.uniform(-0.95, 0.95), rng.uniform(0.01, 1.0),
                           rng.uniform(0.01, 1.0))
            spec = p.spec()
            cov = solve_covariance_closed_form(spec)
            r_nz = latent_risk(Encoder.nz(2), spec, cov).value
            r_env = latent_risk(Encoder.env(), spec, cov).value
            assert (delta_gap(p) > 0) == (r_nz > r_env + 0.0) or \
                abs(r_nz - r_env) < 1e-12


class TestVerify:
    def test_eta0_report(self):
        rep = verify_counterexample(ETA0)
        assert rep.r_nz == pytest.approx(0.174, abs=1e-3)
        assert rep.r_env == pytest.approx(0.100, abs=1e-12)
        assert rep.r_star == pytest.approx(0.074, abs=1e-3)
        assert rep.theta_star_deg == pytest.approx(43.7, abs=0.1)
        assert rep.nz_suboptimal and rep.interior_optimum

    def test_decoupled_nz_better(self):
        rep = verify_counterexample(ParamPoint(0.05, 0.0, 0.98, 0.05, 0.10))
        # with c = 0 the self-prediction residual is exactly the drive noise
        assert rep.r_nz == pytest.approx(0.05, abs=1e-12)
        assert rep.r_nz < rep.r_env
        assert not rep.nz_suboptimal

    def test_symmetric_tie(self):
        rep = verify_counterexample(ParamPoint(0.5, 0.0, 0.5, 0.1, 0.1))
        assert rep.r_nz == pytest.approx(rep.r_env, abs=1e-12)
        assert rep.delta == pytest.approx(0.0, abs=1e-14)


class TestRobustness:
    def test_tiny_radius_all_positive(self):
        res = measure_robustness(ETA0, radius=1e-9, n_samples=50, seed=0)
        assert res.fraction == 1.0

    def test_radius_001_all_positive(self):
        res = measure_robustness(ETA0, radius=0.01, n_samples=200, seed=0)
        assert res.fraction == 1.0

    def test_tie_point_mixed(self):
        center = ParamPoint(0.5, 0.0, 0.8, 0.1, 0.1)
        res = measure_robustness(center, radius=0.05, n_samples=400, seed=1)
        assert 0.0 < res.fraction < 1.0

    def test_resampling_counted(self):
        # center close to the boundary of U forces rejections
        center = ParamPoint(0.5, 0.0, 0.8, 0.005, 0.1)
        res = measure_robustness(center, radius=0.02, n_samples=100, seed=2)
        assert res.n_resampled > 0

    def test_invalid_radius(self):
        with pytest.raises(ValueError):
            measure_robustness(ETA0, radius=0.0, n_samples=10)


class TestBifurcation:
    def test_eta0_range(self):
        res = find_bifurcation(ETA0, -0.90, 0.0, grid=32)
        assert -0.90 < res.c_star < 0.0
        assert res.bracket[1] - res.bracket[0] < 1e-8
        d2 = dict(res.second_derivative_at_zero)
        assert d2[0.0] > 0 and d2[-0.90] < 0
        theta = dict(res.theta_star_path)
        assert theta[0.0] == pytest.approx(0.0, abs=1e-4)
        assert theta[-0.90] == pytest.approx(43.7, abs=0.1)

    def test_no_sign_change(self):
        base = ParamPoint(0.05, 0.0, 0.98, 0.05, 0.10)
        with pytest.raises(NoSignChange):
            find_bifurcation(base, -0.01, 0.0, grid=16)

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            find_bifurcation(ETA0, -0.9, 0.0, grid=8)


class TestIBSweep:
    def test_eta0_never_on_axis(self):
        out = ib_sweep(ETA0)
        assert len(out) == len(IB_BETAS)
        for beta, theta_deg, _ in out:
            assert theta_deg > 0.5

    def test_beta_zero_reduces_to_latent(self):
        ((_, theta_deg, value),) = ib_sweep(ETA0, betas=(0.0,))
        assert theta_deg == pytest.approx(43.72, abs=0.01)
        assert value == pytest.approx(0.074031, abs=1e-5)

    def test_diagonal_sticks_to_axis(self):
        # c=0 with the system mode slower-decaying and less noisy
        p = ParamPoint(0.9, 0.0, 0.3, 0.05, 0.10)
        ((_, theta_deg, _),) = ib_sweep(p, betas=(1e-4,))
        assert theta_deg == pytest.approx(0.0, abs=1e-3)

    def test_negative_beta_rejected(self):
        with pytest.raises(ValueError):
            ib_sweep(ETA0, betas=(-0.1,))


class TestGrid:
    def test_160_configs(self):
        pts = grid_configs_160()
        assert len(pts) == 160
        assert sum(1 for p in pts if p.c == 0.0) == 40
        assert sum(1 for p in pts if p.c < 0.0) == 60
        assert sum(1 for p in pts if p.c > 0.0) == 60
        assert all(p.q_s == 0.05 and p.q_e == 0.10 for p in pts)

    def test_sweep_summary(self):
        res = linear_grid_sweep()
        summary = res.summary()
        assert summary["n_configs"] == 160
        assert summary["n_nz_optimal"] == 40
        flags = res.nz_optimal_flags
        for p, flag, fid in zip(res.points, flags, res.fidelities):
            if p.c == 0.0:
                assert flag and fid == pytest.approx(1.0, abs=1e-9)
            else:
                assert not flag and fid < 1.0

    def test_csv_and_json(self):
        res = linear_grid_sweep(grid_configs_160()[:3])
        text = res.to_csv()
        assert text.splitlines()[0].startswith("a_s,")
        assert len(text.strip().splitlines()) == 4
        import json
        assert json.loads(res.summary_json())["n_configs"] == 3

    def test_optimizer_agrees_with_profile(self):
        from pcgap.encoder_opt import minimize_sphere
        from pcgap.lingauss import solve_covariance_closed_form
        for p in (grid_configs_160()[45], grid_configs_160()[100]):
            spec = p.spec()
            cov = solve_covariance_closed_form(spec)
            rep = verify_counterexample(p)
            sol = minimize_sphere(spec, cov, restarts=20, seed=0)
            theta_opt = math.degrees(math.atan2(abs(sol.encoder.w[1]),
                                                abs(sol.encoder.w[0])))
            assert theta_opt == pytest.approx(rep.theta_star_deg, abs=1e-4)

import numpy as np
import pytest

from svrg_imc.experiments import (
    ConvergenceConfig,
    DatasetSpec,
    PhaseConfig,
    resample_trace,
    run_convergence_study,
    run_convergence_trial,
    run_phase_cell,
    run_phase_transition,
)
from svrg_imc.metrics import distance_to_truth, relative_error
from svrg_imc.objective import Factorization
from svrg_imc.problem import generate_instance
from svrg_imc.selfcheck import sign_search_align
from svrg_imc.solvers import SvrgConfig


class TestRelativeError:
    def test_exact_recovery(self):
        t = generate_instance(20, 20, 5, 5, 2, 2.0, seed=0)
        assert relative_error(Factorization(t.u_star, t.v_star), t) <= 1e-14

    def test_zero_factors(self):
        t = generate_instance(20, 20, 5, 5, 2, 2.0, seed=1)
        f = Factorization(np.zeros((5, 2)), np.zeros((5, 2)))
        assert relative_error(f, t) == pytest.approx(1.0)

    def test_scalar_half(self):
        # estimate [1] against target [2] -> |1-2|/|2| = 0.5
        from svrg_imc.problem import GroundTruth

        x = np.array([[1.0]])
        t = GroundTruth(
            x_left=x, x_right=x, m_star=np.array([[2.0]]), l_star=np.array([[2.0]]),
            rank=1, sigma=np.array([2.0]),
            u_star=np.array([[np.sqrt(2.0)]]), v_star=np.array([[np.sqrt(2.0)]]),
        )
        f = Factorization(np.array([[1.0]]), np.array([[1.0]]))
        assert relative_error(f, t) == pytest.approx(0.5)


class TestDistanceToTruth:
    def test_zero_at_truth(self):
        t = generate_instance(20, 20, 5, 5, 2, 2.0, seed=2)
        assert distance_to_truth(Factorization(t.u_star, t.v_star), t) <= 1e-12

    def test_rotation_invariance(self):
        t = generate_instance(20, 20, 5, 5, 3, 2.0, seed=3)
        rng = np.random.default_rng(4)
        q = np.linalg.qr(rng.standard_normal((3, 3)))[0]
        f = Factorization(t.u_star @ q, t.v_star @ q)
        assert distance_to_truth(f, t) <= 1e-10

    def test_rank_one_matches_sign_search(self):
        t = generate_instance(15, 15, 4, 4, 1, 1.0, seed=5)
        rng = np.random.default_rng(6)
        f = Factorization(rng.standard_normal((4, 1)), rng.standard_normal((4, 1)))
        z = f.stacked()
        z_star = t.balanced_stack()
        assert distance_to_truth(f, t) == pytest.approx(
            sign_search_align(z, z_star), abs=1e-10
        )


def tiny_phase_config(**overrides):
    kwargs = dict(
        datasets=(DatasetSpec(20, 5, 2),),
        multiples=(30.0,),
        trials=2,
        epoch_cap=60,
        base_seed=5,
        solver=SvrgConfig(),
    )
    kwargs.update(overrides)
    return PhaseConfig(**kwargs)


class TestPhaseTransition:
    def test_full_observation_cell_succeeds(self):
        # multiple sized so the requested samples cover every entry
        cfg = tiny_phase_config(multiples=(24.8,))  # ceil(24.8*10*ln5)=400=d*d
        rows = run_phase_transition(cfg)
        assert len(rows) == 1
        assert rows[0]["samples"] == 400
        assert rows[0]["success_rate"] == 1.0

    def test_oversized_request_raises(self):
        cfg = tiny_phase_config(multiples=(50.0,))
        with pytest.raises(ValueError):
            run_phase_transition(cfg)

    def test_row_schema_and_determinism(self):
        cfg = tiny_phase_config(multiples=(10.0, 24.8))
        rows_a = run_phase_transition(cfg)
        rows_b = run_phase_transition(cfg)
        assert rows_a == rows_b
        assert [r["multiple"] for r in rows_a] == [10.0, 24.8]
        for row in rows_a:
            assert set(row) == {
                "dataset", "d", "n", "r", "multiple", "samples",
                "trials", "successes", "success_rate",
            }
            assert 0.0 <= row["success_rate"] <= 1.0

    def test_cell_outcomes_carry_activations(self):
        cfg = tiny_phase_config(multiples=(24.8,),
                                solver=SvrgConfig(projection="rescale"))
        outs = run_phase_cell(cfg, 0, 0)
        assert all(o.projection_activations >= 0 for o in outs)


def tiny_convergence_config(**overrides):
    kwargs = dict(
        dataset=DatasetSpec(20, 5, 2),
        rates=(0.9,),
        algorithms=("lrsvrg", "gd"),
        pass_budget=40.0,
        trials=2,
        base_seed=6,
        stop_tol=1e-5,
        epoch_cap=200,
        solver=SvrgConfig(),
    )
    kwargs.update(overrides)
    return ConvergenceConfig(**kwargs)


class TestConvergenceStudy:
    def test_shared_init_across_algorithms(self):
        cfg = tiny_convergence_config()
        reports = run_convergence_trial(cfg, 0, 0)
        first = {algo: rep.records[0] for algo, rep in reports.items()}
        assert first["lrsvrg"].rel_err == first["gd"].rel_err
        assert first["lrsvrg"].dist == first["gd"].dist

    def test_rows_monotone_in_pass(self):
        rows = run_convergence_study(tiny_convergence_config())
        by_key = {}
        for row in rows:
            by_key.setdefault((row["algo"], row["trial"]), []).append(row["pass"])
        for passes in by_key.values():
            assert all(b > a for a, b in zip(passes, passes[1:]))

    def test_row_schema(self):
        rows = run_convergence_study(tiny_convergence_config())
        for row in rows:
            assert set(row) == {
                "dataset", "p", "algo", "trial", "pass",
                "log2_rel_err", "rel_err", "dist",
            }
            assert row["log2_rel_err"] == pytest.approx(
                np.log2(max(row["rel_err"], 1e-300))
            )

    def test_deterministic(self):
        cfg = tiny_convergence_config()
        assert run_convergence_study(cfg) == run_convergence_study(cfg)

    def test_unknown_algorithm_rejected(self):
        with pytest.raises(ValueError):
            tiny_convergence_config(algorithms=("lrsvrg", "sgd"))

    def test_bad_rate_rejected(self):
        with pytest.raises(ValueError):
            tiny_convergence_config(rates=(0.0,))


class TestResampleTrace:
    def test_piecewise_constant_grid(self):
        cfg = tiny_convergence_config()
        rep = run_convergence_trial(cfg, 0, 0)["gd"]
        pairs = resample_trace(rep, budget=10.0)
        # gd logs one pass per epoch, so the grid must match records exactly
        for g, rec in pairs:
            assert rec.passes <= g
        grid = [g for g, _ in pairs]
        assert grid == sorted(set(grid))

    def test_grid_clipped_to_trace_end(self):
        cfg = tiny_convergence_config()
        rep = run_convergence_trial(cfg, 0, 0)["gd"]
        pairs = resample_trace(rep, budget=1e9)
        assert pairs[-1][0] <= rep.records[-1].passes

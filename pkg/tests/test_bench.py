"""Benchmark-harness tests: normalization, aux generation, protocol, CSVs."""

import numpy as np
import pytest
from scipy.stats import spearmanr

from tpbo.bench import (
    FUNCTION_ORDER,
    FUNCTIONS,
    METHODS,
    BenchmarkSpec,
    RegretRecord,
    _initial_design,
    make_flipped_aux,
    normalize_problem,
    run_benchmark,
    run_cell,
    summarize,
    synthetic_two_device,
    tune_ard_loo,
    tune_se_loo,
    write_results,
    write_summary,
)
from tpbo.errors import VanishingKernelError
from tpbo.pretrain import DEFAULT_LAMBDA_GRID, DEFAULT_NU_GRID


class TestNormalization:
    def test_rastrigin_origin_is_top(self):
        # the native global minimum value is 0 at the origin, which the
        # affine input map leaves fixed, so the normalized score is 1
        problem = normalize_problem(FUNCTIONS["rastrigin"])
        assert problem.objective(np.array([0.0, 0.0])) == 1.0

    def test_ackley_origin_is_top(self):
        problem = normalize_problem(FUNCTIONS["ackley"])
        assert problem.objective(np.array([0.0, 0.0])) == 1.0

    def test_himmelblau_root_is_top(self):
        problem = normalize_problem(FUNCTIONS["himmelblau"])
        assert problem.objective(np.array([3.0 / 5.0, 2.0 / 5.0])) == 1.0

    def test_values_in_unit_interval(self):
        rng = np.random.default_rng(0)
        Z = rng.uniform(-1, 1, (200, 2))
        for name in FUNCTION_ORDER:
            f = normalize_problem(FUNCTIONS[name]).objective(Z)
            assert np.all(f >= 0.0) and np.all(f <= 1.0)

    def test_grid_attains_both_ends(self):
        for name in ("himmelblau", "eggholder", "styblinski_tang"):
            problem = normalize_problem(FUNCTIONS[name])
            axis = np.linspace(-1.0, 1.0, problem.grid_resolution)
            gx, gy = np.meshgrid(axis, axis, indexing="ij")
            f = problem.objective(np.stack([gx, gy], axis=-1).reshape(-1, 2))
            assert f.min() == 0.0
            assert f.max() == 1.0

    def test_coarse_grid_rejected(self):
        with pytest.raises(ValueError):
            normalize_problem(FUNCTIONS["ackley"], grid_resolution=41)

    def test_native_map_covers_domain(self):
        problem = normalize_problem(FUNCTIONS["eggholder"])
        corners = problem.to_native(np.array([[-1.0, -1.0], [1.0, 1.0]]))
        assert corners[0].tolist() == [-512.0, -512.0]
        assert corners[1].tolist() == [512.0, 512.0]


class TestFlippedAux:
    def test_deterministic(self):
        problem = normalize_problem(FUNCTIONS["himmelblau"])
        a = make_flipped_aux(problem, 50, seed=4)
        b = make_flipped_aux(problem, 50, seed=4)
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.targets, b.targets)

    def test_shape_and_range(self):
        problem = normalize_problem(FUNCTIONS["ackley"])
        aux = make_flipped_aux(problem, 50, seed=1)
        assert aux.inputs.shape == (50, 2)
        assert aux.task == "regression"
        assert np.all(aux.targets >= 0.0) and np.all(aux.targets <= 1.0)

    def test_rank_correlation_strongly_negative(self):
        # aux ranks the space inversely to the objective
        problem = normalize_problem(FUNCTIONS["himmelblau"])
        aux = make_flipped_aux(problem, 50, seed=2)
        rho = spearmanr(aux.targets, problem.objective(aux.inputs)).statistic
        assert rho <= -0.95


class TestTuners:
    def test_se_tuner_returns_grid_members(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(-1, 1, (30, 2))
        y = np.sin(3 * X[:, 0]) * np.cos(2 * X[:, 1])
        nu, lam = tune_se_loo(X, y, DEFAULT_NU_GRID, DEFAULT_LAMBDA_GRID)
        assert nu in DEFAULT_NU_GRID
        assert lam in DEFAULT_LAMBDA_GRID

    def test_ard_downweights_irrelevant_dimension(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(-1, 1, (40, 2))
        y = np.sin(4.0 * X[:, 0])  # second coordinate carries no signal
        nus = tune_ard_loo(X, y, DEFAULT_NU_GRID, DEFAULT_LAMBDA_GRID)
        assert nus.shape == (2,)
        assert nus[1] == min(DEFAULT_NU_GRID)
        assert nus[0] > nus[1]


def tiny_spec(**kw):
    base = dict(
        functions=("himmelblau",),
        methods=("tp-ei", "ei"),
        seeds=2,
        iterations=5,
        refine_top=2,
    )
    base.update(kw)
    return BenchmarkSpec(**base)


class TestProtocol:
    def test_record_count(self):
        records = run_benchmark(tiny_spec())
        # 1 function x 2 methods x 2 seeds x 5 iterations
        assert len(records) == 20
        assert [r.iteration for r in records[:5]] == [1, 2, 3, 4, 5]

    def test_best_monotone_within_groups(self):
        records = run_benchmark(tiny_spec())
        groups = {}
        for r in records:
            groups.setdefault((r.method, r.function, r.seed), []).append(r)
        for rows in groups.values():
            rows.sort(key=lambda r: r.iteration)
            vals = [r.best_value for r in rows]
            assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_initial_design_shared_across_methods(self):
        problem = normalize_problem(FUNCTIONS["himmelblau"])
        X1, y1 = _initial_design(problem, 1, seed=3, size=2)
        X2, y2 = _initial_design(problem, 1, seed=3, size=2)
        assert np.array_equal(X1, X2) and np.array_equal(y1, y2)
        X3, _ = _initial_design(problem, 1, seed=4, size=2)
        assert not np.array_equal(X1, X3)

    def test_bitwise_reproducible(self, tmp_path):
        spec = tiny_spec(seeds=1, iterations=3)
        p1, p2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        write_results(run_benchmark(spec), p1)
        write_results(run_benchmark(spec), p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_all_methods_run(self):
        spec = tiny_spec(methods=METHODS, seeds=1, iterations=2)
        records = run_benchmark(spec)
        assert len(records) == len(METHODS) * 2
        assert {r.method for r in records} == set(METHODS)

    def test_vanishing_kernel_skips_cell(self, monkeypatch, caplog):
        import logging

        import tpbo.bench as bench_mod

        def boom(*args, **kwargs):
            raise VanishingKernelError("all dual coefficients vanished")

        monkeypatch.setattr(bench_mod, "pretrain", boom)
        with caplog.at_level(logging.WARNING, logger="tpbo.bench"):
            records = run_cell("himmelblau", "tp-ei", 0, tiny_spec())
        assert records == []
        assert any("skipping" in rec.message for rec in caplog.records)

    def test_parallel_path_matches_serial(self, monkeypatch):
        spec = tiny_spec(methods=("ei",), seeds=2, iterations=2)
        serial = run_benchmark(spec)
        monkeypatch.setenv("TPBO_THREADS", "2")
        parallel = run_benchmark(spec)
        assert serial == parallel

    def test_thread_env_validated(self, monkeypatch):
        monkeypatch.setenv("TPBO_THREADS", "0")
        with pytest.raises(ValueError):
            run_benchmark(tiny_spec(seeds=1, iterations=1))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            BenchmarkSpec(functions=("nope",))
        with pytest.raises(ValueError):
            BenchmarkSpec(methods=("gradient-descent",))
        with pytest.raises(ValueError):
            BenchmarkSpec(seeds=0)
        with pytest.raises(ValueError):
            BenchmarkSpec(iterations=0)


class TestCsvOutput:
    RECORDS = [
        RegretRecord("ei", "ackley", s, t, v)
        for s, t, v in [
            (0, 1, 0.1),
            (0, 2, 0.4),
            (1, 1, 0.3),
            (1, 2, 0.4),
            (2, 1, 0.2),
            (2, 2, 0.5),
            (3, 1, 0.4),
            (3, 2, 0.6),
        ]
    ]

    def test_results_format(self, tmp_path):
        path = str(tmp_path / "r.csv")
        write_results(self.RECORDS, path)
        lines = open(path, encoding="utf-8").read().split("\n")
        assert lines[0] == "method,function,seed,iteration,best_value"
        assert lines[1] == "ei,ackley,0,1,0.1"
        assert lines[-1] == ""  # trailing newline
        assert len(lines) == 10

    def test_float_text_round_trips(self, tmp_path):
        records = [RegretRecord("ei", "ackley", 0, 1, 0.1 + 0.2)]
        path = str(tmp_path / "r.csv")
        write_results(records, path)
        cell = open(path, encoding="utf-8").read().split("\n")[1].split(",")[-1]
        assert float(cell) == 0.1 + 0.2

    def test_summary_values(self, tmp_path):
        rows = summarize(self.RECORDS)
        assert rows[0][:3] == ("ei", "ackley", 1)
        vals = np.array([0.1, 0.3, 0.2, 0.4])
        assert rows[0][3] == pytest.approx(np.median(vals))
        q1, q3 = np.percentile(vals, [25, 75])
        assert rows[0][4] == pytest.approx(q3 - q1)
        path = str(tmp_path / "s.csv")
        write_summary(self.RECORDS, path)
        lines = open(path, encoding="utf-8").read().split("\n")
        assert lines[0] == "method,function,iteration,median,iqr"
        assert len(lines) == 4  # header + 2 iterations + trailing newline


class TestTwoDevice:
    def test_structure(self):
        prob = synthetic_two_device(seed=0)
        assert prob.aux.inputs.shape == (162, 5)
        assert prob.aux.task == "regression"
        assert np.all(prob.aux.targets >= 0.0) and np.all(prob.aux.targets <= 1.0)
        assert np.allclose(np.linalg.norm(prob.directions, axis=1), 1.0)

    def test_devices_differ_but_share_top_feature(self):
        prob = synthetic_two_device(seed=1)
        rng = np.random.default_rng(9)
        X = rng.uniform(-1, 1, (100, 5))
        gap = np.max(np.abs(prob.device_a(X) - prob.device_b(X)))
        assert gap > 0.0
        assert int(np.argmax(prob.amp_a)) == int(np.argmax(prob.amp_b))
        assert np.max(np.abs(prob.amp_b / prob.amp_a - 1.0)) <= 0.25

    def test_raw_objective_nonnegative(self):
        prob = synthetic_two_device(seed=2)
        rng = np.random.default_rng(5)
        X = rng.uniform(-1, 1, (50, 5))
        assert np.all(prob.objective.raw(X) >= 0.0)
        f = prob.objective(X)
        assert np.all(f >= 0.0) and np.all(f <= 1.0)

    def test_deterministic(self):
        a = synthetic_two_device(seed=3)
        b = synthetic_two_device(seed=3)
        assert np.array_equal(a.aux.inputs, b.aux.inputs)
        assert np.array_equal(a.aux.targets, b.aux.targets)
        assert np.array_equal(a.amp_b, b.amp_b)

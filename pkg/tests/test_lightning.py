import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from lightning_vem.geometry import Polygon, generate_cvt
from lightning_vem.lightning import (
    BoundarySamples,
    FitConfig,
    FitConvergenceError,
    LeastSquaresError,
    RationalHarmonicFn,
    assemble_ls,
    evaluate,
    evaluate_gradient,
    fit_element_basis,
    fit_hat_basis,
    fit_history,
    hat_trace,
    load_bases,
    place_poles,
    sample_boundary,
    save_bases,
    solve_ls_tsvd,
    validation_points,
)

EPS = FitConfig().eps


@pytest.fixture(scope="module")
def square_basis(square):
    return fit_element_basis(square)


@pytest.fixture(scope="module")
def pentagon_basis(pentagon):
    return fit_element_basis(pentagon)


@pytest.fixture(scope="module")
def cvt_bases():
    mesh = generate_cvt(12, rng_seed=7)
    return [fit_element_basis(p) for p in mesh.polygons[:4]]


def interior_grid(poly, n=25, margin=0.0):
    lo, hi = poly.vertices.min(0), poly.vertices.max(0)
    g = np.stack(np.meshgrid(np.linspace(lo[0], hi[0], n), np.linspace(lo[1], hi[1], n)), -1).reshape(-1, 2)
    g = g[poly.contains(g)]
    return g[poly.boundary_distance(g) >= margin * poly.diameter]


class TestFitConfig:
    def test_defaults(self):
        cfg = FitConfig()
        assert cfg.sigma == 4.0
        assert cfg.n_sequence == (4, 9, 16, 25, 36, 49, 64)
        assert np.allclose(np.diff(np.sqrt(cfg.n_sequence)), 1.0)

    @pytest.mark.parametrize(
        "kwargs", [dict(eps=0.0), dict(sigma=-1.0), dict(n_sequence=(4, 4, 9)), dict(n_sequence=()), dict(validation_density=1)]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            FitConfig(**kwargs)

    def test_n_max_truncates_sequence(self):
        assert FitConfig(n_max=20).active_sequence == (4, 9, 16)


class TestPlacePoles:
    def test_single_pole_at_distance_h(self, square):
        poles = place_poles(square, 1, 4.0)
        h = np.sqrt(2)
        assert poles[0] == pytest.approx(complex(-h / np.sqrt(2), -h / np.sqrt(2)), abs=1e-15)
        assert abs(poles[0]) == pytest.approx(h)

    def test_distance_ladder(self, square):
        poles = place_poles(square, 4, 4.0)[:4]  # corner (0, 0)
        h = np.sqrt(2)
        expected = h * np.exp(-4 * (2 - np.sqrt(np.arange(1, 5))))
        np.testing.assert_allclose(np.abs(poles), expected, rtol=1e-14)
        assert np.min(np.abs(poles)) == pytest.approx(h * np.exp(-4), rel=1e-14)
        assert np.exp(-4) == pytest.approx(0.0183, abs=1e-4)

    def test_count_and_exterior_on_cvt_cells(self):
        for poly in generate_cvt(16, rng_seed=2).polygons:
            poles = place_poles(poly, 9)
            assert len(poles) == 9 * len(poly)
            assert not np.any(poly.contains(np.column_stack([poles.real, poles.imag])))

    @given(st.integers(3, 8), st.integers(1, 64), st.floats(0.5, 8.0))
    def test_poles_outside_regular_polygons(self, nk, n, sigma):
        assume(sigma * (np.sqrt(n) - 1) < 30)
        t = 2 * np.pi * np.arange(nk) / nk
        poly = Polygon(np.column_stack([np.cos(t), np.sin(t)]))
        poles = place_poles(poly, n, sigma)
        assert not np.any(poly.contains(np.column_stack([poles.real, poles.imag])))

    def test_rejects_zero(self, square):
        with pytest.raises(ValueError):
            place_poles(square, 0)

    def test_rejects_ladder_below_precision(self, square):
        with pytest.raises(ValueError, match="precision"):
            place_poles(square, 33, 8.0)


class TestSampling:
    def test_one_point_per_edge_is_midpoint(self, pentagon):
        smp = sample_boundary(pentagon, 5)
        mids = 0.5 * (pentagon.complex_vertices + np.roll(pentagon.complex_vertices, -1))
        np.testing.assert_allclose(smp.points, mids, atol=1e-15)

    def test_square_25(self, square):
        smp = sample_boundary(square, 25)
        counts = np.bincount(smp.edge)
        assert counts.sum() == 25 and set(counts) <= {6, 7}
        d = np.min(np.abs(smp.points[:, None] - square.complex_vertices[None]), axis=1)
        assert d.min() < square.diameter * np.exp(-4 * (np.sqrt(1) - 1))
        assert d.min() > 0

    @given(st.integers(4, 2000), st.integers(1, 64))
    def test_points_on_boundary_not_at_vertices(self, M, n):
        t = 2 * np.pi * np.arange(5) / 5
        poly = Polygon(np.column_stack([np.cos(t), np.sin(t)]))
        M = max(M, 5)
        smp = sample_boundary(poly, M, n)
        assert len(smp.points) == M
        pts = np.column_stack([smp.points.real, smp.points.imag])
        assert np.max(poly.boundary_distance(pts)) < 1e-14 * poly.diameter
        assert np.all((smp.s > 0) & (smp.s < 1))
        counts = np.bincount(smp.edge, minlength=5)
        assert counts.max() - counts.min() <= 1

    def test_validation_interleaves_training(self, square):
        smp = sample_boundary(square, 49)
        val = validation_points(square, smp, 2)
        # each edge: its start vertex plus the midpoint of every gap between consecutive samples
        assert len(val.points) == len(smp.points) + 2 * len(square)
        assert not np.any(np.isin(val.points, smp.points))
        for e in range(4):
            s_train = np.sort(smp.s[smp.edge == e])
            s_val = np.sort(val.s[val.edge == e])
            assert s_val[0] == 0.0
            grid = np.concatenate([[0.0], s_train, [1.0]])
            np.testing.assert_allclose(s_val[1:], 0.5 * (grid[:-1] + grid[1:]))

    def test_too_few_samples(self, square):
        with pytest.raises(ValueError):
            sample_boundary(square, 3)

    def test_hat_trace_partition(self):
        edge = np.repeat(np.arange(5), 3)
        s = np.tile([0.1, 0.5, 0.9], 5)
        total = sum(hat_trace(5, i, edge, s) for i in range(5))
        np.testing.assert_allclose(total, 1.0)


class TestLeastSquares:
    def test_constant_column(self, pentagon):
        smp = sample_boundary(pentagon, 61)
        A, info = assemble_ls(pentagon, place_poles(pentagon, 2), complex(*pentagon.centroid), 5, smp)
        assert A.shape == (61, info.n_columns) == (61, 2 * 10 + 2 * 5 + 1)
        x = np.zeros(info.n_columns)
        x[-1] = 2.5
        np.testing.assert_allclose(A @ x, 2.5)

    def test_pole_column(self, square):
        smp = sample_boundary(square, 30)
        p = np.array([-0.3 - 0.2j])
        A, _ = assemble_ls(square, p, 0.5 + 0.5j, 4, smp)
        x = np.zeros(A.shape[1])
        x[0] = 1.0
        np.testing.assert_allclose(A @ x, (1 / (smp.points - p[0])).real)

    def test_monomial_column(self, pentagon):
        smp = sample_boundary(pentagon, 40)
        zc = complex(*pentagon.centroid)
        A, info = assemble_ls(pentagon, place_poles(pentagon, 1), zc, 5, smp)
        x = np.zeros(info.n_columns)
        x[2 * info.n_poles] = 1.0
        np.testing.assert_allclose(A @ x, (smp.points.real - zc.real) / pentagon.diameter, atol=1e-15)

    def test_sample_on_pole(self, square):
        with pytest.raises(LeastSquaresError):
            assemble_ls(square, np.array([0.5 + 0j]), 0.5 + 0.5j, 2, np.array([[0.5, 0.0]]))

    def test_constant_data_is_exact(self, square):
        smp = sample_boundary(square, 6 * 16 + 6 * 4 + 1)
        A, _ = assemble_ls(square, place_poles(square, 4), 0.5 + 0.5j, 4, smp)
        norms = np.linalg.norm(A, axis=0)
        y, _, _ = solve_ls_tsvd(A / norms, np.ones(len(A)))
        val = validation_points(square, smp)
        Av, _ = assemble_ls(square, place_poles(square, 4), 0.5 + 0.5j, 4, val)
        assert np.max(np.abs(Av @ (y / norms) - 1.0)) <= 1e-13

    def test_orthonormal_columns(self):
        Q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((10, 4)))
        x_true = np.array([1.0, -2.0, 0.5, 3.0])
        x, ntrunc, _ = solve_ls_tsvd(Q, Q @ x_true)
        np.testing.assert_allclose(x, x_true, atol=1e-14)
        assert ntrunc == 0

    def test_orthogonal_data_gives_zero(self):
        Q, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((10, 5)))
        x, _, _ = solve_ls_tsvd(Q[:, :4], Q[:, 4])
        np.testing.assert_allclose(x, 0.0, atol=1e-15)

    def test_rank_zero(self):
        with pytest.raises(LeastSquaresError):
            solve_ls_tsvd(np.zeros((5, 2)), np.ones(5))

    def test_hilbert_against_extended_precision(self):
        A = np.array([[1.0 / (i + j + 1) for j in range(4)] for i in range(8)])
        d = np.cos(np.arange(8.0))
        x, ntrunc, _ = solve_ls_tsvd(A, d, 1e-12)
        assert ntrunc == 0
        with mpmath.workdps(50):
            Am = mpmath.matrix([[mpmath.mpf(1) / (i + j + 1) for j in range(4)] for i in range(8)])
            dm = mpmath.matrix([mpmath.cos(k) for k in range(8)])
            xm, res_m = mpmath.qr_solve(Am, dm)
            x_oracle = np.array([float(v) for v in xm])
            res_oracle = float(res_m)
        assert np.linalg.norm(A @ x - d) == pytest.approx(res_oracle, abs=1e-8)
        np.testing.assert_allclose(x, x_oracle, rtol=1e-6)

    def test_truncation_counts(self):
        A = np.diag([1.0, 1e-6, 1e-14])
        _, ntrunc, floor = solve_ls_tsvd(np.vstack([A, np.zeros((2, 3))]), np.ones(5), 1e-12)
        assert ntrunc == 1 and floor == pytest.approx(1e-6)


class TestFits:
    def test_square_hat_center_value(self, square_basis):
        assert square_basis.values([[0.5, 0.5]])[0, 0] == pytest.approx(0.25, abs=10 * EPS)

    def test_square_hat_is_bilinear(self, square_basis):
        # (1 - x)(1 - y) is harmonic and matches the hat trace
        pts = interior_grid(square_basis.element, 15)
        np.testing.assert_allclose(
            square_basis.values(pts)[0], (1 - pts[:, 0]) * (1 - pts[:, 1]), atol=10 * EPS
        )

    def test_vertex_interpolation(self, square_basis, pentagon_basis, cvt_bases):
        for basis in [square_basis, pentagon_basis] + cvt_bases:
            vals = basis.values(basis.element.vertices)
            np.testing.assert_allclose(vals, np.eye(len(basis.element)), atol=EPS)

    def test_boundary_error_within_eps(self, pentagon_basis, cvt_bases):
        for basis in [pentagon_basis] + cvt_bases:
            assert basis.boundary_error <= EPS
            for d in basis.diagnostics:
                assert d.boundary_error <= EPS

    def test_pentagon_pole_count_baseline(self, pentagon_basis):
        d = pentagon_basis.diagnostics[0]
        assert d.n_poles <= 1500
        assert (d.n, d.n_poles) == (16, 80)

    def test_single_hat_matches_joint_fit_tolerance(self, pentagon):
        f = fit_hat_basis(pentagon, 2)
        assert f.diagnostics.boundary_error <= EPS
        assert f(pentagon.vertices[2:3])[0] == pytest.approx(1.0, abs=EPS)
        with pytest.raises(IndexError):
            fit_hat_basis(pentagon, 5)

    def test_partition_of_unity(self, pentagon_basis, cvt_bases):
        rng = np.random.default_rng(3)
        for basis in [pentagon_basis] + cvt_bases:
            poly = basis.element
            lam = rng.dirichlet(np.ones(len(poly)), 100)
            pts = lam @ poly.vertices
            total = basis.values(pts).sum(axis=0)
            assert np.max(np.abs(total - 1.0)) <= 10 * len(poly) * EPS

    def test_maximum_principle(self, pentagon_basis, cvt_bases):
        for basis in [pentagon_basis] + cvt_bases:
            vals = basis.values(interior_grid(basis.element, 30))
            assert vals.min() >= -10 * EPS
            assert vals.max() <= 1 + 10 * EPS

    def test_harmonicity_fd_ratio(self, pentagon_basis, cvt_bases):
        for basis in [pentagon_basis] + cvt_bases:
            poly = basis.element
            pts = interior_grid(poly, 12, margin=0.3)
            if len(pts) == 0:
                pts = poly.centroid[None]
            h = 1e-2 * poly.diameter
            for f in basis.functions:
                lap = []
                for step in (h, h / 10):
                    sh = np.array([[step, 0], [-step, 0], [0, step], [0, -step]])
                    nb = sum(f(pts + s) for s in sh)
                    lap.append((nb - 4 * f(pts)) / step**2)
                assert np.all(np.abs(lap[1]) <= np.abs(lap[0]) / 50 + 1e-12)

    def test_gradient_matches_fd(self, pentagon_basis):
        poly = pentagon_basis.element
        rng = np.random.default_rng(5)
        pts = rng.dirichlet(np.ones(5), 20) @ poly.vertices
        h = 1e-5 * poly.diameter
        for f in pentagon_basis.functions:
            g = evaluate_gradient(f, pts)
            fd = np.column_stack(
                [(f(pts + [h, 0]) - f(pts - [h, 0])) / (2 * h), (f(pts + [0, h]) - f(pts - [0, h])) / (2 * h)]
            )
            assert np.max(np.linalg.norm(g - fd, axis=1)) <= 1e-5 * np.max(np.linalg.norm(g, axis=1))

    def test_deterministic(self, pentagon):
        a = fit_element_basis(pentagon)
        b = fit_element_basis(pentagon)
        for fa, fb in zip(a.functions, b.functions):
            np.testing.assert_array_equal(fa.coeffs, fb.coeffs)
            np.testing.assert_array_equal(fa.poles, fb.poles)

    def test_non_convergence_carries_best(self, pentagon):
        cfg = FitConfig(eps=1e-14, n_max=9)
        with pytest.raises(FitConvergenceError) as info:
            fit_element_basis(pentagon, cfg)
        assert info.value.best_error > 1e-14
        assert len(info.value.best) == 5

    def test_history_decreases(self, pentagon):
        hist = fit_history(pentagon, FitConfig(n_max=16))
        assert [n for n, _, _ in hist] == [4, 9, 16]
        errs = [e for _, _, e in hist]
        assert errs[0] > errs[1] > errs[2]


class TestEvaluate:
    def _fn(self, coeffs, poles=(), degree=2):
        poles = np.asarray(poles, dtype=complex)
        c = np.zeros(2 * len(poles) + 2 * degree + 1)
        c[: len(coeffs)] = coeffs
        return RationalHarmonicFn(poles, 0.25 + 0.5j, 2.0, c)

    def test_zero(self):
        f = RationalHarmonicFn(np.array([3.0 + 0j]), 0j, 1.0, np.zeros(2 + 4 + 1))
        np.testing.assert_array_equal(f(np.random.default_rng(0).random((10, 2))), 0.0)

    def test_constant(self):
        c = np.zeros(7)
        c[-1] = 1.7
        f = RationalHarmonicFn(np.array([3.0 + 0j]), 0j, 1.0, c)
        pts = np.random.default_rng(0).random((10, 2))
        np.testing.assert_allclose(f(pts), 1.7)
        np.testing.assert_array_equal(evaluate_gradient(f, pts), 0.0)

    def test_linear_monomial(self):
        f = self._fn([1.0])  # Re((z - z_*) / h)
        pts = np.random.default_rng(1).random((10, 2))
        np.testing.assert_allclose(evaluate(f, pts), (pts[:, 0] - 0.25) / 2.0)
        np.testing.assert_allclose(evaluate_gradient(f, pts), np.tile([0.5, 0.0], (10, 1)), atol=1e-15)

    def test_pole_term_against_closed_form(self):
        p = 2.0 + 1.0j
        f = self._fn([0.5, -0.25], poles=[p], degree=1)  # a = 0.5 + 0.25i
        pts = np.random.default_rng(2).random((8, 2))
        z = pts[:, 0] + 1j * pts[:, 1]
        a = 0.5 + 0.25j
        np.testing.assert_allclose(f(pts), (a / (z - p)).real)
        dF = -a / (z - p) ** 2
        np.testing.assert_allclose(evaluate_gradient(f, pts), np.column_stack([dF.real, -dF.imag]))

    def test_evaluation_at_pole(self):
        f = self._fn([1.0, 0.0], poles=[0.5 + 0.5j], degree=1)
        with pytest.raises(ZeroDivisionError):
            f([[0.5, 0.5]])

    def test_square_hat_vertex_values(self, square_basis):
        f = square_basis.functions[0]
        assert f([[0.0, 0.0]])[0] == pytest.approx(1.0, abs=EPS)
        assert f([[1.0, 1.0]])[0] == pytest.approx(0.0, abs=EPS)

    def test_batched_matches_single(self, pentagon_basis):
        pts = np.random.default_rng(4).dirichlet(np.ones(5), 7) @ pentagon_basis.element.vertices
        vals, grads = pentagon_basis.values_and_gradients(pts)
        for k, f in enumerate(pentagon_basis.functions):
            np.testing.assert_allclose(vals[k], evaluate(f, pts), rtol=1e-13, atol=1e-15)
            np.testing.assert_allclose(grads[k], evaluate_gradient(f, pts), rtol=1e-13, atol=1e-14)


def test_basis_cache_round_trip(tmp_path, pentagon_basis, pentagon, square):
    cfg = FitConfig()
    save_bases(tmp_path / "b.json", [pentagon_basis], cfg)
    back = load_bases(tmp_path / "b.json", [pentagon], cfg)
    for fa, fb in zip(pentagon_basis.functions, back[0].functions):
        np.testing.assert_array_equal(fa.coeffs, fb.coeffs)
        np.testing.assert_array_equal(fa.poles, fb.poles)
    assert load_bases(tmp_path / "b.json", [pentagon], FitConfig(eps=1e-6)) is None
    assert load_bases(tmp_path / "b.json", [square], cfg) is None

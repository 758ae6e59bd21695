import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import LineString, box

from sesop import tomo
from sesop.linop import DenseOperator
from sesop.tomo import Ellipse, RadonGeometry


def shapely_row(theta, t, n):
    """Per-pixel chord lengths from polygon clipping, as a dense row."""
    nx, ny = math.cos(theta), math.sin(theta)
    px, py = 0.5 + t * nx, 0.5 + t * ny
    L = 5.0
    line = LineString([(px + L * ny, py - L * nx), (px - L * ny, py + L * nx)])
    row = np.zeros(n * n)
    h = 1.0 / n
    for l in range(n):
        for k in range(n):
            row[l * n + k] = line.intersection(box(k * h, l * h, (k + 1) * h, (l + 1) * h)).length
    return row


class TestGeometry:
    def test_sizes(self):
        g = RadonGeometry(41, 61, 60)
        assert (g.rows, g.cols) == (3660, 1681)
        assert g.angles()[1] == pytest.approx(math.pi / 60)
        s = g.shifts()
        assert s.size == 61 and s[30] == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(np.diff(s), 1.0 / 61)

    @pytest.mark.parametrize("kw", [dict(num_pixels=0), dict(num_shifts=1.5), dict(detector_width=0.0)])
    def test_invalid(self, kw):
        args = dict(num_pixels=3, num_shifts=3, num_angles=3)
        args.update(kw)
        with pytest.raises(ValueError):
            RadonGeometry(**args)


class TestRadonMatrix:
    def test_single_pixel_central_ray(self):
        A = tomo.build_radon_matrix(RadonGeometry(1, 1, 1)).todense()
        assert A.shape == (1, 1) and A[0, 0] == pytest.approx(1.0, abs=1e-15)

    def test_ray_missing_the_square(self):
        # detector much wider than the image: the outer bins miss at angle 0
        A = tomo.build_radon_matrix(RadonGeometry(4, 5, 1, detector_width=5.0))
        assert A.nnz > 0
        dense = A.todense()
        assert not dense[0].any() and not dense[-1].any()

    def test_matches_polygon_clipping(self):
        g = RadonGeometry(5, 7, 6, detector_width=math.sqrt(2))
        A = tomo.build_radon_matrix(g).todense()
        theta, t = tomo.ray_parameters(g)
        for i in range(g.rows):
            np.testing.assert_allclose(A[i], shapely_row(theta[i], t[i], 5), atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0, math.pi), st.floats(-0.75, 0.75), st.integers(1, 9))
    def test_row_sum_is_chord(self, theta, t, n):
        j, seg = tomo._trace(theta, t, n)
        line = shapely_row(theta, t, 1)[0]
        assert seg.sum() == pytest.approx(line, abs=1e-12)
        assert tomo.chord_length(theta, t) == pytest.approx(line, abs=1e-12)
        assert np.all(seg > 0) and np.all(seg <= math.sqrt(2) / n + 1e-14)
        assert np.all((j >= 0) & (j < n * n))

    def test_adjoint(self, rng):
        A = tomo.build_radon_matrix(RadonGeometry(9, 11, 8))
        x, y = rng.standard_normal(A.cols), rng.standard_normal(A.rows)
        assert float(A.apply(x) @ y) == pytest.approx(float(x @ A.apply_adjoint(y)), rel=1e-12)


class TestPhantom:
    def test_centre_value(self):
        # the centre lies in the two outer ellipses only: 2 - 0.98
        img = tomo.shepp_logan(41).values.reshape(41, 41)
        assert img[20, 20] == pytest.approx(1.02, abs=1e-12)

    def test_corner_is_empty(self):
        img = tomo.shepp_logan(40).values.reshape(40, 40)
        assert img[0, 0] == img[-1, -1] == img[0, -1] == 0.0

    def test_refinement_consistent(self):
        # pixel centres of the n grid are among those of the 3n grid
        a = tomo.shepp_logan(15).values.reshape(15, 15)
        b = tomo.shepp_logan(45).values.reshape(45, 45)
        np.testing.assert_array_equal(a, b[1::3, 1::3])

    def test_point_oracle(self, rng):
        pts = rng.uniform(0, 1, (200, 2))
        # independent evaluation on [-1, 1]^2 from the published table
        expected = np.zeros(200)
        for x0, y0, a, b, deg, rho in tomo.SHEPP_LOGAN:
            u, v = 2 * pts[:, 0] - 1 - x0, 2 * pts[:, 1] - 1 - y0
            c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
            expected += rho * (((c * u + s * v) / a) ** 2 + ((-s * u + c * v) / b) ** 2 <= 1)
        got = sum(e.intensity * e.contains(pts[:, 0], pts[:, 1]) for e in tomo.shepp_logan_ellipses())
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_image_orientation(self):
        v = np.arange(4.0)  # (k, l) = (0,0), (1,0), (0,1), (1,1)
        np.testing.assert_array_equal(tomo.image_from_vector(v, 2), [[2, 3], [0, 1]])


class TestAnalyticSinogram:
    def test_disc(self):
        # a disc of radius R gives 2 rho sqrt(R^2 - t^2) for every angle
        g = RadonGeometry(8, 9, 5)
        disc = Ellipse(0.5, 0.5, 0.3, 0.3, 0.0, 2.0)
        _, t = tomo.ray_parameters(g)
        expected = 2 * 2.0 * np.sqrt(np.clip(0.09 - t**2, 0, None))
        np.testing.assert_allclose(tomo.analytic_sinogram([disc], g), expected, atol=1e-14)

    def test_centre_ray_of_disc(self):
        g = RadonGeometry(8, 1, 3)
        y = tomo.analytic_sinogram([Ellipse(0.5, 0.5, 0.2, 0.2, 0.0, 1.5)], g)
        np.testing.assert_allclose(y, 2 * 1.5 * 0.2, rtol=1e-14)

    def test_ray_outside(self):
        g = RadonGeometry(8, 3, 1, detector_width=0.9)
        y = tomo.analytic_sinogram([Ellipse(0.5, 0.5, 0.1, 0.1)], g)
        assert y[0] == 0.0 and y[2] == 0.0 and y[1] > 0

    def test_rotated_ellipse_against_quadrature(self):
        e = Ellipse(0.45, 0.55, 0.3, 0.1, 0.7, 1.0)
        g = RadonGeometry(4, 13, 7)
        theta, t = tomo.ray_parameters(g)
        y = tomo.analytic_sinogram([e], g)
        s = np.linspace(-1, 1, 400001)
        ds = s[1] - s[0]
        for i in range(g.rows):
            nx, ny = math.cos(theta[i]), math.sin(theta[i])
            xs, ys = 0.5 + t[i] * nx - s * ny, 0.5 + t[i] * ny + s * nx
            assert y[i] == pytest.approx(e.contains(xs, ys).sum() * ds, abs=2e-5)

    def test_single_ellipse_discretization(self):
        g = RadonGeometry(128, 61, 60)
        e = [Ellipse(0.5, 0.5, 0.3, 0.2, 0.3, 1.0)]
        A = tomo.build_radon_matrix(g)
        y = tomo.analytic_sinogram(e, g)
        err = np.linalg.norm(A.apply(tomo.rasterize(e, 128)) - y) / np.linalg.norm(y)
        assert err <= 0.02

    def test_phantom_mismatch_shrinks(self):
        def mismatch(n):
            g = RadonGeometry(n, 61, 60)
            y = tomo.analytic_sinogram(tomo.shepp_logan_ellipses(), g)
            return np.linalg.norm(tomo.build_radon_matrix(g).apply(tomo.shepp_logan(n).values) - y) / np.linalg.norm(y)

        assert mismatch(128) < mismatch(41)


class TestRangeProjection:
    def test_in_range_unchanged(self, rng):
        A = DenseOperator(rng.standard_normal((6, 3)))
        y = A.apply(rng.standard_normal(3))
        np.testing.assert_allclose(tomo.project_to_range(A, y).data, y, atol=1e-9)

    def test_full_row_rank(self, rng):
        A = DenseOperator(rng.standard_normal((3, 6)))
        y = rng.standard_normal(3)
        np.testing.assert_allclose(tomo.project_to_range(A, y).data, y, atol=1e-9)

    def test_rank_deficient_vs_pinv(self):
        M = np.array([[1.0, 2.0], [2.0, 4.0], [0.0, 0.0]])
        y = np.array([1.0, 0.0, 5.0])
        res = tomo.project_to_range(DenseOperator(M), y)
        np.testing.assert_allclose(res.data, M @ np.linalg.pinv(M) @ y, atol=1e-8)
        assert res.converged

    def test_idempotent(self, rng):
        A = DenseOperator(rng.standard_normal((8, 4)))
        P1 = tomo.project_to_range(A, rng.standard_normal(8)).data
        np.testing.assert_allclose(tomo.project_to_range(A, P1).data, P1, atol=1e-9)

    def test_bad_tol(self):
        with pytest.raises(ValueError):
            tomo.project_to_range(DenseOperator(np.eye(2)), np.ones(2), tol=0.0)


class TestNoise:
    @pytest.mark.parametrize("delta", [0.01, 0.1, 1.0])
    def test_relative_level_exact(self, rng, delta):
        y = rng.standard_normal(50)
        z = tomo.add_noise(y, delta, seed=3)
        assert np.linalg.norm(z - y) == pytest.approx(delta * np.linalg.norm(y), rel=1e-13)

    def test_deterministic(self):
        y = np.linspace(1, 2, 20)
        np.testing.assert_array_equal(tomo.add_noise(y, 0.1, 5), tomo.add_noise(y, 0.1, 5))
        assert not np.array_equal(tomo.add_noise(y, 0.1, 5), tomo.add_noise(y, 0.1, 6))

    def test_zero_delta(self):
        y = np.ones(3)
        np.testing.assert_array_equal(tomo.add_noise(y, 0.0, 1), y)

    def test_errors(self):
        with pytest.raises(ValueError):
            tomo.add_noise(np.zeros(3), 0.1, 1)
        with pytest.raises(ValueError):
            tomo.add_noise(np.ones(3), -0.1, 1)


class TestWriters:
    def test_pgm(self, tmp_path):
        img = np.array([[0.0, 1.0, 2.0], [2.0, 2.0, 0.0]])
        tomo.write_pgm(tmp_path / "a.pgm", img)
        raw = (tmp_path / "a.pgm").read_bytes()
        header = b"P5\n3 2\n255\n"
        assert raw.startswith(header)
        assert list(raw[len(header):]) == [0, 128, 255, 255, 255, 0]

    def test_pgm_constant(self, tmp_path):
        tomo.write_pgm(tmp_path / "c.pgm", np.full((2, 2), 7.0))
        assert (tmp_path / "c.pgm").read_bytes().endswith(bytes(4))

    def test_csv_roundtrip(self, tmp_path, rng):
        a = rng.standard_normal((3, 4))
        tomo.write_csv(tmp_path / "a.csv", a)
        np.testing.assert_array_equal(np.loadtxt(tmp_path / "a.csv", delimiter=","), a)

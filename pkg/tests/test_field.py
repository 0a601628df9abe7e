"""ScalarField, MatrixPath, System and the H0 validation."""

import numpy as np
import pytest

from modgrad.errors import EvalDomainError, OutsideDomainError
from modgrad.expr import parse
from modgrad.field import (
    Box,
    ExpressionField,
    MatrixPath,
    System,
    validate_h0,
)

from helpers import random_poly_source, random_psd_matrix


class TestBox:
    def test_membership(self):
        box = Box((-1.0, 0.0), (1.0, 2.0))
        assert box.contains((0.0, 1.0))
        assert box.contains((-1.0, 2.0))  # boundary included
        assert not box.contains((1.1, 1.0))

    def test_invalid(self):
        with pytest.raises(ValueError):
            Box((0.0,), (0.0,))
        with pytest.raises(ValueError):
            Box((0.0, 0.0), (1.0,))

    def test_clip_radius(self):
        box = Box((-1.0, -1.0), (5.0, 6.0))
        assert box.clip_radius((2.0, 1.0)) == 2.0


class TestScalarField:
    def test_outside_domain_is_an_error(self):
        f = ExpressionField(parse("x1^2", 2), Box((0.0, 0.0), (1.0, 1.0)))
        with pytest.raises(OutsideDomainError):
            f.eval((2.0, 0.5))
        with pytest.raises(OutsideDomainError):
            f.grad((0.5, -0.1))
        with pytest.raises(OutsideDomainError):
            f.hessian((1.5, 0.5))

    def test_time_dependent_field_rejected(self):
        with pytest.raises(ValueError, match="must not reference t"):
            ExpressionField(parse("x1 + t", 1, allow_t=True), Box((0.0,), (1.0,)))

    def test_grid_evaluation_matches_scalar(self):
        f = ExpressionField(parse("x1^2 - x2", 2), Box((-2.0, -2.0), (2.0, 2.0)))
        xs = np.linspace(-1, 1, 5)
        g1, g2 = np.meshgrid(xs, xs, indexing="ij")
        grid = f.eval_grid([g1, g2])
        for i in range(5):
            for j in range(5):
                assert grid[i, j] == f.eval((g1[i, j], g2[i, j]))


class TestMatrixPath:
    def test_entries_must_be_time_only(self):
        with pytest.raises(ValueError, match="t only"):
            MatrixPath([["x1"]])

    def test_structural_symmetry_is_exact(self):
        m = MatrixPath([["1", "t"], ["t", "2"]])
        for t in (0.0, 0.3, 7.7):
            v = m.value(t)
            assert np.array_equal(v, v.T)

    def test_identity_detection(self):
        assert MatrixPath.identity(3).is_identity
        assert not MatrixPath([["(t+1)^(-1)"]]).is_identity

    def test_constant_from_array(self):
        a = random_psd_matrix(np.random.default_rng(1), 3)
        m = MatrixPath.constant(a)
        assert np.allclose(m.value(123.0), a, atol=1e-15)

    def test_example_21_eigenvalues(self, ex21):
        m = ex21.system.matrix
        assert m.smallest_eigenvalue(0.0) == pytest.approx(1.0, abs=1e-12)
        assert m.smallest_eigenvalue(1.0) == pytest.approx(0.25, abs=1e-12)
        assert m.smallest_eigenvalue(10.0) == pytest.approx(1.0 / 121.0, abs=1e-12)

    def test_domain_error_at_some_t(self):
        m = MatrixPath([["(t - 1)^(-1)"]])
        with pytest.raises(EvalDomainError):
            m.value(1.0)


class TestValidateH0:
    def test_example_21_samples(self, ex21):
        report = validate_h0(ex21.system, sample_times=[0.0, 1.0, 10.0])
        assert report.passed
        lambdas = [v for _, v in report.samples]
        assert lambdas == pytest.approx([1.0, 0.25, 1.0 / 121.0], abs=1e-12)

    def test_identity_path(self):
        f = ExpressionField(parse("x1^2 + x2^2", 2), Box((-1, -1), (1, 1)))
        system = System(f, MatrixPath.identity(2))
        report = validate_h0(system)
        assert report.passed
        assert report.min_lambda1 == pytest.approx(1.0, abs=1e-14)

    def test_indefinite_path_fails_every_sample(self):
        f = ExpressionField(parse("x1^2 + x2^2", 2), Box((-1, -1), (1, 1)))
        system = System(f, MatrixPath([["-1", "0"], ["0", "1"]]))
        report = validate_h0(system, sample_times=[0.0, 2.0, 50.0])
        assert not report.passed
        assert all(v == pytest.approx(-1.0, abs=1e-12) for _, v in report.samples)

    def test_rejects_negative_times(self):
        f = ExpressionField(parse("x1", 1), Box((0,), (1,)))
        system = System(f, MatrixPath.identity(1))
        with pytest.raises(ValueError):
            validate_h0(system, sample_times=[-1.0])
        with pytest.raises(ValueError):
            validate_h0(system, sample_times=[])


class TestSystemRhs:
    def test_dimension_mismatch(self):
        f = ExpressionField(parse("x1", 1), Box((0,), (1,)))
        with pytest.raises(ValueError, match="dimension"):
            System(f, MatrixPath.identity(2))

    def test_example_21_at_t0(self, ex21):
        # grad f(2,2) = (-2,-2) and P(0) = I
        rhs = ex21.system.rhs(0.0, np.array([2.0, 2.0]))
        assert np.allclose(rhs, [-2.0, -2.0], atol=1e-14)

    def test_zero_at_critical_point(self, ex31):
        for point in [(2.0, 1.0), (2.0, 2.0), (2.0, 4.0)]:
            rhs = ex31.system.rhs(3.7, np.array(point))
            assert np.linalg.norm(rhs) <= 1e-12

    def test_example_31_identity_at_origin(self, ex31):
        # oracle: the printed gradient -20(x1-2), -12(x2-1)(x2-2)(x2-4)
        # evaluated by hand at the origin
        rhs = ex31.system.rhs(0.0, np.array([0.0, 0.0]))
        assert np.allclose(rhs, [40.0, 96.0], atol=1e-12)

    def test_quadratic_form_nonnegative_for_psd_paths(self):
        rng = np.random.default_rng(77)
        for _ in range(20):
            n = int(rng.integers(2, 4))
            f = ExpressionField(
                parse(random_poly_source(rng, n), n), Box((-2.0,) * n, (2.0,) * n)
            )
            system = System(f, MatrixPath.constant(random_psd_matrix(rng, n)))
            for _ in range(10):
                x = rng.uniform(-1.5, 1.5, size=n)
                t = float(rng.uniform(0.0, 5.0))
                g = f.grad(x)
                assert float(g @ system.rhs(t, x)) >= -1e-12 * float(g @ g)

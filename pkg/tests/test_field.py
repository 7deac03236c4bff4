import numpy as np
import pytest
from scipy.special import zeta

from heatctrl.fem import assemble_stiffness, build_mesh
from heatctrl.field import (AffineDiffusion, EllipticityError, FieldSpec,
                            build_affine, coefficient_range, fluctuation,
                            uniform_coefficient_bound)


class TestFluctuation:
    def test_center_value_first_mode(self, spec13):
        val = fluctuation(spec13, 1, np.array([[0.5, 0.5]]))
        assert abs(val[0] - 0.5) < 1e-15

    def test_boundary_vanishes(self, spec13):
        pts = np.array([[0.0, 0.3], [1.0, 0.7], [0.2, 0.0], [0.9, 1.0]])
        for j in (1, 2, 5):
            assert np.abs(fluctuation(spec13, j, pts)).max() < 1e-12

    def test_quarter_point_second_mode(self):
        spec = FieldSpec(decay=2.6)
        val = fluctuation(spec, 2, np.array([[0.25, 0.25]]))
        assert abs(val[0] - 2.0 ** -3.6) < 1e-15

    def test_index_zero_rejected(self, spec13):
        with pytest.raises(ValueError):
            fluctuation(spec13, 0, np.array([[0.5, 0.5]]))


class TestAffineDiffusion:
    def test_single_term_combination(self, mesh3, spec13):
        aff = build_affine(mesh3, spec13, 1)
        A = aff.materialize(np.array([0.5]))
        expected = aff.A0 + 0.5 * aff.fluctuation_matrix(1)
        assert abs(A - expected).max() < 1e-14

    def test_b_sequence(self, spec13):
        b = spec13.b(8)
        assert abs(b[0] - 0.5) < 1e-15
        assert np.all(np.diff(b) <= 0.0)

    def test_matches_direct_assembly(self, rng):
        mesh = build_mesh(2)
        spec = FieldSpec(decay=1.3)
        aff = build_affine(mesh, spec, 3)
        y = rng.uniform(-0.5, 0.5, 3)

        def coeff(p):
            v = np.ones(len(p))
            for j in (1, 2, 3):
                v += y[j - 1] * fluctuation(spec, j, p)
            return v

        direct = assemble_stiffness(mesh, coeff)
        assert abs(aff.materialize(y) - direct).max() <= 1e-12

    def test_zero_padding_invariance(self, aff3, rng):
        y = rng.uniform(-0.5, 0.5, 2)
        padded = np.concatenate([y, np.zeros(2)])
        assert abs(aff3.materialize(y) - aff3.materialize(padded)).max() == 0.0

    def test_decay_power_sums_bounded_by_zeta(self, spec13):
        # surrogate for sum b_j^p < infinity: partial sums stay below the
        # analytic limit whenever p * decay > 1
        p = 0.9
        b = spec13.b(4096)
        partial = np.cumsum(b ** p)
        limit = 0.5 ** p * zeta(p * 1.3, 1)
        assert np.all(np.diff(partial) > 0.0)
        assert partial[-1] < limit

    def test_bad_dimension_rejected(self, mesh3, spec13):
        with pytest.raises(ValueError):
            build_affine(mesh3, spec13, 0)

    def test_cache_round_trip(self, tmp_path, mesh3, spec13, rng):
        aff = build_affine(mesh3, spec13, 3, cache_dir=str(tmp_path))
        again = build_affine(mesh3, spec13, 3, cache_dir=str(tmp_path))
        y = rng.uniform(-0.5, 0.5, 3)
        assert abs(aff.materialize(y) - again.materialize(y)).max() == 0.0

    def test_cache_header_mismatch_refused(self, tmp_path, mesh3, spec13):
        aff = build_affine(mesh3, spec13, 3)
        path = tmp_path / "cache.npz"
        aff.save_cache(str(path))
        with pytest.raises(ValueError, match="mismatch"):
            AffineDiffusion.load_cache(str(path), mesh3, FieldSpec(decay=2.6), 3)
        with pytest.raises(ValueError, match="mismatch"):
            AffineDiffusion.load_cache(str(path), build_mesh(2), spec13, 3)


class TestCoefficientRange:
    def test_mean_field_only(self, mesh3, spec13):
        lo, hi = coefficient_range(spec13, 3, np.zeros(3), mesh3)
        assert (lo, hi) == (1.0, 1.0)

    def test_partial_zeta_lower_bound(self, mesh4, spec13):
        # adversarial signs at one quadrature point; the analytic bound
        # 1 - (1/4) sum_{j<=s} j^-1.3 still holds at every point
        s = 512
        j = np.arange(1, s + 1)
        x0 = np.array([0.3, 0.7])
        sgn = np.sign(np.sin(np.pi * j * x0[0]) * np.sin(np.pi * j * x0[1]))
        y = -0.5 * np.where(sgn == 0.0, 1.0, sgn)
        lo, _ = coefficient_range(spec13, s, y, mesh4)
        bound = 1.0 - 0.25 * np.sum(j ** -1.3)
        assert lo >= bound - 1e-12
        assert lo > 0.0

    def test_fast_decay_zeta_bound(self, mesh3, rng):
        spec = FieldSpec(decay=2.6)
        for _ in range(5):
            y = rng.uniform(-0.5, 0.5, 16)
            lo, _ = coefficient_range(spec, 16, y, mesh3)
            assert lo >= 1.0 - 0.25 * zeta(2.6, 1) - 1e-12

    def test_violation_reports_point(self, mesh3):
        spec = FieldSpec(decay=1.01, amplitude=8.0)
        with pytest.raises(EllipticityError, match="quadrature point"):
            coefficient_range(spec, 2, np.array([-0.5, -0.5]), mesh3)

    def test_uniform_bound_certifies_all_parameters(self, mesh4, spec13, rng):
        bound = uniform_coefficient_bound(spec13, 64, mesh4)
        assert bound > 0.0
        for _ in range(3):
            y = rng.uniform(-0.5, 0.5, 64)
            lo, _ = coefficient_range(spec13, 64, y, mesh4)
            assert lo >= bound - 1e-12

    def test_uniform_bound_negative_for_wild_field(self, mesh3):
        assert uniform_coefficient_bound(FieldSpec(decay=1.01, amplitude=8.0),
                                         4, mesh3) < 0.0

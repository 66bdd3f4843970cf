"""Unit tests for the derivative-free descent loop."""

import numpy as np
import pytest

from manigrad.kernel_gradient import KernelParams, NeighborCloud
from manigrad.manifold_opt import (
    OptimizerParams,
    Retraction,
    StepError,
    embed_and_minimize,
    make_gaussian_sampler,
    minimize,
    nearest_point_retraction,
    step,
)


def sphere_retraction():
    return Retraction(
        apply=lambda x, target: target / np.linalg.norm(target),
        contains=lambda p: abs(np.linalg.norm(p) - 1.0) < 1e-8,
    )


def default_params(t=0.05, m=30, lambda0=0.1, l=10, epsilon=1e-10, s_f=1.1,
                   max_iters=400):
    return OptimizerParams(lambda0=lambda0, l=l, epsilon=epsilon, s_f=s_f,
                           kernel=KernelParams(t=t, delta=0.9, m=m),
                           max_iters=max_iters)


class TestParams:
    @pytest.mark.parametrize("kw", [
        dict(lambda0=0.0), dict(l=0), dict(epsilon=0.0), dict(s_f=1.0),
        dict(max_iters=0),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            default_params(**kw)


class TestStep:
    def test_euclidean_step(self):
        ident = Retraction(apply=lambda x, target: target)
        out = step(np.array([1.0, 1.0]), np.array([2.0, 0.0]), 0.25, ident)
        np.testing.assert_allclose(out, [0.5, 1.0])

    def test_non_finite_gradient(self):
        ident = Retraction(apply=lambda x, target: target)
        with pytest.raises(StepError):
            step(np.zeros(2), np.array([np.nan, 0.0]), 0.1, ident)

    def test_retraction_failure_wrapped(self):
        def broken(x, target):
            raise RuntimeError("nope")
        with pytest.raises(StepError):
            step(np.zeros(2), np.ones(2), 0.1, Retraction(apply=broken))


class TestMinimize:
    def test_sphere_linear_objective(self):
        # f(p) = p[0] on the unit sphere; minimum -1 at (-1, 0, 0)
        rng = np.random.default_rng(0)
        f = lambda p: float(p[0])
        params = default_params()
        sampler = make_gaussian_sampler(f, params.kernel, rng,
                                        retraction=sphere_retraction())
        trace = minimize(f, np.array([0.0, 1.0, 0.0]), sampler,
                         sphere_retraction(), params)
        assert trace.best_f < -0.99

    def test_best_path_monotone(self):
        rng = np.random.default_rng(1)
        f = lambda p: float(p[0])
        params = default_params(max_iters=150)
        sampler = make_gaussian_sampler(f, params.kernel, rng,
                                        retraction=sphere_retraction())
        trace = minimize(f, np.array([0.0, 1.0]), sampler, sphere_retraction(), params)
        path = trace.best_f_path()
        assert np.all(np.diff(path) <= 0.0)
        assert path[-1] == trace.best_f

    def test_lambda_schedule_exact(self):
        # after the j-th rescale lambda equals lambda0 / s_f^j exactly
        rng = np.random.default_rng(2)
        f = lambda p: float(p[0])
        params = default_params(l=5, max_iters=60)
        sampler = make_gaussian_sampler(f, params.kernel, rng,
                                        retraction=sphere_retraction())
        trace = minimize(f, np.array([0.0, 1.0]), sampler, sphere_retraction(), params)
        lams = np.array([rec.lam for rec in trace.iterates])
        rescale = np.flatnonzero(lams[1:] != lams[:-1]) + 1
        assert len(rescale) >= 2
        for r, k in enumerate(rescale):
            assert lams[k] == params.lambda0 / params.s_f ** (r + 1)
        # between rescales lambda is constant
        assert len(np.unique(lams)) == len(rescale) + 1

    def test_constant_function_stops_after_one_guard(self):
        rng = np.random.default_rng(3)
        f = lambda p: 1.0
        params = default_params(max_iters=100)
        sampler = make_gaussian_sampler(f, params.kernel, rng)
        ident = Retraction(apply=lambda x, target: target)
        trace = minimize(f, np.zeros(2), sampler, ident, params)
        # initial record plus the single step whose guard fires
        assert len(trace.iterates) == 2
        assert trace.stop_reason == "tolerance"

    def test_max_iters_cap(self):
        rng = np.random.default_rng(4)
        f = lambda p: float(p[0])
        params = default_params(max_iters=7)
        sampler = make_gaussian_sampler(f, params.kernel, rng,
                                        retraction=sphere_retraction())
        trace = minimize(f, np.array([0.0, 1.0]), sampler, sphere_retraction(), params)
        assert trace.stop_reason == "max_iters"
        assert trace.iterates[-1].k == 7


class TestNearestPointRetraction:
    def test_maps_to_closest(self):
        data = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        r = nearest_point_retraction(data)
        np.testing.assert_allclose(r(None, np.array([0.9, 0.1])), [1.0, 0.0])

    def test_tie_breaks_to_lowest_index(self):
        data = np.array([[1.0, 0.0], [-1.0, 0.0]])
        r = nearest_point_retraction(data)
        np.testing.assert_allclose(r(None, np.zeros(2)), [1.0, 0.0])

    def test_contains(self):
        data = np.array([[2.0, 3.0]])
        r = nearest_point_retraction(data)
        assert r.contains(np.array([2.0, 3.0]))
        assert not r.contains(np.array([0.0, 0.0]))

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            nearest_point_retraction(np.zeros((0, 2)))


class TestEmbedAndMinimize:
    def test_finds_low_function_region(self):
        # noisy circle with f = first ambient coordinate; the minimizer
        # should land near the angle pi region
        rng = np.random.default_rng(5)
        theta = np.sort(rng.uniform(0.0, 2 * np.pi, 120))
        data = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        fvals = data[:, 0]
        params = OptimizerParams(
            lambda0=20.0, l=10, epsilon=1e-10, s_f=1.1,
            kernel=KernelParams(t=1.0, delta=0.9, m=8), max_iters=300,
            use_raw_direction=True,
        )
        out = embed_and_minimize(data, fvals, embed_dim=2, params=params,
                                 x0_index=int(np.argmin(np.abs(theta - np.pi / 2))))
        assert fvals[out["best_index"]] < np.quantile(fvals, 0.10)

    def test_misaligned_fvals(self):
        data = np.random.default_rng(6).standard_normal((10, 2))
        with pytest.raises(ValueError):
            embed_and_minimize(data, np.zeros(9), 2, default_params(), 0)

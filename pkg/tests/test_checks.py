"""The built-in verification suites must all pass and report cleanly."""

from protocad.checks import SUITES, fd_check, run_checks
from protocad.tensor import mean, mul, square


def test_all_suites_pass():
    results = run_checks()
    assert len(results) == len(SUITES)
    for res in results:
        assert res.passed, f"{res.name}: {res.detail}"


def test_suite_names():
    assert set(SUITES) == {"gradients", "sinkhorn", "lambda_returns", "crossover",
                           "isolation", "roundtrip", "feature_dims"}


def test_run_checks_subset():
    results = run_checks(["lambda_returns", "crossover"])
    assert [r.name for r in results] == ["lambda_returns", "crossover"]
    assert all(r.passed for r in results)


def test_run_checks_unknown_suite_reports_failure():
    results = run_checks(["bogus"])
    assert len(results) == 1
    assert not results[0].passed
    assert "unknown suite" in results[0].detail


def test_fd_check_accepts_correct_gradient(rng):
    def f(xs):
        return mean(square(xs[0]))
    err = fd_check(f, [rng.standard_normal((3, 2))])
    assert err <= 1e-7


def test_fd_check_flags_wrong_gradient(rng):
    # scale the loss after backward sees it: analytic and numeric disagree
    class Doubler:
        def __call__(self, xs):
            t = mean(square(xs[0]))
            wrong = mul(t, 1.0)
            wrong.data = t.data * 2.0  # numeric path sees twice the value
            return wrong
    err = fd_check(Doubler(), [rng.standard_normal((2, 2))])
    assert err > 1e-2

"""The finite-difference harness itself, including a wrong-adjoint negative control."""

from midframe.engine import Tensor, finite_diff_check, reduce_mean, square, tanh
from midframe.engine.tensor import node


def _broken_square(x):
    # deliberately wrong adjoint (factor 3 instead of 2): the harness must flag it
    return node(x.data * x.data, (x,), lambda g: (g * 3.0 * x.data,))


def test_tanh_passes(rng):
    report = finite_diff_check(lambda t: reduce_mean(tanh(t)), rng.standard_normal(11))
    assert report.passed and report.max_rel_error < 1e-4


def test_conv_passes(rng):
    from midframe.engine import conv2d

    k = rng.standard_normal((1, 1, 3, 3))
    report = finite_diff_check(
        lambda t: reduce_mean(square(conv2d(t, Tensor(k), None, 1, 1))),
        rng.standard_normal((1, 1, 5, 5)),
        epsilon=1e-4,
        tolerance=1e-4,
    )
    assert report.passed


def test_wrong_adjoint_fails(rng):
    report = finite_diff_check(lambda t: reduce_mean(_broken_square(t)), rng.standard_normal(7) + 2.0)
    assert not report.passed


def test_report_counts_all_coordinates(rng):
    report = finite_diff_check(lambda t: reduce_mean(square(t)), rng.standard_normal((2, 3)))
    assert report.coords_checked == 6

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oos_error import MultiSourceDataset, kernels, oos_estimate


def random_block(rng, sizes, rows):
    return rng.normal(0, 3, (rows, int(np.sum(sizes)))) + np.repeat(np.arange(len(sizes)), sizes)


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "numpy")
    assert "numpy" in kernels.backends()
    assert kernels.BACKEND in kernels.backends()


@pytest.mark.parametrize("loss", ["squared", "absolute"])
@pytest.mark.parametrize("sizes", [(1, 1), (2, 3, 5), (20, 30, 50), (4, 1, 7, 2)])
def test_backends_agree(loss, sizes):
    rng = np.random.default_rng(sum(sizes))
    data = random_block(rng, sizes, 25)
    results = {name: kernels.oos_rows(data, sizes, loss, impl=mod) for name, mod in kernels.backends().items()}
    sums = {name: kernels.pairwise_loss_sums(data, sizes, loss, impl=mod)
            for name, mod in kernels.backends().items()}
    ref = results["numpy"]
    for name in results:
        np.testing.assert_allclose(results[name], ref, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(sums[name], sums["numpy"], rtol=1e-12, atol=1e-12)
    assert sums["numpy"].shape == (25, len(sizes), len(sizes))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 8), min_size=2, max_size=5), st.sampled_from(["squared", "absolute"]),
       st.integers(0, 2**32 - 1))
def test_kernel_matches_generic_estimator(sizes, loss, seed):
    rng = np.random.default_rng(seed)
    data = random_block(rng, sizes, 3)
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    for row in range(3):
        ds = MultiSourceDataset.from_groups(
            {f"g{j}": data[row, offsets[j]:offsets[j + 1]] for j in range(len(sizes))})
        want = oos_estimate(ds, "mean", loss).total
        for mod in kernels.backends().values():
            got = kernels.oos_rows(data[row], sizes, loss, impl=mod)[0]
            assert got == pytest.approx(want, rel=1e-11, abs=1e-12)


def test_one_dimensional_input_is_one_row():
    out = kernels.oos_rows(np.array([0.0, 2.0, 1.0, 3.0]), [2, 2], "squared")
    assert out.shape == (1,) and out[0] == pytest.approx(2.0)


def test_pure_python_fallback_selected_by_env():
    import os
    import subprocess
    import sys
    env = dict(os.environ, OOS_PURE_PYTHON="1")
    code = ("import oos_error, numpy as np; from oos_error import kernels; "
            "print(oos_error.BACKEND, kernels.oos_rows(np.array([0., 2., 1., 3.]), [2, 2], 'squared')[0])")
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert res.stdout.split() == ["numpy", "2.0"]

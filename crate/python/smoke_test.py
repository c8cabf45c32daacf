"""Smoke test for the geoscale Python module.

Build and install first:
    pip install maturin
    maturin develop -m crates/python/Cargo.toml --release
"""

import json
import math
import os
import tempfile

import geoscale


def main():
    clean = geoscale.generate_hourglass(400, 3)
    assert (clean.n, clean.ambient_dim) == (400, 3)
    noisy = geoscale.embed_with_noise(clean, 13, 0.01, 3)
    assert noisy.ambient_dim == 13
    assert len(noisy.to_list()[0]) == 13

    lo, hi = geoscale.epsilon_range(noisy)
    assert 0 < lo < hi
    grid = geoscale.log_grid(lo, hi, 10)
    assert len(grid) == 10 and math.isclose(grid[0], lo) and math.isclose(grid[-1], hi)

    curve = geoscale.select_bandwidth(noisy, grid, n_prime=80, seed=1)
    assert curve.eps_hat in curve.epsilons
    d = curve.distortions
    assert d[curve.argmin] == min(x for x in d if not math.isnan(x))
    assert json.loads(curve.to_json())["eps_hat"] == curve.eps_hat
    auto = geoscale.select_bandwidth(noisy, n_prime=80, seed=1)
    assert len(auto.epsilons) == 20

    idx = geoscale.subsample(noisy, 50, 2)
    assert len(set(idx)) == 50
    dist, dev, failed = geoscale.compute_distortion(noisy, curve.eps_hat, idx)
    assert dist >= 0 and dev >= 0 and failed == []

    assert geoscale.reconstruction_error(noisy, curve.eps_hat) > 0

    coords, values = geoscale.laplacian_eigenmaps(clean, curve.eps_hat, 3)
    assert len(coords) == 400 and len(coords[0]) == 3 and len(values) == 3

    scaled = [[2 * x + 1 for x in row] for row in coords]
    _, rms = geoscale.procrustes_align(coords, scaled)
    assert rms < 1e-10

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "cloud.csv")
        clean.save_csv(path)
        back = geoscale.PointCloud.load_csv(path)
        assert back.to_list() == clean.to_list()

    try:
        geoscale.generate_hourglass(5, 0)
    except ValueError as e:
        assert "10" in str(e)
    else:
        raise AssertionError("n < 10 must be rejected")

    try:
        geoscale.select_bandwidth(noisy, grid, metric="primal")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown metric must be rejected")

    print(f"ok: eps_hat = {curve.eps_hat:.4f}")


if __name__ == "__main__":
    main()

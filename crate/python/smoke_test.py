"""Smoke test for the csbp extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml
    pip install target/wheels/csbp-*.whl
"""

import json
import math

import csbp


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b}"


def main():
    p = csbp.StableParams(1.5, 1.0)
    close(p.psi(2.0), 2.0**1.5, 1e-12)
    close(p.phi_inverse(p.psi(0.7)), 0.7, 1e-12)
    close(csbp.mittag_leffler(2.0, 1.0), math.cosh(1.0), 1e-12)

    # CB at alpha = 2 is Feller's diffusion: P(extinct by t) = exp(-x / (c t))
    f = csbp.StableParams(2.0, 0.5)
    close(f.extinction_cdf(1.0, 2.0), math.exp(-1.0), 1e-10)
    close(f.thm2_exit(1.0, 2.0, 0.0, "ii"), 0.5, 1e-10)

    try:
        csbp.StableParams(2.5)
    except ValueError:
        pass
    else:
        raise AssertionError("alpha = 2.5 accepted")

    paths = csbp.simulate_cb(p, 1.0, 0.5, 0.05, 200, seed=7)
    assert len(paths) == 200
    for t, y, absorbed in paths:
        assert len(t) == len(y) and t[0] == 0.0 and y[0] == 1.0
        assert all(v >= 0.0 for v in y)
    assert paths == csbp.simulate_cb(p, 1.0, 0.5, 0.05, 200, seed=7)

    ext = csbp.extinction_times(p, 1.0, 500, seed=3)
    assert all(e > 0.0 for e in ext)
    stat, pval = csbp.ks_two_sample(ext[:250], ext[250:])
    assert 0.0 <= stat <= 1.0 and 0.0 <= pval <= 1.0

    assert "cb_laplace" in csbp.identities()
    check = json.loads(csbp.run_identity("cb_laplace", {"t": 0.5}, 2000, 11))
    assert check["name"] == "cb_laplace" and check["pass"], check

    config = {"version": 1, "n_paths": 2000, "seed": 5,
              "identities": [{"name": "cb_laplace"}, {"name": "exit_thm2_ii"}]}
    report = csbp.run_suite(json.dumps(config))
    assert report == csbp.run_suite(json.dumps(config))
    assert json.loads(report)["pass"], report

    print("python smoke test: ok")


if __name__ == "__main__":
    main()

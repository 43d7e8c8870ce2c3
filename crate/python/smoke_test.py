"""Smoke test for the uqdon extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`,
then run `python python/smoke_test.py`.
"""

import math
import os
import tempfile

import uqdon


def main():
    train = uqdon.Dataset.antiderivative(40, seed=1, sensors=20, alpha_groups=2)
    test = uqdon.Dataset.antiderivative(10, seed=2, sensors=20, alpha_groups=2)
    assert len(train) == 40 and train.sensors == 20

    s = uqdon.antiderivative_solve([1.0] * 5, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert max(abs(a - b) for a, b in zip(s, [0.0, 0.25, 0.5, 0.75, 1.0])) < 1e-15
    assert abs(uqdon.relative_l2([3.0, 4.0], [0.0, 4.0]) - 0.75) < 1e-15

    arch = uqdon.Architecture(train.sensors, depth=2, width=16, latent=8)
    ens = uqdon.Ensemble(arch, beta=1.0, members=3, seed=0)
    prior = ens.prior_checksum()
    history = ens.train(train, iterations=200, batch_functions=8, batch_queries=10)
    assert len(history) == 3 and all(math.isfinite(l) for _, ls in history for l in ls)
    assert ens.prior_checksum() == prior and ens.step == 200

    mean, var = ens.predict(test.inputs()[:2], [[v] for v in test.y])
    assert len(mean) == 2 and len(mean[0]) == test.queries
    assert all(v >= 0.0 for row in var for v in row)

    report = ens.evaluate(test)
    assert len(report) == len(test)
    print("mean rel. L2 %.3f, worst %s" % (report.mean_error(), report.worst_case()))
    print("per scale:", [(round(a, 2), round(e, 3)) for a, _, e, _ in report.per_scale()])

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.ckpt")
        ens.save(path)
        again = uqdon.Ensemble.load(path)
        assert again.predict(test.inputs()[:1], [[0.5]]) == ens.predict(test.inputs()[:1], [[0.5]])
        with open(path, "r+b") as f:
            f.write(b"JUNK")
        try:
            uqdon.Ensemble.load(path)
        except uqdon.DataError as e:
            print("corrupt checkpoint rejected:", e)
        else:
            raise AssertionError("corrupt checkpoint accepted")

    try:
        uqdon.Ensemble(arch, beta=-1.0)
    except uqdon.ConfigError:
        pass
    else:
        raise AssertionError("negative beta accepted")
    print("ok")


if __name__ == "__main__":
    main()

"""Quick end-to-end check of the Python bindings.

Build and install first:
    maturin build -m crates/python/Cargo.toml -o dist && pip install dist/funcanova-*.whl
"""

import json
import math

import funcanova as fa


def main():
    q = fa.f_quantile(1.0, 60.0, 0.9)
    assert abs(fa.f_cdf(1.0, 60.0, q) - 0.9) < 1e-10, q

    basis = fa.BSplineBasis(10)
    assert len(basis) == 10
    for t in (0.0, 0.37, 1.0):
        assert abs(sum(basis.eval(t)) - 1.0) < 1e-12

    cfg = {"units": 8, "test_units": 8, "sd": 0.05, "seed": 5}
    train, truth = fa.simulate_dataset(json.dumps(cfg))
    print(train)
    assert train.group_labels[0] == "control"

    analysis = fa.analyze(train, json.dumps({"min_zone_points": 6}))
    d = analysis.dissimilarity(truth)
    assert d < 0.1, d
    zones = analysis.zones()
    assert zones, "expected significant zones"
    print(f"dissimilarity {d:.4f}, {len(zones)} zones")

    f = fa.pointwise_f(train, 0, 1)
    assert len(f) == len(train.grid) and all(v >= 0 or math.isinf(v) for v in f)

    eig = fa.fpca_eigenvalues(train, 0)
    assert all(a >= b for a, b in zip(eig, eig[1:]))

    clf = fa.Classifier.fit(train)
    acc = clf.accuracy(train)
    print(f"training accuracy {acc:.3f}")
    assert acc > 0.9

    faces = fa.ravdess_like(json.dumps({"actors": 6}))
    rows = fa.heatmap(faces)
    happy = sorted((r for r in rows if r[0] == "happy"), key=lambda r: -r[2])
    assert happy[0][1] == "AU12", happy[0]

    try:
        fa.f_quantile(1.0, 60.0, 1.5)
    except fa.FuncanovaError:
        pass
    else:
        raise AssertionError("expected an error")
    print("ok")


if __name__ == "__main__":
    main()

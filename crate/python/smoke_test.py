"""Exercise the latentrec extension module end to end on a tiny dataset.

Build the module first, e.g. `maturin develop -m crates/python/Cargo.toml`,
or point PYTHONPATH at a directory holding `latentrec.so`.
"""

import math
import os
import tempfile

import latentrec

TRIPLES = [
    (f"u{u}", f"m{i}", float(1 + (u * 3 + i * 2) % 5))
    for u in range(12)
    for i in range(9)
    if (u + 2 * i) % 4 != 0
]


def main():
    m = latentrec.RatingMatrix.from_triples(TRIPLES)
    assert (m.n_users, m.n_items, m.nnz) == (12, 9, len(TRIPLES))
    assert m.users[0] == "u0" and m.get("u0", "m1") == TRIPLES[0][2]
    assert len(m.digest()) == 64

    dense = m.dense("user_mean")
    assert len(dense) == 12 and all(len(row) == 9 for row in dense)

    train, test = m.split(0.25, seed=3)
    assert train.nnz + len(test) == m.nnz
    assert len(test) == round(0.25 * m.nnz)

    rmse, mae = latentrec.error_metrics([2.0, 4.0], [1.0, 6.0])
    assert math.isclose(rmse, math.sqrt(2.5)) and mae == 1.5

    for algorithm in ("nmf", "svd_t", "svd_i", "sgd_mf"):
        model = latentrec.Model.fit(m, algorithm, 3, fraction=0.25, seed=3)
        assert model.n_users == 12 and model.n_items == 9
        rmse, mae = model.evaluate(m)
        assert 0.0 <= mae <= rmse < 4.0, (algorithm, rmse, mae)
        assert 1.0 <= model.predict(0, 0) <= 5.0

    model = latentrec.Model.fit(m, "nmf", 3, fraction=0.25, seed=3)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "model.json")
        model.save(path)
        back = latentrec.Model.load(path)
        assert back.kind == "nmf"
        assert back.predict(2, 5) == model.predict(2, 5)

    recs = model.recommend(m, "u1", n=3)
    assert len(recs) <= 3
    assert all(score >= nxt for (_, score), (_, nxt) in zip(recs, recs[1:]))

    clusters = latentrec.Clusters.fit(model, k=3, seed=1, restarts=4)
    assert len(clusters.assignments) == 12 and set(clusters.assignments) <= {0, 1, 2}
    assert clusters.inertia >= 0.0
    clusters.recommend(m, "u0", n=5, min_support=1)

    csv, provenance = latentrec.run_sweep(m, ["nmf", "svd_t"], ["user_mean"], [2, 3], fraction=0.25, seed=5)
    lines = csv.strip().splitlines()
    assert lines[0] == "algorithm,fill,components,rmse,mae,seconds"
    assert len(lines) == 5
    assert '"seed": 5' in provenance

    try:
        model.recommend(m, "nobody")
    except KeyError:
        pass
    else:
        raise AssertionError("unknown user accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()

"""Smoke test for the compiled extension.

Build and install it first, e.g. `maturin develop --release` from
crates/python, then run `python python/smoke_test.py`.
"""

import json
import os
import tempfile

import longicause_py as lc


def main():
    panel = lc.generate_synthetic(json.dumps({"n": 60, "T": 5, "d_x": 3, "d_u": 3, "p": 2, "seed": 1}))
    assert (panel.n, panel.steps, panel.d_x) == (60, 5, 3)
    assert len(panel.x[0][0]) == 3
    assert all(w in (0.0, 1.0) for row in panel.w for w in row)

    cohort = lc.generate_tumor(json.dumps({"n_patients": 8, "T_days": 6, "seed": 2}))
    assert cohort.steps == 6

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "panel.jsonl")
        panel.save(path)
        assert lc.Panel.load(path).y == panel.y

        model, log = lc.train(
            panel,
            model_config=json.dumps({"lstm_hidden": 5, "phi_dim": 5, "z_dim": 2}),
            train_config=json.dumps({"max_epochs": 2, "batch_size": 16}),
        )
        assert len(json.loads(log)["epochs"]) >= 1
        tau_hat = model.predict_ite(panel)
        assert len(tau_hat) == panel.n and len(tau_hat[0]) == panel.steps

        ckpt = os.path.join(tmp, "model.json")
        model.save(ckpt)
        assert lc.Model.load(ckpt).predict_ite(panel, [0, 1]) == tau_hat[:2]

    metrics = lc.compute_metrics(panel.tau, panel.tau, panel.y, panel.y)
    assert metrics["nrmse_tau"] == 0.0
    assert lc.paired_tests([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == (1.0, 1.0)
    assert lc.beta_at_iteration(1, 12000, 6, 0.5) == 0.0
    assert json.loads(lc.gradcheck())["passed"]
    print("longicause_py smoke test passed")


if __name__ == "__main__":
    main()

"""Smoke test for the sedmamba extension module.

Build and run:
    cd crates/python
    maturin build --release -o dist && pip install --force-reinstall dist/sedmamba-*.whl
    python3 python/smoke_test.py
"""

import math
import tempfile
from pathlib import Path

import sedmamba


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def check_metrics():
    scores = [0.1, 0.4, 0.35, 0.8]
    labels = [0, 0, 1, 1]
    assert close(sedmamba.roc_auc(scores, labels), 0.75)
    assert close(sedmamba.average_precision(scores, labels), 0.8333333333333333)
    inst = sedmamba.group_instances([0, 0, 1, 1, 1, 0], [0.1, 0.2, 0.9, 0.8, 0.7, 0.3])
    assert [(i["label"], i["start"], i["end"]) for i in inst] == [(0, 0, 1), (1, 2, 4), (0, 5, 5)]
    report = sedmamba.evaluate([("v", [0, 0, 1, 1, 0], [0.1, 0.2, 0.9, 0.7, 0.3])])
    assert report["frame_auc"] == 1.0 and report["short_auc"] == 1.0 and report["long_auc"] is None
    try:
        sedmamba.roc_auc([0.5, 0.6], [1, 1])
    except ValueError:
        pass
    else:
        raise AssertionError("single-class AUC should raise")


def check_ssm():
    a_bar, b_bar = sedmamba.discretize([-1.0], [1.0], 0.5)
    assert close(a_bar[0], math.exp(-0.5))
    assert close(b_bar[0], 1.0 - math.exp(-0.5))
    x = [1.0, 0.0, -2.0, 0.5, 3.0]
    a_bar, b_bar = sedmamba.discretize([-0.3, -2.0], [1.0, 0.5], 0.1)
    c = [0.7, -1.1]
    y_rec = sedmamba.lti_recurrence(a_bar, b_bar, c, x)
    k = sedmamba.ssm_kernel(a_bar, b_bar, c, len(x))
    y_conv = [sum(k[j] * x[t - j] for j in range(t + 1)) for t in range(len(x))]
    assert all(close(p, q, 1e-12) for p, q in zip(y_rec, y_conv))

    length, width, state = 7, 3, 2
    u = [[math.sin(t + ch) for ch in range(width)] for t in range(length)]
    delta = [[0.1 + 0.01 * ch for ch in range(width)] for _ in range(length)]
    a = [[-1.0, -0.5] for _ in range(width)]
    b = [[1.0, 0.2 * t] for t in range(length)]
    cc = [[0.3, -0.4] for _ in range(length)]
    d = [1.0, 0.0, 0.5]
    fast = sedmamba.selective_scan(u, delta, a, b, cc, d)
    ref = sedmamba.selective_scan(u, delta, a, b, cc, d, fast=False)
    assert all(close(p, q, 1e-12) for fr, rr in zip(fast, ref) for p, q in zip(fr, rr))


def check_model_and_complexity():
    assert [sedmamba.receptive_field(i) for i in (1, 2, 3)] == [7, 15, 31]
    assert sedmamba.measured_receptive_fields() == [5, 13, 29]
    n = sedmamba.count_params()
    assert abs(n - 290_030) <= 0.2 * 290_030, n
    assert sedmamba.estimate_flops(length=200) == 2 * sedmamba.estimate_flops(length=100)
    report = sedmamba.complexity_report()
    assert report["params"] == n == sum(l["params"] for l in report["layers"])
    assert not sedmamba.sweep_report()["violations"]

    cfg = {"d_model": 32, "compression": 8}
    model = sedmamba.Model(cfg, seed=1)
    assert model.num_params == sedmamba.count_params(cfg)
    probs = model.predict([[0.01 * (t + c) for c in range(32)] for t in range(20)])
    assert len(probs) == 20 and all(0.0 < p < 1.0 for p in probs)
    assert "head.weight" in model.param_names()
    assert model.param_shape("head.weight") == [1, 4, 1]


def check_synth_and_training():
    data = {"num_sequences": 3, "num_test": 1, "width": 32, "min_len": 120, "max_len": 150,
            "long_duration": [15, 40]}
    seqs = sedmamba.synth(data)
    assert len(seqs) == 3 and seqs[-1]["split"] == "test"
    s = seqs[0]
    assert len(s["embeddings"]) == len(s["labels"]) and len(s["embeddings"][0]) == 32
    for seg in s["segments"]:
        assert all(s["labels"][t] == 1 for t in range(seg["start"], seg["end"] + 1))
    assert sedmamba.synth(data) == seqs

    with tempfile.TemporaryDirectory() as tmp:
        model, history = sedmamba.train_synthetic(
            {"d_model": 32, "compression": 8}, {"epochs": 2, "lr": 1e-3}, data, tmp
        )
        assert [h["epoch"] for h in history] == [1, 2]
        assert (Path(tmp) / "final.sedc").exists()
        again = sedmamba.Model.from_checkpoint(str(Path(tmp) / "final.sedc"))
        x = seqs[2]["embeddings"]
        assert model.predict(x) == again.predict(x)


if __name__ == "__main__":
    check_metrics()
    check_ssm()
    check_model_and_complexity()
    check_synth_and_training()
    print("sedmamba smoke test: ok")

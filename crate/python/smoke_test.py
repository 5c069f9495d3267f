"""Smoke test for the fedqk Python extension.

Build and install first, e.g. ``pip install ./crates/python`` or
``maturin develop -m crates/python/Cargo.toml``.
"""

import math
import os
import tempfile

import fedqk


def check_kernel():
    a, b, w = [0.3, -1.2, 0.8], [0.1, 0.4, -0.5], [1.0, 0.7, 1.3]
    k = fedqk.kernel(a, b, w)
    assert abs(k - fedqk.closed_form_kernel(a, b, w)) < 1e-12
    assert abs(fedqk.kernel(a, a, w, depth=1) - 1.0) < 1e-12
    value, da, db, dw = fedqk.kernel_grad(a, b, w, depth=1)
    h = 1e-6
    bumped = list(a)
    bumped[0] += h
    fd = (fedqk.kernel(bumped, b, w, depth=1) - value) / h
    assert abs(fd - da[0]) < 1e-4, (fd, da[0])
    gram = fedqk.gram_matrix([a, b, [0.0, 0.0, 0.0]], w)
    assert all(gram[i][i] == 1.0 for i in range(3))
    assert gram[0][1] == gram[1][0]


def check_metrics_and_fedavg():
    m = fedqk.compute_metrics([0, 1, 1, 2], [0, 1, 2, 2], 3)
    assert m["accuracy"] == 0.75
    avg = fedqk.fedavg([(1, {"w": ([2], [0.0, 4.0])}), (3, {"w": ([2], [4.0, 0.0])})])
    assert avg["w"] == ([2], [3.0, 1.0])


def check_model_and_checkpoint():
    cfg = {
        "data.synthetic.window": 16,
        "model.conv_filters": 4,
        "model.conv_width": 3,
        "model.recurrent_layers": 1,
        "model.hidden": 4,
        "model.landmarks": 4,
    }
    windows, labels, _ = fedqk.synthetic(windows_per_class=2, window=16)
    model = fedqk.Model(cfg, seed=1)
    assert model.cell == "quantum"
    counts = dict(fedqk.count_params(cfg))
    assert counts["total"] == model.num_params
    logits = model.logits(windows[0])
    assert len(logits) == 4 and all(math.isfinite(x) for x in logits)
    loss, grads = model.loss_and_grad(windows[0], labels[0])
    assert loss > 0 and set(grads) == set(model.params())

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.fqkc")
        fedqk.save_checkpoint(path, model.params())
        restored = fedqk.Model(cfg, seed=2)
        restored.set_params(fedqk.load_checkpoint(path))
        assert restored.logits(windows[0]) == logits


def check_training():
    with tempfile.TemporaryDirectory() as tmp:
        rows = fedqk.run_fed_sim({
            "output.dir": tmp,
            "data.synthetic.windows_per_class": 12,
            "data.synthetic.window": 16,
            "model.conv_filters": 4,
            "model.recurrent_layers": 1,
            "model.hidden": 4,
            "model.landmarks": 4,
            "fed.clients": 2,
            "fed.rounds": 2,
            "fed.local_epochs": 1,
        })
        assert [r["round"] for r in rows] == [1, 2]
        assert os.path.exists(os.path.join(tmp, "metrics.csv"))


def check_errors():
    try:
        fedqk.run_fed_sim({"fed.clinets": 3})
    except ValueError as err:
        assert "fed.clinets" in str(err)
    else:
        raise AssertionError("unknown key accepted")


if __name__ == "__main__":
    check_kernel()
    check_metrics_and_fedavg()
    check_model_and_checkpoint()
    check_training()
    check_errors()
    print("python smoke test passed")

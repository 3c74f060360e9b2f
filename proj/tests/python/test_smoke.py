import numpy as np
import pytest

import egolstm


def test_parameter_counts_full_preset():
    c = egolstm.parameter_counts("full", 7)
    assert c["convlstm"] == 4_719_616
    assert c["fusion"] == 1_179_904
    assert c["classifier"] == 16_135
    assert c["total"] == sum(c["encoder_stages"]) + c["fusion"] + c["convlstm"] + c["classifier"]


def test_conv2d_matches_numpy_reference():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    y = egolstm.conv2d(x, w, b, stride=1, padding=1)
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    want = np.empty((3, 5, 5))
    for o in range(3):
        for i in range(5):
            for j in range(5):
                want[o, i, j] = np.sum(w[o] * xp[:, i:i + 3, j:j + 3]) + b[o]
    np.testing.assert_allclose(y, want, rtol=0, atol=1e-12)


def test_conv2d_rejects_inexact_extent():
    with pytest.raises(egolstm.ShapeError):
        egolstm.conv2d(np.zeros((1, 6, 6)), np.zeros((1, 1, 3, 3)), stride=2)


def test_pool_and_lrn_shapes():
    x = np.arange(2 * 6 * 6, dtype=float).reshape(2, 6, 6)
    p = egolstm.max_pool2d(x, 2, 2)
    assert p.shape == (2, 3, 3)
    assert p[0, 0, 0] == 7
    assert egolstm.lrn(x).shape == x.shape


def test_gradcheck_single_op():
    rows = egolstm.gradcheck("convlstm_step", seed=1, trials=3)
    assert len(rows) == 1 and rows[0]["pass"]


def test_tiny_model_forward_contract():
    m = egolstm.Model("tiny", num_classes=3, seed=2)
    frames = np.random.default_rng(1).random((5, 3, 32, 32))
    out = m.forward(frames)
    assert out["logits"].shape == (3,)
    assert out["steps"] == 4
    assert out["state_shape"] == [16, 6, 6]
    assert m.parameter_count() == egolstm.parameter_counts("tiny", 3)["total"]
    again = egolstm.Model("tiny", num_classes=3, seed=2).forward(frames)
    assert np.array_equal(out["logits"], again["logits"])


def test_difference_mode_has_one_fewer_step():
    m = egolstm.Model("tiny", num_classes=3, input_mode="diff", seed=2)
    assert m.forward(np.zeros((5, 3, 32, 32)))["steps"] == 3


def test_synth_train_eval_predict(tmp_path):
    data, run = tmp_path / "data", tmp_path / "run"
    assert egolstm.synth(data, videos_per_class=2, test_videos_per_class=1, frames=6, seed=7) == 6
    code, out, err = egolstm.run_cli([
        "train", "--manifest", str(data / "manifest.txt"), "--preset", "tiny", "--iters", "2",
        "--batch", "2", "--frames", "4", "--lr", "1e-3", "--out", str(run), "--log-every", "1",
    ])
    assert code == 0, err
    assert "iter 2 loss" in out
    ckpt = run / "checkpoint.clck"
    r = egolstm.evaluate(ckpt, data / "test_manifest.txt", crops=1)
    assert r["total"] == 3 and 0 <= r["accuracy"] <= 1
    entry = next(p for p in (data / "test").iterdir() if p.is_dir())
    p = egolstm.predict(ckpt, entry, crops=10)
    assert abs(sum(p["probabilities"]) - 1) < 1e-9
    assert p["class_name"]


def test_cli_validation_error_exit_code():
    code, _, err = egolstm.run_cli(["train", "--lr", "fast"])
    assert code == 1
    assert err.startswith("error:")

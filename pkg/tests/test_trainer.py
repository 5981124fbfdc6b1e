import json
import struct

import numpy as np
import pytest

from haad.encoder import EncoderConfig
from haad.motion import load_manifest
from haad.scoring import score_dataset
from haad.synth import synth_dataset
from haad.trainer import (AdamState, ModelFileError, TrainConfig, TrainError, adam_step, load_model,
                          lr_at, model_bytes, save_model, split_indices, train)


def small_config(**kw):
    enc = EncoderConfig(M=5, L=2, hidden=8, d_out=4, fuse_dim=8)
    return TrainConfig(**{"normal_label": "wave", "epochs": 4, "batch_size": 4, "flow_layers": 4,
                          "encoder": enc, **kw})


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    return synth_dataset(root, seed=3, clips_per_class=6, frames_range=(12, 16))


@pytest.fixture(scope="module")
def trained(data):
    return train(data, small_config())


# ------------------------------------------------------------------ schedule

def test_lr_endpoints_and_midpoint():
    cfg = TrainConfig()
    assert lr_at(0, cfg) == 1e-3
    assert lr_at(50, cfg) == 1e-5
    assert lr_at(25, cfg) == pytest.approx(1e-4, rel=1e-12)
    lrs = [lr_at(e, cfg) for e in range(51)]
    assert all(a > b for a, b in zip(lrs, lrs[1:]))
    with pytest.raises(ValueError):
        lr_at(51, cfg)


@pytest.mark.parametrize("kw", [{"epochs": 0}, {"lr_end": 1e-2}, {"lr_end": 0.0}, {"holdout_fraction": 1.0},
                                {"batch_size": 0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_config_dict_round_trip():
    cfg = small_config(seed=9)
    assert TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


# ---------------------------------------------------------------------- adam

def test_adam_zero_gradient():
    p = np.array([[1.0, -2.0]])
    state = AdamState()
    adam_step([p], [np.zeros_like(p)], state, lr=0.1)
    np.testing.assert_array_equal(p, [[1.0, -2.0]])
    np.testing.assert_array_equal(state.m[0], 0.0)
    np.testing.assert_array_equal(state.v[0], 0.0)


def test_adam_first_step():
    p = np.zeros((1, 1))
    adam_step([p], [np.ones((1, 1))], AdamState(), lr=0.1)
    assert p[0, 0] == pytest.approx(-0.1, rel=1e-6)


def test_adam_matches_reference_recurrence(rng):
    p = rng.normal(size=(3, 2))
    ref = p.copy()
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    state = AdamState()
    for t in range(1, 6):
        g = rng.normal(size=p.shape)
        adam_step([p], [g], state, lr=0.01)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p, ref, rtol=1e-13)


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step([np.zeros((2, 2))], [np.zeros((2, 1))], AdamState(), lr=0.1)


# ------------------------------------------------------------------ training

def test_split_is_seeded_and_disjoint():
    cfg = small_config()
    fit, hold = split_indices(10, cfg)
    assert len(hold) == 2 and sorted(np.r_[fit, hold]) == list(range(10))
    again = split_indices(10, cfg)
    assert np.array_equal(fit, again[0])
    assert len(split_indices(2, small_config(holdout_fraction=0.9))[0]) == 1


def test_history_and_bank(trained, data):
    assert [r["epoch"] for r in trained.history] == [1, 2, 3, 4]
    assert all(np.isfinite(r["train_nll"]) and np.isfinite(r["holdout_nll"]) for r in trained.history)
    assert trained.history[0]["lr"] == 1e-3
    n_fit = len(split_indices(6, small_config())[0])
    assert trained.bank.shape == (n_fit, 8)
    assert trained.final_train_nll == trained.history[-1]["train_nll"]


def test_nll_decreases(trained):
    assert trained.history[0]["train_nll"] > trained.history[-1]["train_nll"]


def test_same_seed_identical_bytes(trained, data):
    assert model_bytes(train(data, small_config())) == model_bytes(trained)
    assert model_bytes(train(data, small_config(seed=1))) != model_bytes(trained)


def test_other_labels_do_not_matter(trained, data):
    only_normal = data.with_clips([c for c in data.clips if c.label == "wave"])
    assert model_bytes(train(only_normal, small_config())) == model_bytes(trained)


def test_label_not_found(data):
    with pytest.raises(TrainError, match="label not found"):
        train(data, small_config(normal_label="nosuch"))


def test_insufficient_normal_samples(data):
    one = data.with_clips([c for c in data.clips if c.label != "wave"] + [data.clips[0]])
    assert sum(c.label == "wave" for c in one.clips) == 1
    with pytest.raises(TrainError, match="insufficient normal samples"):
        train(one, small_config())


def test_clip_shorter_than_m(data):
    cfg = small_config(encoder=EncoderConfig(M=13, L=2, hidden=4, d_out=2, fuse_dim=4))
    with pytest.raises(TrainError, match="shorter than M"):
        train(data, cfg)


# ------------------------------------------------------------ serialization

def test_save_load_bit_exact(trained, data, tmp_path):
    path = tmp_path / "m.model"
    save_model(trained, path)
    back = load_model(path)
    assert model_bytes(back) == path.read_bytes()
    assert path.read_bytes()[:8] == b"HAADMDL1"
    for scheme in ("knn", "nll"):
        a = [r.score for r in score_dataset(data, trained, scheme).records]
        b = [r.score for r in score_dataset(data, back, scheme).records]
        assert np.array(a).tobytes() == np.array(b).tobytes()


def _split(buf):
    (hlen,) = struct.unpack_from("<I", buf, 8)
    return json.loads(buf[12:12 + hlen]), buf[12 + hlen:]


def _join(header, payload):
    h = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return b"HAADMDL1" + struct.pack("<I", len(h)) + h + payload


def test_truncated_model(trained, tmp_path):
    buf = model_bytes(trained)
    for cut in (10, 200, len(buf) - 8):
        (tmp_path / "t.model").write_bytes(buf[:cut])
        with pytest.raises(ModelFileError, match="truncated model"):
            load_model(tmp_path / "t.model")


def test_bad_magic(trained, tmp_path):
    (tmp_path / "b.model").write_bytes(b"NOTMODEL" + model_bytes(trained)[8:])
    with pytest.raises(ModelFileError, match="magic"):
        load_model(tmp_path / "b.model")


def test_wrong_param_count(trained, tmp_path):
    header, payload = _split(model_bytes(trained))
    header["params"] = header["params"][:-1]
    (tmp_path / "p.model").write_bytes(_join(header, payload))
    with pytest.raises(ModelFileError, match="parameter count mismatch"):
        load_model(tmp_path / "p.model")


def test_version_mismatch(trained, tmp_path):
    header, payload = _split(model_bytes(trained))
    header["version"] = 99
    (tmp_path / "v.model").write_bytes(_join(header, payload))
    with pytest.raises(ModelFileError, match="version"):
        load_model(tmp_path / "v.model")


def test_trailing_bytes_and_missing(trained, tmp_path):
    (tmp_path / "x.model").write_bytes(model_bytes(trained) + b"\0" * 8)
    with pytest.raises(ModelFileError, match="trailing"):
        load_model(tmp_path / "x.model")
    with pytest.raises(ModelFileError, match="not found"):
        load_model(tmp_path / "missing.model")


def test_manifest_reload_gives_same_model(data, trained):
    assert model_bytes(train(load_manifest(data.path), small_config())) == model_bytes(trained)

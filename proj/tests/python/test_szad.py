import math

import numpy as np
import pytest

import szad


def test_config_round_trip(tmp_path, config):
    text = config.dumps()
    assert "[adapt]\nlatent_dim = 8\n" in text
    (tmp_path / "run.cfg").write_text(text)
    back = szad.Config()
    back.load(tmp_path / "run.cfg")
    assert back.describe() == config.describe()
    assert dict(config.describe())["run.seed"] == "7"
    with pytest.raises(szad.SzadError) as err:
        config.set("adapt.nope", "1")
    assert err.value.exit_code == 1


def test_missing_config_file():
    cfg = szad.Config()
    with pytest.raises(szad.SzadError, match="missing.cfg"):
        cfg.load("missing.cfg")


def test_synthesis_is_deterministic(config):
    a = szad.synthesize(config)
    b = szad.synthesize(config)
    assert [r.subject_id for r in a] == ["subject_00", "subject_01", "subject_02"]
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.signals, rb.signals)
        assert ra.labels == rb.labels


def test_recordings_and_features_round_trip(tmp_path, config, cohort):
    recs = szad.synthesize(config)
    szad.write_recordings(recs, tmp_path / "data")
    back = szad.read_recordings(tmp_path / "data")
    assert np.allclose(back[0].signals, recs[0].signals, rtol=0, atol=1e-12)
    szad.write_features(cohort, tmp_path / "features")
    feats = szad.read_features(tmp_path / "features")
    assert feats[1].values.shape == cohort[1].values.shape
    assert feats[1].values.shape[1] == 2 * len(szad.feature_names())


def test_auc_and_blocks():
    assert szad.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    assert szad.block_partition([1, 1, 0, 0, 1, 0]) == [(0, 4), (4, 6)]
    with pytest.raises(szad.SzadError):
        szad.auc([1.0, 2.0], [1, 1])


def test_adaptation_model(tmp_path, config, cohort):
    model = szad.train_adaptation(cohort, config)
    assert model.latent_dim == 8
    assert len(model.history) == 2
    assert model.initial["epoch"] == 0
    z = model.encode("subject_00", cohort[0].values)
    assert z.shape == (cohort[0].values.shape[0], 8)
    model.save(tmp_path / "adapt.szad")
    again = szad.load_adaptation_model(tmp_path / "adapt.szad")
    assert again.to_bytes() == model.to_bytes()
    (tmp_path / "bad.szad").write_bytes(b"XXXXX" + model.to_bytes()[5:])
    with pytest.raises(szad.SzadError, match="magic"):
        szad.load_adaptation_model(tmp_path / "bad.szad")


def test_gbt(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 3))
    y = (x[:, 0] > 0).astype(int).tolist()
    cfg = szad.make_config({"gbt.n_trees": 15})
    model, trace = szad.fit_gbt(x, y, config=cfg)
    assert model.n_trees == 15
    assert all(b <= a for a, b in zip(trace, trace[1:]))
    p = model.predict(x)
    assert szad.auc(p.tolist(), y) > 0.95
    model.save(tmp_path / "gbt.szad")
    assert szad.load_gbt_model(tmp_path / "gbt.szad").to_bytes() == model.to_bytes()


def test_experiment(config, cohort):
    out = szad.run_experiment(cohort, config)
    assert out["csv"].startswith("subject,scheme,n,trial,auc")
    assert "| Average |" in out["markdown"]
    assert "run.seed = 7" in out["markdown"]
    for subject, scheme, n, trial, value in out["results"]:
        assert scheme in ("SS", "CS")
        assert 0.0 <= value <= 1.0
    assert out == szad.run_experiment(cohort, config)


def test_tsne(config):
    rng = np.random.default_rng(1)
    x = np.vstack([rng.normal(size=(30, 4)), rng.normal(loc=15.0, size=(30, 4))])
    subjects = ["a"] * 30 + ["b"] * 30
    emb = szad.tsne(x, subjects, [0, 1] * 30, config)
    assert emb["coords"].shape == (60, 2)
    clusters = [0 if s == "a" else 1 for s in emb["subject"]]
    assert szad.silhouette(emb["coords"], clusters) > 0.5
    assert not math.isnan(emb["kl_trace"][-1])

import pytest

import szad

SMALL = {
    "cohort.n_subjects": 3,
    "cohort.blocks_per_subject": 3,
    "cohort.duration_s": 40,
    "adapt.latent_dim": 8,
    "adapt.encoder_hidden": 16,
    "adapt.disc_hidden1": 16,
    "adapt.disc_hidden2": 8,
    "adapt.epochs": 2,
    "adapt.learning_rate": 1e-3,
    "gbt.n_trees": 10,
    "tsne.iterations": 250,
    "tsne.perplexity": 10,
    "eval.ns": [0, 1, 2],
    "eval.trials": 1,
}


@pytest.fixture(scope="session")
def config():
    return szad.make_config(SMALL, seed=7)


@pytest.fixture(scope="session")
def cohort(config):
    return szad.extract_features(szad.synthesize(config), config.window_seconds)

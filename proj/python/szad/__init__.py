"""Seizure detection with multi-subject domain adaptation."""

from ._szad import (
    AdaptationModel,
    Config,
    FeatureMatrix,
    GbtModel,
    Recording,
    SzadError,
    auc,
    block_partition,
    extract_features,
    feature_names,
    fit_gbt,
    load_adaptation_model,
    load_gbt_model,
    read_features,
    read_recordings,
    run_experiment,
    silhouette,
    synthesize,
    train_adaptation,
    tsne,
    write_features,
    write_recordings,
)


def make_config(settings=None, **kwargs):
    """Config with `section.key` overrides from a dict; seed/threads as keywords."""
    cfg = Config()
    for key, value in (settings or {}).items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        cfg.set(key, str(value))
    for key, value in kwargs.items():
        setattr(cfg, key, value)
    return cfg


__all__ = [name for name in dir() if not name.startswith("_")]

"""PAC-Bayes VAE training and risk certification."""

import json as _json

from ._core import (
    Config,
    binary_kl,
    certify_json,
    gaussian_sample,
    kl_inverse,
    load_binarised_images,
    load_config,
    quadratic_bound,
    run_pipeline_json,
    train,
    train_prior,
)


def certify(config, posterior_checkpoint, prior_checkpoint):
    """Evaluate certificates for a trained posterior; returns the report dict."""
    return _json.loads(certify_json(config, posterior_checkpoint, prior_checkpoint))


def run_pipeline(config):
    """train_prior + train + certify; returns the report dict."""
    return _json.loads(run_pipeline_json(config))


__all__ = [
    "Config",
    "binary_kl",
    "certify",
    "certify_json",
    "gaussian_sample",
    "kl_inverse",
    "load_binarised_images",
    "load_config",
    "quadratic_bound",
    "run_pipeline",
    "run_pipeline_json",
    "train",
    "train_prior",
]

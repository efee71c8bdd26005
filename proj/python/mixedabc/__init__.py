"""Surrogate-based inverse uncertainty quantification for mixed-type tabular data."""

import json

from . import _core
from ._core import Error, logistic_pdf, summarize, weighted_quantile

__all__ = [
    "Error",
    "cluster",
    "fit_prior",
    "generate",
    "logistic_pdf",
    "run_pipeline",
    "summarize",
    "weighted_quantile",
]


def generate(out_dir, rows=4000, seed=0, noise_ratio=0.1, categoricals=True):
    """Write data.csv, schema.json (and embeddings.tsv) to out_dir; return the ground truth."""
    return json.loads(_core.generate(str(out_dir), rows, seed, noise_ratio, categoricals))


def fit_prior(sample, candidates=(), n_iter=20000, burn_in=5000, seed=0):
    return json.loads(_core.fit_prior(list(map(float, sample)), list(candidates), n_iter, burn_in, seed))


def run_pipeline(config, out=None):
    """Run every stage; returns the report that was written to report.json."""
    return json.loads(_core.run_pipeline(str(config), "" if out is None else str(out)))


def cluster(embeddings, k=4, seed=0):
    return json.loads(_core.cluster(str(embeddings), k, seed))

"""Weight-transform PGD and ZOO attacks against stochastic defences."""

from ._wtpgd import (
    Dataset,
    Model,
    WtpgdError,
    lipschitz_upper_bound,
    load_model,
    pgd,
    read_dataset,
    run_experiment,
    smoothing_error_bound,
    train,
    wt_pgd,
    wt_zoo,
    zoo,
)

__all__ = [
    "Dataset",
    "Model",
    "WtpgdError",
    "lipschitz_upper_bound",
    "load_model",
    "pgd",
    "read_dataset",
    "run_experiment",
    "smoothing_error_bound",
    "train",
    "wt_pgd",
    "wt_zoo",
    "zoo",
]

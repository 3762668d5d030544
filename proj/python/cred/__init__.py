from ._cred import (
    ConfigError,
    CredError,
    CredValueError,
    NonFiniteError,
    ShapeError,
    budget,
    forward,
    giou,
    gradcheck,
    hungarian_match,
    make_sample,
    osma_forward,
    osma_output_extents,
    token_count,
    train_toy,
)

__all__ = [
    "ConfigError",
    "CredError",
    "CredValueError",
    "NonFiniteError",
    "ShapeError",
    "budget",
    "forward",
    "giou",
    "gradcheck",
    "hungarian_match",
    "make_sample",
    "osma_forward",
    "osma_output_extents",
    "token_count",
    "train_toy",
]

"""Input checks shared by the estimators."""

from __future__ import annotations

import numbers
from typing import Any, Iterable

import numpy as np

__all__ = ["check_graphs", "check_positive_int", "check_positive", "check_fraction",
           "check_choice", "check_labels"]


def check_graphs(X: Any, name: str = "X") -> list:
    from .org import Org

    graphs = list(X) if isinstance(X, Iterable) else None
    if not graphs:
        raise ValueError(f"{name} must be a non-empty sequence of graphs")
    for i, g in enumerate(graphs):
        if not isinstance(g, Org):
            raise TypeError(f"{name}[{i}] is {type(g).__name__}, expected Org")
    return graphs


def check_positive_int(name: str, value: Any, allow_zero: bool = False) -> int:
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} must be {'non-negative' if allow_zero else 'positive'}, got {value}")
    return int(value)


def check_positive(name: str, value: Any, allow_zero: bool = False) -> float:
    if not isinstance(value, numbers.Real) or isinstance(value, bool) or not np.isfinite(value):
        raise TypeError(f"{name} must be a finite number, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} must be {'non-negative' if allow_zero else 'positive'}, got {value}")
    return float(value)


def check_fraction(name: str, value: Any, inclusive_one: bool = False) -> float:
    value = check_positive(name, value, allow_zero=True)
    if value > 1 or (value == 1 and not inclusive_one):
        raise ValueError(f"{name} must lie in [0, 1{']' if inclusive_one else ')'}, got {value}")
    return value


def check_choice(name: str, value: Any, choices: Iterable) -> Any:
    choices = tuple(choices)
    if value not in choices:
        raise ValueError(f"{name} must be one of {choices}, got {value!r}")
    return value


def check_labels(y: Any, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 (benign) or 1 (malicious)")
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both classes")
    return y.astype(np.int64)

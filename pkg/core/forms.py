# core/forms.py
# -*- coding: utf-8 -*-
"""Named parametric forms for coefficient fields, boundary data and initial data."""

from __future__ import annotations

import math
from typing import Callable, Dict, Mapping, Sequence

import numpy as np

from domain.errors import ConfigError

ScalarField = Callable[[float, np.ndarray], np.ndarray]
VectorField = Callable[[float, np.ndarray], np.ndarray]

SCALAR_FORMS = ("zero", "constant", "gaussian", "mode", "ramp", "linear_in_time")
VECTOR_FORMS = ("zero", "constant")


def _vec(value, dim: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1 and dim > 1:
        arr = np.full(dim, float(arr[0]))
    if arr.size != dim:
        raise ConfigError(f"Expected a {dim}-vector, got {arr.tolist()}.")
    return arr


def scalar_form(name: str, params: Mapping[str, object], dim: int) -> ScalarField:
    """
    zero | constant(value) | gaussian(amplitude, center, width)
    | mode(amplitude, k, length) = amplitude * prod_i sin(k pi x_i / length)
    | ramp(value, length) = value * max(0, 1 - x_1 / length)
    | linear_in_time(value, rate) = value * (1 + rate t)
    """
    p = dict(params)
    if name == "zero":
        return lambda t, X: np.zeros(np.asarray(X).reshape(-1, dim).shape[0])
    if name == "constant":
        v = float(p.get("value", 0.0))
        return lambda t, X: np.full(np.asarray(X).reshape(-1, dim).shape[0], v)
    if name == "linear_in_time":
        v = float(p.get("value", 1.0))
        rate = float(p.get("rate", 0.0))
        return lambda t, X: np.full(np.asarray(X).reshape(-1, dim).shape[0], v * (1.0 + rate * t))
    if name == "gaussian":
        amp = float(p.get("amplitude", 1.0))
        center = _vec(p.get("center", 0.0), dim)
        width = float(p.get("width", 0.1))
        if width <= 0:
            raise ConfigError("gaussian width must be positive.")

        def gauss(t, X):
            d = np.asarray(X, dtype=float).reshape(-1, dim) - center
            return amp * np.exp(-np.sum(d * d, axis=1) / (2 * width * width))

        return gauss
    if name == "mode":
        amp = float(p.get("amplitude", 1.0))
        k = float(p.get("k", 1.0))
        length = float(p.get("length", 1.0))

        def mode(t, X):
            Xr = np.asarray(X, dtype=float).reshape(-1, dim)
            return amp * np.prod(np.sin(k * math.pi * Xr / length), axis=1)

        return mode
    if name == "ramp":
        v = float(p.get("value", 1.0))
        length = float(p.get("length", 1.0))

        def ramp(t, X):
            Xr = np.asarray(X, dtype=float).reshape(-1, dim)
            return v * np.maximum(0.0, 1.0 - Xr[:, 0] / length)

        return ramp
    raise ConfigError(f"Unknown scalar form {name!r}; expected one of {SCALAR_FORMS}.")


def vector_form(name: str, params: Mapping[str, object], dim: int) -> VectorField:
    p = dict(params)
    if name == "zero":
        return lambda t, X: np.zeros((np.asarray(X).reshape(-1, dim).shape[0], dim))
    if name == "constant":
        v = _vec(p.get("value", 0.0), dim)
        return lambda t, X: np.broadcast_to(v, (np.asarray(X).reshape(-1, dim).shape[0], dim)).copy()
    raise ConfigError(f"Unknown vector form {name!r}; expected one of {VECTOR_FORMS}.")


def is_autonomous(name: str) -> bool:
    return name != "linear_in_time"


def parse_form(text: str) -> Dict[str, object]:
    """'gaussian amplitude=1 center=0.5,0.5 width=0.1' -> {'name': ..., params...}."""
    parts = (text or "zero").split()
    out: Dict[str, object] = {"name": parts[0]}
    params: Dict[str, object] = {}
    for token in parts[1:]:
        if "=" not in token:
            raise ConfigError(f"Malformed form parameter {token!r}; expected key=value.")
        key, raw = token.split("=", 1)
        values: Sequence[float]
        try:
            values = [float(v) for v in raw.split(",")]
        except ValueError as exc:
            raise ConfigError(f"Form parameter {key!r} is not numeric: {raw!r}.") from exc
        params[key] = values[0] if len(values) == 1 else list(values)
    out["params"] = params
    return out

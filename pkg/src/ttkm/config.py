"""Run configuration: INI files describing data, splits, grid, and solver.

Sections and keys (all optional unless a command needs them)::

    [data]    train_images, train_labels, test_images, test_labels,
              reshape (comma ints), normalize (bool)
    [split]   train_per_class, val_per_class, seed
    [grid]    c_values, sigma_values (comma floats),
              rank_values (comma ints, or AxBxC for per-position chains),
              combine (prod|sum)
    [kernel]  mode_kinds (comma of linear|poly|rbf), poly_c, poly_degree
    [solver]  tol, max_iter

Sample/label files are dispatched on extension: ``.ttn`` for the binary
tensor container, ``.json`` for a plain list of labels, anything else is
parsed as IDX (with transparent ``.gz``).
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .idx import load_idx_images, load_idx_labels
from .pipeline import GridConfig
from .tensor import DenseTensor
from .ttn import read_dataset

_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration for the training commands."""

    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    reshape: tuple[int, ...] | None = None
    normalize: bool = False
    train_per_class: int = 50
    val_per_class: int = 50
    seed: int = 0
    c_values: tuple[float, ...] = (1.0, 10.0, 100.0, 1000.0)
    sigma_values: tuple[float, ...] = (1.0, 10.0, 100.0, 1000.0)
    rank_values: tuple = (2, 3, 4, 5, 6, 7, 8)
    combine: str = "prod"
    mode_kinds: tuple[str, ...] | None = None
    poly_c: float = 1.0
    poly_degree: int = 2
    solver_tol: float = 1e-3
    solver_max_iter: int | None = None

    def grid(self, order: int) -> GridConfig:
        """The grid for data of the given tensor order."""
        kinds = self.mode_kinds if self.mode_kinds is not None else ("rbf",) * order
        if len(kinds) != order:
            raise ConfigError(
                f"mode_kinds names {len(kinds)} modes but the data has order {order}"
            )
        try:
            return GridConfig(
                c_values=self.c_values,
                sigma_values=self.sigma_values,
                rank_values=self.rank_values,
                mode_kinds=kinds,
                combine=self.combine,
                poly_c=self.poly_c,
                poly_degree=self.poly_degree,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _floats(text: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str, key: str) -> tuple[int, ...]:
    vals = _floats(text, key)
    out = tuple(int(v) for v in vals)
    if any(o != v for o, v in zip(out, vals)):
        raise ConfigError(f"{key}: expected integers, got {text!r}")
    return out


def _ranks(text: str, key: str) -> tuple:
    out = []
    for part in text.replace(",", " ").split():
        if "x" in part:
            out.append(tuple(_ints(part.replace("x", " "), key)))
        else:
            out.append(_ints(part, key)[0])
    if not out:
        raise ConfigError(f"{key}: no rank settings in {text!r}")
    return tuple(out)


def _bool(text: str, key: str) -> bool:
    try:
        return _BOOL[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"{key}: expected a boolean, got {text!r}") from None


def load_config(path) -> RunConfig:
    """Parse an INI file into a RunConfig; unknown keys are rejected."""
    parser = configparser.ConfigParser()
    with open(path, "r", encoding="utf-8") as fh:
        try:
            parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    known = {
        "data": {"train_images", "train_labels", "test_images", "test_labels",
                 "reshape", "normalize"},
        "split": {"train_per_class", "val_per_class", "seed"},
        "grid": {"c_values", "sigma_values", "rank_values", "combine"},
        "kernel": {"mode_kinds", "poly_c", "poly_degree"},
        "solver": {"tol", "max_iter"},
    }
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in parser[section]:
            if key not in known[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")

    kwargs = {}

    def get(section, key):
        if parser.has_option(section, key):
            value = parser.get(section, key).strip()
            return value if value else None
        return None

    for key in ("train_images", "train_labels", "test_images", "test_labels"):
        value = get("data", key)
        if value is not None:
            kwargs[key] = value
    value = get("data", "reshape")
    if value is not None:
        kwargs["reshape"] = _ints(value, "reshape")
    value = get("data", "normalize")
    if value is not None:
        kwargs["normalize"] = _bool(value, "normalize")

    for key in ("train_per_class", "val_per_class", "seed"):
        value = get("split", key)
        if value is not None:
            kwargs[key] = _ints(value, key)[0]

    value = get("grid", "c_values")
    if value is not None:
        kwargs["c_values"] = _floats(value, "c_values")
    value = get("grid", "sigma_values")
    if value is not None:
        kwargs["sigma_values"] = _floats(value, "sigma_values")
    value = get("grid", "rank_values")
    if value is not None:
        kwargs["rank_values"] = _ranks(value, "rank_values")
    value = get("grid", "combine")
    if value is not None:
        if value not in ("prod", "sum"):
            raise ConfigError(f"combine: expected prod or sum, got {value!r}")
        kwargs["combine"] = value

    value = get("kernel", "mode_kinds")
    if value is not None:
        kinds = tuple(p.strip() for p in value.split(",") if p.strip())
        for kind in kinds:
            if kind not in ("linear", "poly", "rbf"):
                raise ConfigError(f"mode_kinds: unknown kernel kind {kind!r}")
        kwargs["mode_kinds"] = kinds
    value = get("kernel", "poly_c")
    if value is not None:
        kwargs["poly_c"] = _floats(value, "poly_c")[0]
    value = get("kernel", "poly_degree")
    if value is not None:
        kwargs["poly_degree"] = _ints(value, "poly_degree")[0]

    value = get("solver", "tol")
    if value is not None:
        kwargs["solver_tol"] = _floats(value, "tol")[0]
    value = get("solver", "max_iter")
    if value is not None:
        kwargs["solver_max_iter"] = _ints(value, "max_iter")[0]

    cfg = RunConfig(**kwargs)
    if cfg.reshape is not None and cfg.mode_kinds is not None:
        if len(cfg.reshape) != len(cfg.mode_kinds):
            raise ConfigError(
                f"reshape has {len(cfg.reshape)} modes but mode_kinds names "
                f"{len(cfg.mode_kinds)}"
            )
    return cfg


def load_samples(path, reshape=None):
    """Load tensor samples from a .ttn container or an IDX image file."""
    if str(path).endswith(".ttn"):
        samples = read_dataset(path)
        if reshape is not None and tuple(reshape) != samples[0].dims:
            reshape = tuple(int(n) for n in reshape)
            if int(np.prod(reshape)) != samples[0].size:
                raise ValueError(
                    f"reshape {reshape} does not match sample size {samples[0].size}"
                )
            samples = [
                DenseTensor(s.to_flat().reshape(reshape, order="F")) for s in samples
            ]
        return samples
    return load_idx_images(path, reshape=reshape)


def load_labels(path) -> np.ndarray:
    """Load labels from an IDX label file or a JSON list."""
    if str(path).endswith(".json"):
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        return np.asarray(data, dtype=np.int64)
    return load_idx_labels(path)

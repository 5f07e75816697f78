# Copyright 2026 The ModalPrompt Lab Authors
# SPDX-License-Identifier: Apache-2.0

"""Continual prompt learning with modality-guided prompt selection and fusion.

The heavy lifting happens in the native ``_core`` extension; this module
turns its JSON payloads into plain Python values.
"""

from __future__ import annotations

import json
import os
from typing import Iterable, Sequence

import numpy as np

from . import _core
from ._core import (
    Backbone,
    ConfigError,
    Error,
    InputError,
    IntegrityError,
    SchemaError,
    StateError,
    Suite,
)

__all__ = [
    "Backbone",
    "ConfigError",
    "Error",
    "InputError",
    "IntegrityError",
    "SchemaError",
    "StateError",
    "Suite",
    "aggregate",
    "bench",
    "check_fixture",
    "cli",
    "fixture_csv",
    "fixture_names",
    "generate_suite",
    "load_suite",
    "obtain_backbone",
    "plot_run",
    "pretrain_backbone",
    "proto_loss",
    "report",
    "report_from_csv",
    "run_grid",
    "select_eval",
    "select_train",
    "suite_summary",
    "train",
    "variant_names",
]

DEFAULT_PRETRAIN = {"samples": 4000, "epochs": 15, "max_context": 8, "learning_rate": 3e-3, "seed": 11}


def report(rows: Sequence[Sequence[float]], names: Sequence[str] = ()) -> dict:
    """Metrics of a lower-triangular accuracy matrix given as rows."""
    return json.loads(_core.report_from_rows([list(map(float, r)) for r in rows], list(names)))


def report_from_csv(text: str) -> dict:
    return json.loads(_core.report_from_csv(text))


def aggregate(reports: Iterable[dict]) -> dict:
    """Mean and sample standard deviation of several reports."""
    return json.loads(_core.aggregate([json.dumps(r) for r in reports]))


def fixture_names() -> list[str]:
    return list(_core.fixture_names())


def fixture_csv(name: str) -> str:
    return _core.fixture_csv(name)


def check_fixture(name: str, csv: str = "") -> list[tuple[str, float, float]]:
    """Mismatches (metric, expected, computed) against a reference fixture."""
    return list(_core.check_fixture(name, csv))


def generate_suite(seed: int | None = None, **options) -> Suite:
    """Task suite; keyword options mirror the suite fields (tasks, n_train,
    n_eval, noise_std, background_fraction, layout, world). With ``seed`` the
    run seed is added to the base suite seed."""
    text = json.dumps(options)
    if seed is not None:
        text = _core.suite_for_seed(text, int(seed))
    return _core.generate_suite(text)


def load_suite(path: str | os.PathLike) -> tuple[Suite, list[str]]:
    suite, warnings = _core.load_suite(os.fspath(path))
    return suite, list(warnings)


def suite_summary(suite: Suite) -> dict:
    return json.loads(suite.summary())


def pretrain_backbone(**plan) -> Backbone:
    return _core.pretrain_backbone(json.dumps({**DEFAULT_PRETRAIN, **plan}))


def obtain_backbone(path: str | os.PathLike, **plan) -> Backbone:
    """Loads ``path`` or pretrains there when it does not exist."""
    return _core.obtain_backbone(os.fspath(path), json.dumps({**DEFAULT_PRETRAIN, **plan}))


def variant_names() -> list[str]:
    return list(_core.variant_names())


def train(variant: str, backbone: Backbone, suite: Suite, seed: int = 1, **config) -> dict:
    """One continual run; returns matrix, report, stage logs and traces.

    Config keys follow the run config JSON (M, k, epochs_per_task, lr, ...).
    """
    return json.loads(_core.run_seed(variant, json.dumps(config), backbone, suite, int(seed)))


def run_grid(plan: dict, out_dir: str | os.PathLike) -> dict:
    """Runs a grid plan into ``out_dir``; returns aggregates per variant."""
    return json.loads(_core.run_grid(json.dumps(plan), os.fspath(out_dir)))


def plot_run(run_dir: str | os.PathLike) -> list[str]:
    return list(_core.plot_run(os.fspath(run_dir)))


def bench(
    backbone: Backbone,
    task_counts: Sequence[int] = (2, 4, 8),
    k: int = 3,
    prompt_length: int = 10,
    samples: int = 48,
    repeats: int = 3,
    seed: int = 1,
) -> list[dict]:
    return json.loads(
        _core.complexity_benchmark(backbone, list(task_counts), k, prompt_length, samples, repeats, seed)
    )


def _row(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64).reshape(1, -1)


def select_eval(prototypes, x_v, x_t, k: int, w_image: float = 1.0, w_text: float = 1.0) -> list[int]:
    """Task ids (1-based, ascending) of the k best prototypes for one input."""
    p = np.atleast_2d(np.asarray(prototypes, dtype=np.float64))
    return list(_core.select_eval(p, _row(x_v), _row(x_t), k, w_image, w_text))


def select_train(prototypes, x_v, x_t, current: int, k: int, w_image: float = 1.0, w_text: float = 1.0) -> list[int]:
    """The current task plus the k-1 best earlier ones."""
    p = np.atleast_2d(np.asarray(prototypes, dtype=np.float64))
    return list(_core.select_train(p, _row(x_v), _row(x_t), current, k, w_image, w_text))


def proto_loss(prototype, x_v, x_t) -> float:
    return float(_core.proto_loss(_row(prototype), _row(x_v), _row(x_t)))


def cli(*args: str) -> tuple[int, str, str]:
    """Runs a command-line invocation in-process: (exit code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args])

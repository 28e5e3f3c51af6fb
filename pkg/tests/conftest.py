"""Session fixtures for the acceptance suite.

The synthetic subpopulation-shift experiment (criteria 6-8) and the toy
instance (criterion 5) are expensive, so each runs once per session; the
determinism criterion re-runs them into fresh directories and compares
bytes.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from robustlm.corpus import MixtureSpec
from robustlm.dro import DroConfig
from robustlm.evaluate import SweepCell, SweepResult, run_sweep
from robustlm.synthetic import LanguageSpec, make_corpus_file
from robustlm.toy import ToyReport, run_toy

TARGET_SPEC = LanguageSpec(vocab_size=200, seed=101, concentration=2.5, mean_length=8.0)
NUISANCE_SPEC = LanguageSpec(vocab_size=200, seed=202, concentration=0.8, mean_length=12.0)

TARGET_COUNT = 5_000
ALPHA_TRAIN_GRID = (1.0, 0.7, 0.4, 0.2, 0.1)
ALPHA_CHOICE_GRID = (0.1, 0.2, 0.3, 0.5)
SWEEP_SEED = 42
MIX_SEED = 9

TOY_KWARGS = dict(steps=6000, batch_size=256, lr=0.05, seed=0, alpha=0.2)


@dataclass
class SweepBundle:
    result: SweepResult
    alpha_result: SweepResult
    main_dir: Path
    alpha_dir: Path
    duration_main: float
    duration_alpha: float
    csv_path: Path


@dataclass
class ToyBundle:
    report: ToyReport
    duration: float


@pytest.fixture(scope="session")
def synth_corpora(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("synth")
    make_corpus_file(root / "target_train.txt", 6_000, TARGET_SPEC, sample_seed=1)
    make_corpus_file(root / "target_test.txt", 2_000, TARGET_SPEC, sample_seed=2)
    make_corpus_file(root / "nuisance.txt", 46_000, NUISANCE_SPEC, sample_seed=3)
    return root


def sweep_mixture(root: Path) -> MixtureSpec:
    return MixtureSpec(
        target_corpus=str(root / "target_train.txt"),
        nuisance_corpus=str(root / "nuisance.txt"),
        alpha_train=1.0,
        target_count=TARGET_COUNT,
        seed=MIX_SEED,
    )


def sweep_config(**overrides) -> DroConfig:
    base = dict(
        objective="mle", alpha=1.0, lr=0.05, steps=600, batch_size=128, seed=SWEEP_SEED
    )
    base.update(overrides)
    return DroConfig(**base)


def main_grid_cells() -> list[SweepCell]:
    cells = [
        SweepCell(alpha_train=at, objective=obj, alpha=at)
        for at in ALPHA_TRAIN_GRID
        for obj in ("mle", "topic-cvar")
    ]
    cells.append(SweepCell(alpha_train=0.1, objective="topic-cvar-logloss", alpha=0.1))
    cells.append(SweepCell(alpha_train=0.1, objective="sentence-cvar", alpha=0.1))
    return cells


def alpha_grid_cells() -> list[SweepCell]:
    # 0.2 is covered by the main grid's alpha_train=0.1 cell (clamped to 0.2)
    return [
        SweepCell(alpha_train=0.1, objective="topic-cvar", alpha=a)
        for a in ALPHA_CHOICE_GRID
        if a != 0.2
    ]


def execute_sweep(root: Path, out_root: Path) -> SweepBundle:
    mixture = sweep_mixture(root)
    test_corpus = root / "target_test.txt"
    start = time.perf_counter()
    result = run_sweep(
        main_grid_cells(), sweep_config(), mixture, test_corpus, out_root / "main", top_k=200
    )
    duration_main = time.perf_counter() - start
    start = time.perf_counter()
    alpha_result = run_sweep(
        alpha_grid_cells(),
        sweep_config(alpha_floor=0.0),
        mixture,
        test_corpus,
        out_root / "alpha",
        top_k=200,
    )
    duration_alpha = time.perf_counter() - start
    csv_path = out_root / "sweep.csv"
    combined = SweepResult(rows=result.rows + alpha_result.rows)
    combined.to_csv(csv_path)
    return SweepBundle(
        result=result,
        alpha_result=alpha_result,
        main_dir=out_root / "main",
        alpha_dir=out_root / "alpha",
        duration_main=duration_main,
        duration_alpha=duration_alpha,
        csv_path=csv_path,
    )


@pytest.fixture(scope="session")
def sweep_bundle(synth_corpora, tmp_path_factory) -> SweepBundle:
    return execute_sweep(synth_corpora, tmp_path_factory.mktemp("sweep_run1"))


@pytest.fixture(scope="session")
def sweep_rerun_bundle(synth_corpora, tmp_path_factory) -> SweepBundle:
    return execute_sweep(synth_corpora, tmp_path_factory.mktemp("sweep_run2"))


@pytest.fixture(scope="session")
def toy_bundle() -> ToyBundle:
    start = time.perf_counter()
    report = run_toy(**TOY_KWARGS)
    return ToyBundle(report=report, duration=time.perf_counter() - start)


@pytest.fixture(scope="session")
def toy_rerun_bundle() -> ToyBundle:
    start = time.perf_counter()
    report = run_toy(**TOY_KWARGS)
    return ToyBundle(report=report, duration=time.perf_counter() - start)

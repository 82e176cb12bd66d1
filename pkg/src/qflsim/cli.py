"""Experiment orchestration: ``train``, ``eval``, ``sweep``, ``report``.

Configuration is one JSON file with a strict schema: unknown keys are
rejected and every validation error names the offending field. Two
presets are bundled: ``desk`` (3000/300 samples, short fine-tune,
synthetic data, runs in minutes) and ``paper`` (18000/1000 MNIST-scale
protocol; expects user-supplied IDX paths). A config file overlays the
preset; ``--seed`` and ``--out`` override individual fields.

Outputs per run directory: ``checkpoint.json`` (model parameters),
``rounds.jsonl`` (one record per communication round), ``surface.csv``
(gamma, epsilon, accuracy_pct), ``metrics.json`` (per-coverage ARA,
ARA mean, RV), ``manifest.json`` (config digest, seed, version, wall
time — the only file carrying timestamps), and ``dataset_manifest.json``
(file checksums and sample counts).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .adversary import AttackConfig
from .data import SplitSpec, load_idx, partition, pool_2x2, preprocess, subsample, write_dataset_manifest
from .errors import ConfigError, MetricError, QflsimError
from .federation import (
    FederationConfig,
    FineTune,
    Fixed,
    Mix,
    Scratch,
    centralized_train,
    run_experiment,
)
from .metrics import (
    DEFAULT_EPSILON_GRID,
    DEFAULT_GAMMA_GRID,
    RobustnessSurface,
    eval_accuracy,
    read_surface_csv,
    write_metrics_json,
    write_surface_csv,
)
from .qnn import ModelConfig, load_checkpoint, save_checkpoint
from .synth import write_synthetic_idx


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


def desk_preset() -> dict:
    """Small hermetic configuration for CI and laptops."""
    return {
        "dataset": {"kind": "synth"},
        "split": {"n_train": 3000, "n_test": 300, "mode": "iid"},
        "model": {
            "n_qubits": 6,
            "n_layers": 2,
            "n_classes": 3,
            "readout_qubits": [0, 1, 2],
            "input_dim": 64,
        },
        "federation": {
            "mode": "federated",
            "n_clients": 15,
            "coverage": 0.0,
            "rho": 0.5,
            "schedule": {"kind": "fixed", "epsilon": 0.1},
            "regime": {"kind": "fine_tune", "clean_rounds": 30, "at_rounds": 12},
            "local_epochs": 1,
            "batch_size": 32,
            "lr": 0.01,
        },
        "attack_eval": {"epsilon_grid": list(DEFAULT_EPSILON_GRID), "steps": 10},
        "sweep": {"coverages": list(DEFAULT_GAMMA_GRID)},
        "output_dir": "runs/desk",
        "master_seed": 0,
    }


def paper_preset() -> dict:
    """Full-scale protocol; dataset paths must be supplied by the user config."""
    cfg = desk_preset()
    cfg["dataset"] = {"kind": "mnist"}
    cfg["split"] = {"n_train": 18000, "n_test": 1000, "mode": "iid"}
    cfg["federation"]["regime"] = {"kind": "fine_tune", "clean_rounds": 50, "at_rounds": 30}
    cfg["output_dir"] = "runs/paper"
    return cfg


PRESETS = {"desk": desk_preset, "paper": paper_preset}


# ---------------------------------------------------------------------------
# Strict config parsing
# ---------------------------------------------------------------------------


class _Section:
    """Dict wrapper that tracks consumed keys and reports dotted field paths."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"field {path or '<root>'}: expected an object")
        self.data = data
        self.path = path
        self.seen: set[str] = set()

    def _label(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def take(self, key: str, kind, default=...):
        self.seen.add(key)
        if key not in self.data:
            if default is ...:
                raise ConfigError(f"field {self._label(key)}: missing")
            return default
        value = self.data[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is not None and not isinstance(value, kind):
            raise ConfigError(
                f"field {self._label(key)}: expected {getattr(kind, '__name__', kind)},"
                f" got {type(value).__name__}"
            )
        return value

    def section(self, key: str, default=...) -> "_Section":
        return _Section(self.take(key, dict, default), self._label(key))

    def finish(self):
        unknown = sorted(set(self.data) - self.seen)
        if unknown:
            raise ConfigError(f"field {self._label(unknown[0])}: unknown key")


def _parse_schedule(sec: _Section):
    kind = sec.take("kind", str)
    if kind == "fixed":
        out = Fixed(epsilon=sec.take("epsilon", float))
    elif kind == "mix":
        out = Mix(radii=tuple(sec.take("radii", list)))
    else:
        raise ConfigError(f"field {sec.path}.kind: expected 'fixed' or 'mix', got {kind!r}")
    sec.finish()
    return out


def _parse_regime(sec: _Section):
    kind = sec.take("kind", str)
    if kind == "fine_tune":
        out = FineTune(
            clean_rounds=sec.take("clean_rounds", int, 50),
            at_rounds=sec.take("at_rounds", int, 30),
        )
    elif kind == "scratch":
        out = Scratch(at_rounds=sec.take("at_rounds", int, 20))
    else:
        raise ConfigError(f"field {sec.path}.kind: expected 'fine_tune' or 'scratch', got {kind!r}")
    sec.finish()
    return out


class ExperimentConfig:
    """Validated experiment description; see the README for the schema."""

    def __init__(self, raw: dict):
        self.raw = copy.deepcopy(raw)
        root = _Section(raw, "")

        ds = root.section("dataset")
        self.dataset_kind = ds.take("kind", str)
        if self.dataset_kind in ("mnist", "fmnist"):
            self.dataset_paths = {
                name: ds.take(name, str)
                for name in ("train_images", "train_labels", "test_images", "test_labels")
            }
            self.synth_dir = None
        elif self.dataset_kind == "synth":
            self.dataset_paths = None
            self.synth_dir = ds.take("dir", str, None)
        else:
            raise ConfigError(
                f"field dataset.kind: expected 'mnist', 'fmnist' or 'synth', got {self.dataset_kind!r}"
            )
        ds.finish()

        self.master_seed = root.take("master_seed", int, 0)

        sp = root.section("split")
        self.split = SplitSpec(
            n_train=sp.take("n_train", int),
            n_test=sp.take("n_test", int),
            mode=sp.take("mode", str, "iid"),
            n_clients=1,  # replaced below once federation is parsed
            seed=sp.take("seed", int, self.master_seed),
        )
        sp.finish()

        mo = root.section("model", {})
        self.model = ModelConfig(
            n_qubits=mo.take("n_qubits", int, 6),
            n_layers=mo.take("n_layers", int, 2),
            n_classes=mo.take("n_classes", int, 3),
            readout_qubits=tuple(mo.take("readout_qubits", list, [0, 1, 2])),
            input_dim=mo.take("input_dim", int, 64),
        )
        mo.finish()

        fe = root.section("federation", {})
        self.federation_mode = fe.take("mode", str, "federated")
        if self.federation_mode not in ("federated", "centralized"):
            raise ConfigError(
                f"field federation.mode: expected 'federated' or 'centralized',"
                f" got {self.federation_mode!r}"
            )
        schedule = _parse_schedule(fe.section("schedule", {"kind": "fixed", "epsilon": 0.1}))
        regime = _parse_regime(fe.section("regime", {"kind": "fine_tune"}))
        self.federation = FederationConfig(
            n_clients=fe.take("n_clients", int, 15),
            coverage=fe.take("coverage", float, 0.0),
            rho=fe.take("rho", float, 0.5),
            schedule=schedule,
            regime=regime,
            local_epochs=fe.take("local_epochs", int, 1),
            batch_size=fe.take("batch_size", int, 32),
            lr=fe.take("lr", float, 0.01),
            beta1=fe.take("beta1", float, 0.9),
            beta2=fe.take("beta2", float, 0.999),
            adam_eps=fe.take("adam_eps", float, 1e-8),
            master_seed=self.master_seed,
            weighted_avg=fe.take("weighted_avg", bool, False),
            covered_selection=fe.take("covered_selection", str, "lowest"),
            reset_optimizer_at_defense=fe.take("reset_optimizer_at_defense", bool, True),
            attack_steps=fe.take("attack_steps", int, 10),
            attack_step_size=fe.take("attack_step_size", float, None),
        )
        fe.finish()
        self.split = SplitSpec(
            n_train=self.split.n_train,
            n_test=self.split.n_test,
            mode=self.split.mode,
            n_clients=self.federation.n_clients,
            seed=self.split.seed,
        )

        ae = root.section("attack_eval", {})
        grid = ae.take("epsilon_grid", list, list(DEFAULT_EPSILON_GRID))
        if not grid:
            raise ConfigError("field attack_eval.epsilon_grid: must be non-empty")
        self.epsilon_grid = tuple(float(e) for e in grid)
        if list(self.epsilon_grid) != sorted(set(self.epsilon_grid)):
            raise ConfigError("field attack_eval.epsilon_grid: must be strictly increasing")
        self.eval_attack = AttackConfig(
            epsilon=max(self.epsilon_grid),
            steps=ae.take("steps", int, 10),
            step_size=ae.take("step_size", float, None),
            sign_grad=ae.take("sign_grad", bool, True),
        )
        ae.finish()

        sw = root.section("sweep", {})
        coverages = sw.take("coverages", list, list(DEFAULT_GAMMA_GRID))
        self.sweep_coverages = tuple(float(g) for g in coverages)
        sw.finish()

        self.output_dir = Path(root.take("output_dir", str, "runs/out"))
        root.finish()

    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(
    config_path: str | None,
    preset: str | None,
    seed: int | None = None,
    out: str | None = None,
) -> ExperimentConfig:
    if preset is None and config_path is None:
        raise ConfigError("provide --config and/or --preset")
    raw: dict = PRESETS[preset]() if preset else {}
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise ConfigError(f"field --config: no such file {config_path}")
        with open(path, encoding="utf-8") as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"field --config: invalid JSON ({exc})") from exc
        raw = _deep_merge(raw, user)
    if seed is not None:
        raw["master_seed"] = seed
    if out is not None:
        raw["output_dir"] = out
    return ExperimentConfig(raw)


# ---------------------------------------------------------------------------
# Data preparation
# ---------------------------------------------------------------------------


def prepare_data(cfg: ExperimentConfig, out_dir: Path):
    """Ingest, preprocess, subsample, and partition; returns shards and test set."""
    if cfg.dataset_kind == "synth":
        synth_dir = Path(cfg.synth_dir) if cfg.synth_dir else out_dir / "data"
        paths = write_synthetic_idx(
            synth_dir, cfg.split.n_train, cfg.split.n_test, seed=cfg.master_seed
        )
    else:
        paths = dict(cfg.dataset_paths)
        for name, p in paths.items():
            if not Path(p).exists():
                raise ConfigError(f"field dataset.{name}: no such file {p}")

    raw_train = load_idx(paths["train_images"], paths["train_labels"])
    raw_test = load_idx(paths["test_images"], paths["test_labels"])
    x_train_pool, y_train_pool = preprocess(*raw_train)
    x_test_pool, y_test_pool = preprocess(*raw_test)
    counts = {
        "train_raw": int(raw_train[1].size),
        "train_kept": int(y_train_pool.size),
        "test_raw": int(raw_test[1].size),
        "test_kept": int(y_test_pool.size),
    }
    (x_train, y_train), (x_test, y_test) = subsample(
        (x_train_pool, y_train_pool),
        (x_test_pool, y_test_pool),
        cfg.split.n_train,
        cfg.split.n_test,
        cfg.split.seed,
    )
    if cfg.model.input_dim == 16:
        x_train, x_test = pool_2x2(x_train), pool_2x2(x_test)
    elif cfg.model.input_dim != 64:
        raise ConfigError("field model.input_dim: only 64 (8x8) or 16 (pooled 4x4) supported")
    shards = partition(x_train, y_train, cfg.split)
    write_dataset_manifest(out_dir / "dataset_manifest.json", paths, cfg.split, counts)
    return shards, (x_train, y_train), (x_test, y_test)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _write_rounds_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            loss = rec.mean_train_loss
            fh.write(
                json.dumps(
                    {
                        "round": rec.round_index,
                        "mean_train_loss": loss if np.isfinite(loss) else None,
                        "per_client_loss": [
                            l if np.isfinite(l) else None for l in rec.per_client_loss
                        ],
                        "elapsed_ms": rec.elapsed_ms,
                    }
                )
                + "\n"
            )


def _write_manifest(path, cfg: ExperimentConfig, started: str, elapsed_s: float, status: str) -> None:
    payload = {
        "config_digest": cfg.digest(),
        "master_seed": cfg.master_seed,
        "version": f"qflsim-{__version__}",
        "started_utc": started,
        "elapsed_s": elapsed_s,
        "status": status,
        "config": cfg.raw,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_train(cfg: ExperimentConfig, out_dir: Path | None = None, n_jobs: int = 1) -> Path:
    out_dir = Path(out_dir) if out_dir else cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    tic = time.perf_counter()
    shards, (x_train, y_train), _ = prepare_data(cfg, out_dir)
    if cfg.federation_mode == "centralized":
        result = centralized_train(x_train, y_train, cfg.federation, cfg.model)
    else:
        result = run_experiment(shards, cfg.federation, cfg.model, n_jobs=n_jobs)
    save_checkpoint(out_dir / "checkpoint.json", result.theta, cfg.model)
    _write_rounds_jsonl(out_dir / "rounds.jsonl", result.rounds)
    _write_manifest(
        out_dir / "manifest.json", cfg, started, time.perf_counter() - tic, "completed"
    )
    return out_dir


def cmd_eval(
    checkpoint_path,
    cfg: ExperimentConfig,
    out_dir: Path | None = None,
    gamma: float | None = None,
) -> Path:
    out_dir = Path(out_dir) if out_dir else cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    theta, model = load_checkpoint(checkpoint_path)
    if model != cfg.model:
        raise ConfigError(
            f"checkpoint {checkpoint_path} was written for {model}, config declares {cfg.model}"
        )
    _, _, (x_test, y_test) = prepare_data(cfg, out_dir)
    gamma = cfg.federation.coverage if gamma is None else gamma
    rows = []
    for eps in cfg.epsilon_grid:
        acc = eval_accuracy(theta, model, x_test, y_test, eps, cfg.eval_attack)
        rows.append((gamma, eps, acc))
    write_surface_csv(out_dir / "surface.csv", rows, append=True)
    return out_dir / "surface.csv"


def _sweep_cell(cfg: ExperimentConfig, gamma: float, cell_dir: Path, n_jobs: int):
    cell_raw = copy.deepcopy(cfg.raw)
    cell_raw.setdefault("federation", {})["coverage"] = gamma
    cell_raw["output_dir"] = str(cell_dir)
    cell_cfg = ExperimentConfig(cell_raw)
    cmd_train(cell_cfg, cell_dir, n_jobs=n_jobs)
    surface_path = cmd_eval(cell_dir / "checkpoint.json", cell_cfg, cell_dir, gamma=gamma)
    surface = read_surface_csv(surface_path)
    return [(gamma, e, a) for e, a in zip(surface.epsilon_grid, surface.accuracy[0])]


def cmd_sweep(cfg: ExperimentConfig, out_dir: Path | None = None, parallel: int = 1) -> dict:
    """Train and evaluate every coverage level (gamma=0 always included)."""
    out_dir = Path(out_dir) if out_dir else cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.epsilon_grid[0] != 0.0:
        raise ConfigError(
            "field attack_eval.epsilon_grid: a sweep integrates from 0, add the 0.0 point"
        )
    started = datetime.now(timezone.utc).isoformat()
    tic = time.perf_counter()
    gammas = sorted(set(cfg.sweep_coverages) | {0.0})
    cell_dirs = {g: out_dir / "cells" / f"gamma_{g:.2f}" for g in gammas}

    try:
        if parallel > 1:
            with ThreadPoolExecutor(max_workers=parallel) as pool:
                rows_per_gamma = list(
                    pool.map(lambda g: _sweep_cell(cfg, g, cell_dirs[g], 1), gammas)
                )
        else:
            rows_per_gamma = [_sweep_cell(cfg, g, cell_dirs[g], 1) for g in gammas]
    except Exception:
        _write_manifest(
            out_dir / "manifest.json", cfg, started, time.perf_counter() - tic, "failed"
        )
        raise

    rows = [row for rows in rows_per_gamma for row in rows]
    write_surface_csv(out_dir / "surface.csv", rows)
    surface = RobustnessSurface(
        gamma_grid=np.array(gammas),
        epsilon_grid=np.array(cfg.epsilon_grid),
        accuracy=np.array([[r[2] for r in rws] for rws in rows_per_gamma]),
    )
    payload = write_metrics_json(out_dir / "metrics.json", surface, cfg.digest())
    _write_manifest(
        out_dir / "manifest.json", cfg, started, time.perf_counter() - tic, "completed"
    )
    return payload


def cmd_report(surface_path, out_dir) -> list[Path]:
    """Split a surface CSV into tidy per-figure files (one curve per coverage, one heatmap)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    surface = read_surface_csv(surface_path)
    written = []
    for i, gamma in enumerate(surface.gamma_grid):
        path = out_dir / f"curve_gamma_{gamma:.2f}.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("epsilon,accuracy_pct\n")
            for eps, acc in zip(surface.epsilon_grid, surface.accuracy[i]):
                fh.write(f"{eps:.6f},{acc:.6f}\n")
        written.append(path)
    heatmap = out_dir / "heatmap.csv"
    with open(heatmap, "w", encoding="utf-8", newline="") as fh:
        fh.write("gamma\\epsilon," + ",".join(f"{e:.6f}" for e in surface.epsilon_grid) + "\n")
        for gamma, row in zip(surface.gamma_grid, surface.accuracy):
            fh.write(f"{gamma:.6f}," + ",".join(f"{a:.6f}" for a in row) + "\n")
    written.append(heatmap)
    return written


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qflsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--preset", choices=sorted(PRESETS), help="base configuration")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--out", help="override output_dir")

    p_train = sub.add_parser("train", help="train one model and write a checkpoint")
    common(p_train)
    p_train.add_argument("--parallel", type=int, default=1, help="client threads per round")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint over the epsilon grid")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)

    p_sweep = sub.add_parser("sweep", help="train+evaluate every coverage level")
    common(p_sweep)
    p_sweep.add_argument("--parallel", type=int, default=1, help="concurrent sweep cells")

    p_report = sub.add_parser("report", help="emit per-figure CSVs from a surface")
    p_report.add_argument("--in", dest="surface", required=True, help="surface.csv path")
    p_report.add_argument("--out", required=True, help="directory for figure data")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            written = cmd_report(args.surface, args.out)
            for path in written:
                print(path)
            return 0
        cfg = load_config(args.config, args.preset, args.seed, args.out)
        if args.command == "train":
            out = cmd_train(cfg, n_jobs=args.parallel)
            print(f"checkpoint: {out / 'checkpoint.json'}")
        elif args.command == "eval":
            path = cmd_eval(args.checkpoint, cfg)
            print(f"surface: {path}")
        elif args.command == "sweep":
            payload = cmd_sweep(cfg, parallel=args.parallel)
            print(f"rv: {payload['rv']:.6f}  ara_mean: {payload['ara_mean']:.6f}")
        return 0
    except QflsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

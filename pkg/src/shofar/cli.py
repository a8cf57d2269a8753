"""Command-line front end.

Usage::

    shofar <subcommand> [--config run.json] [--seed S] [--out DIR]

The config file is a JSON object whose keys are the fields of
``harness.RunConfig``; unknown keys are rejected. Every run writes its
outputs and a ``manifest.json`` into the output directory.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bounds, harness
from .data import save_csv
from .exceptions import ConfigError, ShofarError
from .harness import RunConfig
from .qkernel import EmbeddingKind
from .sampler import CircuitKind, ShotPlan, draw_kernel_matrix, save_matrix_binary, save_matrix_csv
from .svm import VARIANTS, classify, accuracy, load_model, save_model, solve_primal

SUBCOMMANDS = ("dataset", "kernel", "train", "bounds", "npractical", "sweep", "noise-study",
               "training-shots-study")

_INT_LISTS = ("shots", "shots_train_grid")
_PROB_KEYS = ("delta1", "delta2", "delta1p", "delta2p", "delta_target")


def _validate(raw: dict, base_dir: Path) -> RunConfig:
    problems = []
    known = RunConfig.keys()
    for k in sorted(set(raw) - known):
        problems.append(f"unknown key {k!r}")
    defaults = RunConfig()
    vals = {}
    for k in known & set(raw):
        expect = type(getattr(defaults, k))
        v = raw[k]
        if expect is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if not isinstance(v, expect) or isinstance(v, bool) and expect is not bool:
            problems.append(f"{k}: expected {expect.__name__}, got {type(v).__name__}")
            continue
        vals[k] = v
    cfg = RunConfig(**vals)

    for k in _PROB_KEYS:
        v = getattr(cfg, k)
        if not 0.0 < v < 1.0:
            problems.append(f"{k}: must lie in (0, 1), got {v}")
    if not 0.0 <= cfg.delta_threshold < 1.0:
        problems.append("delta_threshold: must lie in [0, 1)")
    if not 0.0 <= cfg.lam <= 1.0:
        problems.append("lam: must lie in [0, 1]")
    if cfg.delta1 + cfg.delta2 >= 1.0:
        problems.append("delta1 + delta2 must be below 1")
    for k in _INT_LISTS:
        v = getattr(cfg, k)
        if not v or not all(isinstance(n, int) and not isinstance(n, bool) for n in v):
            problems.append(f"{k}: must be a nonempty list of integers")
        elif k == "shots" and (v != sorted(v) or v[0] < 1):
            problems.append("shots: must be sorted ascending and positive")
        elif any(n < 0 for n in v):
            problems.append(f"{k}: entries must be nonnegative")
    bad_variants = [v for v in cfg.variants if v not in VARIANTS]
    if not cfg.variants or bad_variants:
        problems.append(f"variants: unknown {bad_variants or 'empty list'}; choose from {list(VARIANTS)}")
    if cfg.dataset not in harness.PRESET_EMBEDDING:
        problems.append(f"dataset: unknown {cfg.dataset!r}")
    if cfg.embedding:
        try:
            EmbeddingKind.parse(cfg.embedding)
        except ShofarError:
            problems.append(f"embedding: unknown {cfg.embedding!r}")
    try:
        CircuitKind.parse(cfg.circuit)
    except ShofarError:
        problems.append(f"circuit: unknown {cfg.circuit!r}")
    if cfg.eval_set not in ("train", "test"):
        problems.append("eval_set: must be 'train' or 'test'")
    if cfg.schedule not in ("doubling", "additive"):
        problems.append("schedule: must be 'doubling' or 'additive'")
    for k, lo in (("n_trials", 1), ("m_train", 2), ("m_test", 1), ("n_qubits", 1), ("n_start", 1),
                  ("shots_train", 0)):
        if getattr(cfg, k) < lo:
            problems.append(f"{k}: must be at least {lo}")
    if not cfg.C > 0:
        problems.append("C: must be positive")
    if not cfg.epsilon > 0:
        problems.append("epsilon: must be positive")
    if cfg.gamma < 0:
        problems.append("gamma: must be nonnegative")
    for k in ("train_csv", "test_csv", "model_path"):
        p = getattr(cfg, k)
        if p:
            path = Path(p) if Path(p).is_absolute() else base_dir / p
            if not path.exists():
                problems.append(f"{k}: file {p!r} does not exist")
            setattr(cfg, k, str(path))
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read and validate a JSON run configuration; ``None`` gives the defaults."""
    raw = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: line {exc.lineno}: {exc.msg}"]) from None
        if not isinstance(raw, dict):
            raise ConfigError(["config must be a JSON object"])
        base = path.parent
    raw.update(overrides or {})
    return _validate(raw, base)


# subcommand drivers; each returns a dict merged into the manifest

def _cmd_dataset(cfg: RunConfig, out: Path) -> dict:
    train, test = harness.load_or_make_data(cfg)
    save_csv(train, out / "train.csv")
    save_csv(test, out / "test.csv")
    return {"outputs": ["train.csv", "test.csv"], "sizes": [len(train), len(test)]}


def _cmd_kernel(cfg: RunConfig, out: Path) -> dict:
    pb = harness.build_problem(cfg)
    np.savetxt(out / "kernel_exact.csv", pb.K_train, delimiter=",", fmt="%.17g")
    T = harness.est_params(cfg, len(pb.y_train)).shots_train
    seed = harness.derive_seed(cfg.master_seed, "train", T)
    est = draw_kernel_matrix(pb.K_train, ShotPlan(cfg.kind, T), seed=seed, same_set=True)
    save_matrix_csv(est, out / "kernel_estimated.csv")
    save_matrix_binary(est, out / "kernel_estimated.bin")
    return {"outputs": ["kernel_exact.csv", "kernel_estimated.csv", "kernel_estimated.bin"],
            "shots_train": T, "estimate_seed": seed}


def _cmd_train(cfg: RunConfig, out: Path) -> dict:
    pb = harness.build_problem(cfg)
    N = cfg.shots[0]
    K_hat = None
    if any(v.endswith("-est") for v in cfg.variants):
        T = harness.est_params(cfg, len(pb.y_train)).shots_train
        K_hat = harness.estimated_training_matrix(cfg, pb.K_train, T)
    from .svm import dataset_hash
    h = dataset_hash(pb.train.points, pb.train.labels)
    outputs, summary = [], {}
    for v in cfg.variants:
        model = harness.train_variant(v, cfg, pb.K_train, K_hat, pb.y_train, N)
        model.meta.update(embedding=pb.spec.id, train_hash=h)
        name = f"model_{v}.json"
        save_model(model, out / name)
        outputs.append(name)
        summary[v] = {"m_sv": model.m_sv, "beta_norm2": model.beta_norm2,
                      "train_accuracy": accuracy(classify(model, pb.K_train), pb.y_train)}
    return {"outputs": outputs, "models": summary, "shots_classify": N}


def _load_or_train(cfg: RunConfig, pb):
    if cfg.model_path:
        return load_model(cfg.model_path)
    return solve_primal(pb.K_train, pb.y_train, cfg.C)


def _cmd_bounds(cfg: RunConfig, out: Path) -> dict:
    pb = harness.build_problem(cfg)
    model = _load_or_train(cfg, pb)
    table = harness.bound_summary(model, pb.K_eval, pb.y_eval, cfg.kind, cfg.delta_target,
                                  cfg.epsilon, cfg.gamma or None)
    lines = [f"{'quantity':<16} {'value':>14}"]
    for k, v in table.items():
        lines.append(f"{k:<16} {v:>14.6g}" if isinstance(v, float) else f"{k:<16} {v:>14}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    (out / "bounds.txt").write_text(text)
    return {"outputs": ["bounds.txt"], "bounds": table}


def _cmd_npractical(cfg: RunConfig, out: Path) -> dict:
    pb = harness.build_problem(cfg)
    model = _load_or_train(cfg, pb)
    margins = pb.y_eval * (pb.K_eval @ model.beta + model.b)
    g = cfg.gamma or bounds.gamma_star(margins)
    plan = harness.TrialPlan(cfg.n_trials, cfg.master_seed, ShotPlan(cfg.kind, cfg.n_start))
    trace = []
    n = harness.n_practical(pb.K_eval, pb.y_eval, model, g, cfg.delta_target, plan,
                            schedule=cfg.schedule, trace=trace)
    res = {"gamma": g, "n_practical": n,
           "n_sg": bounds.n_sg(model.beta_norm2, g, cfg.kind, len(pb.y_eval), cfg.delta_target),
           "trace": trace}
    (out / "npractical.json").write_text(json.dumps(res, indent=1) + "\n")
    print(f"gamma*={g:g} N_practical={n} n_sg={res['n_sg']}")
    return {"outputs": ["npractical.json"], "result": {k: res[k] for k in ("gamma", "n_practical", "n_sg")}}


def _sweep_like(fn, name):
    def run(cfg: RunConfig, out: Path) -> dict:
        reports = fn(cfg)
        harness.write_csv(reports, out / f"{name}.csv")
        return {"outputs": [f"{name}.csv"], "rows": len(reports)}
    return run


_DRIVERS = {
    "dataset": _cmd_dataset,
    "kernel": _cmd_kernel,
    "train": _cmd_train,
    "bounds": _cmd_bounds,
    "npractical": _cmd_npractical,
    "sweep": _sweep_like(harness.run_reliability_sweep, "sweep"),
    "noise-study": _sweep_like(harness.run_noise_study, "noise_study"),
    "training-shots-study": _sweep_like(harness.run_training_shots_study, "training_shots"),
}


def dispatch(subcommand: str, cfg: RunConfig) -> int:
    """Run one subcommand, writing outputs and a manifest to ``cfg.out_dir``."""
    if subcommand not in _DRIVERS:
        print(f"error: unknown subcommand {subcommand!r}", file=sys.stderr)
        return 2
    out = Path(cfg.out_dir)
    started = time.time()
    try:
        out.mkdir(parents=True, exist_ok=True)
        info = _DRIVERS[subcommand](cfg, out)
        harness.write_manifest(out / "manifest.json", cfg, subcommand, started, info)
    except ShofarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shofar", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--seed", type=int, help="override master_seed")
    ap.add_argument("--out", help="override the output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = str(Path(args.out).resolve())
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return dispatch(args.subcommand, cfg)


if __name__ == "__main__":
    sys.exit(main())

"""Multi-seed runs and ablation sweeps with per-seed artifacts on disk."""
from __future__ import annotations

import json
import logging
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .. import nn
from ..algos import evaluate, train
from ..envs import make_env
from ..errors import ConfigError
from ..filters import wrap_policy
from .config import MODES, ExperimentConfig, parse_config

log = logging.getLogger(__name__)


@dataclass
class EvalNumbers:
    reward_mean: float
    reward_std: float
    sm: float
    sm_std: float
    mae: float | None


@dataclass
class RunResult:
    """Outcome of one seed. Numeric fields are None when the run failed."""

    label: str
    seed: int
    failed: bool
    error: str | None
    f_s: float | None
    eval: EvalNumbers | None
    shift: EvalNumbers | None = None
    filtered: EvalNumbers | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        d = dict(d)
        for key in ("eval", "shift", "filtered"):
            if d.get(key) is not None:
                d[key] = EvalNumbers(**d[key])
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def _numbers(summary) -> EvalNumbers:
    return EvalNumbers(summary.reward_mean, summary.reward_std, summary.sm_mean, summary.sm_std, summary.mae)


def _curve_csv(curve) -> str:
    lines = ["step,eval_reward,eval_sm"]
    lines += [f"{p.step},{p.eval_reward!r},{p.eval_sm!r}" for p in curve]
    return "\n".join(lines) + "\n"


def run_seed(cfg: ExperimentConfig, seed: int, seed_dir: Path | None = None) -> RunResult:
    """Train and evaluate one seed, writing its artifacts into ``seed_dir``."""
    outcome = train(
        cfg.algo.kind, cfg.env.kind, cfg.caps.build(), cfg.steps, seed,
        algo_params=cfg.algo.params, env_params=cfg.env.params,
        eval_interval=cfg.eval.interval, eval_episodes=cfg.eval.episodes,
        curve_episodes=cfg.eval.curve_episodes, eval_horizon=cfg.eval.horizon,
    )
    label = cfg.name.rsplit("/", 1)[-1] if "/" in cfg.name else cfg.name
    if outcome.failed:
        result = RunResult(label, seed, True, outcome.error, None, None)
    else:
        result = RunResult(label, seed, False, None, outcome.final.f_s, _numbers(outcome.final))
        if cfg.shift is not None:
            env = make_env(cfg.env.kind, cfg.env.params, cfg.shift.model_dump())
            summary, _ = evaluate(env, outcome.act, cfg.eval.episodes, cfg.eval.horizon)
            result.shift = _numbers(summary)
        if cfg.filter is not None:
            env = make_env(cfg.env.kind, cfg.env.params)
            summary, _ = evaluate(env, wrap_policy(outcome.act, cfg.filter), cfg.eval.episodes, cfg.eval.horizon)
            result.filtered = _numbers(summary)
    if seed_dir is not None:
        seed_dir.mkdir(parents=True, exist_ok=True)
        (seed_dir / "result.json").write_text(json.dumps(result.to_dict(), indent=2) + "\n")
        (seed_dir / "curve.csv").write_text(_curve_csv(outcome.curve))
        if outcome.action_log is not None:
            (seed_dir / "actions.csv").write_text(outcome.action_log.to_csv())
        nn.save(outcome.policy, seed_dir / "policy.json")
    return result


def _run_seed_job(cfg_data: dict, seed: int, seed_dir: str | None) -> dict:
    cfg = parse_config(cfg_data)
    return run_seed(cfg, seed, Path(seed_dir) if seed_dir else None).to_dict()


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", name).strip("-") or "run"


def new_run_dir(cfg: ExperimentConfig, root: Path | None = None) -> Path:
    """Fresh directory ``<root>/<name>-<timestamp>``; timestamps live only here."""
    root = Path(root) if root is not None else cfg.output_root()
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = root / f"{_slug(cfg.name)}-{stamp}"
    k = 1
    while path.exists():
        path = root / f"{_slug(cfg.name)}-{stamp}-{k}"
        k += 1
    path.mkdir(parents=True)
    return path


def run_experiment(cfg: ExperimentConfig, run_dir: Path | None = None) -> list[RunResult]:
    """Run every seed of ``cfg``; results come back in seed-list order.

    With ``workers > 1`` seeds run in separate processes. Each seed owns its
    subdirectory, and nothing is shared until the results are collected.
    """
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
    dirs = [str(run_dir / f"seed_{s}") if run_dir is not None else None for s in cfg.seeds]
    if cfg.workers > 1 and len(cfg.seeds) > 1:
        data = cfg.model_dump(mode="json")
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(cfg.seeds))) as pool:
            futures = [pool.submit(_run_seed_job, data, s, d) for s, d in zip(cfg.seeds, dirs)]
            results = [RunResult.from_dict(f.result()) for f in futures]
    else:
        results = [run_seed(cfg, s, Path(d) if d else None) for s, d in zip(cfg.seeds, dirs)]
    for r in results:
        if r.failed:
            log.warning("%s seed %d failed: %s", r.label, r.seed, r.error)
    return results


def ablation_sweep(cfg: ExperimentConfig, modes=None, run_dir: Path | None = None) -> dict[str, list[RunResult]]:
    """Run the base config once per ablation mode; returns ``{mode: results}``."""
    modes = list(modes or cfg.modes or MODES)
    unknown = [m for m in modes if m not in MODES]
    if unknown:
        raise ConfigError(f"unknown ablation modes {unknown}; expected a subset of {MODES}")
    out = {}
    for mode in modes:
        sub = Path(run_dir) / mode if run_dir is not None else None
        out[mode] = run_experiment(cfg.with_mode(mode), sub)
    return out

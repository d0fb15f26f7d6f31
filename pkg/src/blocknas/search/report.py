"""Run directory output: trace, timings, best code, config and summary."""
from __future__ import annotations

import json
from pathlib import Path

from blocknas.search.pool import save_pool
from blocknas.search.runner import SearchRun, _atomic_write, trace_csv
from blocknas.space import code_file_text


def summary_record(run: SearchRun) -> dict:
    return {
        "stage": run.stage,
        "policy": run.policy,
        "episodes": run.episodes_done,
        "budget": run.budget,
        "seed": run.seed,
        "best_score": run.best_score,
        "best_episode": run.best_episode,
        "wall_time": round(run.wall_time, 3),
        "transferred": run.transferred,
        "sync_episodes": run.sync_log,
    }


def report(run: SearchRun, destination, hidden: int = 32) -> dict[str, Path]:
    """Write the run's files into ``destination``; returns their paths by role."""
    out = Path(destination)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from None
    paths = {
        "trace": out / "trace.csv",
        "timing": out / "timing.csv",
        "config": out / "config.json",
        "summary": out / "summary.json",
    }
    _atomic_write(paths["trace"], trace_csv(run))
    timing = ["episode,wall_ms"] + [f"{r.episode},{r.wall_ms:.3f}" for r in run.trace]
    _atomic_write(paths["timing"], "\n".join(timing) + "\n")
    _atomic_write(paths["config"], json.dumps(run.config, indent=1, sort_keys=True) + "\n")
    _atomic_write(paths["summary"], json.dumps(summary_record(run), indent=1, sort_keys=True) + "\n")
    if run.best_code is not None:
        name = "best_block.json" if run.stage == "block" else "best_arch.json"
        extra = {"score": run.best_score, "episode": run.best_episode, "transferred": run.transferred}
        blocks = run.blocks if run.blocks is not None else (run.pool.codes if run.pool is not None else None)
        if run.stage == "arch" and blocks:
            extra["pool"] = [c.to_lists() for c in blocks]
        paths["best"] = out / name
        _atomic_write(paths["best"], code_file_text(run.best_code, **extra))
    if run.stage == "block" and run.pool is not None:
        paths["gbp"] = save_pool(out / "gbp.json", run.pool, hidden,
                                 {"seed": run.seed, "dataset": run.config.get("dataset_name", "")})
    return paths

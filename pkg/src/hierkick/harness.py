"""Evaluation campaigns, the four-way ablation suite and plot-data files.

Trials of a campaign run as one vectorized batch of worlds (chunked), each
seeded from its own trial seed, so a trial's outcome is the same whether it
runs alone or next to thousands of others.  That is what makes ``replay``
exact.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .coach import Variant, actor_forward, sample_action
from .config import Config
from .env import DECISION_DT, EVENT_NAMES, GOAL, SoccerEnv, trial_streams
from .nn import PolicyParams
from .world import WorldState, wrap_angle

FAILURE_REASONS = ("Timeout", "Fell", "OutOfBounds")
ABLATION_ORDER = (Variant.HIERKICK, Variant.NO_DISTANCES, Variant.REPLACE_CPREV, Variant.END_TO_END)
DEFAULT_TRIALS = 2000
CHUNK = 512


class MissingCheckpointError(FileNotFoundError):
    def __init__(self, variant, path):
        super().__init__(f"no checkpoint for variant {Variant(variant).value!r} at {path}")
        self.variant = Variant(variant)


class Policy(Protocol):
    """Anything that maps the current batch of worlds to raw coach actions."""

    def act(self, env: SoccerEnv) -> np.ndarray: ...


@dataclass
class TrainedPolicy:
    """The trained actor.  Samples by default, with noise drawn from each trial's own stream.

    An increment policy's mean alone integrates any small bias into a
    saturated command, so the sampled policy is the one training produced.
    """

    params: PolicyParams
    stochastic: bool = True

    def act(self, env: SoccerEnv) -> np.ndarray:
        mean, log_std = actor_forward(env.actor_obs(), self.params, env.cfg.limits, batch_invariant=True)
        if not self.stochastic:
            return mean
        return sample_action(mean, log_std, normals=env.policy_normals())[0]


class ZeroPolicy:
    """Emits zero: no increment, or an absolute stop command."""

    def act(self, env: SoccerEnv) -> np.ndarray:
        return np.zeros((env.n, 3))


@dataclass
class ScriptedPolicy:
    """Ground-truth pursuit: turn toward the ball and push it along the ball-goal line.

    Emits whatever the variant's head expects (increments toward the desired
    command, or the command itself).
    """

    speed: float = 0.8
    gain: float = 2.0

    def act(self, env: SoccerEnv) -> np.ndarray:
        w = env.world
        to_goal = _unit(env.goal - w.ball_pos)
        to_ball = w.ball_pos - w.robot_pos
        lined_up = np.sum(_unit(to_ball) * to_goal, axis=1) > np.cos(0.4)
        near = np.linalg.norm(to_ball, axis=1) < 0.8
        behind = w.ball_pos - 0.5 * to_goal
        at_behind = np.linalg.norm(behind - w.robot_pos, axis=1) < 0.3
        aim = np.where(((lined_up & near) | at_behind)[:, None], w.ball_pos + to_goal, behind)
        rel = aim - w.robot_pos
        bearing = wrap_angle(np.arctan2(rel[:, 1], rel[:, 0]) - w.robot_heading)
        lim = env.cfg.limits
        turn = self.gain * bearing
        if env.variant.head == "increment":
            # turn rate must be braked one increment per decision; cap it so it can stop in time
            accel = lim.inc[2] / DECISION_DT
            turn = np.sign(bearing) * np.minimum(np.abs(turn), np.sqrt(2 * accel * np.abs(bearing)))
        desired = np.stack([self.speed * np.cos(bearing).clip(0, None) ** 4, np.zeros(env.n), turn], axis=1)
        desired = np.clip(desired, lim.low, lim.high)
        if env.variant.head == "absolute":
            return desired
        return np.clip(desired - env.command, -lim.inc, lim.inc)


def _unit(v):
    return v / np.maximum(np.linalg.norm(v, axis=-1, keepdims=True), 1e-12)


@dataclass(frozen=True)
class TrialResult:
    success: bool
    failure_reason: str | None
    kick_distance: float
    episode_length: float
    seed: int

    def __post_init__(self):
        if self.success and self.failure_reason is not None:
            raise ValueError("a successful trial has no failure reason")
        if not self.success and self.failure_reason not in FAILURE_REASONS:
            raise ValueError(f"unknown failure reason {self.failure_reason!r}")
        if not self.kick_distance >= 0:
            raise ValueError("kick distance must be non-negative")


def run_trials(policy: Policy, variant: Variant, seeds, cfg: Config,
               initial_states: list[WorldState] | None = None) -> list[TrialResult]:
    """Run one episode per seed as a single frozen-on-finish batch."""
    seeds = [int(s) for s in seeds]
    env = SoccerEnv(cfg, variant, trial_streams(seeds), auto_reset=False)
    if initial_states is not None:
        env.set_states(initial_states)
    results: list[TrialResult | None] = [None] * len(seeds)
    while not env.finished.all():
        _, done, info = env.step(policy.act(env))
        for i in np.flatnonzero(done):
            event = int(info["event"][i])
            success = bool(info["success"][i])
            # a goal can only count while upright, so a fallen scorer is a fall
            reason = None if success else ("Fell" if event == GOAL else EVENT_NAMES[event])
            results[i] = TrialResult(success, reason, float(info["kick_distance"][i]),
                                     float(info["episode_seconds"][i]), seeds[i])
    return results


def run_trial(policy: Policy, variant: Variant, seed: int, cfg: Config,
              initial_state: WorldState | None = None) -> TrialResult:
    states = None if initial_state is None else [initial_state]
    return run_trials(policy, variant, [seed], cfg, states)[0]


@dataclass
class CampaignReport:
    variant: str
    n_trials: int
    successes: int
    success_rate: float
    kick_mean: float
    kick_std: float
    hist_edges: list[float]
    hist_counts: list[int]
    failures: dict[str, int]
    success_kick_mean: float | None = None
    success_kick_std: float | None = None
    trials: list[TrialResult] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["trials"] = [asdict(t) for t in self.trials]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> CampaignReport:
        d = dict(d)
        d["trials"] = [TrialResult(**t) for t in d.get("trials", [])]
        return cls(**d)


def summarize(variant: str, trials: list[TrialResult], bins: int = 20) -> CampaignReport:
    if not trials:
        raise ValueError("a campaign needs at least one trial")
    trials = sorted(trials, key=lambda t: t.seed)
    kicks = np.array([t.kick_distance for t in trials])
    successes = sum(t.success for t in trials)
    lo, hi = float(kicks.min()), float(kicks.max())
    if hi > lo:
        counts, edges = np.histogram(kicks, bins=bins, range=(lo, hi))
    else:
        counts, edges = np.array([len(kicks)]), np.array([lo, hi])
    ok = kicks[[t.success for t in trials]]
    return CampaignReport(
        variant=str(variant),
        n_trials=len(trials),
        successes=int(successes),
        success_rate=successes / len(trials),
        kick_mean=float(kicks.mean()),
        kick_std=float(kicks.std()),
        hist_edges=[float(e) for e in edges],
        hist_counts=[int(c) for c in counts],
        failures={r: sum(t.failure_reason == r for t in trials) for r in FAILURE_REASONS},
        success_kick_mean=float(ok.mean()) if ok.size else None,
        success_kick_std=float(ok.std()) if ok.size else None,
        trials=trials,
    )


def run_campaign(policy: Policy, variant: Variant, n_trials: int, seed_base: int, cfg: Config,
                 label: str | None = None, chunk: int = CHUNK) -> CampaignReport:
    """Seeds ``seed_base .. seed_base + n_trials - 1``, evaluated in chunks."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    seeds = list(range(seed_base, seed_base + n_trials))
    trials = []
    for lo in range(0, n_trials, chunk):
        trials += run_trials(policy, variant, seeds[lo:lo + chunk], cfg)
    return summarize(label or Variant(variant).value, trials)


def checkpoint_paths(ckpt_dir) -> dict[Variant, Path]:
    """Expected layout: ``<dir>/<variant>/checkpoint.bin``."""
    from .train import CHECKPOINT_NAME
    return {v: Path(ckpt_dir) / v.value / CHECKPOINT_NAME for v in ABLATION_ORDER}


def run_ablation_suite(checkpoints, n_trials: int = DEFAULT_TRIALS, seed_base: int = 0,
                       cfg: Config | None = None) -> list[CampaignReport]:
    """Evaluate all four variants on one shared seed set.

    ``checkpoints`` is a directory laid out as in :func:`checkpoint_paths` or a
    mapping from variant to checkpoint file.  Each checkpoint is run under the
    variant it was trained as and labelled with the slot it was given.
    """
    from .train import load_run
    paths = checkpoints if isinstance(checkpoints, dict) else checkpoint_paths(checkpoints)
    reports = []
    for v in ABLATION_ORDER:
        path = paths.get(v) or paths.get(v.value)
        if path is None or not Path(path).exists():
            raise MissingCheckpointError(v, path)
        ck, run_cfg = load_run(path)
        reports.append(run_campaign(TrainedPolicy(ck.params), ck.variant, n_trials, seed_base,
                                    cfg or run_cfg, label=v.value))
    return reports


def smooth(values, window: int = 20) -> np.ndarray:
    """Trailing moving average (shorter window at the start)."""
    values = np.asarray(values, float)
    c = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    start = np.maximum(0, idx - window)
    return (c[idx] - c[start]) / (idx - start)


def _write(path: Path, header: list[str], rows, comment: str):
    with open(path, "w") as fh:
        fh.write(f"# {comment}\n")
        fh.write("# " + "\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(x) for x in row) + "\n")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return "nan" if x is None else str(x)


def emit_plot_data(reports: list[CampaignReport], logs: dict[str, list[dict]] | None, out_dir,
                   window: int = 20) -> list[Path]:
    """Write header-commented, tab-separated plot data; returns the file paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / n for n in ("success_rates.tsv", "kick_distance.tsv", "kick_histogram.tsv",
                               "reward_curves.tsv")]
    _write(files[0], ["variant", "n_trials", "successes", "success_rate"],
           [(r.variant, r.n_trials, r.successes, r.success_rate) for r in reports],
           "success rate per variant")
    _write(files[1], ["variant", "n_trials", "mean", "std", "success_mean", "success_std"],
           [(r.variant, r.n_trials, r.kick_mean, r.kick_std, r.success_kick_mean, r.success_kick_std)
            for r in reports],
           "horizontal distance of the final ball position to the goal center (m)")
    _write(files[2], ["variant", "bin_low", "bin_high", "count"],
           [(r.variant, lo, hi, c) for r in reports
            for lo, hi, c in zip(r.hist_edges[:-1], r.hist_edges[1:], r.hist_counts)],
           "kick-distance histogram")
    rows = []
    for name, records in (logs or {}).items():
        rewards = [rec["mean_reward"] for rec in records]
        for rec, s in zip(records, smooth(rewards, window)):
            rows.append((name, rec["iteration"], rec["mean_reward"], float(s), rec["success_rate"]))
    _write(files[3], ["variant", "iteration", "mean_reward", "smoothed_reward", "success_rate"], rows,
           f"training reward per iteration; smoothed = trailing mean over {window}")
    return files


def save_reports(reports: list[CampaignReport], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for r in reports:
        (out / f"{r.variant}.json").write_text(json.dumps(r.to_dict()))


def load_reports(report_dir) -> list[CampaignReport]:
    paths = sorted(Path(report_dir).glob("*.json"))
    order = {v.value: i for i, v in enumerate(ABLATION_ORDER)}
    reports = [CampaignReport.from_dict(json.loads(p.read_text())) for p in paths]
    return sorted(reports, key=lambda r: (order.get(r.variant, len(order)), r.variant))


def comparison_table(reports: list[CampaignReport]) -> str:
    lines = [f"{'variant':<16}{'success':>9}{'kick mean':>11}{'kick std':>10}  failures"]
    for r in reports:
        fails = ", ".join(f"{k}={v}" for k, v in r.failures.items())
        lines.append(f"{r.variant:<16}{100 * r.success_rate:>8.1f}%{r.kick_mean:>11.3f}{r.kick_std:>10.3f}  {fails}")
    return "\n".join(lines)

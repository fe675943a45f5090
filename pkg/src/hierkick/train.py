"""Training loop, checkpoints and the metrics log."""

from __future__ import annotations

import json
import logging
import struct
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coach import Variant, init_params
from .config import Config, from_dict
from .env import SoccerEnv, training_streams
from .nn import ParamsFormatError, PolicyParams, decode_params, encode_params
from .ppo import Adam, compute_gae, flatten_batch, ppo_update
from .rollout import collect_rollouts

log = logging.getLogger(__name__)

CKPT_MAGIC = b"HKCK"
CKPT_VERSION = 1
CHECKPOINT_NAME = "checkpoint.bin"
CONFIG_NAME = "config.json"
METRICS_NAME = "metrics.jsonl"


@dataclass
class Checkpoint:
    params: PolicyParams
    opt: Adam
    variant: Variant
    iteration: int


def encode_checkpoint(ck: Checkpoint) -> bytes:
    """Header, parameters, then Adam first and second moments as two more containers."""
    name = ck.variant.value.encode()
    head = CKPT_MAGIC + struct.pack("<IQQdI", CKPT_VERSION, ck.iteration, ck.opt.t, ck.opt.lr, len(name)) + name
    m = ck.params.with_tensors(ck.opt.m)
    v = ck.params.with_tensors(ck.opt.v)
    return head + encode_params(ck.params) + encode_params(m) + encode_params(v)


def decode_checkpoint(data: bytes) -> Checkpoint:
    if data[:4] != CKPT_MAGIC:
        raise ParamsFormatError("not a checkpoint file")
    version, iteration, step, lr, name_len = struct.unpack_from("<IQQdI", data, 4)
    if version != CKPT_VERSION:
        raise ParamsFormatError(f"unsupported checkpoint version {version}")
    offset = 4 + struct.calcsize("<IQQdI")
    variant = Variant(data[offset:offset + name_len].decode())
    offset += name_len
    params, offset = decode_params(data, offset)
    m, offset = decode_params(data, offset)
    v, offset = decode_params(data, offset)
    if offset != len(data):
        raise ParamsFormatError("trailing bytes in checkpoint")
    opt = Adam.for_params(params, lr)
    opt.t, opt.m, opt.v = step, m.tensors(), v.tensors()
    return Checkpoint(params, opt, variant, iteration)


def save_checkpoint(ck: Checkpoint, path: str | Path):
    Path(path).write_bytes(encode_checkpoint(ck))


def load_checkpoint(path: str | Path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


def load_run(run_dir: str | Path) -> tuple[Checkpoint, Config]:
    """Checkpoint plus the exact configuration it was trained with."""
    run_dir = Path(run_dir)
    ck_path = run_dir / CHECKPOINT_NAME if run_dir.is_dir() else run_dir
    cfg_path = ck_path.parent / CONFIG_NAME
    if not ck_path.exists():
        raise FileNotFoundError(ck_path)
    ck = load_checkpoint(ck_path)
    if cfg_path.exists():
        cfg = from_dict(json.loads(cfg_path.read_text()))
    else:
        from .config import load_config
        cfg = load_config("small")
    return ck, cfg


def read_metrics(path: str | Path) -> list[dict]:
    path = Path(path)
    if path.is_dir():
        path = path / METRICS_NAME
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def train(cfg: Config, variant: Variant, out_dir: str | Path | None = None, iterations: int | None = None,
          seed: int | None = None) -> Checkpoint:
    """Train one variant; writes checkpoint, config and metrics log into ``out_dir``."""
    variant = Variant(variant)
    iterations = cfg.train.iterations if iterations is None else iterations
    seed = cfg.train.seed if seed is None else seed
    seeds = np.random.SeedSequence(seed, spawn_key=(2**31,))
    init_rng, update_rng = (np.random.default_rng(s) for s in seeds.spawn(2))
    params = init_params(variant, cfg.network.actor_hidden, cfg.network.critic_hidden, init_rng,
                         cfg.limits, cfg.network.init_std_frac)
    opt = Adam.for_params(params, cfg.ppo.learning_rate)
    env = SoccerEnv(cfg, variant, training_streams(seed, cfg.train.n_worlds))

    metrics_file = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / CONFIG_NAME).write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
        metrics_file = open(out_dir / METRICS_NAME, "w")

    try:
        for it in range(iterations):
            if cfg.train.curriculum_widening:
                env.spec = cfg.randomization.widened(min(1.0, 0.3 + 0.7 * it / max(1, iterations // 2)))
            t0 = time.perf_counter()
            batch = collect_rollouts(env, params, cfg)
            adv, ret = compute_gae(batch, cfg.ppo)
            params, stats = ppo_update(flatten_batch(batch, adv, ret), params, opt, cfg.ppo, cfg.limits,
                                       update_rng)
            episodes = batch.info["episodes"]
            record = {
                "iteration": it,
                "mean_reward": float(batch.info["raw_rewards"].mean()),
                "success_rate": episodes.success_rate,
                "episodes": episodes.episodes,
                "mean_episode_length": float(np.mean(episodes.lengths)) if episodes.lengths else 0.0,
                "kl": stats.get("kl", float("nan")),
                "policy_loss": stats.get("policy_loss", float("nan")),
                "value_loss": stats.get("value_loss", float("nan")),
                "entropy": stats.get("entropy", float("nan")),
                "epochs": stats.get("epochs", 0),
                "aborted": stats["aborted"],
            }
            if stats["aborted"]:
                log.warning("iteration %d: update aborted (%s)", it, stats.get("reason"))
            if metrics_file is not None:
                metrics_file.write(json.dumps(record, sort_keys=True) + "\n")
                metrics_file.flush()
            log.info("%s it %d reward %.3f success %.3f (%d eps) kl %.4f [%.2fs]", variant.value, it,
                     record["mean_reward"], record["success_rate"], record["episodes"], record["kl"],
                     time.perf_counter() - t0)
    finally:
        if metrics_file is not None:
            metrics_file.close()

    ck = Checkpoint(params, opt, variant, iterations)
    if out_dir is not None:
        save_checkpoint(ck, out_dir / CHECKPOINT_NAME)
    return ck

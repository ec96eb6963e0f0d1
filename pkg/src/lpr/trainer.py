"""The training loop: roll out episodes with the goal oracle and ranked
candidate paths, store transitions, and interleave policy and ranker
updates with periodic greedy evaluation."""
from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig, parse_config
from .generators import BezierConfig, PlannerConfig, sample_beziers, sample_plans
from .kinematics import ArmSpec
from .nn import AdamState, NetParams, adam_from_arrays, adam_to_arrays, optimizer_step, params_from_arrays, \
    params_to_arrays
from .policy import PolicyInput, bc_loss_and_grads, init_policy, policy_predict, validity_filter
from .ranker import (RankerParams, RankerTrainerState, RankRecord, apply_td_step, new_trainer_state,
                     select_path, td_loss_and_grads)
from .replay import ReplayBuffer, Transition, demo_transitions, keyframe_discovery, link_successors
from .tasks import DemoFailed, TaskSpec, execute, generate_demo, get_task, goal_oracle, save_demo

METRIC_COLUMNS = ["step", "success_rate", "policy_chosen_frac", "frac_planner", "frac_bezier",
                  "td_loss", "bc_loss", "ms_per_step"]

# disjoint scene-seed blocks
DEMO_SEEDS = 1_000_000
TRAIN_SEEDS = 2_000_000
EVAL_SEEDS = 9_000_000


@dataclass
class Agent:
    policy: NetParams
    policy_opt: AdamState
    ranker: RankerTrainerState

    @classmethod
    def fresh(cls, cfg: TrainConfig, d: int, seed: int) -> "Agent":
        rng = np.random.default_rng([seed, 7])
        policy = init_policy(d, cfg.T, rng)
        ranker = new_trainer_state(d, rng, gamma=cfg.gamma, tau=cfg.tau, lr=cfg.lr_ranker)
        return cls(policy, AdamState.for_params(policy), ranker)


@dataclass
class EpisodeRecord:
    scene_seed: int
    transitions: list
    success: bool
    chosen_sources: list  # source of the executed path per step
    greedy_sources: list  # source of the top-ranked path per step
    ranks: list
    step_ms: list
    failed_generation: bool = False


@dataclass
class EvalPoint:
    step: int
    success_rate: float
    policy_chosen_frac: float
    frac_planner: float
    frac_bezier: float
    td_loss: float
    bc_loss: float
    ms_per_step: float
    source_counts: dict = field(default_factory=dict)

    def csv_row(self, wall_time: bool) -> list:
        def num(x):
            return "" if x is None or np.isnan(x) else f"{x:.10g}"

        return [str(self.step), num(self.success_rate), num(self.policy_chosen_frac), num(self.frac_planner),
                num(self.frac_bezier), num(self.td_loss), num(self.bc_loss),
                num(self.ms_per_step) if wall_time else ""]


# --- acting -------------------------------------------------------------------

def candidate_paths(task: TaskSpec, scene, goal, agent: Agent | None, cfg: TrainConfig, rng):
    """The candidate set: planner paths, then Bezier paths, then the policy
    path if it passes the validity filter.  Baseline mode plans only."""
    plan_seed, bez_seed = rng.integers(2 ** 63, size=2)
    plans = sample_plans(scene, goal, PlannerConfig(M=cfg.M, collision_free_fraction=cfg.collision_free_fraction),
                         int(plan_seed), cfg.T)
    if cfg.mode == "baseline":
        return plans
    beziers = sample_beziers(scene, goal, BezierConfig(B=cfg.B, midpoint_std=cfg.midpoint_std), int(bez_seed), cfg.T)
    cands = plans + beziers
    if cfg.use_policy and agent is not None:
        p = policy_predict(agent.policy, PolicyInput(scene.q, goal), scene)
        if validity_filter(p, cands):
            cands.append(p)
    return cands


def shortest_path_choice(candidates: list) -> int:
    """Shortest collision-free planner path; shortest planner path if none
    is free."""
    idx = [i for i, p in enumerate(candidates) if p.source == "planner"]
    free = [i for i in idx if not candidates[i].in_collision]
    pool = free or idx
    if not pool:
        raise ValueError("no planner path to choose from")
    return min(pool, key=lambda i: (candidates[i].cspace_length, i))


def run_episode(task: TaskSpec, agent: Agent | None, cfg: TrainConfig, scene_seed: int, rng, *,
                explore: bool, epsilon: float = 0.0, episode_id=None) -> EpisodeRecord:
    scene = task.scene_generator(scene_seed)
    steps, chosen, greedy, ranks, times = [], [], [], [], []
    success = failed = False
    for stage in range(task.max_steps):
        t0 = time.perf_counter()
        goal = goal_oracle(task, scene, stage, cfg.goal_noise, rng)
        cands = candidate_paths(task, scene, goal, agent, cfg, rng)
        if not cands:
            failed = True
            times.append(1e3 * (time.perf_counter() - t0))
            break
        if cfg.mode == "baseline":
            idx = best = shortest_path_choice(cands)
            q = np.full(len(cands), np.nan)
        else:
            _, best, q = select_path(agent.ranker.online, cands, goal)
            idx = best
            if explore and epsilon > 0 and rng.random() < epsilon:
                idx = int(rng.integers(len(cands)))
        path = cands[idx]
        nxt, reward, done = execute(task, scene, path, goal.gripper_closed)
        times.append(1e3 * (time.perf_counter() - t0))
        steps.append(Transition(scene, goal, reward, nxt, path, episode_id=episode_id))
        chosen.append(path.source)
        greedy.append(cands[best].source)
        ranks.append(RankRecord(-1 if episode_id is None else episode_id, stage,
                                [c.source for c in cands], list(q), idx, best))
        scene = nxt
        if done:
            success = True
            break
    link_successors(steps)
    return EpisodeRecord(scene_seed, steps, success, chosen, greedy, ranks, times, failed)


def evaluate(task: TaskSpec, agent: Agent | None, cfg: TrainConfig, n_episodes: int, seed: int = 0):
    """Greedy episodes on held-out scenes.  Returns (success rate, records)."""
    records = []
    for i in range(n_episodes):
        scene_seed = EVAL_SEEDS + 10_000 * seed + i
        rng = np.random.default_rng([scene_seed, 1])
        records.append(run_episode(task, agent, cfg, scene_seed, rng, explore=False))
    rate = float(np.mean([r.success for r in records])) if records else 0.0
    return rate, records


# --- learning -----------------------------------------------------------------

def ingest_demos(task: TaskSpec, cfg: TrainConfig, seed: int, buffer: ReplayBuffer, demo_dir=None) -> list:
    """Generate ``num_demos`` scripted demos (skipping seeds the expert fails
    on), then store their keyframe segments and augmented transitions."""
    used, k = [], 0
    while len(used) < cfg.num_demos:
        if k >= 10 * cfg.num_demos + 10:
            raise DemoFailed(f"{task.name}: only {len(used)} of {cfg.num_demos} demos succeeded")
        scene_seed = DEMO_SEEDS + 1000 * seed + k
        k += 1
        try:
            demo = generate_demo(task, scene_seed, cfg.T)
        except DemoFailed:
            continue
        if demo_dir is not None:
            save_demo(os.path.join(demo_dir, f"demo_{len(used):03d}.json"), task.name, scene_seed, demo)
        segments = keyframe_discovery(demo, T=cfg.T)
        for tr in demo_transitions(demo[0][0], segments, task.success_predicate, ("demo", len(used)),
                                   cfg.augment_stride, cfg.T):
            buffer.add(tr)
        used.append(scene_seed)
    return used


def policy_train_step(agent: Agent, buffer: ReplayBuffer, cfg: TrainConfig, rng) -> float | None:
    if not buffer.success_indices():
        return None
    examples = buffer.sample_success_paths(cfg.batch_size, rng)
    loss, grads = bc_loss_and_grads(agent.policy, [e[0] for e in examples], [e[1] for e in examples])
    agent.policy, agent.policy_opt = optimizer_step(agent.policy, grads, agent.policy_opt, cfg.lr_policy)
    return loss


def ranker_step(agent: Agent, buffer: ReplayBuffer, cfg: TrainConfig, rng) -> float | None:
    if len(buffer) < cfg.batch_size:
        return None
    loss, grads = td_loss_and_grads(agent.ranker, buffer.sample_batch(cfg.batch_size, rng))
    agent.ranker = apply_td_step(agent.ranker, grads)
    return loss


def _fractions(sources: list) -> tuple:
    counts = {s: sources.count(s) for s in ("planner", "bezier", "policy")}
    n = len(sources)
    if n == 0:
        return counts, float("nan"), float("nan"), float("nan")
    return counts, counts["policy"] / n, counts["planner"] / n, counts["bezier"] / n


def eval_point(task, agent, cfg, step, td_losses, bc_losses) -> tuple:
    rate, records = evaluate(task, agent if cfg.mode == "lpr" else None, cfg, cfg.eval_episodes, cfg.eval_seed)
    sources = [s for r in records for s in r.chosen_sources]
    counts, f_pol, f_plan, f_bez = _fractions(sources)
    ms = [t for r in records for t in r.step_ms]
    point = EvalPoint(step, rate, f_pol, f_plan, f_bez,
                      float(np.mean(td_losses)) if td_losses else float("nan"),
                      float(np.mean(bc_losses)) if bc_losses else float("nan"),
                      float(np.mean(ms)) if ms else float("nan"), counts)
    return point, records


class MetricsWriter:
    def __init__(self, out_dir, wall_time: bool):
        self.out_dir = out_dir
        self.wall_time = wall_time
        if out_dir is None:
            return
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as f:
            csv.writer(f).writerow(METRIC_COLUMNS)
        with open(os.path.join(out_dir, "timing.csv"), "w", newline="") as f:
            csv.writer(f).writerow(["step", "ms_per_step"])

    def append(self, p: EvalPoint):
        if self.out_dir is None:
            return
        with open(os.path.join(self.out_dir, "metrics.csv"), "a", newline="") as f:
            csv.writer(f).writerow(p.csv_row(self.wall_time))
        with open(os.path.join(self.out_dir, "timing.csv"), "a", newline="") as f:
            csv.writer(f).writerow([p.step, f"{p.ms_per_step:.3f}"])


def train(cfg: TrainConfig, seed: int | None = None, out_dir=None, log=None):
    """Run one seed of ``cfg``.  Returns (metrics history, agent).

    With ``out_dir`` the metrics CSV, a wall-clock timing CSV, demos and
    per-eval-point checkpoints are written there as training proceeds."""
    seed = cfg.seeds[0] if seed is None else seed
    task = get_task(cfg.task)
    d = task.scene_generator(0).arm.d
    agent = Agent.fresh(cfg, d, seed)
    rng = np.random.default_rng([seed, 11])
    buffer = ReplayBuffer(cfg.replay_capacity)
    writer = MetricsWriter(out_dir, cfg.log_wall_time)
    demo_dir = ckpt_dir = None
    if out_dir is not None:
        demo_dir = os.path.join(out_dir, "demos")
        ckpt_dir = os.path.join(out_dir, "checkpoints")
        os.makedirs(demo_dir, exist_ok=True)
        os.makedirs(ckpt_dir, exist_ok=True)
    learning = cfg.mode == "lpr"
    if learning:
        ingest_demos(task, cfg, seed, buffer, demo_dir)

    history = []
    td_losses, bc_losses = [], []

    def checkpoint(step):
        point, _ = eval_point(task, agent, cfg, step, td_losses, bc_losses)
        history.append(point)
        writer.append(point)
        if ckpt_dir is not None and cfg.save_checkpoints and learning:
            save_checkpoint(os.path.join(ckpt_dir, f"step_{step:06d}.npz"), agent, cfg, d)
        if log is not None:
            log(f"[{cfg.task} seed {seed}] step {step}: success {point.success_rate:.3f}, "
                f"policy chosen {point.policy_chosen_frac:.3f}")
        td_losses.clear()
        bc_losses.clear()

    checkpoint(0)
    step, episode = 0, 0
    while step < cfg.total_env_steps:
        if not learning:
            # the baseline never learns: skip straight to the next eval point
            step = min(cfg.total_env_steps, (step // cfg.eval_every + 1) * cfg.eval_every)
            checkpoint(step)
            continue
        scene_seed = TRAIN_SEEDS + 100_000 * seed + episode
        ep = run_episode(task, agent, cfg, scene_seed, rng, explore=True, epsilon=cfg.epsilon(step),
                         episode_id=episode)
        episode += 1
        buffer.add_episode(ep.transitions, ep.success)
        n_steps = max(len(ep.transitions), 1)  # a failed generation still costs a step
        for _ in range(n_steps):
            step += 1
            for _ in range(cfg.gradient_steps_per_env_step):
                loss = ranker_step(agent, buffer, cfg, rng)
                if loss is not None:
                    td_losses.append(loss)
                if cfg.use_policy:
                    loss = policy_train_step(agent, buffer, cfg, rng)
                    if loss is not None:
                        bc_losses.append(loss)
            if step % cfg.eval_every == 0 or step == cfg.total_env_steps:
                checkpoint(step)
            if step >= cfg.total_env_steps:
                break
    return history, agent


# --- checkpoints ----------------------------------------------------------------

def save_checkpoint(path, agent: Agent, cfg: TrainConfig, d: int):
    arrays = {}
    arrays.update(params_to_arrays(agent.policy, "policy."))
    arrays.update(adam_to_arrays(agent.policy_opt, "policy."))
    r = agent.ranker
    for name, p in (("online", r.online), ("target", r.target)):
        arrays.update(params_to_arrays(p.per_config, f"ranker.{name}.per_config."))
        arrays.update(params_to_arrays(p.head, f"ranker.{name}.head."))
    arrays.update(adam_to_arrays(r.opt[0], "ranker.per_config."))
    arrays.update(adam_to_arrays(r.opt[1], "ranker.head."))
    meta = {"config": cfg.to_text(), "d": d, "gamma": r.gamma, "tau": r.tau, "lr": r.lr, "steps": r.steps}
    arrays["meta"] = np.array(json.dumps(meta))
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Returns (agent, config, meta dict)."""
    with np.load(path) as z:
        meta = json.loads(str(z["meta"]))
        policy = params_from_arrays(z, "policy.")
        policy_opt = adam_from_arrays(z, "policy.")
        nets = {name: RankerParams(params_from_arrays(z, f"ranker.{name}.per_config."),
                                   params_from_arrays(z, f"ranker.{name}.head."))
                for name in ("online", "target")}
        opt = (adam_from_arrays(z, "ranker.per_config."), adam_from_arrays(z, "ranker.head."))
    ranker = RankerTrainerState(nets["online"], nets["target"], meta["gamma"], meta["tau"], opt,
                                meta["lr"], meta["steps"])
    return Agent(policy, policy_opt, ranker), parse_config(meta["config"]), meta


def arm_dof(task_name: str) -> int:
    arm: ArmSpec = get_task(task_name).scene_generator(0).arm
    return arm.d

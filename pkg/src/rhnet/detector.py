"""Reinforcement-learned instance selector.

An episode walks a bag's sentences in order and decides select (1) or
remove (0) for each one. The state at step t is
``[tanh(W_q [s_prev; c_t; r*]); x_hat]`` where ``x_hat`` is the mean of the
sentences selected so far, and the policy is ``sigmoid(W_p s_t)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .numeric import Adam, DimensionError, NumericError, ParameterStore, sigmoid


def init_detector_params(params: ParameterStore, d_c: int, d_h: int, d_r: int,
                         gen: np.random.Generator) -> None:
    d_s = d_h + d_c
    fan_in = d_s + d_c + d_r
    bound = math.sqrt(6.0 / (fan_in + d_h))
    params.add("detector.W_q", gen.uniform(-bound, bound, size=(d_h, fan_in)))
    params.add("detector.W_p", gen.uniform(-0.01, 0.01, size=(1, d_s)))


def detector_dims(params: ParameterStore) -> Tuple[int, int, int]:
    """``(d_h, d_c, d_r)`` read off the parameter shapes."""
    d_h, fan_in = params.value("detector.W_q").shape
    d_s = params.value("detector.W_p").shape[1]
    d_c = d_s - d_h
    return d_h, d_c, fan_in - d_s - d_c


@dataclass
class EpisodeState:
    s_prev: np.ndarray
    x_hat: np.ndarray
    selected: List[int] = field(default_factory=list)
    t: int = 0

    @classmethod
    def initial(cls, d_s: int, d_c: int) -> "EpisodeState":
        return cls(np.zeros(d_s), np.zeros(d_c))


def next_state(st: EpisodeState, c_t: np.ndarray, r_star: np.ndarray,
               params: ParameterStore) -> np.ndarray:
    W_q = params.value("detector.W_q")
    u = np.concatenate([st.s_prev, c_t, r_star])
    if u.shape[0] != W_q.shape[1] or st.x_hat.shape[0] != c_t.shape[0]:
        raise DimensionError(f"state input has {u.shape[0]} entries, W_q expects {W_q.shape[1]}")
    return np.concatenate([np.tanh(W_q @ u), st.x_hat])


def select_prob(s_t: np.ndarray, params: ParameterStore) -> float:
    return float(sigmoid(params.value("detector.W_p") @ s_t)[0])


def policy_prob(s_t: np.ndarray, action: int, params: ParameterStore) -> float:
    p1 = select_prob(s_t, params)
    return p1 if action == 1 else 1.0 - p1


@dataclass
class Trajectory:
    inputs: np.ndarray            # [n, d_c] sentence embeddings
    r_star: np.ndarray
    states: List[np.ndarray]
    actions: List[int]
    probs: List[float]            # probability of the action taken
    select_probs: List[float]     # pi(1 | s_t)
    selected_before: List[Tuple[int, ...]]
    reward: Optional[float] = None

    def __len__(self):
        return len(self.actions)


def run_episode(embeddings: np.ndarray, r_star: np.ndarray, params: ParameterStore,
                mode: str = "sample", gen: Optional[np.random.Generator] = None,
                force_select: bool = True,
                actions: Optional[Sequence[int]] = None) -> Tuple[Trajectory, List[int]]:
    """Play one bag. Returns the trajectory and the selected sentence indices.

    ``actions`` replays a fixed action sequence instead of consulting the policy.
    """
    embeddings = np.asarray(embeddings)
    n, d_c = embeddings.shape
    if n == 0:
        raise ValueError("cannot run an episode on an empty bag")
    if mode not in ("sample", "greedy"):
        raise ValueError(f"unknown mode {mode!r}")
    if actions is not None and len(actions) != n:
        raise ValueError("need one forced action per sentence")
    if mode == "sample" and gen is None and actions is None:
        raise ValueError("sample mode needs a random generator")
    d_h = params.value("detector.W_q").shape[0]
    st = EpisodeState.initial(d_h + d_c, d_c)
    running_sum = np.zeros(d_c)
    traj = Trajectory(embeddings, np.asarray(r_star), [], [], [], [], [])
    for t in range(n):
        s_t = next_state(st, embeddings[t], r_star, params)
        p1 = select_prob(s_t, params)
        if actions is not None:
            a = int(actions[t])
        elif mode == "greedy":
            a = 1 if p1 > 0.5 else 0
        else:
            a = 1 if gen.random() < p1 else 0
        traj.states.append(s_t)
        traj.actions.append(a)
        traj.select_probs.append(p1)
        traj.probs.append(p1 if a == 1 else 1.0 - p1)
        traj.selected_before.append(tuple(st.selected))
        if a == 1:
            st.selected.append(t)
            running_sum += embeddings[t]
            st.x_hat = running_sum / len(st.selected)
        st.s_prev = s_t
        st.t = t + 1
    selected = list(st.selected)
    if not selected and force_select:
        # the forced sentence is recorded as selected so the trajectory matches B_cre
        j = int(np.argmax(traj.select_probs))
        selected = [j]
        traj.actions[j] = 1
        traj.probs[j] = traj.select_probs[j]
    return traj, selected


def reward(selected: Sequence[int], probs: Sequence[float]) -> float:
    """Mean log-probability of the bag label over the selected sentences.

    ``probs[j]`` is ``p(r_B | S_j)`` for every sentence of the bag.
    """
    if not selected:
        raise ValueError("reward needs a non-empty selection")
    vals = np.array([probs[j] for j in selected], dtype=float)
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise NumericError("sentence probabilities must be positive and finite")
    return float(np.mean(np.log(vals)))


def policy_gradient(traj: Trajectory, advantage: float, params: ParameterStore,
                    input_grad: bool = False):
    """Gradient of ``-advantage * sum_t log pi(a_t | s_t)``, backpropagated
    through the recurrent state. With ``input_grad`` also returns the
    gradient with respect to the sentence embeddings."""
    W_q = params.value("detector.W_q")
    W_p = params.value("detector.W_p")[0]
    d_h = W_q.shape[0]
    n, d_c = traj.inputs.shape
    d_s = d_h + d_c
    dW_q = np.zeros_like(W_q)
    dW_p = np.zeros(d_s)
    d_inputs = np.zeros_like(traj.inputs) if input_grad else None
    ds_next = np.zeros(d_s)
    for t in range(n - 1, -1, -1):
        s_t = traj.states[t]
        dz = -advantage * (traj.actions[t] - traj.select_probs[t])
        dW_p += dz * s_t
        ds = dz * W_p + ds_next
        h = s_t[:d_h]
        da = ds[:d_h] * (1.0 - h * h)
        s_prev = traj.states[t - 1] if t > 0 else np.zeros(d_s)
        u = np.concatenate([s_prev, traj.inputs[t], traj.r_star])
        dW_q += np.outer(da, u)
        du = W_q.T @ da
        ds_next = du[:d_s]
        if input_grad:
            d_inputs[t] += du[d_s:d_s + d_c]
            before = traj.selected_before[t]
            if before:
                d_inputs[list(before)] += ds[d_h:] / len(before)
    grads = {"detector.W_q": dW_q, "detector.W_p": dW_p[None, :]}
    return (grads, d_inputs) if input_grad else grads


def log_likelihood(traj: Trajectory) -> float:
    return float(np.sum(np.log(traj.probs)))


class RewardBaseline:
    """Exponential moving average of batch-mean rewards."""

    def __init__(self, decay: float = 0.9, value: Optional[float] = None):
        self.decay = decay
        self.value = value

    def current(self, rewards: Sequence[float]) -> float:
        return float(np.mean(rewards)) if self.value is None else self.value

    def update(self, rewards: Sequence[float]) -> None:
        m = float(np.mean(rewards))
        self.value = m if self.value is None else self.decay * self.value + (1 - self.decay) * m


def reinforce_update(trajectories: Sequence[Trajectory], baseline: RewardBaseline,
                     optimizer: Adam, params: ParameterStore) -> Dict[str, np.ndarray]:
    """One REINFORCE step on the detector parameters in ``params``.

    Only ``detector.*`` entries are touched; the baseline moves after the step.
    """
    rewards = [tr.reward for tr in trajectories]
    if any(r is None for r in rewards):
        raise ValueError("every trajectory needs a terminal reward")
    b = baseline.current(rewards)
    total = {"detector.W_q": 0.0, "detector.W_p": 0.0}
    for tr in trajectories:
        g = policy_gradient(tr, tr.reward - b, params)
        for k in total:
            total[k] = total[k] + g[k] / len(trajectories)
    for k, g in total.items():
        params[k].grad = np.asarray(g, dtype=float) + np.zeros(params[k].shape)
    optimizer.step(params.subset("detector."))
    baseline.update(rewards)
    return total

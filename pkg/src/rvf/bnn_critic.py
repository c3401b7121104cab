"""Ensemble critics with a diagonal-Gaussian Bayesian last layer.

Each member is an MLP feature extractor over (state, action) topped by a
stochastic linear head: the head weight (including a bias coordinate on an
always-1 feature) is w = mean + softplus(raw_scale) * z with z standard
normal, so value samples stay differentiable in the head parameters.
The critic loss combines the squared residual to a pessimistic target,
a KL pull toward the standard-normal prior, and a subtracted sample-spread
term on out-of-distribution actions; its gradients are derived by hand and
checked against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, ndtri

from .errors import NumericError, ShapeError, UsageError
from .math_core import Mlp, Params, backward, forward, load_params, save_params


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inverse(y: float) -> float:
    # Inverse of log(1 + e^x); valid for y > 0.
    return float(np.log(np.expm1(y)))


@dataclass
class GaussianLastLayer:
    """Diagonal-Gaussian weight posterior for a linear value head.

    mean and raw_scale have length d+1 (the trailing coordinate multiplies a
    constant 1 feature and plays the role of the bias).  The positive scale
    is softplus(raw_scale), so it can approach but never cross zero.
    """

    mean: np.ndarray
    raw_scale: np.ndarray

    @classmethod
    def init(cls, d: int, rng: np.random.Generator, init_scale: float = 0.05) -> "GaussianLastLayer":
        mean = rng.normal(0.0, 1.0 / np.sqrt(d + 1), size=d + 1)
        raw = np.full(d + 1, softplus_inverse(init_scale))
        return cls(mean, raw)

    @property
    def scale(self) -> np.ndarray:
        return softplus(self.raw_scale)

    def get_params(self) -> Params:
        return {"mean": self.mean, "raw_scale": self.raw_scale}

    def set_params(self, params: Params) -> None:
        self.mean = np.asarray(params["mean"], dtype=np.float64)
        self.raw_scale = np.asarray(params["raw_scale"], dtype=np.float64)

    def copy(self) -> "GaussianLastLayer":
        return GaussianLastLayer(self.mean.copy(), self.raw_scale.copy())


def sample_weights(layer: GaussianLastLayer, n: int,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """n reparameterized weight draws; returns (weights, noise), both (n, d+1)."""
    if n < 1:
        raise UsageError("need at least one weight sample")
    z = rng.standard_normal((n, layer.mean.shape[0]))
    return layer.mean + layer.scale * z, z


def kl_to_prior(layer: GaussianLastLayer) -> float:
    """Closed-form KL(N(mean, diag scale^2) || N(0, I))."""
    var = layer.scale ** 2
    return float(0.5 * np.sum(var + layer.mean ** 2 - 1.0 - np.log(var)))


def lcb_alpha(n_draws: int) -> float:
    """Gaussian inverse-CDF factor relating E[min of n_draws samples] to
    mean - alpha * std (Blom-style approximation for the minimum order
    statistic)."""
    if n_draws < 1:
        raise UsageError("n_draws must be >= 1")
    ratio = (n_draws - np.pi / 8.0) / (n_draws - np.pi / 4.0 + 1.0)
    return float(ndtri(ratio))


def repulsive_term(samples) -> float:
    """Population standard deviation of one row of pooled value samples."""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if samples.shape[0] < 2:
        raise UsageError("repulsive term needs at least two samples")
    return float(np.std(samples))


@dataclass
class QSampleBatch:
    """Sampled values, shape (batch, members, draws), plus the noise used."""

    values: np.ndarray
    draws: np.ndarray   # (members, draws, d+1)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise NumericError("non-finite value samples")


class EnsembleCritic:
    """M feature networks, each with a Gaussian head, plus target copies."""

    def __init__(self, state_dim: int, action_dim: int, members: list[Mlp],
                 heads: list[GaussianLastLayer], target_members: list[Mlp],
                 target_heads: list[GaussianLastLayer]):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.feature_nets = members
        self.heads = heads
        self.target_feature_nets = target_members
        self.target_heads = target_heads
        self.d = members[0].widths[-1]

    @classmethod
    def init(cls, state_dim: int, action_dim: int, hidden_widths,
             n_members: int, rng: np.random.Generator,
             layer_norm: bool = False, init_scale: float = 0.05) -> "EnsembleCritic":
        if n_members < 1:
            raise UsageError("need at least one ensemble member")
        widths = (state_dim + action_dim, *hidden_widths)
        nets, heads = [], []
        for _ in range(n_members):
            # Features are the post-activation output of the hidden stack.
            nets.append(Mlp.init(widths, rng, final_activation="relu",
                                 layer_norm=layer_norm))
            heads.append(GaussianLastLayer.init(widths[-1], rng, init_scale))
        return cls(state_dim, action_dim, nets, heads,
                   [n.copy() for n in nets], [h.copy() for h in heads])

    @property
    def n_members(self) -> int:
        return len(self.feature_nets)

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return self.feature_nets[0].widths[1:]

    def member_params(self, j: int) -> Params:
        params = {f"feature/{k}": v for k, v in self.feature_nets[j].get_params().items()}
        params.update({f"head/{k}": v for k, v in self.heads[j].get_params().items()})
        return params

    def set_member_params(self, j: int, params: Params) -> None:
        self.feature_nets[j].set_params(
            {k.removeprefix("feature/"): v for k, v in params.items()
             if k.startswith("feature/")})
        self.heads[j].set_params(
            {k.removeprefix("head/"): v for k, v in params.items()
             if k.startswith("head/")})

    def target_member_params(self, j: int) -> Params:
        params = {f"feature/{k}": v
                  for k, v in self.target_feature_nets[j].get_params().items()}
        params.update({f"head/{k}": v
                       for k, v in self.target_heads[j].get_params().items()})
        return params

    def set_target_member_params(self, j: int, params: Params) -> None:
        self.target_feature_nets[j].set_params(
            {k.removeprefix("feature/"): v for k, v in params.items()
             if k.startswith("feature/")})
        self.target_heads[j].set_params(
            {k.removeprefix("head/"): v for k, v in params.items()
             if k.startswith("head/")})

    def get_all_params(self) -> Params:
        out: Params = {}
        for j in range(self.n_members):
            out.update({f"m{j}/{k}": v for k, v in self.member_params(j).items()})
            out.update({f"t{j}/{k}": v for k, v in self.target_member_params(j).items()})
        return out

    def set_all_params(self, params: Params) -> None:
        for j in range(self.n_members):
            self.set_member_params(
                j, {k.removeprefix(f"m{j}/"): v for k, v in params.items()
                    if k.startswith(f"m{j}/")})
            self.set_target_member_params(
                j, {k.removeprefix(f"t{j}/"): v for k, v in params.items()
                    if k.startswith(f"t{j}/")})


# ---------------------------------------------------------------------------
# Stacked fast path: when every member is a plain relu stack (relu final, no
# layer norm), the whole ensemble runs through broadcasted (M, B, *) matmuls.
# The math is identical to per-member forward/backward and is covered by the
# same finite-difference checks.

def _stackable(nets: list[Mlp]) -> bool:
    first = nets[0]
    return all(net.widths == first.widths and net.activation == "relu"
               and net.final_activation == "relu" and not net.layer_norm
               for net in nets)


def _stack_nets(nets: list[Mlp]):
    weights = [np.stack([net.weights[i] for net in nets])
               for i in range(nets[0].n_layers)]
    biases = [np.stack([net.biases[i] for net in nets])[:, None, :]
              for i in range(nets[0].n_layers)]
    return weights, biases


def _stacked_forward(weights, biases, x: np.ndarray):
    """All-relu forward of every member on a shared (B, d0) input."""
    a = x
    pre, post = [], []
    for W, b in zip(weights, biases):
        h = np.matmul(a, W) + b        # (M, B, dout)
        a = np.maximum(h, 0.0)
        pre.append(h)
        post.append(a)
    return a, (x, pre, post)


def _stacked_backward(weights, cache, g: np.ndarray):
    """Backward through the stacked relu forward; g has shape (M, B, d_last).

    Returns per-layer weight/bias gradients, each stacked over members, and
    the per-member input gradient (M, B, d0).
    """
    x, pre, post = cache
    n_layers = len(weights)
    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    for i in reversed(range(n_layers)):
        g = g * (pre[i] > 0.0)
        inp = post[i - 1] if i > 0 else x
        if inp.ndim == 2:
            grads_w[i] = np.matmul(inp.T, g)
        else:
            grads_w[i] = np.matmul(inp.transpose(0, 2, 1), g)
        grads_b[i] = g.sum(axis=1)
        g = np.matmul(g, weights[i].transpose(0, 2, 1))
    return grads_w, grads_b, g


def _head_tensors(heads: list[GaussianLastLayer]):
    means = np.stack([h.mean for h in heads])
    scales = np.stack([h.scale for h in heads])
    return means, scales


def _stack_inputs(critic: EnsembleCritic, states, actions) -> np.ndarray:
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    if states.shape[1] != critic.state_dim or actions.shape[1] != critic.action_dim:
        raise ShapeError(f"state/action dims {states.shape[1]}/{actions.shape[1]} "
                         f"do not match critic ({critic.state_dim}/{critic.action_dim})")
    if states.shape[0] != actions.shape[0]:
        raise ShapeError("states and actions disagree on batch size")
    return np.concatenate([states, actions], axis=1)


def _with_bias(features: np.ndarray) -> np.ndarray:
    return np.concatenate([features, np.ones((features.shape[0], 1))], axis=1)


def q_samples(critic: EnsembleCritic, states, actions, n: int,
              rng: np.random.Generator | None, use_target: bool = False,
              draws: np.ndarray | None = None) -> QSampleBatch:
    """Sampled values phi(s,a)^T w for every member and posterior draw.

    Passing a recorded (members, n, d+1) noise array replays those exact
    weight draws instead of consuming the generator.
    """
    x = _stack_inputs(critic, states, actions)
    nets = critic.target_feature_nets if use_target else critic.feature_nets
    heads = critic.target_heads if use_target else critic.heads
    if draws is None:
        draws = rng.standard_normal((critic.n_members, n, critic.d + 1))
    if _stackable(nets):
        feats, _ = _stacked_forward(*_stack_nets(nets), x)   # (M, B, d)
        means, scales = _head_tensors(heads)
        w = means[:, None, :] + scales[:, None, :] * draws   # (M, n, d+1)
        q = np.matmul(feats, w[:, :, :-1].transpose(0, 2, 1)) + w[:, None, :, -1]
        return QSampleBatch(q.transpose(1, 0, 2).copy(), draws)
    values = np.empty((x.shape[0], critic.n_members, draws.shape[1]))
    for j in range(critic.n_members):
        feats, _ = forward(nets[j], x)
        phi = _with_bias(feats)
        w = heads[j].mean + heads[j].scale * draws[j]
        values[:, j, :] = phi @ w.T
    return QSampleBatch(values, draws)


def pessimistic_target(critic: EnsembleCritic, rewards, next_states, dones,
                       policy, beta: float, gamma: float, n: int,
                       rng: np.random.Generator,
                       next_action_samples: int = 1) -> np.ndarray:
    """Backup target using target networks: reward plus the discounted minimum
    over all member/draw value samples at a policy action, with an entropy
    bonus -beta * log pi.  Terminal rows reduce to the reward."""
    rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
    dones = np.asarray(dones, dtype=np.float64).reshape(-1)
    next_states = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
    inner = np.zeros(rewards.shape[0])
    for _ in range(next_action_samples):
        actions, log_probs = policy.sample_batch(next_states, rng)
        qs = q_samples(critic, next_states, actions, n, rng, use_target=True)
        inner += qs.values.min(axis=(1, 2)) - beta * log_probs
    inner /= next_action_samples
    return rewards + gamma * (1.0 - dones) * inner


@dataclass
class CriticDraws:
    """Reparameterization noise for one critic step, kept for replay."""

    z_data: np.ndarray   # (members, n, d+1)
    z_ood: np.ndarray    # (members, n, d+1)


def draw_critic_noise(critic: EnsembleCritic, n: int,
                      rng: np.random.Generator) -> CriticDraws:
    shape = (critic.n_members, n, critic.d + 1)
    return CriticDraws(rng.standard_normal(shape), rng.standard_normal(shape))


def _pooled_std_grads(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row population std over the trailing axes of (B, M, n) values and
    its gradient with respect to every sample (zero where the std is zero)."""
    B = values.shape[0]
    flat = values.reshape(B, -1)
    n_pool = flat.shape[1]
    centered = flat - flat.mean(axis=1, keepdims=True)
    std = np.sqrt((centered ** 2).mean(axis=1))
    safe = np.where(std > 0.0, std, 1.0)
    grad = centered / (n_pool * safe[:, None])
    grad[std == 0.0] = 0.0
    return std, grad.reshape(values.shape)


def ensemble_critic_losses(critic: EnsembleCritic, states, actions, targets,
                           ood_states, ood_actions, eta_q: float,
                           eta_ood: float, kl_scale: float,
                           n: int | None = None,
                           rng: np.random.Generator | None = None,
                           draws: CriticDraws | None = None,
                           pooling: str = "joint", members=None) -> dict:
    """Loss, gradients, and term breakdown for the requested members.

    Noise comes either from (n, rng) or from a recorded CriticDraws (for
    replay); the draws used are echoed back in every member's info dict.
    Targets are treated as constants.  The spread term pools samples either
    across the whole ensemble ("joint") or per member ("per-member"); in both
    modes member j's gradient only flows through its own samples, features,
    and head.  Returns {member: (loss, grads, info)}.
    """
    if pooling not in ("joint", "per-member"):
        raise UsageError(f"unknown pooling mode {pooling!r}")
    if draws is None:
        if n is None or rng is None:
            raise UsageError("pass either draws or both n and rng")
        draws = draw_critic_noise(critic, n, rng)
    members = list(range(critic.n_members)) if members is None else list(members)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    x_data = _stack_inputs(critic, states, actions)
    if targets.shape[0] != x_data.shape[0]:
        raise ShapeError("targets do not match the batch size")
    if not np.all(np.isfinite(targets)):
        raise NumericError("critic loss is non-finite (bellman term: bad targets)")

    have_ood = ood_states is not None and len(np.atleast_1d(ood_states)) > 0
    x_ood_arr = _stack_inputs(critic, ood_states, ood_actions) if have_ood else None
    if _stackable(critic.feature_nets):
        return _losses_stacked(critic, x_data, targets, x_ood_arr, eta_q,
                               eta_ood, kl_scale, draws, pooling, members)

    ood_eval = {}
    ood_values = None
    if have_ood:
        x_ood = x_ood_arr
        n_draws = draws.z_ood.shape[1]
        ood_values = np.empty((x_ood.shape[0], critic.n_members, n_draws))
        for i in range(critic.n_members):
            feats, cache = forward(critic.feature_nets[i], x_ood)
            phi = _with_bias(feats)
            w = critic.heads[i].mean + critic.heads[i].scale * draws.z_ood[i]
            ood_values[:, i, :] = phi @ w.T
            if i in members:
                ood_eval[i] = (phi, w, cache)
        if pooling == "joint":
            joint_std, joint_grad = _pooled_std_grads(ood_values)

    results = {}
    for j in members:
        head = critic.heads[j]
        sigma = head.scale
        feats, cache = forward(critic.feature_nets[j], x_data)
        phi = _with_bias(feats)
        w = head.mean + sigma * draws.z_data[j]          # (n, d+1)
        q = phi @ w.T                                    # (B, n)
        err = q - targets[:, None]
        bellman = float(np.mean(err ** 2))
        kl = kl_to_prior(head)

        # Squared-residual term, mean over rows and draws.
        dq = (2.0 * eta_q / err.size) * err
        dw = dq.T @ phi
        d_mean = dw.sum(axis=0)
        d_sigma = (dw * draws.z_data[j]).sum(axis=0)
        feat_grads, _ = backward(critic.feature_nets[j], cache, dq @ w[:, :-1])

        # KL term.
        d_mean = d_mean + eta_q * kl_scale * head.mean
        d_sigma = d_sigma + eta_q * kl_scale * (sigma - 1.0 / sigma)

        ood_std_mean = 0.0
        if have_ood:
            if pooling == "joint":
                std, dq_ood = joint_std, joint_grad[:, j, :]
            else:
                std, g = _pooled_std_grads(ood_values[:, j:j + 1, :])
                dq_ood = g[:, 0, :]
            ood_std_mean = float(std.mean())
            dq_ood = (-eta_ood / std.shape[0]) * dq_ood   # (B_ood, n)
            phi_o, w_o, cache_o = ood_eval[j]
            dw_o = dq_ood.T @ phi_o
            d_mean = d_mean + dw_o.sum(axis=0)
            d_sigma = d_sigma + (dw_o * draws.z_ood[j]).sum(axis=0)
            fg_ood, _ = backward(critic.feature_nets[j], cache_o, dq_ood @ w_o[:, :-1])
            feat_grads = {k: feat_grads[k] + fg_ood[k] for k in feat_grads}

        loss = eta_q * (bellman + kl_scale * kl) - eta_ood * ood_std_mean
        if not np.isfinite(loss):
            term = "bellman" if not np.isfinite(bellman) else (
                "kl" if not np.isfinite(kl) else "ood-std")
            raise NumericError(f"critic loss for member {j} is non-finite ({term} term)")
        grads = {f"feature/{k}": v for k, v in feat_grads.items()}
        grads["head/mean"] = d_mean
        grads["head/raw_scale"] = d_sigma * expit(head.raw_scale)
        results[j] = (loss, grads, {"bellman": bellman, "kl": kl,
                                    "ood_std": ood_std_mean, "draws": draws})
    return results


def _per_member_std_grads(values_mbn: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Population std over the draw axis of (M, B, n) values, per member."""
    n = values_mbn.shape[2]
    centered = values_mbn - values_mbn.mean(axis=2, keepdims=True)
    std = np.sqrt((centered ** 2).mean(axis=2))          # (M, B)
    safe = np.where(std > 0.0, std, 1.0)
    grad = centered / (n * safe[:, :, None])
    grad[std == 0.0] = 0.0
    return std, grad


def _losses_stacked(critic: EnsembleCritic, x_data, targets, x_ood, eta_q,
                    eta_ood, kl_scale, draws: CriticDraws, pooling, members):
    """Whole-ensemble critic loss via broadcasted matmuls; math identical to
    the per-member path."""
    B = x_data.shape[0]
    n = draws.z_data.shape[1]
    weights, biases = _stack_nets(critic.feature_nets)
    means, scales = _head_tensors(critic.heads)           # (M, d+1)
    raws = np.stack([h.raw_scale for h in critic.heads])

    feats, cache = _stacked_forward(weights, biases, x_data)   # (M, B, d)
    w = means[:, None, :] + scales[:, None, :] * draws.z_data  # (M, n, d+1)
    q = np.matmul(feats, w[:, :, :-1].transpose(0, 2, 1)) + w[:, None, :, -1]
    err = q - targets[None, :, None]                           # (M, B, n)
    bellman_each = (err ** 2).mean(axis=(1, 2))

    dq = (2.0 * eta_q / (B * n)) * err
    dw_feat = np.matmul(dq.transpose(0, 2, 1), feats)          # (M, n, d)
    dw_bias = dq.sum(axis=1)                                   # (M, n)
    d_mean = np.concatenate([dw_feat.sum(axis=1),
                             dw_bias.sum(axis=1)[:, None]], axis=1)
    d_sigma = np.concatenate(
        [(dw_feat * draws.z_data[:, :, :-1]).sum(axis=1),
         (dw_bias * draws.z_data[:, :, -1]).sum(axis=1)[:, None]], axis=1)
    gw, gb, _ = _stacked_backward(weights, cache,
                                  np.matmul(dq, w[:, :, :-1]))

    var = scales ** 2
    kl_each = 0.5 * (var + means ** 2 - 1.0 - np.log(var)).sum(axis=1)
    d_mean = d_mean + eta_q * kl_scale * means
    d_sigma = d_sigma + eta_q * kl_scale * (scales - 1.0 / scales)

    ood_std_each = np.zeros(critic.n_members)
    if x_ood is not None and x_ood.shape[0] > 0:
        B_ood = x_ood.shape[0]
        feats_o, cache_o = _stacked_forward(weights, biases, x_ood)
        w_o = means[:, None, :] + scales[:, None, :] * draws.z_ood
        q_o = np.matmul(feats_o, w_o[:, :, :-1].transpose(0, 2, 1)) \
            + w_o[:, None, :, -1]                              # (M, B_ood, n)
        if pooling == "joint":
            std, grad = _pooled_std_grads(q_o.transpose(1, 0, 2).copy())
            dq_o = grad.transpose(1, 0, 2)
            ood_std_each[:] = std.mean()
        else:
            std, dq_o = _per_member_std_grads(q_o)
            ood_std_each = std.mean(axis=1)
        dq_o = (-eta_ood / B_ood) * dq_o
        dw_feat_o = np.matmul(dq_o.transpose(0, 2, 1), feats_o)
        dw_bias_o = dq_o.sum(axis=1)
        d_mean = d_mean + np.concatenate(
            [dw_feat_o.sum(axis=1), dw_bias_o.sum(axis=1)[:, None]], axis=1)
        d_sigma = d_sigma + np.concatenate(
            [(dw_feat_o * draws.z_ood[:, :, :-1]).sum(axis=1),
             (dw_bias_o * draws.z_ood[:, :, -1]).sum(axis=1)[:, None]], axis=1)
        gw_o, gb_o, _ = _stacked_backward(weights, cache_o,
                                          np.matmul(dq_o, w_o[:, :, :-1]))
        gw = [a + b for a, b in zip(gw, gw_o)]
        gb = [a + b for a, b in zip(gb, gb_o)]

    d_raw = d_sigma * expit(raws)
    losses = eta_q * (bellman_each + kl_scale * kl_each) - eta_ood * ood_std_each
    results = {}
    for j in members:
        if not np.isfinite(losses[j]):
            term = "bellman" if not np.isfinite(bellman_each[j]) else (
                "kl" if not np.isfinite(kl_each[j]) else "ood-std")
            raise NumericError(f"critic loss for member {j} is non-finite ({term} term)")
        grads = {}
        for i in range(len(gw)):
            grads[f"feature/w{i}"] = gw[i][j]
            grads[f"feature/b{i}"] = gb[i][j]
        grads["head/mean"] = d_mean[j]
        grads["head/raw_scale"] = d_raw[j]
        results[j] = (float(losses[j]), grads,
                      {"bellman": float(bellman_each[j]), "kl": float(kl_each[j]),
                       "ood_std": float(ood_std_each[j]), "draws": draws})
    return results


def critic_loss(critic: EnsembleCritic, member: int, states, actions, targets,
                ood_states, ood_actions, eta_q: float, eta_ood: float,
                kl_scale: float, n: int | None = None,
                rng: np.random.Generator | None = None,
                draws: CriticDraws | None = None, pooling: str = "joint"):
    """Single-member view of ensemble_critic_losses; same math, same noise."""
    out = ensemble_critic_losses(critic, states, actions, targets, ood_states,
                                 ood_actions, eta_q, eta_ood, kl_scale,
                                 n, rng, draws, pooling, members=[member])
    return out[member]


# ---------------------------------------------------------------------------
# Checkpointing.

def save_critic(path, critic: EnsembleCritic, n_posterior_samples: int,
                extra_meta: dict | None = None) -> None:
    meta = {
        "kind": "critic",
        "state_dim": critic.state_dim,
        "action_dim": critic.action_dim,
        "hidden_widths": list(critic.hidden_widths),
        "members": critic.n_members,
        "feature_dim": critic.d,
        "posterior_samples": n_posterior_samples,
        "layer_norm": critic.feature_nets[0].layer_norm,
    }
    meta.update(extra_meta or {})
    save_params(path, critic.get_all_params(), meta)


def load_critic(path) -> tuple[EnsembleCritic, dict]:
    params, meta = load_params(path)
    critic = EnsembleCritic.init(
        int(meta["state_dim"]), int(meta["action_dim"]),
        tuple(meta["hidden_widths"]), int(meta["members"]),
        np.random.default_rng(0), layer_norm=bool(meta.get("layer_norm", False)))
    critic.set_all_params(params)
    return critic, meta

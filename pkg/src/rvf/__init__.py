"""Pessimistic offline RL with randomized value functions.

Ensembles of MLP critics with diagonal-Gaussian last-layer weight posteriors,
trained on fixed datasets against min-over-samples backup targets with a
KL prior term and a repulsive spread bonus on out-of-distribution actions.
A parallel linear-MDP suite makes the underlying confidence-bound identities
exactly testable.
"""

from .actor import TanhGaussianPolicy, actor_loss, ood_actions, sample_action
from .bnn_critic import (EnsembleCritic, GaussianLastLayer, QSampleBatch,
                         critic_loss, kl_to_prior, lcb_alpha,
                         pessimistic_target, q_samples, repulsive_term,
                         sample_weights)
from .envs_data import (OfflineDataset, generate_dataset, load_dataset,
                        make_env, ood_probe_sets, save_dataset)
from .harness import (MetricsRecord, TrainConfig, TrainResult, evaluate_policy,
                      train, uncertainty_report)
from .linear_mdp import (FeatureDataset, LinearMdpSpec, RidgePosterior,
                         exact_values, lcb_penalty, lsvi_solve,
                         posterior_std_check, random_linear_mdp,
                         suboptimality_gap, xi_quantifier_check)
from .math_core import AdamState, Mlp, adam_step, backward, forward, soft_update
from .oracles import OracleReport, run_verification

__version__ = "0.1.0"

"""Goal-oriented dialogue agents over entity tables with a soft lookup.

The package trains and serves agents that find the row of a knowledge base a
user has in mind by asking about its columns, maintaining a differentiable
posterior over rows that tolerates noisy answers and missing cells.
"""

from .agents import (DEFAULT_RULE_CONFIGS, VARIANTS, DialogueAgent, E2EAgent,
                     MaxAgent, PolicyAgent, RuleAgent, build_agent,
                     canonical_variant, default_feature_vocab,
                     policy_input_dim)
from .beliefs import BeliefState, HandTracker, HandTrackerConfig, match_score
from .evaluate import EvalReport, evaluate, noise_sweep
from .features import FeatureVocab, build_vocab
from .kb import (KbSplitSpec, KbTable, MISSING, generate_synthetic,
                 hard_kb_lookup, load_csv, load_kb, result_bin)
from .nnet import (ModelConfig, Node, ParamStore, RmsProp, backward,
                   finite_diff_check, load_checkpoint, no_grad,
                   save_checkpoint, sgd_step)
from .neural_tracker import NeuralTracker
from .policy import (Action, PolicyNet, RulePolicyConfig, greedy_inform,
                     rule_select, sample_inform)
from .rollout import Episode, TurnRecord, rollout
from .simulator import (MODERATE_NOISE, NoiseConfig, RewardConfig, UserGoal,
                        UserSimulator, discounted_return, load_templates,
                        score_inform)
from .softkb import (KbPosterior, entropy, posterior, posterior_oracle,
                     summarize, SummaryState, weighted_slot_dist)
from .trainer import (TrainConfig, TrainResult, collect_episodes,
                      e2e_surrogate, e2e_update, episode_weights,
                      imitation_loss, imitation_metrics, imitation_update,
                      mimic_agreement, mimic_update, policy_surrogate,
                      reinforce_update, shadow_policy_inputs, train)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

"""
Training workflows: direct, indirect (with stress-recovery pretraining)
and best-of-restarts selection.
"""
import logging
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from src.constitutive_models import ConstitutiveModel, reseed, with_params
from src.datasets import DirectDataset, IndirectDataset
from src.errors import TrainingError
from src.losses import IndirectProblem, direct_loss, indirect_loss
from src.optimizers import History, OptimizerConfig, minimize
from src.stress_recovery import recovered_dataset, stress_recovery

logger = logging.getLogger(__name__)

PRETRAIN_EVALS = 3000
TRAIN_EVALS = 50000


@dataclass
class TrainResult:
    model: ConstitutiveModel
    history: History
    seed: int
    pretrain_history: History | None = None

    @property
    def loss(self) -> float:
        return self.history.best_loss


def train_direct(model: ConstitutiveModel, data: DirectDataset, config: OptimizerConfig) -> TrainResult:
    theta, history = minimize(lambda th: direct_loss(model, th, data), model.theta, config)
    return TrainResult(with_params(model, theta), history, model.net.seed if model.net else 0)


def pretrain(model: ConstitutiveModel, recovered: DirectDataset, config: OptimizerConfig | None = None):
    """Direct fit on recovered stresses; returns (θ_init, history)."""
    config = config or OptimizerConfig(max_evals=PRETRAIN_EVALS)
    return minimize(lambda th: direct_loss(model, th, recovered), model.theta, config)


def train_indirect(
    model: ConstitutiveModel,
    obs: IndirectDataset | IndirectProblem,
    config: OptimizerConfig,
    pretrain_config: OptimizerConfig | None = None,
    recovered: DirectDataset | None = None,
    history_mode: str = "free",
    acceleration: str = "fd",
    n_jobs: int = 1,
) -> TrainResult:
    """
    Indirect training. When `pretrain_config` is given the parameters are
    first fitted to least-squares recovered stresses.
    """
    problem = obs if isinstance(obs, IndirectProblem) else IndirectProblem(obs, acceleration)
    pre_history = None
    if pretrain_config is not None and pretrain_config.max_evals > 0:
        if recovered is None:
            recovered = recovered_dataset(problem.obs, stress_recovery(problem.obs))
        theta0, pre_history = pretrain(model, recovered, pretrain_config)
        model = with_params(model, theta0)
        logger.info(f"Pretraining loss {pre_history.best_loss:.6e}")

    theta, history = minimize(
        lambda th: indirect_loss(model, th, problem, history_mode, acceleration,
                                 config.clip, n_jobs),
        model.theta,
        config,
    )
    seed = model.net.seed if model.net else 0
    return TrainResult(with_params(model, theta), history, seed, pre_history)


def train_with_restarts(train_fn, model: ConstitutiveModel, restarts: int = 10, seed: int = 0,
                        n_jobs: int = 1) -> tuple:
    """
    Run `train_fn(model)` from `restarts` random initialisations (seeds
    seed, seed+1, ...) and keep the one with minimal training loss.

    Returns (best TrainResult, list of all TrainResults in seed order).
    """
    if restarts < 1:
        raise TrainingError("Need at least one restart")
    starts = [reseed(model, seed + k) for k in range(restarts)]
    results = Parallel(n_jobs=n_jobs)(delayed(train_fn)(m) for m in starts)

    for k, res in enumerate(results):
        logger.info(f"Restart {k + 1}/{restarts} (seed {seed + k}): loss {res.loss:.6e}, "
                    f"{res.history.status}")
    finite = [r for r in results if np.isfinite(r.loss)]
    if not finite:
        raise TrainingError(f"All {restarts} restarts failed to produce a finite loss")
    stalled = [r for r in results if r.history.status == "line-search-failed" and len(r.history.rows) <= 1]
    if len(stalled) == restarts:
        raise TrainingError(f"Line search failed on the first iteration of all {restarts} restarts")
    best = min(finite, key=lambda r: r.loss)
    return best, results

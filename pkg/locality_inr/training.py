"""
INR Training Engine
===================
Responsible for:
  - reconstruction_loss / psnr / subsample_coords : the objective and its metric
  - INRTrainer : encode batch -> decode subsampled coordinates -> loss -> Adam,
                 periodic full-grid PSNR on the held-out split, metric log and checkpoints
  - few_shot_split : light-field support / query views (train.support_views > 0)
  - tto_latents / tto_full : per-instance test-time optimization

Determinism: batch order is a pure function of (seed, epoch); coordinate
subsampling draws from one stateful Generator that is checkpointed, so a
resumed run continues the identical loss trace.
"""

from __future__ import annotations

import copy
import logging
import math
import os
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from locality_inr import checkpoint as ckpt
from locality_inr import tensor_core as tc
from locality_inr.data_store import DataInstance
from locality_inr.errors import ConfigError, ContractError, DimensionError, TrainingDivergedError

logger = logging.getLogger(__name__)

PSNR_CAP_DB = 99.0
AUTO_SUBSAMPLE_PIXELS = 256 * 256
AUTO_SUBSAMPLE_FRACTION = 0.10
RANGE_TOL = 1e-6
METRIC_LOG_HEADER = "# step, loss, psnr, seconds\n"


@dataclass
class TrainConfig:
    batch_size: int = 16
    steps: int = 1000
    epochs: int = 0                              # > 0 overrides steps
    coord_fraction: Union[float, str] = 'auto'   # 'auto' -> 0.10 at >= 256x256, else 1.0
    seed: int = 0
    lr: float = 1e-4
    eval_interval: int = 100
    log_interval: int = 50
    holdout_fraction: float = 0.1
    eval_chunk: int = 4096
    support_views: int = 0                       # > 0: few-shot light-field training (encode K views, score the rest)

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("train.batch_size", f"must be positive, got {self.batch_size}")
        if self.steps < 0 or self.epochs < 0:
            raise ConfigError("train.steps", "steps and epochs must be non-negative")
        if self.coord_fraction != 'auto':
            try:
                fraction = float(self.coord_fraction)
            except (TypeError, ValueError):
                raise ConfigError("train.coord_fraction", f"expected a number or 'auto', got {self.coord_fraction!r}")
            if not 0 < fraction <= 1:
                raise ConfigError("train.coord_fraction", f"must lie in (0, 1], got {fraction}")
        if not self.lr > 0:
            raise ConfigError("train.lr", f"must be positive, got {self.lr}")
        if self.eval_interval < 1 or self.log_interval < 1 or self.eval_chunk < 1:
            raise ConfigError("train.eval_interval", "intervals and chunk size must be positive")
        if not 0 <= self.holdout_fraction < 1:
            raise ConfigError("train.holdout_fraction", f"must lie in [0, 1), got {self.holdout_fraction}")
        if self.support_views < 0:
            raise ConfigError("train.support_views", f"must be non-negative, got {self.support_views}")

    def resolve_fraction(self, height: int, width: int) -> float:
        if self.coord_fraction == 'auto':
            return AUTO_SUBSAMPLE_FRACTION if height * width >= AUTO_SUBSAMPLE_PIXELS else 1.0
        return float(self.coord_fraction)

    def total_steps(self, num_train: int) -> int:
        if self.epochs:
            return self.epochs * math.ceil(num_train / self.batch_size)
        return self.steps


@dataclass
class MetricRecord:
    step: int
    loss: float
    psnr: float          # NaN when no evaluation ran at this step
    seconds: float

    def to_line(self) -> str:
        db = PSNR_CAP_DB if self.psnr > PSNR_CAP_DB else self.psnr
        return f"{self.step}, {self.loss:.9g}, {db:.6f}, {self.seconds:.3f}\n"


# ─────────────────────────────────────────────────────────────────────────────
# OBJECTIVE & METRIC
# ─────────────────────────────────────────────────────────────────────────────
def reconstruction_loss(preds, targets) -> tc.Tensor:
    """
    Mean over instances of the per-instance mean squared L2 error.

    `preds` is a (B, M, C) Tensor with a matching target array, or lists of
    per-instance (M_i, C) predictions / targets when coordinate counts differ.
    """
    if isinstance(preds, tc.Tensor):
        targets = np.asarray(targets)
        if preds.data.size == 0:
            raise ContractError("reconstruction_loss: empty batch")
        if preds.shape != targets.shape:
            raise DimensionError(f"reconstruction_loss: preds {preds.shape} vs targets {targets.shape}")
        if preds.ndim < 2:
            raise DimensionError(f"reconstruction_loss: need (..., M, C) predictions, got {preds.shape}")
        err = tc.sum_(tc.square(tc.sub(preds, targets)), axis=-1)
        return tc.mean(err)

    preds, targets = list(preds), list(targets)
    if not preds:
        raise ContractError("reconstruction_loss: empty batch")
    if len(preds) != len(targets):
        raise DimensionError(f"reconstruction_loss: {len(preds)} predictions vs {len(targets)} targets")
    total = None
    for p, t in zip(preds, targets):
        term = reconstruction_loss(p, t)
        total = term if total is None else tc.add(total, term)
    return tc.scale(total, 1.0 / len(preds))


def psnr_from_mse(mse: float) -> float:
    if mse <= 0:
        return math.inf
    return -10.0 * math.log10(mse)


def mse_from_psnr(db: float) -> float:
    return 10.0 ** (-db / 10.0)


def psnr(pred: np.ndarray, target: np.ndarray) -> float:
    """PSNR in dB for signals in [0, 1]; a perfect match reports +inf (PSNR_CAP_DB in the metric log)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"psnr: shapes {pred.shape} and {target.shape} differ")
    for name, arr in (('prediction', pred), ('target', target)):
        if arr.size and (arr.min() < -RANGE_TOL or arr.max() > 1 + RANGE_TOL):
            raise ContractError(f"psnr: {name} values outside [0, 1] ({arr.min():.4f}..{arr.max():.4f})")
    return psnr_from_mse(float(np.mean((pred - target) ** 2)))


def subsample_coords(num_coords: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices of a uniform sample without replacement, size max(1, round(fraction * M))."""
    if not 0 < fraction <= 1:
        raise ContractError(f"subsample fraction must lie in (0, 1], got {fraction}")
    if fraction == 1:
        return np.arange(num_coords)
    size = max(1, int(math.floor(fraction * num_coords + 0.5)))
    return np.sort(rng.choice(num_coords, size=size, replace=False))


def split_holdout(instances: Sequence[DataInstance], fraction: float = 0.1
                  ) -> Tuple[List[DataInstance], List[DataInstance]]:
    """Last `fraction` of instances by index; an empty holdout means evaluate on the train split."""
    instances = list(instances)
    holdout = int(len(instances) * fraction)
    if holdout >= len(instances):
        holdout = len(instances) - 1
    if holdout <= 0:
        return instances, []
    return instances[:-holdout], instances[-holdout:]


def few_shot_split(instance: DataInstance, support_count: int,
                   rng: Optional[np.random.Generator] = None) -> DataInstance:
    """
    Support / query partition of a light field's views: `support_count` views
    drawn from `rng`, or evenly spaced around the view list without one.
    The remaining views become the query set.
    """
    if instance.kind != 'lightfield':
        raise ConfigError("train.support_views", f"instance {instance.instance_id} is not a light field")
    views = instance.num_views
    if not 0 < support_count < views:
        raise ConfigError(
            "train.support_views",
            f"{support_count} support views leave no query view among the {views} views of {instance.instance_id}",
        )
    if rng is None:
        support = sorted({int(v) for v in np.linspace(0, views, support_count, endpoint=False)})
    else:
        support = sorted(int(v) for v in rng.choice(views, size=support_count, replace=False))
    query = [v for v in range(views) if v not in support]
    return instance.with_split(support, query)


def scoring_instances(instances: Sequence[DataInstance], support_count: int = 0) -> List[DataInstance]:
    """Instances as evaluation sees them: fixed few-shot splits when `support_count` > 0."""
    if not support_count:
        return list(instances)
    return [few_shot_split(inst, support_count) for inst in instances]


def evaluate_psnr(model, instances: Sequence[DataInstance], chunk_size: int = 4096,
                  latents: Optional[Sequence[np.ndarray]] = None) -> List[float]:
    """Full-grid PSNR per instance with predictions clipped to [0, 1]."""
    out = []
    for i, inst in enumerate(instances):
        z = latents[i] if latents is not None else None
        pred = model.predict(inst, latents=z, chunk_size=chunk_size)
        out.append(psnr(np.clip(pred, 0.0, 1.0), inst.targets()))
    return out


def load_metric_log(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment='#', header=None, names=['step', 'loss', 'psnr', 'seconds'],
                       skipinitialspace=True)


# ─────────────────────────────────────────────────────────────────────────────
# TRAINER
# ─────────────────────────────────────────────────────────────────────────────
class INRTrainer:
    def __init__(self, model, instances: Sequence[DataInstance], config: TrainConfig,
                 output_dir: Optional[str] = None, run_config: Optional[dict] = None):
        config.validate()
        if not instances:
            raise ContractError("trainer needs at least one instance")
        self.model = model
        self.config = config
        self.output_dir = output_dir
        self.run_config = run_config
        self.train_set, self.eval_set = split_holdout(instances, config.holdout_fraction)
        self.coord_range = model.decoder_config.coord_range

        self.params = model.named_parameters()
        self.optimizer = tc.Adam(self.params, lr=config.lr)
        self.rng = np.random.default_rng(config.seed)
        self.step = 0
        self.loss_trace: List[float] = []
        self.records: List[MetricRecord] = []
        self.last_eval_psnr = float('nan')
        self._started = time.perf_counter()

        first = self.train_set[0]
        self.fraction = config.resolve_fraction(first.height, first.width)
        self.support_count = config.support_views
        # Fixed splits for scoring; raises before step 0 when a scene cannot be split
        self._eval_instances = scoring_instances(self.eval_set or self.train_set, self.support_count)
        scoring_instances(self.train_set, self.support_count)
        if not self.support_count:
            # Per-instance arrays are fixed for the whole run
            self._patches = [model.encoder_input(inst) for inst in self.train_set]
            self._coords = [inst.coordinates(self.coord_range) for inst in self.train_set]
            self._targets = [inst.targets() for inst in self.train_set]
        logger.info(
            "trainer: %d train / %d eval instances, %d parameters, coordinate fraction %.2f, support views %s",
            len(self.train_set), len(self.eval_set), model.num_parameters(), self.fraction,
            self.support_count or 'all',
        )

    @classmethod
    def from_checkpoint(cls, path: str, instances: Sequence[DataInstance],
                        config: TrainConfig, output_dir: Optional[str] = None) -> 'INRTrainer':
        """Rebuild a trainer mid-run: parameters, Adam moments, RNG state and step."""
        model, data = ckpt.load_model(path)
        trainer = cls(model, instances, config, output_dir=output_dir, run_config=data.run_config)
        if data.optimizer_state is not None:
            trainer.optimizer.load_state_dict(data.optimizer_state)
        trainer.rng = ckpt.restore_rng(data.rng_state, config.seed)
        trainer.step = data.step
        return trainer

    @property
    def steps_per_epoch(self) -> int:
        return math.ceil(len(self.train_set) / self.config.batch_size)

    @property
    def checkpoint_path(self) -> Optional[str]:
        return os.path.join(self.output_dir, 'checkpoint.linr') if self.output_dir else None

    @property
    def metric_log_path(self) -> Optional[str]:
        return os.path.join(self.output_dir, 'metrics.log') if self.output_dir else None

    def batch_indices(self, step: int) -> np.ndarray:
        epoch, position = divmod(step, self.steps_per_epoch)
        order = np.random.default_rng([self.config.seed, epoch]).permutation(len(self.train_set))
        size = self.config.batch_size
        return order[position * size:(position + 1) * size]

    def batch_arrays(self, batch: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
        """Encoder input, decoder coordinates and targets for a batch; few-shot runs draw a fresh split."""
        if not self.support_count:
            return (np.stack([self._patches[i] for i in batch]),
                    [self._coords[i] for i in batch], [self._targets[i] for i in batch])
        views = [few_shot_split(self.train_set[i], self.support_count, self.rng) for i in batch]
        return (np.stack([self.model.encoder_input(v) for v in views]),
                [v.coordinates(self.coord_range) for v in views], [v.targets() for v in views])

    def train_step(self) -> float:
        patches, all_coords, all_targets = self.batch_arrays(self.batch_indices(self.step))
        latents = self.model.encode_patches(patches)

        coords, targets = [], []
        for c, t in zip(all_coords, all_targets):
            idx = subsample_coords(len(c), self.fraction, self.rng)
            coords.append(c[idx])
            targets.append(t[idx])
        if len({c.shape for c in coords}) == 1:
            preds = self.model.decode(np.stack(coords), latents)
            loss = reconstruction_loss(preds, np.stack(targets))
        else:
            preds = [self.model.decode(c, latents[j:j + 1]) for j, c in enumerate(coords)]
            loss = reconstruction_loss(preds, [t[None] for t in targets])

        self.optimizer.zero_grad()
        tc.backward(loss)
        value = loss.item()
        if not math.isfinite(value):
            norms = tc.grad_norms(self.params)
            logger.error("non-finite loss at step %d; aborting", self.step)
            raise TrainingDivergedError(self.step, self.config.lr, norms)
        self.optimizer.step()
        self.step += 1
        self.loss_trace.append(value)
        return value

    def evaluate(self) -> float:
        return float(np.mean(evaluate_psnr(self.model, self._eval_instances, self.config.eval_chunk)))

    def save(self) -> None:
        if self.checkpoint_path:
            ckpt.save_checkpoint(self.checkpoint_path, self.model, self.optimizer, self.rng,
                                 self.step, self.run_config)

    def _record(self, loss: float, evaluated: bool) -> MetricRecord:
        record = MetricRecord(self.step, loss, self.last_eval_psnr if evaluated else float('nan'),
                              time.perf_counter() - self._started)
        self.records.append(record)
        if self.metric_log_path:
            os.makedirs(self.output_dir, exist_ok=True)
            fresh = not os.path.exists(self.metric_log_path)
            with open(self.metric_log_path, 'a') as f:
                if fresh:
                    f.write(METRIC_LOG_HEADER)
                f.write(record.to_line())
        return record

    def fit(self, steps: Optional[int] = None) -> List[MetricRecord]:
        """Run until `steps` total steps (default: the configured budget), evaluating and checkpointing."""
        total = self.config.total_steps(len(self.train_set)) if steps is None else steps
        cfg = self.config
        loss = float('nan')
        while self.step < total:
            loss = self.train_step()
            evaluated = self.step % cfg.eval_interval == 0 or self.step == total
            if evaluated:
                self.last_eval_psnr = self.evaluate()
                self.save()
            if evaluated or self.step % cfg.log_interval == 0:
                self._record(loss, evaluated)
                logger.info("step %6d | loss %.6f | eval psnr %.2f dB", self.step, loss, self.last_eval_psnr)
        if self.step == 0 or not self.records or self.records[-1].step != self.step:
            # Nothing ran (0 steps or resumed at the end): checkpoint the current state.
            self.last_eval_psnr = self.evaluate()
            self.save()
            self._record(loss, True)
        return self.records


# ─────────────────────────────────────────────────────────────────────────────
# TEST-TIME OPTIMIZATION
# ─────────────────────────────────────────────────────────────────────────────
@dataclass
class TTOResult:
    latents: np.ndarray                      # (1, R, d_latent) refined tokens
    loss_trace: List[float] = field(default_factory=list)
    psnr_trace: List[float] = field(default_factory=list)
    model: Optional[object] = None           # fine-tuned copy (tto_full only)


def _optimize_instance(model, instance: DataInstance, latents: tc.Tensor, params: dict,
                       steps: int, lr: float) -> TTOResult:
    coords = instance.coordinates(model.decoder_config.coord_range)
    targets = instance.targets()
    optimizer = tc.Adam(params, lr=lr)
    result = TTOResult(latents=latents.data)
    for k in range(steps + 1):
        preds = model.decode(coords, latents)
        loss = reconstruction_loss(preds, targets[None])
        result.loss_trace.append(loss.item())
        result.psnr_trace.append(psnr(np.clip(preds.data[0], 0.0, 1.0), targets))
        if k == steps:
            break
        optimizer.zero_grad()
        tc.backward(loss)
        if not math.isfinite(loss.item()):
            raise TrainingDivergedError(k, lr, tc.grad_norms(params))
        optimizer.step()
    result.latents = latents.data.copy()
    return result


def tto_latents(model, instance: DataInstance, steps: int, lr: float = 1e-4) -> TTOResult:
    """Refine only the instance's latent tokens; encoder and decoder stay untouched."""
    latents = tc.Tensor(model.latents_for(instance), requires_grad=True, name='latents')
    with model.frozen():
        result = _optimize_instance(model, instance, latents, {'latents': latents}, steps, lr)
    logger.info("tto_latents: %d steps, psnr %.2f -> %.2f dB", steps, result.psnr_trace[0], result.psnr_trace[-1])
    return result


def tto_full(model, instance: DataInstance, steps: int, lr: float = 1e-4) -> TTOResult:
    """Refine the latents and every decoder parameter of a private copy of the model."""
    tuned = copy.deepcopy(model)
    latents = tc.Tensor(tuned.latents_for(instance), requires_grad=True, name='latents')
    params = {'latents': latents}
    params.update(tuned.decoder.named_parameters('decoder.'))
    result = _optimize_instance(tuned, instance, latents, params, steps, lr)
    result.model = tuned
    logger.info("tto_full: %d steps, psnr %.2f -> %.2f dB", steps, result.psnr_trace[0], result.psnr_trace[-1])
    return result

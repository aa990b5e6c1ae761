import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from tqdm import tqdm

from siamprint.autodiff.graph import backward
from siamprint.autodiff.tensor import Tensor, no_grad
from siamprint.constants import (
    CHECKPOINT_FILE,
    HISTORY_FILE,
    LAST_CHECKPOINT_FILE,
    RESOLVED_CONFIG_FILE,
)
from siamprint.core.config import dump_run_config, settings
from siamprint.core.exceptions import ContractViolation, DivergenceError
from siamprint.models.semi_siamese import (
    SemiSiameseModel,
    build_semi_siamese,
    transfer_weights,
)
from siamprint.models.unet import UNet, build_unet
from siamprint.schemas.config import FocalConfig, TrainConfig
from siamprint.schemas.dataset import DatasetManifest, SampleRecord
from siamprint.schemas.history import EpochRecord, TrainHistory
from siamprint.schemas.run import RunConfig
from siamprint.services.dataset import (
    Batch,
    alpha_from_frequencies,
    class_frequencies,
    derive_seed,
    iterate_batches,
    select_records,
)
from siamprint.services.evaluation import evaluate_records
from siamprint.services.losses import focal_loss, mse_loss
from siamprint.services.optimizer import Adam
from siamprint.storage.checkpoint import Network, checkpoint_store
from siamprint.storage.history import write_history_csv

logger = logging.getLogger(__name__)

ARMS = ('semi', 'siamese', 'unet')

PathLike = Union[str, Path]
LossFn = Callable[[Network, Batch], Tensor]
ValidateFn = Callable[[Network], tuple[Optional[float], Optional[float]]]


@dataclass
class TrainResult:
    model: Network
    history: TrainHistory
    checkpoint_path: Path
    config: RunConfig


def semi_siamese_loss(focal: FocalConfig) -> LossFn:
    def loss_fn(model: SemiSiameseModel, batch: Batch) -> Tensor:
        output = model.forward(
            Tensor(batch.i_ref), Tensor(batch.i_cam), 'train',
        )
        return focal_loss(output.probs, batch.mask, focal)
    return loss_fn


def reconstruction_loss(model: UNet, batch: Batch) -> Tensor:
    """Camera image in, clean schematic render out."""
    return mse_loss(model.forward(Tensor(batch.i_cam), 'train'), batch.i_ref)


class TrainerService:

    def check_not_empty(self, records: list[SampleRecord], what: str) -> None:
        if not records:
            raise ContractViolation(f'No {what} samples to train on.')

    def check_finite(self, value: float, epoch: int) -> None:
        if not math.isfinite(value):
            raise DivergenceError(
                f'Loss became {value} in epoch {epoch}; aborting.'
            )

    def resolve_focal(
        self,
        config: RunConfig,
        manifest: DatasetManifest,
        root: PathLike,
    ) -> RunConfig:
        """Fill in inverse-frequency alpha when the config leaves it unset."""
        if config.focal.alpha is not None:
            return config
        alpha = alpha_from_frequencies(class_frequencies(manifest, root))
        logger.info('Focal alpha from training class frequencies: %s', alpha)
        focal = FocalConfig(gamma=config.focal.gamma, alpha=alpha)
        return config.copy(update={'focal': focal})

    def fit(
        self,
        model: Network,
        loss_fn: LossFn,
        validate: ValidateFn,
        manifest: DatasetManifest,
        root: PathLike,
        records: list[SampleRecord],
        train: TrainConfig,
        out_dir: Path,
        select_by: str = 'macro_f1',
    ) -> tuple[TrainHistory, Path]:
        """Adam over shuffled batches with per-epoch validation.

        The checkpoint with the best validation score (``macro_f1`` higher
        or ``loss`` lower) is kept at ``CHECKPOINT_FILE``; without
        validation the latest epoch wins.
        """
        optimizer = Adam(model.parameters(), train.learning_rate, train.adam)
        history = TrainHistory()
        best_path = out_dir / CHECKPOINT_FILE
        best_score: Optional[float] = None
        for epoch in range(1, train.epochs + 1):
            started = time.perf_counter()
            total, seen = 0.0, 0
            batches = iterate_batches(
                manifest, root, records[0].split, train.batch_size,
                seed=derive_seed(train.seed, epoch), records=records,
            )
            for batch in tqdm(
                batches,
                desc=f'epoch {epoch}/{train.epochs}',
                leave=False,
                disable=not settings.progress_bars,
            ):
                optimizer.zero_grad()
                loss = loss_fn(model, batch)
                value = loss.item()
                self.check_finite(value, epoch)
                backward(loss)
                optimizer.step()
                total += value * len(batch)
                seen += len(batch)
            val_loss, val_f1 = None, None
            if epoch % train.eval_every == 0 or epoch == train.epochs:
                val_loss, val_f1 = validate(model)
            record = EpochRecord(
                epoch=epoch,
                train_loss=total / seen,
                val_loss=val_loss,
                val_macro_f1=val_f1,
                seconds=time.perf_counter() - started,
            )
            history.append(record)
            write_history_csv(history, out_dir / HISTORY_FILE)
            logger.info(
                'Epoch %d: train loss %.6f, val loss %s, val macro F1 %s.',
                epoch, record.train_loss, val_loss, val_f1,
            )
            score = val_f1 if select_by == 'macro_f1' else (
                None if val_loss is None else -val_loss
            )
            improved = score is not None and (
                best_score is None or score > best_score
            )
            if improved:
                best_score = score
                checkpoint_store.save(
                    model, best_path, train, extra={'epoch': epoch},
                )
            if epoch % train.checkpoint_every == 0:
                checkpoint_store.save(
                    model, out_dir / LAST_CHECKPOINT_FILE, train,
                    extra={'epoch': epoch},
                )
        if best_score is None:
            checkpoint_store.save(
                model, best_path, train, extra={'epoch': train.epochs},
            )
        return history, best_path

    def _prepare(self, config: RunConfig, out_dir: PathLike) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        dump_run_config(config, out_dir / RESOLVED_CONFIG_FILE)
        return out_dir

    def _limit(self, records, train: TrainConfig):
        return records[:train.max_samples] if train.max_samples else records

    def pretrain_unet(
        self,
        manifest: DatasetManifest,
        root: PathLike,
        config: RunConfig,
        out_dir: PathLike,
        validate_with_masks: bool = False,
    ) -> TrainResult:
        """Train a 3-channel U-Net to map camera images to schematic renders.

        Only non-defective samples are used, so the target render is the
        schematic actually printed. ``validate_with_masks`` selects the
        checkpoint by macro F1 of the thresholded comparison on the full
        validation split instead of by reconstruction loss.
        """
        out_dir = self._prepare(config, out_dir)
        train = config.pretrain
        records = self._limit(
            select_records(manifest, 'train', only_clean=True), train,
        )
        self.check_not_empty(records, 'non-defective training')
        clean_val = select_records(manifest, 'val', only_clean=True)
        all_val = select_records(manifest, 'val')
        unet_config = config.model.unet.copy(update={'output_channels': 3})
        model = build_unet(unet_config, seed=train.seed)

        def validate(unet: UNet):
            val_f1 = None
            if validate_with_masks and all_val:
                _, metrics = evaluate_records(
                    unet, manifest, root, all_val, train.batch_size,
                )
                val_f1 = metrics.macro_f1
            if not clean_val:
                return None, val_f1
            return self.reconstruction_error(
                unet, manifest, root, clean_val, train.batch_size,
            ), val_f1

        history, path = self.fit(
            model, reconstruction_loss, validate, manifest, root, records,
            train, out_dir,
            select_by='macro_f1' if validate_with_masks else 'loss',
        )
        logger.info('U-Net checkpoint written to %s.', path)
        return TrainResult(
            model=checkpoint_store.load(path).model,
            history=history,
            checkpoint_path=path,
            config=config,
        )

    def reconstruction_error(
        self,
        model: UNet,
        manifest: DatasetManifest,
        root: PathLike,
        records: list[SampleRecord],
        batch_size: int,
    ) -> float:
        total = 0.0
        for batch in iterate_batches(
            manifest, root, records[0].split, batch_size, records=records,
        ):
            with no_grad():
                output = model.forward(Tensor(batch.i_cam), 'eval')
                total += mse_loss(output, batch.i_ref).item() * len(batch)
        return total / len(records)

    def train_unet(
        self,
        manifest: DatasetManifest,
        root: PathLike,
        config: RunConfig,
        out_dir: PathLike,
    ) -> TrainResult:
        """U-Net arm: reconstruction training, selected by comparison F1."""
        config = config.copy(update={'pretrain': config.train})
        return self.pretrain_unet(
            manifest, root, config, out_dir, validate_with_masks=True,
        )

    def train_semi_siamese(
        self,
        manifest: DatasetManifest,
        root: PathLike,
        config: RunConfig,
        out_dir: PathLike,
        init: Optional[PathLike] = None,
        tie_encoders: bool = False,
    ) -> TrainResult:
        """Focal-loss training of the change detector.

        With ``init`` the branches start from a pre-trained U-Net
        checkpoint; ``tie_encoders`` trains the fully shared variant.
        """
        config = self.resolve_focal(config, manifest, root)
        out_dir = self._prepare(config, out_dir)
        train = config.train
        records = self._limit(select_records(manifest, 'train'), train)
        self.check_not_empty(records, 'training')
        val_records = select_records(manifest, 'val')
        model = build_semi_siamese(
            config.model, seed=train.seed, tie_encoders=tie_encoders,
        )
        if init is not None:
            pretrained = checkpoint_store.load(init)
            if not isinstance(pretrained.model, UNet):
                raise ContractViolation(
                    f'Init checkpoint {init} holds a {pretrained.kind} model, '
                    'not a U-Net.'
                )
            transfer_weights(
                pretrained.model, model,
                head_seed=derive_seed(train.seed, 1),
            )

        def validate(network: SemiSiameseModel):
            if not val_records:
                return None, None
            val_loss, metrics = evaluate_records(
                network, manifest, root, val_records, train.batch_size,
                focal=config.focal,
            )
            return val_loss, metrics.macro_f1

        history, path = self.fit(
            model, semi_siamese_loss(config.focal), validate, manifest, root,
            records, train, out_dir,
        )
        logger.info('%s checkpoint written to %s.', model.kind, path)
        return TrainResult(
            model=checkpoint_store.load(path).model,
            history=history,
            checkpoint_path=path,
            config=config,
        )

    def train_siamese_baseline(
        self,
        manifest: DatasetManifest,
        root: PathLike,
        config: RunConfig,
        out_dir: PathLike,
        init: Optional[PathLike] = None,
    ) -> TrainResult:
        return self.train_semi_siamese(
            manifest, root, config, out_dir, init=init, tie_encoders=True,
        )

    def train_arm(
        self,
        arm: str,
        manifest: DatasetManifest,
        root: PathLike,
        config: RunConfig,
        out_dir: PathLike,
        init: Optional[PathLike] = None,
    ) -> TrainResult:
        if arm not in ARMS:
            raise ContractViolation(
                f'Unknown arm {arm!r}; expected one of {", ".join(ARMS)}.'
            )
        if arm == 'unet':
            return self.train_unet(manifest, root, config, out_dir)
        return self.train_semi_siamese(
            manifest, root, config, out_dir, init=init,
            tie_encoders=arm == 'siamese',
        )


trainer_service = TrainerService()


def model_state_equal(first: Network, second: Network) -> bool:
    """Bitwise equality of every parameter and buffer."""
    first_groups, second_groups = first.groups(), second.groups()
    if [name for name, _ in first_groups] != [n for n, _ in second_groups]:
        return False
    for (_, a), (_, b) in zip(first_groups, second_groups):
        left, right = a.state_arrays(), b.state_arrays()
        if left.keys() != right.keys():
            return False
        if not all(np.array_equal(left[key], right[key]) for key in left):
            return False
    return True

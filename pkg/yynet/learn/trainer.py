import math
import os
import time

import structlog
from tqdm import tqdm

from yynet.autograd import functional as F
from yynet.autograd.grad_tape import GradTape
from yynet.data.batches import EpochBatchLoader
from yynet.data.normalization import channel_statistics
from yynet.learn.checkpoint import TrainingCheckpoint
from yynet.learn.evaluation import evaluate
from yynet.learn.metrics import MetricsRow, MetricsWriter
from yynet.model.yynet import build
from yynet.optim.adamw import OptimizerState, adamw_step, couple_weight_decay
from yynet.optim.clipping import clip_gradients
from yynet.optim.ema import ema_update
from yynet.optim.schedule import coupled_weight_decay, onecycle_lr
from yynet.util.errors import TrainingDivergedError
from yynet.util.every_k_times import EveryKTimes
from yynet.util.timer import Timer
from yynet.util.util import set_num_threads

log = structlog.get_logger()

METRICS_FILE = "metrics.csv"
STEPS_FILE = "steps.csv"
FINAL_CHECKPOINT = "final.ckpt"
CHECKPOINTS_DIRECTORY = "checkpoints"


def default_after_epoch(learner):
    row = learner.last_row
    extra = {}
    if learner.previous_epoch_average_loss is not None:
        extra["decrease"] = round(learner.previous_epoch_average_loss - learner.epoch_average_loss, 6)
    log.info(
        "epoch finished",
        epoch=row.epoch,
        seconds=round(time.time() - learner.time_start),
        train_loss=round(row.train_loss, 4),
        test_accuracy=None if row.test_accuracy is None else round(row.test_accuracy, 4),
        lr=row.lr,
        wd=row.wd,
        ema_active=row.ema_active,
        **extra,
    )


def epoch_checkpoint_path(out_dir, epoch):
    return os.path.join(out_dir, CHECKPOINTS_DIRECTORY, f"epoch-{epoch:03d}.ckpt")


class YYNetLearner:
    """
    Trains a YYNet with AdamW under a one-cycle learning rate, clipping gradients,
    setting the weight decay of each epoch from the learning rate the previous one ended with,
    and averaging parameters once a quarter of training is done.

    Attributes available to all methods:
    model
    train_loader (an EpochBatchLoader)
    test_loader (an iterable of LabeledBatches)
    config (a TrainConfig)
    out_dir (None keeps metrics in memory and writes no checkpoints)
    stats (normalization statistics stored in checkpoints)

    state (OptimizerState)
    named_parameters
    total_steps
    start_epoch
    time_start
    epoch
    epoch_average_loss
    previous_epoch_average_loss
    last_row
    metrics
    """

    def __init__(
        self,
        model,
        train_loader,
        test_loader,
        config,
        out_dir=None,
        stats=None,
        after_epoch=default_after_epoch,
        show_progress=True,
        state=None,
        start_epoch=0,
    ):
        config.validate()
        self.model = model
        self.train_loader = train_loader
        self.test_loader = test_loader
        self.config = config
        self.out_dir = out_dir
        self.stats = stats
        self.after_epoch = after_epoch
        self.show_progress = show_progress

        self.named_parameters = list(model.named_parameters())
        self.parameters = [p for _, p in self.named_parameters]
        self.total_steps = config.epochs * len(train_loader)
        self.start_epoch = start_epoch
        if state is None:
            state = OptimizerState(self.named_parameters)
            state.current_wd = coupled_weight_decay(config.initial_lr, config)
        self.state = state

        self.time_start = None
        self.epoch = None
        self.epoch_average_loss = None
        self.previous_epoch_average_loss = None
        self.last_row = None
        self.metrics = None
        self.step_metrics = None

    @staticmethod
    def from_checkpoint(checkpoint, train_loader, test_loader, out_dir=None, **kwargs):
        """A learner that continues the run saved in `checkpoint` at the epoch after the last completed one."""
        model = checkpoint.restore_model()
        state = checkpoint.restore_optimizer_state(model)
        log.info("resuming", epoch=checkpoint.epoch, step=checkpoint.step, ema_active=checkpoint.ema_active)
        return YYNetLearner(
            model,
            train_loader,
            test_loader,
            checkpoint.train_config,
            out_dir=out_dir,
            stats=checkpoint.stats,
            state=state,
            start_epoch=checkpoint.epoch,
            **kwargs,
        )

    def loss_function(self, batch):
        return F.softmax_cross_entropy(self.model(batch.images), batch.labels)

    def training_step(self, batch):
        config = self.config
        lr = onecycle_lr(self.state.step, self.total_steps, config)
        self.model.zero_grad()
        with GradTape() as tape:
            loss = self.loss_function(batch)
            tape.backward(loss)
        loss_value = loss.item()
        if not math.isfinite(loss_value):
            raise TrainingDivergedError(self.state.step + 1, what="loss")
        clip_gradients(self.parameters, config.clip_norm, config.clip_mode)
        adamw_step(self.named_parameters, self.state, lr, self.state.current_wd, config.betas, config.eps)
        if config.ema_cadence == "step":
            self.update_ema()
        return loss_value

    def update_ema(self):
        ema_update(
            self.state,
            self.named_parameters,
            self.state.step - 1,
            self.total_steps,
            self.config.ema_avg_coeff,
            self.config.ema_cur_coeff,
            self.config.ema_start_fraction,
        )

    def evaluate(self):
        accuracy, _ = evaluate(self.model, self.state, self.test_loader, use_ema=self.config.ema_eval)
        return accuracy

    def save_checkpoint(self, completed_epochs, final=False):
        if self.out_dir is None:
            return None
        if final:
            path = os.path.join(self.out_dir, FINAL_CHECKPOINT)
        else:
            path = epoch_checkpoint_path(self.out_dir, completed_epochs)
        checkpoint = TrainingCheckpoint.capture(self.model, self.state, self.config, completed_epochs, self.stats)
        checkpoint.save(path)
        return checkpoint

    def metrics_path(self, file_name):
        return None if self.out_dir is None else os.path.join(self.out_dir, file_name)

    def learn(self):
        """Runs the remaining epochs and returns the final test accuracy."""
        config = self.config
        set_num_threads(config.num_threads)
        self.time_start = time.time()
        resuming = self.start_epoch > 0
        keep = self.start_epoch if resuming else None
        self.metrics = MetricsWriter(self.metrics_path(METRICS_FILE), keep_through_epoch=keep)
        if config.log_every_step:
            self.step_metrics = MetricsWriter(self.metrics_path(STEPS_FILE), keep_through_epoch=keep)

        save_every_k_epochs = EveryKTimes(self.save_checkpoint, config.checkpoint_every)
        if config.checkpoint_every > 0:
            save_every_k_epochs.counter = self.start_epoch % config.checkpoint_every

        log.info(
            "training",
            epochs=config.epochs,
            start_epoch=self.start_epoch,
            steps_per_epoch=len(self.train_loader),
            total_steps=self.total_steps,
            parameters=sum(p.numel() for p in self.parameters),
        )

        if config.epochs == 0:
            accuracy = self.evaluate()
            self.last_row = self.metrics.write(
                MetricsRow(0, 0, math.nan, 0.0, self.state.current_wd, accuracy, self.state.ema_active, 0.0)
            )
            log.info("untrained model evaluated", test_accuracy=accuracy)

        self.model.train()
        for epoch in range(self.start_epoch, config.epochs):
            self.epoch = epoch
            epoch_wd = self.state.current_wd
            total_epoch_loss = 0.0
            total_number_of_data_points = 0
            for batch in tqdm(
                self.train_loader.epoch(epoch),
                total=len(self.train_loader),
                desc=f"Epoch {epoch + 1}/{config.epochs}",
                leave=False,
                disable=not self.show_progress,
            ):
                loss = self.training_step(batch)
                total_epoch_loss += loss * len(batch)
                total_number_of_data_points += len(batch)
                if self.step_metrics is not None:
                    self.step_metrics.write(
                        MetricsRow(
                            epoch + 1,
                            self.state.step,
                            loss,
                            self.state.current_lr,
                            epoch_wd,
                            None,
                            self.state.ema_active,
                            time.time() - self.time_start,
                        )
                    )

            if config.ema_cadence == "epoch":
                self.update_ema()
            self.epoch_average_loss = total_epoch_loss / total_number_of_data_points
            couple_weight_decay(self.state, self.state.current_lr, config.wd_lr_multiplier)

            accuracy = self.evaluate()
            self.last_row = self.metrics.write(
                MetricsRow(
                    epoch + 1,
                    self.state.step,
                    self.epoch_average_loss,
                    self.state.current_lr,
                    epoch_wd,
                    accuracy,
                    self.state.ema_active,
                    time.time() - self.time_start,
                )
            )
            self.after_epoch(self)
            save_every_k_epochs(epoch + 1)
            self.previous_epoch_average_loss = self.epoch_average_loss

        self.save_checkpoint(max(self.start_epoch, config.epochs), final=True)
        return self.last_row.test_accuracy if self.last_row is not None else self.evaluate()


def make_loaders(train_split, test_split, config, stats, test_batch_size=256):
    """Shuffled, optionally augmented training batches and fixed-order test batches."""
    train_loader = EpochBatchLoader(
        train_split,
        config.batch_size,
        seed=config.seed,
        stats=stats,
        augment_images=config.augment,
        prefetch_depth=config.prefetch_depth,
    )
    test_loader = EpochBatchLoader(test_split, test_batch_size, shuffle=False, stats=stats)
    return train_loader, test_loader


def run_training(model_config, train_config, train_split, test_split, out_dir=None, stats=None, **kwargs):
    """
    Builds a model from `train_config.seed`, trains it on the (optionally subset) splits,
    and returns the finished learner.
    """
    train_split = train_split.subset(train_config.train_subset, seed=train_config.seed)
    test_split = test_split.subset(train_config.test_subset, seed=train_config.seed)
    if stats is None:
        stats = channel_statistics(train_split)
    model = build(model_config, train_config.seed)
    train_loader, test_loader = make_loaders(train_split, test_split, train_config, stats)
    learner = YYNetLearner(model, train_loader, test_loader, train_config, out_dir=out_dir, stats=stats, **kwargs)
    with Timer("training", model_config.fusion_label):
        learner.learn()
    return learner

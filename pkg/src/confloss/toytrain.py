"""Desk-scale training demonstration.

A synthetic scene moves a square over a background; the pixels the
square newly covers have no correspondence in the second frame, and their
training labels are corrupted with zero-mean noise to mimic unreliable
supervision where matching is ill-posed. A low-capacity block model is fit
by plain gradient descent under each loss mode, and the result is scored
against the clean ground truth split by the analytic occlusion mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .confidence import confidence_db_flow, confidence_oa
from .fields import BinaryMask, Grid1, Grid2
from .losses import WeightSpec, build_weights, weighted_l1
from .metrics import MetricReport, full_report


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, what: str):
        super().__init__(f"training diverged at step {step}: {what}")
        self.step = step


@dataclass(frozen=True)
class SceneSpec:
    """Geometry and supervision noise of one synthetic scene."""

    height: int = 64
    width: int = 64
    square_size: int = 32
    square_motion: tuple[float, float] = (8.0, 0.0)
    background_motion: tuple[float, float] = (0.0, 0.0)
    occluded_label_noise_sigma: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.occluded_label_noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        if self.square_size < 1 or self.square_size > min(self.height, self.width):
            raise ValueError(f"square size {self.square_size} does not fit a "
                             f"{self.height}x{self.width} frame")
        x0, y0 = self.square_origin
        mx, my = self.square_motion
        for lo, hi, label in (
            (x0, x0 + self.square_size, "x"),
            (y0, y0 + self.square_size, "y"),
            (x0 + mx, x0 + mx + self.square_size, "moved x"),
            (y0 + my, y0 + my + self.square_size, "moved y"),
        ):
            bound = self.width if "x" in label else self.height
            if lo < 0 or hi > bound:
                raise ValueError(f"square leaves the frame along {label} "
                                 f"({lo}..{hi} vs 0..{bound})")

    @property
    def square_origin(self) -> tuple[int, int]:
        """Frame-1 top-left corner, centering the square's travel in frame."""
        mx, my = self.square_motion
        x0 = int(round((self.width - self.square_size - mx) / 2.0))
        y0 = int(round((self.height - self.square_size - my) / 2.0))
        return x0, y0


@dataclass(frozen=True)
class Scene:
    """Analytic fields of one synthetic scene.

    occlusion marks frame-1 background pixels covered by the square in
    frame 2; train_labels carry noise on exactly those pixels. The
    *_backward fields are the symmetric construction for the second frame,
    used to supervise the backward predictor.
    """

    spec: SceneSpec
    gt_forward: Grid2
    gt_backward: Grid2
    occlusion: BinaryMask
    train_labels: Grid2
    valid: BinaryMask
    train_labels_backward: Grid2
    occlusion_backward: BinaryMask


def _inside(xs, ys, x_lo, y_lo, size):
    return (xs >= x_lo) & (xs < x_lo + size) & (ys >= y_lo) & (ys < y_lo + size)


def synth_scene(spec: SceneSpec) -> Scene:
    """Generate the analytic flows, occlusion masks, and noisy labels."""
    h, w, s = spec.height, spec.width, spec.square_size
    mx, my = spec.square_motion
    bx, by = spec.background_motion
    x0, y0 = spec.square_origin
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    in_sq1 = _inside(xs, ys, x0, y0, s)
    in_sq2 = _inside(xs, ys, x0 + mx, y0 + my, s)

    fw = np.empty((h, w, 2))
    fw[..., 0] = np.where(in_sq1, mx, bx)
    fw[..., 1] = np.where(in_sq1, my, by)
    bw = np.empty((h, w, 2))
    bw[..., 0] = np.where(in_sq2, -mx, -bx)
    bw[..., 1] = np.where(in_sq2, -my, -by)

    # Covered this frame's background pixel -> no correspondence forward.
    occ_fw = ~in_sq1 & _inside(xs + bx, ys + by, x0 + mx, y0 + my, s)
    # Revealed in frame 2: its backward target sits under the frame-1 square.
    occ_bw = ~in_sq2 & _inside(xs - bx, ys - by, x0, y0, s)

    rng = np.random.default_rng(spec.seed)
    sigma = spec.occluded_label_noise_sigma
    labels_fw = fw + np.where(occ_fw[..., None], rng.normal(0.0, sigma, (h, w, 2))
                              if sigma > 0 else 0.0, 0.0)
    labels_bw = bw + np.where(occ_bw[..., None], rng.normal(0.0, sigma, (h, w, 2))
                              if sigma > 0 else 0.0, 0.0)

    return Scene(
        spec=spec,
        gt_forward=Grid2(fw),
        gt_backward=Grid2(bw),
        occlusion=BinaryMask(occ_fw),
        train_labels=Grid2(labels_fw),
        valid=BinaryMask.full(h, w, True),
        train_labels_backward=Grid2(labels_bw),
        occlusion_backward=BinaryMask(occ_bw),
    )


class BlockFlowModel:
    """Coarse grid of 2-vectors, bilinearly upsampled to full resolution.

    One parameter pair per block keeps capacity strictly below one parameter
    per pixel, which forces the trade-offs the weighted losses manage.
    """

    def __init__(self, height: int, width: int, block_size: int = 8,
                 params: np.ndarray | None = None):
        if block_size < 2:
            raise ValueError("block_size must be >= 2 (capacity below one parameter per pixel)")
        if height % block_size or width % block_size:
            raise ValueError(f"{height}x{width} not divisible by block size {block_size}")
        self.height = height
        self.width = width
        self.block_size = block_size
        self.coarse_shape = (height // block_size, width // block_size)
        if params is None:
            params = np.zeros(self.coarse_shape + (2,))
        if params.shape != self.coarse_shape + (2,):
            raise ValueError(f"params shape {params.shape} != {self.coarse_shape + (2,)}")
        self.params = np.array(params, dtype=np.float64)
        self._i0, self._i1, self._fy = self._axis_weights(height, self.coarse_shape[0])
        self._j0, self._j1, self._fx = self._axis_weights(width, self.coarse_shape[1])

    def _axis_weights(self, n_full: int, n_coarse: int):
        b = self.block_size
        # Block centers sit at (i + 0.5) * b - 0.5; clamp outside the centers.
        c = np.clip((np.arange(n_full) + 0.5) / b - 0.5, 0.0, n_coarse - 1.0)
        i0 = np.floor(c).astype(np.intp)
        i1 = np.minimum(i0 + 1, n_coarse - 1)
        return i0, i1, c - i0

    def predict(self) -> Grid2:
        return Grid2(self.upsample(self.params))

    def upsample(self, params: np.ndarray) -> np.ndarray:
        i0, i1 = self._i0[:, None], self._i1[:, None]
        j0, j1 = self._j0[None, :], self._j1[None, :]
        fy = self._fy[:, None, None]
        fx = self._fx[None, :, None]
        top = params[i0, j0] * (1 - fx) + params[i0, j1] * fx
        bot = params[i1, j0] * (1 - fx) + params[i1, j1] * fx
        return top * (1 - fy) + bot * fy

    def upsample_transpose(self, grad_full: np.ndarray) -> np.ndarray:
        """Adjoint of upsample: scatter full-resolution values to the coarse grid."""
        out = np.zeros(self.coarse_shape + (2,))
        fy = self._fy[:, None, None]
        fx = self._fx[None, :, None]
        iy0, iy1 = self._i0[:, None], self._i1[:, None]
        jx0, jx1 = self._j0[None, :], self._j1[None, :]
        np.add.at(out, (iy0, jx0), grad_full * (1 - fy) * (1 - fx))
        np.add.at(out, (iy0, jx1), grad_full * (1 - fy) * fx)
        np.add.at(out, (iy1, jx0), grad_full * fy * (1 - fx))
        np.add.at(out, (iy1, jx1), grad_full * fy * fx)
        return out

    def footprint_weighted_mean(self, values: np.ndarray,
                                mass: np.ndarray) -> np.ndarray:
        """Per-cell weighted average of full-resolution values.

        Both arguments are (H, W, 2); the result divides the scattered values
        by the scattered mass, cellwise, with empty cells mapping to 0.
        """
        num = self.upsample_transpose(values)
        den = self.upsample_transpose(mass)
        return np.divide(num, den, out=np.zeros_like(num), where=den > 0)

    def clone(self) -> "BlockFlowModel":
        return BlockFlowModel(self.height, self.width, self.block_size,
                              params=self.params.copy())


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    learning_rate: float = 0.05
    loss_spec: WeightSpec = field(default_factory=WeightSpec)
    seeds: tuple[int, ...] = (0,)
    recompute_confidence_every: int = 1
    snapshot_every: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.recompute_confidence_every < 1:
            raise ValueError("recompute_confidence_every must be >= 1")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")


@dataclass(frozen=True)
class TrainReport:
    mode: str
    loss_history: list[float]
    report: MetricReport
    final_forward: Grid2
    final_backward: Grid2
    final_m_db: Grid1
    final_m_oa: Grid1
    snapshots: list[tuple[int, Grid1, Grid1]]


def train(scenes: Sequence[Scene], model: BlockFlowModel,
          config: TrainConfig) -> TrainReport:
    """Fit forward and backward block models with plain gradient descent.

    Each step rebuilds the confidence maps from the current predictions
    (every recompute_confidence_every steps), assembles the mode's weight
    map with stop-gradient, and moves each coarse cell by the weighted mean
    of the weighted-L1 pixel gradients under its footprint. Normalizing by
    the scattered weight mass keeps the per-cell step bounded by the
    learning rate for every mode, so a weight map shifts where each cell
    settles (its weighted median) without acting as a learning-rate
    multiplier. The input model is not mutated; the backward predictor is an
    independent zero-initialized parameter set of the same shape.
    """
    if not scenes:
        raise ValueError("no scenes to train on")
    for scene in scenes:
        if scene.spec.height != model.height or scene.spec.width != model.width:
            raise ValueError("scene dimensions do not match the model")

    spec = config.loss_spec
    fw_model = model.clone()
    bw_model = BlockFlowModel(model.height, model.width, model.block_size)
    cached_weights: list[tuple[Grid1, Grid1]] = []
    loss_history: list[float] = []
    snapshots: list[tuple[int, Grid1, Grid1]] = []

    def coarse_grad(model_, res, wmap, valid):
        mass = np.where(valid.data, wmap.data, 0.0)[..., None]
        return model_.footprint_weighted_mean(
            res.grad.data, np.broadcast_to(mass, res.grad.data.shape))

    for step in range(config.steps):
        fw_data = fw_model.upsample(fw_model.params)
        bw_data = bw_model.upsample(bw_model.params)
        if not (np.all(np.isfinite(fw_data)) and np.all(np.isfinite(bw_data))):
            raise TrainingDivergedError(step, "prediction is not finite")
        fw, bw = Grid2(fw_data), Grid2(bw_data)

        if step % config.recompute_confidence_every == 0 or not cached_weights:
            cached_weights = [
                (build_weights(spec, fw, scene.train_labels, scene.valid, backward=bw),
                 build_weights(spec, bw, scene.train_labels_backward, scene.valid,
                               backward=fw))
                for scene in scenes
            ]

        fw_grad = np.zeros_like(fw_model.params)
        bw_grad = np.zeros_like(bw_model.params)
        step_loss = 0.0
        for scene, (w_fw, w_bw) in zip(scenes, cached_weights):
            res_fw = weighted_l1(fw, scene.train_labels, w_fw, scene.valid)
            res_bw = weighted_l1(bw, scene.train_labels_backward, w_bw, scene.valid)
            fw_grad += coarse_grad(fw_model, res_fw, w_fw, scene.valid)
            bw_grad += coarse_grad(bw_model, res_bw, w_bw, scene.valid)
            step_loss += res_fw.scalar
        step_loss /= len(scenes)
        if not np.isfinite(step_loss):
            raise TrainingDivergedError(step, f"loss is {step_loss}")
        loss_history.append(step_loss)

        fw_model.params -= config.learning_rate * fw_grad / len(scenes)
        bw_model.params -= config.learning_rate * bw_grad / len(scenes)

        if config.snapshot_every and (step + 1) % config.snapshot_every == 0:
            snapshots.append((step + 1,
                              confidence_db_flow(fw, scenes[0].train_labels, scenes[0].valid),
                              confidence_oa(fw, bw, spec.cycle)))

    final_fw = Grid2(fw_model.upsample(fw_model.params))
    final_bw = Grid2(bw_model.upsample(bw_model.params))
    scene0 = scenes[0]
    # Scored against the clean ground truth; matched region = not occluded.
    report = full_report(final_fw, scene0.gt_forward, scene0.valid,
                         region=~scene0.occlusion)
    return TrainReport(
        mode=spec.mode,
        loss_history=loss_history,
        report=report,
        final_forward=final_fw,
        final_backward=final_bw,
        final_m_db=confidence_db_flow(final_fw, scene0.train_labels, scene0.valid),
        final_m_oa=confidence_oa(final_fw, final_bw, spec.cycle),
        snapshots=snapshots,
    )


@dataclass(frozen=True)
class ComparisonRow:
    mode: str
    epe: float | None
    epe_matched: float | None
    epe_unmatched: float | None
    px3: float | None
    n_seeds: int
    per_seed: tuple[TrainReport, ...]


def _mean_or_none(values):
    if any(v is None for v in values):
        return None
    return float(np.mean(values))


def compare_runs(configs: Sequence[TrainConfig], scenes: Sequence[Scene],
                 block_size: int = 8) -> list[ComparisonRow]:
    """Train one model per (config, seed) pair and average the metrics.

    The configs must differ only in loss_spec and share one seed list;
    scenes[i] is the scene for seeds[i] (generated by the caller, typically
    with synth_scene(replace(scene_spec, seed=seeds[i]))).
    """
    if not configs:
        raise ValueError("no configs to compare")
    base = configs[0]
    for cfg in configs[1:]:
        if (cfg.steps, cfg.learning_rate, cfg.seeds, cfg.recompute_confidence_every) != \
           (base.steps, base.learning_rate, base.seeds, base.recompute_confidence_every):
            raise ValueError("configs must differ only in loss_spec")
    if len(scenes) != len(base.seeds):
        raise ValueError(f"need one scene per seed: {len(scenes)} scenes, "
                         f"{len(base.seeds)} seeds")

    rows = []
    for cfg in configs:
        reports = []
        for scene in scenes:
            model = BlockFlowModel(scene.spec.height, scene.spec.width, block_size)
            reports.append(train([scene], model, cfg))
        rows.append(ComparisonRow(
            mode=cfg.loss_spec.mode,
            epe=_mean_or_none([r.report.epe for r in reports]),
            epe_matched=_mean_or_none([r.report.matched_epe for r in reports]),
            epe_unmatched=_mean_or_none([r.report.unmatched_epe for r in reports]),
            px3=_mean_or_none([r.report.outlier_rates[3.0] for r in reports]),
            n_seeds=len(reports),
            per_seed=tuple(reports),
        ))
    return rows

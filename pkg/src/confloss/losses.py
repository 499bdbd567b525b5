"""Confidence-weighted L1 losses, their analytic gradients, and the
discounted accumulation over refinement iterations.

Seven weighting modes are supported:

  plain_l1        w = 1
  db              w = 1 + a1*(1 - M_db)^b1          (harder pixels weigh more)
  oa              w = 1 + a2*(M_oa)^b2              (matchable pixels weigh more)
  sum             w = 1 + a1*(1-M_db)^b1 + a2*(M_oa)^b2
  multiplication  w = 1 + a1*(1-M_db)^b1 * a2*(M_oa)^b2
  masking         w = 1 + H * a1*(1-M_db)^b1
  mask_sum        w = 1 + H * a1*(1-M_db)^b1 + a2*(M_oa)^b2

where H is the hard matched/occluded mask from the cycle check. Weight maps
are constants as far as differentiation is concerned (stop-gradient): the
gradient flows only through the residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .confidence import (
    CycleParams,
    confidence_db_flow,
    confidence_db_stereo,
    confidence_oa,
    confidence_oa_stereo,
    occlusion_mask,
    occlusion_mask_stereo,
)
from .fields import BinaryMask, ConfidenceMap, Grid1, Grid2, check_same_shape

PLAIN_L1 = "plain_l1"
DB = "db"
OA = "oa"
SUM = "sum"
MULTIPLICATION = "multiplication"
MASKING = "masking"
MASK_SUM = "mask_sum"

MODES = (PLAIN_L1, DB, OA, SUM, MULTIPLICATION, MASKING, MASK_SUM)
COMBINATION_MODES = (SUM, MULTIPLICATION, MASKING, MASK_SUM)

# Modes that need the error-based map / the cycle-based map.
_NEEDS_DB = (DB, SUM, MULTIPLICATION, MASKING, MASK_SUM)
_NEEDS_OA = (OA, SUM, MULTIPLICATION, MASKING, MASK_SUM)


@dataclass(frozen=True)
class WeightSpec:
    """Weighting mode plus its hyperparameters.

    alpha1/beta1 parametrize the difficulty-balancing factor, alpha2/beta2 the
    occlusion-avoiding factor; standalone db uses the former, standalone oa
    the latter. Defaults are the flow values; use stereo_defaults() for the
    stereo ones.
    """

    mode: str = PLAIN_L1
    alpha1: float = 2.0
    beta1: float = 0.5
    alpha2: float = 2.0
    beta2: float = 1.0
    cycle: CycleParams = field(default_factory=CycleParams)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown loss mode {self.mode!r}; expected one of {MODES}")
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("alpha values must be >= 0")
        if self.beta1 <= 0 or self.beta2 <= 0:
            raise ValueError("beta values must be > 0")

    @classmethod
    def flow_defaults(cls, mode: str = PLAIN_L1, **overrides) -> "WeightSpec":
        base = cls(mode=mode, alpha1=2.0, beta1=0.5, alpha2=2.0, beta2=1.0)
        return replace(base, **overrides) if overrides else base

    @classmethod
    def stereo_defaults(cls, mode: str = PLAIN_L1, **overrides) -> "WeightSpec":
        base = cls(mode=mode, alpha1=2.0, beta1=1.0, alpha2=1.0, beta2=1.0)
        return replace(base, **overrides) if overrides else base

    @property
    def needs_backward(self) -> bool:
        return self.mode in _NEEDS_OA


@dataclass(frozen=True)
class SequenceParams:
    """Discount gamma_seq in (0, 1] applied as gamma^(N-i) over iterations."""

    gamma_seq: float = 0.8

    def __post_init__(self):
        if not (0.0 < self.gamma_seq <= 1.0):
            raise ValueError(f"gamma_seq must lie in (0, 1], got {self.gamma_seq}")


@dataclass(frozen=True)
class LossResult:
    """Scalar loss plus the per-pixel maps behind it.

    scalar is the mean of loss_map over valid pixels; grad is the derivative
    of the per-pixel weighted L1 w.r.t. the prediction (componentwise), zero
    on invalid pixels. Divide by the valid-pixel count for the gradient of
    the mean.
    """

    scalar: float
    weight_map: Grid1
    loss_map: Grid1
    grad: Grid2 | Grid1
    n_valid: int


def _check_unit_range(m: ConfidenceMap) -> np.ndarray:
    data = m.data
    if np.any(data < 0.0) or np.any(data > 1.0):
        raise ValueError("confidence map entries must lie in [0, 1]")
    return data


def weight_db(m: ConfidenceMap, alpha: float, beta: float) -> Grid1:
    """Difficulty-balancing weight 1 + alpha * (1 - M)^beta."""
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    data = _check_unit_range(m)
    return Grid1(1.0 + alpha * (1.0 - data) ** beta)


def weight_oa(m: ConfidenceMap, alpha: float, beta: float) -> Grid1:
    """Occlusion-avoiding weight 1 + alpha * M^beta."""
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    data = _check_unit_range(m)
    return Grid1(1.0 + alpha * data**beta)


def weight_combine(m_db: ConfidenceMap, m_oa: ConfidenceMap, hard: BinaryMask,
                   spec: WeightSpec) -> Grid1:
    """Combined weight map for the four combination modes."""
    if spec.mode not in COMBINATION_MODES:
        raise ValueError(f"mode {spec.mode!r} is not a combination mode")
    check_same_shape(m_db, m_oa, hard)
    db_term = spec.alpha1 * (1.0 - _check_unit_range(m_db)) ** spec.beta1
    oa_term = spec.alpha2 * _check_unit_range(m_oa) ** spec.beta2
    h = hard.data
    if spec.mode == SUM:
        w = 1.0 + db_term + oa_term
    elif spec.mode == MULTIPLICATION:
        w = 1.0 + db_term * oa_term
    elif spec.mode == MASKING:
        w = 1.0 + np.where(h, db_term, 0.0)
    else:  # MASK_SUM
        w = 1.0 + np.where(h, db_term, 0.0) + oa_term
    return Grid1(w)


def weighted_l1(pred: Grid2 | Grid1, gt: Grid2 | Grid1, weights: Grid1,
                valid: BinaryMask) -> LossResult:
    """Weighted L1 over valid pixels, with its analytic gradient.

    Per-pixel loss is w * (|du| + |dv|) for flow and w * |dd| for stereo;
    the scalar is the mean over valid pixels. grad is w * (-sign(gt - pred))
    per component with sign(0) = 0, zeroed on invalid pixels. The weights are
    inputs, never differentiated.
    """
    if type(pred) is not type(gt):
        raise ValueError("pred and gt must be the same grid type")
    check_same_shape(pred, gt, weights, valid)
    n_valid = valid.count()
    if n_valid == 0:
        raise ValueError("no valid pixels: the mean loss is undefined")

    residual = gt.data - pred.data
    if isinstance(pred, Grid2):
        per_pixel = np.sum(np.abs(residual), axis=-1)
        sgn = np.sign(residual)
        grad_data = weights.data[..., None] * (-sgn)
        grad_data = np.where(valid.data[..., None], grad_data, 0.0)
        grad: Grid2 | Grid1 = Grid2(grad_data)
    else:
        per_pixel = np.abs(residual)
        grad_data = weights.data * (-np.sign(residual))
        grad = Grid1(np.where(valid.data, grad_data, 0.0))

    loss_map = np.where(valid.data, weights.data * per_pixel, 0.0)
    scalar = float(loss_map.sum() / n_valid)
    return LossResult(scalar=scalar, weight_map=weights, loss_map=Grid1(loss_map),
                      grad=grad, n_valid=n_valid)


def build_weights(spec: WeightSpec, pred: Grid2 | Grid1, gt: Grid2 | Grid1,
                  valid: BinaryMask, backward: Grid2 | Grid1 | None = None) -> Grid1:
    """Assemble the weight map a mode needs from the current predictions.

    The error-based map is computed from pred vs gt; the cycle-based map and
    the hard mask from (pred, backward). For stereo (Grid1 inputs), backward
    is the restored right-to-left disparity.
    """
    h, w = check_same_shape(pred, gt, valid)
    if spec.mode == PLAIN_L1:
        return Grid1.full(h, w, 1.0)

    stereo = isinstance(pred, Grid1)
    m_db = m_oa = hard = None
    if spec.mode in _NEEDS_DB:
        m_db = (confidence_db_stereo if stereo else confidence_db_flow)(pred, gt, valid)
    if spec.mode in _NEEDS_OA:
        if backward is None:
            raise ValueError(f"mode {spec.mode!r} needs a backward field")
        check_same_shape(pred, backward)
        if stereo:
            m_oa = confidence_oa_stereo(pred, backward, spec.cycle)
        else:
            m_oa = confidence_oa(pred, backward, spec.cycle)

    if spec.mode == DB:
        return weight_db(m_db, spec.alpha1, spec.beta1)
    if spec.mode == OA:
        return weight_oa(m_oa, spec.alpha2, spec.beta2)

    if spec.mode in (MASKING, MASK_SUM):
        if stereo:
            hard = occlusion_mask_stereo(pred, backward, spec.cycle)
        else:
            hard = occlusion_mask(pred, backward, spec.cycle)
    else:
        hard = BinaryMask.full(h, w, True)
    return weight_combine(m_db, m_oa, hard, spec)


def evaluate_loss(pred: Grid2 | Grid1, gt: Grid2 | Grid1, valid: BinaryMask,
                  spec: WeightSpec,
                  backward: Grid2 | Grid1 | None = None) -> LossResult:
    """Build the mode's weight map from the prediction and apply weighted_l1."""
    weights = build_weights(spec, pred, gt, valid, backward)
    return weighted_l1(pred, gt, weights, valid)


def sequence_loss(preds: Sequence[Grid2 | Grid1], gt: Grid2 | Grid1,
                  valid: BinaryMask, spec: WeightSpec,
                  seq: SequenceParams = SequenceParams(),
                  backwards: Sequence[Grid2 | Grid1] | None = None):
    """Discounted accumulation over N refinement iterations.

    total = sum_i gamma^(N-i) * scalar_i with i = 1 the earliest prediction.
    The confidence maps are rebuilt per iteration: the error-based map from
    that iteration's prediction vs gt, the cycle map from that iteration's
    forward/backward pair in `backwards`.
    """
    if len(preds) == 0:
        raise ValueError("empty prediction list")
    if spec.needs_backward:
        if backwards is None or len(backwards) != len(preds):
            raise ValueError(f"mode {spec.mode!r} needs one backward field per prediction")
    n = len(preds)
    per_iteration = []
    total = 0.0
    for i, pred in enumerate(preds):
        bw = backwards[i] if backwards is not None else None
        result = evaluate_loss(pred, gt, valid, spec, backward=bw)
        per_iteration.append(result)
        total += seq.gamma_seq ** (n - 1 - i) * result.scalar
    return total, per_iteration

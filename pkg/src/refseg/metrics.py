"""Dice and mean-IoU on binary masks, averaged per image.

Both metrics define the empty-vs-empty case as 1.0 so lesion-free images
score perfect agreement instead of dividing by zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class MetricsReport:
    dice: float
    miou: float
    n_images: int
    per_image: list[tuple[float, float]] = field(default_factory=list)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(self.format())

    def format(self) -> str:
        return f"dice: {self.dice:.6f}\nmiou: {self.miou:.6f}\nn_images: {self.n_images}\n"


def _check_pair(pred: np.ndarray, gt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    return pred.astype(bool), gt.astype(bool)


def dice(pred: np.ndarray, gt: np.ndarray) -> float:
    """2|P∩G| / (|P|+|G|); 1.0 when both masks are empty."""
    pred, gt = _check_pair(pred, gt)
    denom = int(pred.sum()) + int(gt.sum())
    if denom == 0:
        return 1.0
    inter = int(np.logical_and(pred, gt).sum())
    return 2.0 * inter / denom


def _iou(pred: np.ndarray, gt: np.ndarray) -> float:
    union = int(np.logical_or(pred, gt).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(pred, gt).sum())
    return inter / union


def miou(pred: np.ndarray, gt: np.ndarray, two_class: bool = True) -> float:
    """Mean IoU over {background, lesion}, or lesion IoU alone when
    two_class=False. Empty-vs-empty classes count as 1.0."""
    pred, gt = _check_pair(pred, gt)
    lesion = _iou(pred, gt)
    if not two_class:
        return lesion
    background = _iou(~pred, ~gt)
    return 0.5 * (lesion + background)


def evaluate(model, dataset, two_class: bool = True) -> MetricsReport:
    """Run the model over a dataset and average per-image Dice / mIoU.

    Predictions are the causal decoder's logits thresholded at 0
    (probability 0.5). `dataset` yields (image, token_ids, mask) items;
    see refseg.data.SegmentationDataset.
    """
    import torch

    model.eval()
    per_image: list[tuple[float, float]] = []
    with torch.no_grad():
        for image, token_ids, mask in dataset:
            out = model(image.unsqueeze(0), token_ids.unsqueeze(0))
            pred = (out.logits_causal[0, 0] > 0).cpu().numpy()
            gt = mask.cpu().numpy().astype(bool)
            per_image.append((dice(pred, gt), miou(pred, gt, two_class=two_class)))
    if not per_image:
        raise ValueError("dataset is empty")
    dice_mean = float(np.mean([d for d, _ in per_image]))
    miou_mean = float(np.mean([m for _, m in per_image]))
    return MetricsReport(dice=dice_mean, miou=miou_mean, n_images=len(per_image), per_image=per_image)

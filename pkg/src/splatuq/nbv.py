"""Next-best-view selection from object-masked propagated uncertainty."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .fisher import CovDiag, laplace_cov
from .presets import ring_cameras
from .propagation import ObjectScore, view_scores
from .renderer import CameraPose, render
from .scene import SceneParams
from .trainer import TrainConfig, train


@dataclass(frozen=True)
class CandidateSet:
    cameras: tuple
    ids: tuple
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.cameras:
            raise ValueError("candidate set is empty")
        if len(self.ids) != len(self.cameras) or len(set(self.ids)) != len(self.ids):
            raise ValueError("candidate ids must be unique, one per camera")

    def __len__(self) -> int:
        return len(self.cameras)

    def items(self):
        return zip(self.ids, self.cameras)


@dataclass(frozen=True)
class NbvDecision:
    chosen_id: int
    aggregate: dict  # candidate id -> aggregate score
    table: tuple  # ObjectScore rows, view_id = candidate id


def generate_candidates(spec) -> CandidateSet:
    """Build candidates from ``{"kind": "ring", ...}`` or ``{"kind": "list", "cameras": [...]}``.

    A bare sequence of ``CameraPose`` is accepted as an explicit list.
    """
    if isinstance(spec, CandidateSet):
        return spec
    if not isinstance(spec, dict):
        cams = tuple(spec)
        return CandidateSet(cams, tuple(range(len(cams))), {"kind": "list"})
    kind = spec.get("kind", "ring")
    if kind == "ring":
        n = int(spec["n"])
        if n < 1:
            raise ValueError("ring needs n >= 1 poses")
        cams = ring_cameras(
            tuple(spec.get("center", (0.0, 0.0))),
            float(spec["radius"]),
            n,
            float(spec["zoom"]),
            int(spec["width"]),
            int(spec["height"]),
            float(spec.get("phase", 0.0)),
        )
    elif kind == "list":
        cams = tuple(c if isinstance(c, CameraPose) else CameraPose(**c) for c in spec["cameras"])
    else:
        raise ValueError(f"unknown candidate kind {kind!r}")
    ids = tuple(spec.get("ids", range(len(cams))))
    return CandidateSet(cams, ids, dict(spec))


def select_next_view(
    scene: SceneParams,
    cov: CovDiag,
    candidates,
    objects: Optional[Sequence[int]] = None,
) -> NbvDecision:
    """Score every candidate and pick the argmax; ties go to the lowest id."""
    candidates = generate_candidates(candidates)
    table = []
    aggregate = {}
    for cid, cam in candidates.items():
        scores, _ = view_scores(scene, cam, cov, objects, view_id=cid)
        table.extend(scores)
        aggregate[cid] = float(sum(s.score for s in scores))
    best = max(aggregate.values())
    chosen = min(cid for cid, v in aggregate.items() if v == best)
    return NbvDecision(chosen, aggregate, tuple(table))


def psnr(pred_images, gt_images) -> float:
    se = sum(float(np.sum((np.asarray(p) - np.asarray(g)) ** 2)) for p, g in zip(pred_images, gt_images))
    n = sum(np.asarray(g).size for g in gt_images)
    mse = se / n
    return float("inf") if mse == 0 else float(10.0 * np.log10(1.0 / mse))


@dataclass(frozen=True)
class RoundReport:
    round: int
    n_views: int
    train_loss: float
    psnr: float
    chosen_id: int
    aggregate: dict
    chosen_pose: CameraPose


@dataclass
class ActiveReport:
    policy: str
    seed: int
    rounds: list = field(default_factory=list)

    def rounds_to_psnr(self, threshold: float) -> Optional[int]:
        """First round whose post-training held-out PSNR reaches ``threshold``."""
        for r in self.rounds:
            if r.psnr >= threshold:
                return r.round
        return None


def active_capture_loop(
    gt_scene: SceneParams,
    init_scene: SceneParams,
    initial_views: Sequence[CameraPose],
    candidate_spec,
    rounds: int,
    config: TrainConfig = TrainConfig(),
    heldout: Sequence[CameraPose] = (),
    policy: str = "uncertainty",
    objects: Optional[Sequence[int]] = None,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> ActiveReport:
    """Simulated acquisition: train, score candidates, capture the chosen view, repeat.

    Each round warm-starts from the previous round's fit. New ground truth is
    rendered from ``gt_scene``; ``noise_sigma > 0`` adds seeded Gaussian pixel
    noise to every training image. The ``random`` policy draws uniformly among
    candidates not captured yet.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if policy not in ("uncertainty", "random"):
        raise ValueError(f"unknown policy {policy!r}")
    noise_rng = np.random.default_rng([seed, 1])
    policy_rng = np.random.default_rng([seed, 2])
    candidates = generate_candidates(candidate_spec)

    def capture(cam):
        img = render(gt_scene, cam)[0]
        if noise_sigma > 0:
            img = img + noise_rng.normal(0.0, noise_sigma, img.shape)
        return cam, img

    views = [capture(c) for c in initial_views]
    heldout_gt = [render(gt_scene, c)[0] for c in heldout]
    taken: set = set()
    report = ActiveReport(policy, seed)
    scene = init_scene
    for r in range(1, rounds + 1):
        scene, fisher, trace = train(scene, views, config)
        cov = laplace_cov(fisher, config.lam)
        decision = select_next_view(scene, cov, candidates, objects)
        if policy == "uncertainty":
            chosen = decision.chosen_id
        else:
            pool = [cid for cid in candidates.ids if cid not in taken] or list(candidates.ids)
            chosen = pool[int(policy_rng.integers(len(pool)))]
        value = psnr([render(scene, c)[0] for c in heldout], heldout_gt) if heldout else float("nan")
        cam = dict(candidates.items())[chosen]
        report.rounds.append(
            RoundReport(r, len(views), trace.records[-1].loss, value, chosen, decision.aggregate, cam)
        )
        taken.add(chosen)
        views.append(capture(cam))
    return report

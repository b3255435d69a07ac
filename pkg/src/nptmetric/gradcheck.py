"""Finite-difference verification of every analytic loss gradient.

Central differences with step h on each raw feature and raw proxy component,
compared against the analytic backward pass at relative error
|a - f| / max(|a|, |f|, 0.01).

Hinge losses are piecewise: a config whose hinge argument or selection gap
sits within ``guard`` of a kink or an argmin tie would make the two-sided
difference straddle a non-smooth point, so such configs are rejected and
redrawn rather than checked. The guard is an order of magnitude wider than
the step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import normalize_rows
from .losses import (
    LabeledBatch,
    LossKind,
    MarginConfig,
    ProxyBank,
    loss_dispatch,
    loss_forward,
)

STEP = 1e-5
TOL = 1e-5
GUARD = 1e-4


@dataclass
class GradCheckReport:
    kind: str
    checked: int = 0
    resampled: int = 0
    max_rel_err: float = 0.0
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.checked > 0 and not self.failures


def _draw_config(kind, rng, batch_max, class_max, dim_max):
    c = int(rng.integers(2, class_max + 1))
    n = int(rng.integers(2, dim_max + 1))
    b = int(rng.integers(1, batch_max + 1))
    if kind is LossKind.TRIPLET:
        # need repeated labels for positives and >=2 distinct for negatives
        b = max(b, 3)
        c = min(c, max(2, b - 1))
    radius = float(rng.choice([0.5, 1.0, 2.0]))
    r2 = radius * radius
    if kind in (LossKind.NPT, LossKind.PROXY_TRIPLET, LossKind.TRIPLET):
        cfg = MarginConfig(delta=float(rng.uniform(0.1, 1.2)) * r2)
    else:
        cfg = MarginConfig(
            delta=0.5 * r2,
            scale=float(rng.uniform(4.0, 20.0)),
            angular_margin=float(rng.uniform(0.05, 0.9)),
        )
    feats = rng.standard_normal((b, n)) * rng.uniform(0.5, 2.0, size=(b, 1))
    labels = rng.integers(0, c, size=b).astype(np.int64)
    proxies = rng.standard_normal((c, n))
    batch = LabeledBatch(raw_features=feats, labels=labels)
    bank = ProxyBank(raw_weights=normalize_rows(proxies, radius), radius=radius)
    return batch, bank, cfg


def _config_is_safe(kind, batch, bank, cfg, guard):
    """True when no hinge argument, selection gap, or clamp sits near a kink."""
    r = bank.radius
    z = normalize_rows(batch.raw_features, r)
    if kind is LossKind.TRIPLET:
        dots = z @ z.T
        ok_any = False
        for i in range(len(batch)):
            same = (batch.labels == batch.labels[i]) & (np.arange(len(batch)) != i)
            diff = batch.labels != batch.labels[i]
            if not same.any() or not diff.any():
                continue
            ok_any = True
            pos_dots = np.sort(dots[i, same])
            neg_dots = np.sort(dots[i, diff])[::-1]
            if pos_dots.size >= 2 and pos_dots[1] - pos_dots[0] <= guard:
                return False
            if neg_dots.size >= 2 and neg_dots[0] - neg_dots[1] <= guard:
                return False
            arg = 2.0 * (neg_dots[0] - pos_dots[0]) + cfg.delta
            if abs(arg) <= guard:
                return False
        return ok_any

    w = bank.normalized()
    dots = z @ w.T
    rows = np.arange(len(batch))
    cos = dots / (r * r)
    if (np.abs(np.abs(cos) - 1.0) <= 1e-6).any():
        return False
    if kind in (LossKind.NPT, LossKind.PROXY_TRIPLET):
        own = dots[rows, batch.labels]
        for i in rows:
            negs = np.sort(np.delete(dots[i], batch.labels[i]))[::-1]
            if kind is LossKind.NPT:
                if negs.size >= 2 and negs[0] - negs[1] <= guard:
                    return False
                args = np.array([2.0 * (negs[0] - own[i]) + cfg.delta])
            else:
                args = 2.0 * (negs - own[i]) + cfg.delta
            if (np.abs(args) <= guard).any():
                return False
        return True
    if kind is LossKind.MARGIN_SOFTMAX:
        cos_y = cos[rows, batch.labels]
        if (np.abs(cos_y) >= 1.0 - 1e-6).any():
            return False
        shifted = np.arccos(cos_y) + cfg.angular_margin
        if (np.abs(shifted - np.pi) <= guard).any():
            return False
    return True


def _loss_value(kind, feats, proxies, labels, radius, cfg):
    batch = LabeledBatch(raw_features=feats, labels=labels)
    bank = ProxyBank(raw_weights=proxies, radius=radius)
    return loss_forward(kind, batch, bank, cfg).loss


def _dense_proxy_grad(result, shape):
    g = np.zeros(shape)
    for j, row in (result.grad_proxies or {}).items():
        g[j] = row
    return g


def check_one(kind, batch, bank, cfg, step=STEP, tol=TOL):
    """FD-check a single config; returns (max_rel_err, failures)."""
    kind = LossKind(kind)
    analytic = loss_dispatch(kind, batch, bank, cfg)
    feats = batch.raw_features
    proxies = bank.raw_weights
    targets = [("feature", feats, analytic.grad_raw_features)]
    if kind is not LossKind.TRIPLET:
        targets.append(("proxy", proxies, _dense_proxy_grad(analytic, proxies.shape)))

    worst = 0.0
    failures = []
    for name, array, grad in targets:
        for idx in np.ndindex(array.shape):
            bumped = array.copy()
            bumped[idx] = array[idx] + step
            up = _loss_value(kind, feats if name == "proxy" else bumped,
                             bumped if name == "proxy" else proxies,
                             batch.labels, bank.radius, cfg)
            bumped[idx] = array[idx] - step
            down = _loss_value(kind, feats if name == "proxy" else bumped,
                               bumped if name == "proxy" else proxies,
                               batch.labels, bank.radius, cfg)
            fd = (up - down) / (2.0 * step)
            a = grad[idx]
            rel = abs(a - fd) / max(abs(a), abs(fd), 0.01)
            worst = max(worst, rel)
            if rel >= tol:
                failures.append(f"{name}{idx}: analytic={a:.3e} fd={fd:.3e} rel={rel:.3e}")
    return worst, failures


def check_loss_gradients(
    kind,
    trials: int = 100,
    seed: int = 0,
    batch_max: int = 8,
    class_max: int = 6,
    dim_max: int = 8,
    step: float = STEP,
    tol: float = TOL,
    guard: float = GUARD,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """Run ``trials`` random configs through the FD check, redrawing unsafe ones."""
    kind = LossKind(kind)
    if rng is None:
        rng = np.random.default_rng(seed)
    report = GradCheckReport(kind=kind.value)
    for _ in range(trials):
        for _attempt in range(200):
            batch, bank, cfg = _draw_config(kind, rng, batch_max, class_max, dim_max)
            if _config_is_safe(kind, batch, bank, cfg, guard):
                break
            report.resampled += 1
        else:
            raise RuntimeError(f"could not draw a kink-free config for {kind.value}")
        worst, failures = check_one(kind, batch, bank, cfg, step=step, tol=tol)
        report.checked += 1
        report.max_rel_err = max(report.max_rel_err, worst)
        report.failures.extend(failures)
    return report

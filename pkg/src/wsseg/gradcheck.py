"""Central finite-difference verification of the analytic loss gradients."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .relation import TERMS, LossWeights, loss_term_grads, loss_terms

STEP = 1e-5
TOLERANCE = 1e-4
_DENOM_FLOOR = 1e-12

# Cycled so any run of >= 5 trials covers each mask regime.
KINDS = ("simple", "complex", "single_pixel", "full_frame", "near_empty")


def relative_error(analytic, numeric) -> float:
    """``||a - n|| / max(||a||, ||n||)``; 0 when both vanish."""
    a = np.ravel(analytic)
    n = np.ravel(numeric)
    den = max(np.linalg.norm(a), np.linalg.norm(n))
    if den <= _DENOM_FLOOR:
        return 0.0
    return float(np.linalg.norm(a - n) / den)


def numeric_term_grads(F, saliency, y, sal_threshold=0.5, step=STEP, weights=None):
    """Central differences of every loss term (and the weighted total) over each entry of F."""
    weights = weights or LossWeights()
    F = np.array(F, dtype=np.float64)
    out = {t: np.zeros_like(F) for t in TERMS + ("total",)}

    def evaluate(x):
        terms, simple = loss_terms(x, saliency, y, sal_threshold)
        terms["total"] = terms["cls"] + (
            sum(weights.factor(t) * terms[t] for t in TERMS[1:]) if simple else 0.0)
        return terms

    flat = F.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        plus = evaluate(F)
        flat[i] = orig - step
        minus = evaluate(F)
        flat[i] = orig
        for t in out:
            out[t].reshape(-1)[i] = (plus[t] - minus[t]) / (2.0 * step)
    return out


def make_fixture(rng, kind: str):
    """Random (F, saliency, y) for one mask regime."""
    C = int(rng.integers(1, 5))
    h, w = int(rng.integers(2, 7)), int(rng.integers(2, 7))
    if kind in ("single_pixel", "near_empty") or rng.uniform() < 0.3:
        H, W = h, w
    else:
        H, W = int(rng.integers(h, 2 * h + 4)), int(rng.integers(w, 2 * w + 4))
    F = rng.normal(scale=2.0, size=(C, h, w))
    y = np.zeros(C)
    if kind == "complex" and C >= 2:
        y[rng.choice(C, size=int(rng.integers(2, C + 1)), replace=False)] = 1
    else:
        y[rng.integers(C)] = 1

    if kind == "single_pixel":
        sal = rng.uniform(0.0, 0.4, (H, W))
        sal[rng.integers(H), rng.integers(W)] = rng.uniform(0.6, 1.0)
    elif kind == "full_frame":
        sal = rng.uniform(0.6, 1.0, (H, W))
    elif kind == "near_empty":
        # object mask covers every pixel but one: the background support is a single pixel
        sal = rng.uniform(0.6, 1.0, (H, W))
        sal[rng.integers(H), rng.integers(W)] = rng.uniform(0.0, 0.4)
    else:
        frac = rng.uniform(0.1, 0.9)
        sal = (rng.uniform(size=(H, W)) < frac) * rng.uniform(0.5, 1.0, (H, W))
    return F, sal, y


def check_fixture(F, saliency, y, sal_threshold=0.5, fault=None):
    numeric = numeric_term_grads(F, saliency, y, sal_threshold)
    analytic = loss_term_grads(F, saliency, y, sal_threshold)
    if fault is not None:
        analytic = dict(analytic)
        analytic[fault] = -analytic[fault]
    w = LossWeights()
    analytic["total"] = sum(w.factor(t) * analytic[t] for t in TERMS)
    _, simple = loss_terms(F, saliency, y, sal_threshold)
    errors = {t: relative_error(analytic[t], numeric[t]) for t in TERMS + ("total",)}
    return errors, simple


def run_gradcheck(seed: int, trials: int, fault: str | None = None, tolerance: float = TOLERANCE):
    """Run ``trials`` randomized checks. Returns (per-trial records, summary)."""
    if isinstance(trials, bool) or not isinstance(trials, int) or trials < 1:
        raise InvalidArgumentError(f"trials must be an integer >= 1, got {trials!r}")
    if fault is not None and fault not in TERMS:
        raise InvalidArgumentError(f"fault must name a loss term {TERMS}, got {fault!r}")
    records = []
    for k in range(trials):
        rng = np.random.default_rng([seed, k])
        kind = KINDS[k % len(KINDS)]
        F, sal, y = make_fixture(rng, kind)
        errors, simple = check_fixture(F, sal, y, fault=fault)
        records.append({
            "trial": k,
            "kind": kind,
            "simple": simple,
            "shape": list(F.shape),
            "saliency_shape": list(sal.shape),
            "errors": errors,
        })
    worst = {t: max(r["errors"][t] for r in records) for t in TERMS + ("total",)}
    failed = sorted(t for t, e in worst.items() if not e < tolerance)
    summary = {
        "summary": True,
        "trials": trials,
        "simple_trials": sum(r["simple"] for r in records),
        "tolerance": tolerance,
        "max_relative_error": worst,
        "failed_terms": failed,
        "passed": not failed,
    }
    return records, summary

"""Batch drivers behind the CLI subcommands.

Each ``cmd_*`` returns a process exit code: 0 on success, 2 when one or more
images failed (the rest are still processed and ``errors.jsonl`` lists the
failures). Validation problems raise InvalidArgumentError; the CLI maps
those to exit code 1.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .cam import normalize_cams
from .errors import FormatError, InvalidArgumentError, UndefinedMetricError
from .fileio import read_label_map, read_saliency, read_tensor, write_label_map, write_tensor
from .gradcheck import run_gradcheck
from .grids import upsample_bilinear
from .metrics import ConfusionMatrix, accumulate, metric_report
from .pseudo import generate_initial, refine
from .relation import TERMS, total_loss
from .synth import write_dataset

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_PARTIAL = 2

_IMAGE_ERRORS = (FormatError, InvalidArgumentError, OSError)


def _dump(rec) -> str:
    return json.dumps(rec, allow_nan=False)


def _write_jsonl(path, rows):
    Path(path).write_text("".join(_dump(r) + "\n" for r in rows))


def prepare_out(out, *inputs) -> Path:
    out = Path(out)
    for src in inputs:
        if src is not None and out.resolve() == Path(src).resolve():
            raise InvalidArgumentError(f"output directory {out} is also an input; refusing to overwrite it")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _error_record(image_id, exc):
    rec = {"image": image_id, "error": str(exc), "type": type(exc).__name__}
    if isinstance(exc, FormatError):
        rec["path"] = exc.path
        rec["offset"] = exc.offset
    return rec


def map_images(fn, items, jobs=1):
    """Apply ``fn(item)`` with a thread pool; returns (results, errors) in input order.

    ``items`` are ``(image_id, payload)`` pairs. A failing item is reported,
    not raised, so one bad file never aborts the batch.
    """
    def safe(item):
        image_id, payload = item
        try:
            return image_id, fn(payload), None
        except _IMAGE_ERRORS as exc:
            return image_id, None, _error_record(image_id, exc)

    items = list(items)
    if jobs and jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(safe, items))
    else:
        outcomes = [safe(it) for it in items]
    results = [(i, r) for i, r, e in outcomes if e is None]
    errors = [e for _, _, e in outcomes if e is not None]
    return results, errors


def _finish(out, errors, what):
    if errors:
        _write_jsonl(Path(out) / "errors.jsonl", errors)
        for e in errors:
            log.error("%s: %s", e["image"], e["error"])
        log.error("%s: %d image(s) failed", what, len(errors))
        return EXIT_PARTIAL
    return EXIT_OK


def _load_attention(rec, C):
    F = read_tensor(rec.attention)
    if F.ndim != 3 or F.shape[0] != C:
        raise FormatError(f"expected a rank-3 tensor with {C} channels, got shape {F.shape}", rec.attention)
    return F


def cmd_cam(manifest, out, jobs=1) -> int:
    out = prepare_out(out)
    C = manifest.num_classes

    def work(rec):
        A = normalize_cams(_load_attention(rec, C), rec.tags)
        write_tensor(out / f"{rec.image_id}.wsst", A)

    _, errors = map_images(work, [(r.image_id, r) for r in manifest.records], jobs)
    return _finish(out, errors, "cam")


def cmd_losses(manifest, config, out, jobs=1, figures=False) -> int:
    out = prepare_out(out)
    C = manifest.num_classes

    def work(rec):
        F = _load_attention(rec, C)
        sal = read_saliency(rec.saliency)
        bd = total_loss(F, sal, rec.tags, config.weights, config.sal_threshold)
        return {"image": rec.image_id, **bd.to_dict()}

    results, errors = map_images(work, [(r.image_id, r) for r in manifest.records], jobs)
    rows = [r for _, r in results]
    n = len(rows)
    summary = {
        "summary": True,
        "images": n,
        "simple_images": sum(r["simple"] for r in rows),
        # fsum is exact, so the means do not depend on summation order
        "mean": {t: (math.fsum(r[t] for r in rows) / n if n else None) for t in TERMS + ("total",)},
        "config": config.to_dict(),
    }
    _write_jsonl(out / "losses.jsonl", rows + [summary])
    if figures and rows:
        from .plotting import plot_losses
        plot_losses(rows, config.weights, out / "losses.png")
    return _finish(out, errors, "losses")


def cmd_pseudo(manifest, config, out, cams=None, jobs=1) -> int:
    out = prepare_out(out, cams)
    C = manifest.num_classes

    def work(rec):
        sal = read_saliency(rec.saliency)
        if cams is not None:
            path = Path(cams) / f"{rec.image_id}.wsst"
            A = read_tensor(path)
            if A.ndim != 3 or A.shape[0] != C:
                raise FormatError(f"expected {C} CAM channels, got shape {A.shape}", path)
        else:
            A = normalize_cams(_load_attention(rec, C), rec.tags)
        if A.shape[1:] != sal.shape:
            A = np.clip(upsample_bilinear(A, *sal.shape), 0.0, 1.0)
        labels = generate_initial(A, sal, rec.tags, config.labelgen)
        write_label_map(out / f"{rec.image_id}.png", labels)

    _, errors = map_images(work, [(r.image_id, r) for r in manifest.records], jobs)
    return _finish(out, errors, "pseudo")


def _missing(image_id, what, path):
    raise FileNotFoundError(f"{image_id}: no {what} label map at {path}")


def cmd_refine(manifest, pred_dir, initial_dir, out, config, jobs=1) -> int:
    out = prepare_out(out, pred_dir, initial_dir)
    C = manifest.num_classes

    def work(rec):
        p = Path(pred_dir) / f"{rec.image_id}.png"
        l = Path(initial_dir) / f"{rec.image_id}.png"
        if not p.is_file():
            _missing(rec.image_id, "prediction", p)
        if not l.is_file():
            _missing(rec.image_id, "initial", l)
        refined = refine(read_label_map(p, C), read_label_map(l, C), rec.tags, config.copy_ignore)
        write_label_map(out / f"{rec.image_id}.png", refined)

    _, errors = map_images(work, [(r.image_id, r) for r in manifest.records], jobs)
    return _finish(out, errors, "refine")


def evaluate_dirs(pred_dir, gt_dir, num_classes, pred_ignore="error", jobs=1):
    """Confusion matrix over every image id found in either directory, plus per-image errors."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    ids = sorted({p.stem for p in pred_dir.glob("*.png")} | {p.stem for p in gt_dir.glob("*.png")})

    def work(image_id):
        p, g = pred_dir / f"{image_id}.png", gt_dir / f"{image_id}.png"
        if not p.is_file():
            _missing(image_id, "prediction", p)
        if not g.is_file():
            _missing(image_id, "ground-truth", g)
        return accumulate(ConfusionMatrix.empty(num_classes), read_label_map(p, num_classes),
                          read_label_map(g, num_classes), pred_ignore)

    results, errors = map_images(work, [(i, i) for i in ids], jobs)
    cm = ConfusionMatrix.empty(num_classes)
    for _, part in results:
        cm = cm + part
    return cm, errors, len(results)


def cmd_eval(pred_dir, gt_dir, num_classes, out, pred_ignore="error", jobs=1, figures=False) -> int:
    out = prepare_out(out, pred_dir, gt_dir)
    cm, errors, n = evaluate_dirs(pred_dir, gt_dir, num_classes, pred_ignore, jobs)
    try:
        report = metric_report(cm)
    except UndefinedMetricError as exc:
        log.error("eval: %s", exc)
        _finish(out, errors, "eval")
        return EXIT_INVALID
    report["images"] = n
    (out / "metrics.json").write_text(json.dumps(report, indent=2, allow_nan=False) + "\n")
    print(_dump({"miou": report["miou"], "evaluated_pixels": report["evaluated_pixels"], "images": n}))
    if figures:
        from .plotting import plot_iou
        plot_iou(report, out / "iou.png")
    return _finish(out, errors, "eval")


def cmd_synth(out, seed, spec) -> int:
    path = write_dataset(out, spec, seed)
    log.info("wrote %d images, manifest %s", spec.images, path)
    return EXIT_OK


def cmd_gradcheck(seed, trials, out=None, fault=None, figures=False) -> int:
    records, summary = run_gradcheck(seed, trials, fault)
    lines = records + [summary]
    if out is not None:
        out = prepare_out(out)
        _write_jsonl(out / "gradcheck.jsonl", lines)
        if figures:
            from .plotting import plot_gradcheck
            plot_gradcheck(records, summary, out / "gradcheck.png")
    for term, err in summary["max_relative_error"].items():
        status = "ok" if err < summary["tolerance"] else "FAIL"
        print(f"{term:7s} max relative error {err:.3e}  {status}")
    if not summary["passed"]:
        print("gradient check failed for: " + ", ".join(summary["failed_terms"]))
        return EXIT_PARTIAL
    return EXIT_OK

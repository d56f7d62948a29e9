"""Report figures, written next to the JSON reports when ``--figures`` is given."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# No Software/date chunks, so reruns give byte-identical files.
_PNG_META = {"Software": None}

TERM_COLORS = {"cls": "#4c72b0", "cad_ob": "#55a868", "cad_bg": "#c44e52", "csd": "#8172b2",
               "total": "#333333"}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_iou(report, path, title="per-class IoU"):
    classes = sorted(report["per_class"], key=int)
    vals = [report["per_class"][c] for c in classes]
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(classes) + 2), 3.2))
    xs = np.arange(len(classes))
    heights = [np.nan if v is None else v for v in vals]
    ax.bar(xs, np.nan_to_num(heights), color="#4c72b0")
    for x, v in zip(xs, vals):
        if v is None:
            ax.text(x, 0.02, "n/a", ha="center", fontsize=7, rotation=90)
    ax.axhline(report["miou"], color="k", ls="--", lw=1, label=f"mIoU {report['miou']:.3f}")
    ax.set_xticks(xs, classes)
    ax.set_ylim(0, 1)
    ax.set_xlabel("class")
    ax.set_ylabel("IoU")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, path)


def plot_losses(rows, weights, path):
    """Mean weighted contribution of every term, split by simple / complex images."""
    groups = {"simple": [r for r in rows if r["simple"]], "complex": [r for r in rows if not r["simple"]]}
    terms = ["cls", "cad_ob", "cad_bg", "csd"]
    factor = {"cls": 1.0, "cad_ob": weights.lambda_ob, "cad_bg": weights.lambda_bg,
              "csd": weights.lambda_csd}
    fig, ax = plt.subplots(figsize=(5, 3.2))
    xs = np.arange(len(terms))
    width = 0.38
    for k, (name, sub) in enumerate(groups.items()):
        means = [np.mean([factor[t] * r[t] for r in sub]) if sub else 0.0 for t in terms]
        ax.bar(xs + (k - 0.5) * width, means, width, label=f"{name} (n={len(sub)})",
               color=["#4c72b0", "#dd8452"][k])
    ax.axhline(0, color="k", lw=0.6)
    ax.set_xticks(xs, terms)
    ax.set_ylabel("mean weighted loss")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_gradcheck(records, summary, path):
    terms = list(summary["max_relative_error"])
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    floor = 1e-16
    for k, t in enumerate(terms):
        errs = np.array([max(r["errors"][t], floor) for r in records])
        jitter = np.linspace(-0.2, 0.2, len(errs)) if len(errs) > 1 else np.zeros(1)
        ax.scatter(k + jitter, errs, s=8, color=TERM_COLORS.get(t, "k"))
    ax.axhline(summary["tolerance"], color="r", ls="--", lw=1, label="tolerance")
    ax.set_yscale("log")
    ax.set_xticks(range(len(terms)), terms)
    ax.set_ylabel("relative error")
    ax.set_title(f"gradient check, {summary['trials']} trials")
    ax.legend(fontsize=8)
    _save(fig, path)

"""Seeded synthetic datasets of rectangle / ellipse objects.

Each image gets a ground-truth label map, a noisy saliency map that agrees
with the foreground, an attention tensor that only fires on a shrunken core
of every object (the "discriminative part"), a degraded prediction standing
in for a segmentation network's output, and tags. Every image draws from its
own ``default_rng([seed, index])`` stream so output never depends on order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InvalidArgumentError
from .fileio import write_label_map, write_saliency, write_tags, write_tensor
from .grids import ImageTags, resize_mask


class SynthSpecError(InvalidArgumentError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid synth spec: " + "; ".join(self.problems))


@dataclass(frozen=True)
class SynthSpec:
    images: int = 50
    height: int = 64
    width: int = 64
    num_classes: int = 5
    simple_fraction: float = 0.6
    max_objects: int = 3
    shrinkage: float = 0.5
    saliency_noise: float = 0.05
    attn_stride: int = 1
    erosion: int = 2
    drop_every: int = 5

    def problems(self) -> list[str]:
        out = []
        ints = {"images": 0, "height": 8, "width": 8, "num_classes": 1, "max_objects": 1,
                "attn_stride": 1, "erosion": 0, "drop_every": 0}
        for name, lo in ints.items():
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < lo:
                out.append(f"{name} must be an integer >= {lo}, got {v!r}")
        for name in ("simple_fraction", "shrinkage", "saliency_noise"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
                out.append(f"{name} must be a number in [0, 1], got {v!r}")
        if not out:
            if self.shrinkage >= 1.0:
                out.append("shrinkage must be < 1 so every object keeps an activated core")
            if self.num_classes > 254:
                out.append("num_classes must be <= 254")
            if self.height % self.attn_stride or self.width % self.attn_stride:
                out.append("height and width must be divisible by attn_stride")
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        known = {f.name for f in fields(cls)}
        unknown = [f"unknown field {k!r}" for k in doc if k not in known]
        spec = cls(**{k: v for k, v in doc.items() if k in known})
        problems = unknown + spec.problems()
        if problems:
            raise SynthSpecError(problems)
        return spec

    def validate(self) -> "SynthSpec":
        problems = self.problems()
        if problems:
            raise SynthSpecError(problems)
        return self


@dataclass
class SynthImage:
    image_id: str
    gt: np.ndarray
    saliency: np.ndarray
    attention: np.ndarray
    pred: np.ndarray
    tags: ImageTags
    object_pixels: int
    activated_pixels: int
    dropped_class: int | None


def _shape_mask(H, W, kind, cy, cx, ry, rx):
    yy, xx = np.mgrid[0:H, 0:W]
    yy = yy + 0.5
    xx = xx + 0.5
    if kind == "rect":
        return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def _objects(rng, spec: SynthSpec, simple: bool):
    C = spec.num_classes
    if simple or C == 1:
        classes = [int(rng.integers(1, C + 1))] * int(rng.integers(1, min(2, spec.max_objects) + 1))
    else:
        k = int(rng.integers(2, max(2, min(spec.max_objects, C)) + 1))
        classes = [int(c) for c in rng.choice(np.arange(1, C + 1), size=k, replace=False)]
    H, W = spec.height, spec.width
    objs = []
    for c in classes:
        ry = rng.uniform(0.12, 0.25) * H
        rx = rng.uniform(0.12, 0.25) * W
        cy = rng.uniform(ry, H - ry)
        cx = rng.uniform(rx, W - rx)
        kind = "rect" if rng.uniform() < 0.5 else "ellipse"
        objs.append((c, kind, cy, cx, ry, rx))
    return objs


def make_image(spec: SynthSpec, seed: int, index: int) -> SynthImage:
    rng = np.random.default_rng([seed, index])
    H, W, C = spec.height, spec.width, spec.num_classes
    simple = rng.uniform() < spec.simple_fraction
    objs = _objects(rng, spec, simple)

    owner = np.full((H, W), -1)
    for k, (c, kind, cy, cx, ry, rx) in enumerate(objs):
        owner[_shape_mask(H, W, kind, cy, cx, ry, rx)] = k
    gt = np.zeros((H, W), dtype=np.uint8)
    core = np.zeros((C, H, W), dtype=bool)
    scale = np.sqrt(1.0 - spec.shrinkage)
    for k, (c, kind, cy, cx, ry, rx) in enumerate(objs):
        visible = owner == k
        gt[visible] = c
        core[c - 1] |= visible & _shape_mask(H, W, kind, cy, cx, ry * scale, rx * scale)
    present = sorted(set(np.unique(gt).tolist()) - {0})
    tags = ImageTags.from_classes(f"img_{index:03d}", present, C)

    fg = gt > 0
    sal = np.where(fg, rng.uniform(0.7, 1.0, (H, W)), rng.uniform(0.0, 0.3, (H, W)))
    flip = rng.uniform(size=(H, W)) < spec.saliency_noise
    sal[flip] = 1.0 - sal[flip]

    h, w = H // spec.attn_stride, W // spec.attn_stride
    F = -rng.uniform(0.1, 1.0, (C, h, w))
    yy, xx = np.mgrid[0:h, 0:w]
    for c in present:
        m = core[c - 1] if spec.attn_stride == 1 else resize_mask(core[c - 1].astype(float), h, w) > 0
        if not m.any():
            continue
        amp = rng.uniform(2.0, 5.0)
        # peak at the core centroid, >= 0.6 * amp everywhere on the core
        cy, cx = yy[m].mean(), xx[m].mean()
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        bump = np.exp(-d2 / (2.0 * max(d2[m].max(), 1.0)))
        F[c - 1][m] = amp * (0.6 + 0.4 * bump[m])
    F = F.astype(np.float32)

    pred = gt.copy()
    if spec.erosion:
        for c in present:
            region = gt == c
            kept = ndimage.binary_erosion(region, iterations=spec.erosion, border_value=1)
            pred[region & ~kept] = 0
    dropped = None
    if spec.drop_every and index % spec.drop_every == 0 and present:
        dropped = int(rng.choice(present))
        pred[gt == dropped] = 0

    return SynthImage(
        image_id=tags.image_id,
        gt=gt,
        saliency=np.rint(sal * 255.0) / 255.0,
        attention=F,
        pred=pred,
        tags=tags,
        object_pixels=int(fg.sum()),
        activated_pixels=int((F > 0).sum()),
        dropped_class=dropped,
    )


def write_dataset(out, spec: SynthSpec, seed: int) -> Path:
    """Generate a dataset tree under ``out`` and return the manifest path."""
    spec.validate()
    out = Path(out)
    for sub in ("attention", "saliency", "gt", "pred"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    records, tags = [], []
    for i in range(spec.images):
        img = make_image(spec, seed, i)
        name = img.image_id
        write_tensor(out / "attention" / f"{name}.wsst", img.attention)
        write_saliency(out / "saliency" / f"{name}.png", img.saliency)
        write_label_map(out / "gt" / f"{name}.png", img.gt)
        write_label_map(out / "pred" / f"{name}.png", img.pred)
        tags.append(img.tags)
        records.append({
            "id": name,
            "attention": f"attention/{name}.wsst",
            "saliency": f"saliency/{name}.png",
            "gt": f"gt/{name}.png",
            "pred": f"pred/{name}.png",
            "object_pixels": img.object_pixels,
            "activated_pixels": img.activated_pixels,
            "dropped_class": img.dropped_class,
        })
    write_tags(out / "tags.jsonl", tags)
    manifest = {
        "num_classes": spec.num_classes,
        "tags": "tags.jsonl",
        "seed": seed,
        "synth": asdict(spec),
        "images": records,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path

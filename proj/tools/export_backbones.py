#!/usr/bin/env python3
"""Export pretrained backbone outputs in the layout the C++ adapters read.

Features:  <out>/<category>/<split>/<defect>/<stem>.npy   float32 (H, W, D)
Masks:     <out>/<category>/<split>/<defect>/<stem>/masks.json + mask_NNN.png

Images are resized to 256x256 first, the resolution the pipeline works at.
Point the run config at the output with e.g.

    feature_backend = dino-vitb8
    feature_backend.weights = /data/exports/dino
    mask_backend = sam-hq
    mask_backend.weights = /data/exports/samhq
"""

import argparse
import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image

WORKING_SIZE = 256
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def export_key(path: Path) -> Path:
    """Last four path components without the extension, as in the C++ side."""
    parts = path.parts[-4:]
    return Path(*parts).with_suffix("")


def dataset_images(root: Path):
    for split in ("train", "validation", "test"):
        for p in sorted(root.glob(f"*/{split}/*/*.png")):
            yield p


def load_rgb(path: Path) -> np.ndarray:
    im = Image.open(path).convert("RGB").resize((WORKING_SIZE, WORKING_SIZE), Image.BILINEAR)
    return np.asarray(im, dtype=np.float32) / 255.0


def normalised_tensor(rgb: np.ndarray, device) -> torch.Tensor:
    x = torch.from_numpy(rgb).permute(2, 0, 1)
    mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
    return ((x - mean) / std).unsqueeze(0).to(device)


@torch.no_grad()
def export_dino(root: Path, out: Path, device):
    model = torch.hub.load("facebookresearch/dino:main", "dino_vitb8").to(device).eval()
    for path in dataset_images(root):
        x = normalised_tensor(load_rgb(path), device)
        tokens = model.get_intermediate_layers(x, n=1)[0][:, 1:, :]  # drop CLS
        side = WORKING_SIZE // 8
        feats = tokens.reshape(side, side, -1).cpu().numpy().astype(np.float32)
        dst = out / export_key(path).with_suffix(".npy")
        dst.parent.mkdir(parents=True, exist_ok=True)
        np.save(dst, feats)


@torch.no_grad()
def export_teacher(root: Path, out: Path, checkpoint: Path, device):
    # A TorchScript module mapping (1, 3, 256, 256) normalised images to (1, D, h, w).
    model = torch.jit.load(str(checkpoint), map_location=device).eval()
    for path in dataset_images(root):
        f = model(normalised_tensor(load_rgb(path), device))[0]
        feats = f.permute(1, 2, 0).cpu().numpy().astype(np.float32)
        dst = out / export_key(path).with_suffix(".npy")
        dst.parent.mkdir(parents=True, exist_ok=True)
        np.save(dst, feats)


@torch.no_grad()
def export_sam_hq(root: Path, out: Path, checkpoint: Path, grid: int, device):
    from segment_anything_hq import SamPredictor, sam_model_registry

    sam = sam_model_registry["vit_h"](checkpoint=str(checkpoint)).to(device)
    predictor = SamPredictor(sam)
    step = WORKING_SIZE / grid
    grid_points = [((i + 0.5) * step, (j + 0.5) * step) for j in range(grid) for i in range(grid)]
    last = WORKING_SIZE - 1
    corners = [(0, 0), (last, 0), (0, last), (last, last)]

    for path in dataset_images(root):
        rgb = (load_rgb(path) * 255).astype(np.uint8)
        predictor.set_image(rgb)
        dst = out / export_key(path)
        dst.mkdir(parents=True, exist_ok=True)
        entries = []
        for origin, points in (("corner", corners), ("grid", grid_points)):
            for x, y in points:
                masks, scores, _ = predictor.predict(
                    point_coords=np.array([[x, y]]), point_labels=np.array([1]), multimask_output=True
                )
                best = int(np.argmax(scores))
                name = f"mask_{len(entries):04d}.png"
                Image.fromarray(masks[best].astype(np.uint8) * 255).save(dst / name)
                entries.append({"file": name, "quality": float(scores[best]), "origin": origin})
        (dst / "masks.json").write_text(json.dumps(entries, indent=1))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("backbone", choices=["dino-vitb8", "efficientad-teacher", "sam-hq"])
    ap.add_argument("dataset", type=Path, help="directory holding the category folders")
    ap.add_argument("out", type=Path)
    ap.add_argument("--checkpoint", type=Path, help="teacher TorchScript file or SAM-HQ weights")
    ap.add_argument("--grid", type=int, default=32, help="query points per side for sam-hq")
    ap.add_argument("--device", default="cuda" if torch.cuda.is_available() else "cpu")
    args = ap.parse_args()

    if args.backbone != "dino-vitb8" and args.checkpoint is None:
        ap.error(f"{args.backbone} needs --checkpoint")
    if args.backbone == "dino-vitb8":
        export_dino(args.dataset, args.out, args.device)
    elif args.backbone == "efficientad-teacher":
        export_teacher(args.dataset, args.out, args.checkpoint, args.device)
    else:
        export_sam_hq(args.dataset, args.out, args.checkpoint, args.grid, args.device)


if __name__ == "__main__":
    main()

"""Generate a small copy of the synthetic thoracic benchmark and print
what is in it: splits, class pixel budgets, intensity separation.

Run:  python3 demos/make_benchmark.py [out_dir]
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from aclseg.data import generate_benchmark, load_dataset
from aclseg.metrics import CLASS_NAMES


def ascii_mask(mask, width=32):
    h, w = mask.shape
    step = max(h // width, 1)
    rows = []
    for r in range(0, h, step * 2):  # terminal cells are ~2x taller than wide
        rows.append("".join("#" if mask[r, c] else "." for c in range(0, w, step)))
    return "\n".join(rows)


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp()) / "bench"
    generate_benchmark(seed=7, n_train_per_class=6, n_val=3, n_test=3, size=(64, 64), out_dir=out, force=True)
    ds = load_dataset(out / "manifest.json")

    print(f"dataset at {out}")
    print(f"image size {ds.image_size}, train per class 6, val 3, test 3\n")

    print(f"{'class':<12s} {'mean px/img':>12s} {'fg intensity':>13s} {'bg intensity':>13s}")
    test_idx = ds.split_indices("test")
    for cid, name in CLASS_NAMES.items():
        images, masks = ds.fetch(test_idx, cid)
        fg = masks > 0.5
        px = fg.reshape(fg.shape[0], -1).sum(axis=1).mean()
        fg_mean = float(images[fg].mean())
        bg_mean = float(images[~fg].mean())
        print(f"{name:<12s} {px:12.1f} {fg_mean:13.3f} {bg_mean:13.3f}")

    images, masks = ds.fetch(test_idx[:1], 4)
    print(f"\n{CLASS_NAMES[4]} mask of one test image:")
    print(ascii_mask(masks[0, 0] > 0.5))


if __name__ == "__main__":
    main()

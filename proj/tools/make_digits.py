"""Write the handwritten-digit set as wtpgd dataset files.

The 8x8 images are upsampled bilinearly to --size x --size and scaled to
[0, 1]. A fixed permutation splits the data into data/digits_train.txt and
data/digits_test.txt.
"""

import argparse
from pathlib import Path

import numpy as np
from skimage.transform import resize
from sklearn.datasets import load_digits


def write(path: Path, x: np.ndarray, y: np.ndarray, classes: int) -> None:
    with path.open("w") as f:
        f.write(f"{len(y)} {x.shape[1]} {classes}\n")
        for row, label in zip(x, y):
            f.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data")
    parser.add_argument("--test-size", type=int, default=400)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--size", type=int, default=16)
    parser.add_argument("--classes", type=str, default="0,1,2,3,4,5,6,7,8,9",
                        help="comma-separated digits to keep, relabelled 0..C-1 in this order")
    parser.add_argument("--prefix", type=str, default="digits")
    args = parser.parse_args()

    digits = load_digits()
    keep = [int(c) for c in args.classes.split(",")]
    mask = np.isin(digits.target, keep)
    images = digits.images[mask] / 16.0
    y = np.array([keep.index(int(t)) for t in digits.target[mask]])
    if args.size != 8:
        images = np.stack([resize(im, (args.size, args.size), order=1, mode="edge", anti_aliasing=False)
                           for im in images])
    x = np.clip(images.reshape(len(images), -1), 0.0, 1.0)
    order = np.random.default_rng(args.seed).permutation(len(y))
    x, y = x[order], y[order]
    args.out.mkdir(parents=True, exist_ok=True)
    write(args.out / f"{args.prefix}_train.txt", x[args.test_size:], y[args.test_size:], len(keep))
    write(args.out / f"{args.prefix}_test.txt", x[: args.test_size], y[: args.test_size], len(keep))


if __name__ == "__main__":
    main()

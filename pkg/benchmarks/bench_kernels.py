"""Compare the compiled and pure-Python pair kernels on a synthetic stack.

Usage::

    python benchmarks/bench_kernels.py [--frames M] [--size N] [--repeat R]

Both backends must return identical integer counts; the script checks this
before printing timings.
"""
import argparse
import time

import numpy as np

from phaselab import kernels
from phaselab.biphoton import DGSource
from phaselab.camera import CameraModel, DGPairs, pairs_for_occupancy, render_frames
from phaselab.optics import lens_fold_map
from phaselab.recon import ROI, frames_csr


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--frames", type=int, default=20_000)
    p.add_argument("--size", type=int, default=64, help="sensor side in pixels")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    src = DGSource(140.2e-6, 12.6e-6, 810e-9)
    pairs = DGPairs.folded(src, lens_fold_map(60e-3, 40e-3, 120e-3))
    cam = CameraModel(width=args.size, height=args.size, eta=0.6, mu=1.0, seed=0)
    cam = CameraModel(width=args.size, height=args.size, eta=0.6,
                      mu=pairs_for_occupancy(pairs, cam, 0.05), seed=0)
    stack = render_frames(pairs, cam, args.frames, workers=4)
    roi = ROI.full(stack)
    indptr, indices, cols, rows = frames_csr(stack, roi)
    print(f"{args.frames} frames, {args.size}x{args.size} pixels, "
          f"{indices.size / args.frames:.1f} lit pixels per frame")

    results = {}
    for name in kernels.available_backends():
        k = kernels.get_backend(name)
        t_cc, cc = best_of(lambda: k.coincidence_counts(indptr, indices, roi.n_pixels), args.repeat)
        t_h, hist = best_of(lambda: k.pair_histograms(indptr, cols, rows, roi.w, roi.h, "diff"),
                            args.repeat)
        results[name] = (cc, hist)
        print(f"{name:>7}: coincidence_counts {t_cc * 1e3:8.1f} ms   "
              f"pair_histograms {t_h * 1e3:8.1f} ms")

    outs = list(results.values())
    for other in outs[1:]:
        for got, ref in zip(other, outs[0]):  # (same, shifted) counts, (same, cross) histograms
            assert all(np.array_equal(a, b) for a, b in zip(got, ref))
    print("backends agree")


if __name__ == "__main__":
    main()

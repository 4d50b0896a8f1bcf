"""Compare the Cython kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Times each kernel on desk-sized inputs, plus one conv2d forward/backward step
and one 20-band decomposition run end to end with each backend swapped in.
"""
import argparse
import json
import timeit
from contextlib import contextmanager

import numpy as np

from swotcal import _pykernels, autodiff as ad, kernels
from swotcal.scale_space import blur_kernel, decompose, default_scales
from swotcal.swath_geom import SwathField, build_swath_grid

try:
    from swotcal import _ckernels
except ImportError:
    _ckernels = None

NAMES = ("blur_columns", "pad_replicate_cm", "fold_replicate_cm")


@contextmanager
def backend(mod):
    saved = {n: getattr(kernels, n) for n in NAMES}
    for n in NAMES:
        setattr(kernels, n, getattr(mod, n))
    try:
        yield
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def cases(rng):
    x_blur = rng.standard_normal((512, 104))
    k_small, k_large = blur_kernel(8.0, 2.0), blur_kernel(160.0, 2.0)
    x_act = rng.standard_normal((8, 32, 128, 52))
    g_pad = rng.standard_normal((32, 8 * 130 * 54))
    w = rng.standard_normal((32, 32, 3, 3)) * 0.05
    b = np.zeros(32)
    grid = build_swath_grid(512, 2, 10, 60)
    field = SwathField(grid, rng.standard_normal(grid.shape))
    scales = default_scales()

    def conv_step():
        tape = ad.Tape()
        xt, wt, bt = ad.Tensor(x_act, True), ad.Tensor(w, True), ad.Tensor(b, True)
        tape.backward(ad.sum_all(ad.conv2d(xt, wt, bt, tape=tape), tape=tape))

    return {
        "blur sigma=8 km (512x104)": lambda k: k.blur_columns(x_blur, k_small),
        "blur sigma=160 km (512x104)": lambda k: k.blur_columns(x_blur, k_large),
        "pad 8x32x128x52": lambda k: k.pad_replicate_cm(x_act, 1, 1),
        "fold 8x32x128x52": lambda k: k.fold_replicate_cm(g_pad, 8, 128, 52, 1, 1),
        "conv2d fwd+bwd 32->32": lambda k: conv_step(),
        "decompose 20 bands": lambda k: decompose(field, scales),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args(argv)
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels is not None else [])
    if _ckernels is None:
        print("compiled extension not built; timing the numpy fallback only")
    rows = []
    for name, fn in cases(np.random.default_rng(0)).items():
        row = {"case": name}
        for label, mod in backends:
            with backend(mod):
                fn(mod)  # warm up
                row[label] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        rows.append(row)
        line = f"{name:30s} python {row['python'] * 1e3:9.2f} ms"
        if "cython" in row:
            line += f"   cython {row['cython'] * 1e3:9.2f} ms   speedup {row['python'] / row['cython']:6.2f}x"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

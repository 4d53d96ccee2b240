"""Compare the numba kernels with the numpy fallback.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``. Shapes follow a
Net1D stage at P=64 and a 180-token embedding scatter. Kernels are timed
side by side in one process; ``--end-to-end`` also times one training step
per record in subprocesses with ``PATCHECG_NUMBA`` set to 1 and 0.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from patchecg import kernels
from patchecg._accel import NUMBA_AVAILABLE

CASES = {
    "conv1d forward  (180x32x64, k=16)": lambda f, a: f(a["x"], a["w"], (7, 8)),
    "conv1d backward (180x32x64, k=16)": lambda f, a: f(a["x"], a["w"], (7, 8), a["g"]),
    "scatter-add rows (180 -> 15x64)": lambda f, a: f(np.zeros((15, 64)), a["idx"], a["rows"]),
}


STEP = """
import time, numpy as np
from patchecg import ModelConfig, PatchECG, synth_record, backend
from patchecg.head import focal_loss_tensor
from patchecg.tensor import sigmoid
rec = synth_record(0, {{"AF"}})
model = PatchECG(ModelConfig(encoder={encoder!r}, D=64, layers=2, heads=4, net1d={net1d!r}))
def step():
    model.zero_grad()
    focal_loss_tensor(sigmoid(model(rec.signal).logits), rec.labels).backward()
step()
times = []
for _ in range({repeat}):
    t = time.perf_counter(); step(); times.append(time.perf_counter() - t)
print(backend(), min(times) * 1e3)
"""

ENCODERS = {
    "projection": {},
    "net1d (filters [16,32], 1 block)": {"filter_list": [16, 32], "blocks_per_stage": 1},
}


def end_to_end(repeat):
    print()
    print(f"{'train step per record':36s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for label, net1d in ENCODERS.items():
        encoder = "projection" if label == "projection" else "net1d"
        code = STEP.format(encoder=encoder, net1d=net1d, repeat=repeat)
        ms = {}
        for flag in ("0", "1"):
            env = dict(os.environ, PATCHECG_NUMBA=flag)
            out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                                 text=True, check=True).stdout.split()
            ms[out[0]] = float(out[1])
        nb = ms.get("numba")
        if nb is None:
            print(f"{label:36s} {ms['numpy']:10.2f} {'n/a':>10s}")
        else:
            print(f"{label:36s} {ms['numpy']:10.2f} {nb:10.2f} {ms['numpy'] / nb:7.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0],
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--repeat", type=int, default=20, help="timed calls per kernel")
    parser.add_argument("--end-to-end", action="store_true", help="also time full training steps per backend")
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    arrays = {"x": rng.standard_normal((180, 32, 64)), "w": rng.standard_normal((32, 32, 16)),
              "g": rng.standard_normal((180, 32, 64)), "idx": rng.integers(0, 15, 180),
              "rows": rng.standard_normal((180, 64))}
    pairs = {
        "conv1d forward  (180x32x64, k=16)": (kernels.conv1d_forward_numpy, kernels.conv1d_forward_numba),
        "conv1d backward (180x32x64, k=16)": (kernels.conv1d_backward_numpy, kernels.conv1d_backward_numba),
        "scatter-add rows (180 -> 15x64)": (kernels.scatter_add_rows_numpy, kernels.scatter_add_rows_numba),
    }
    print(f"{'kernel':36s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, run in CASES.items():
        np_fn, nb_fn = pairs[name]
        t_np = min(timeit.repeat(lambda: run(np_fn, arrays), number=1, repeat=args.repeat)) * 1e3
        if NUMBA_AVAILABLE:
            run(nb_fn, arrays)  # compile outside the timing
            t_nb = min(timeit.repeat(lambda: run(nb_fn, arrays), number=1, repeat=args.repeat)) * 1e3
            print(f"{name:36s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:7.2f}x")
        else:
            print(f"{name:36s} {t_np:10.3f} {'n/a':>10s}")
    if args.end_to_end:
        end_to_end(args.repeat)


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Reference values for the Rust test suite, computed with NumPy, SciPy,
PyTorch and pystoi. Writes JSON files to crates/core/tests/fixtures/.

Signals are rebuilt on the Rust side from the same closed-form generator
(see `tests/common/mod.rs`), so only parameters and results are stored.
"""
import json
import math
import os

import numpy as np
import torch
from pystoi import stoi
from pystoi.utils import resample_oct

OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "tests", "fixtures")
MASK = (1 << 64) - 1


def lcg(seed, n):
    """Uniform values in [-0.5, 0.5) from a 64-bit LCG."""
    s = seed & MASK
    out = np.empty(n)
    for i in range(n):
        s = (s * 6364136223846793005 + 1442695040888963407) & MASK
        out[i] = (s >> 11) / float(1 << 53) - 0.5
    return out


def voiced(n, fs=16000, f0=140.0, rate=3.0):
    t = np.arange(n) / fs
    env = np.maximum(0.0, np.sin(2 * math.pi * rate * t)) ** 2
    x = sum(np.sin(2 * math.pi * h * f0 * t) / h for h in range(1, 11))
    return env * x


def dump(name, obj):
    with open(os.path.join(OUT, name), "w") as f:
        json.dump(obj, f)


def gen_resample():
    x = lcg(7, 2000)
    dump("resample.json", {"seed": 7, "len": 2000, "from": 16000, "to": 10000,
                           "output": resample_oct(x, 10000, 16000).tolist()})


def gen_stoi():
    n = 48000
    x = voiced(n)
    v = lcg(11, n)
    cases = []
    for a in [0.0, 0.05, 0.2, 0.5, 1.5]:
        y = x + a * v
        cases.append({"noise_gain": a, "stoi": float(stoi(x, y, 16000))})
    dump("stoi.json", {"len": n, "noise_seed": 11, "cases": cases})


def gen_stft():
    x = lcg(3, 1024)
    w = 0.5 - 0.5 * np.cos(2 * math.pi * np.arange(256) / 256)
    frames = 1 + (1024 - 256) // 128
    spec = np.array([np.fft.rfft(w * x[t * 128:t * 128 + 256]) for t in range(frames)]).T
    dump("stft.json", {"seed": 3, "len": 1024, "re": spec.real.ravel().tolist(),
                       "im": spec.imag.ravel().tolist()})


def gen_gru():
    torch.manual_seed(0)
    gru = torch.nn.GRU(input_size=3, hidden_size=4, batch_first=False).double()
    x = torch.randn(6, 1, 3, dtype=torch.double)
    y, _ = gru(x)
    dump("gru.json", {
        "input": 3, "hidden": 4, "steps": 6,
        "weight_ih": gru.weight_ih_l0.detach().numpy().ravel().tolist(),
        "weight_hh": gru.weight_hh_l0.detach().numpy().ravel().tolist(),
        "bias_ih": gru.bias_ih_l0.detach().numpy().ravel().tolist(),
        "bias_hh": gru.bias_hh_l0.detach().numpy().ravel().tolist(),
        # (T, input) and (T, hidden), row-major
        "x": x[:, 0, :].numpy().ravel().tolist(),
        "y": y[:, 0, :].detach().numpy().ravel().tolist(),
    })


def gen_conv():
    torch.manual_seed(1)
    cases = []
    for (cin, cout, f, t, k, s, p, op) in [(2, 3, 17, 4, 5, 2, 2, 0), (3, 2, 16, 3, 8, 2, 3, 1),
                                          (1, 4, 9, 2, 3, 1, 1, 0), (2, 2, 12, 2, 4, 3, 0, 2)]:
        x = torch.randn(1, cin, f, t, dtype=torch.double)
        w = torch.randn(cout, cin, k, 1, dtype=torch.double)
        b = torch.randn(cout, dtype=torch.double)
        y = torch.nn.functional.conv2d(x, w, b, stride=(s, 1), padding=(p, 0))
        wt = torch.randn(cout, cin, k, 1, dtype=torch.double)  # (in=cout, out=cin)
        bt = torch.randn(cin, dtype=torch.double)
        z = torch.nn.functional.conv_transpose2d(y, wt, bt, stride=(s, 1), padding=(p, 0),
                                                 output_padding=(op, 0))
        cases.append({
            "cin": cin, "cout": cout, "f": f, "t": t, "k": k, "s": s, "p": p, "op": op,
            "x": x.numpy().ravel().tolist(), "w": w.numpy().ravel().tolist(), "b": b.tolist(),
            "y": y.numpy().ravel().tolist(), "y_shape": list(y.shape),
            "wt": wt.numpy().ravel().tolist(), "bt": bt.tolist(),
            "z": z.numpy().ravel().tolist(), "z_shape": list(z.shape),
        })
    dump("conv.json", cases)


if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    gen_resample()
    gen_stoi()
    gen_stft()
    gen_gru()
    gen_conv()

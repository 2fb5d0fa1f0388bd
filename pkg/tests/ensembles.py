"""Seed-addressed cache for the expensive acceptance ensembles.

Replica r always uses the stream (seed, purpose, r), so an ensemble built
from cached chunks is bit-identical to one computed in a single call.  The
cache lives in $KPZKIT_ACCEPT_CACHE (default: .acceptance-cache in the
repository root); delete it to force recomputation.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from kpzkit.io import config_hash
from kpzkit.she import sample_sharp_wedge

CACHE = Path(os.environ.get("KPZKIT_ACCEPT_CACHE", Path(__file__).resolve().parents[1] / ".acceptance-cache"))


def she_ensemble(T, dx, times, xs, replicas, seed, chunk=500):
    """Z[replica, time, x] for sharp-wedge data, computed chunk by chunk."""
    cfg = {"kind": "she-sharp-wedge", "T": float(T), "dx": float(dx), "times": [float(t) for t in times],
           "xs": [float(x) for x in xs], "seed": int(seed), "chunk": int(chunk)}
    d = CACHE / f"she-{config_hash(cfg)}"
    d.mkdir(parents=True, exist_ok=True)
    parts = []
    for start in range(0, replicas, chunk):
        n = min(chunk, replicas - start)
        f = d / f"{start:07d}-{n}.npy"
        if f.exists():
            parts.append(np.load(f))
            continue
        Z, _ = sample_sharp_wedge(T, dx, n, seed, times=times, xs=xs, start=start)
        tmp = f.with_suffix(".tmp.npy")
        np.save(tmp, Z)
        os.replace(tmp, f)
        parts.append(Z)
    return np.concatenate(parts)

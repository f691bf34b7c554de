"""Timing comparison of the compiled kernels against the numpy fallback.

Kernel microbenchmarks run both backends in one process through get_backend;
the end-to-end fit row re-runs in subprocesses because the fitting module
binds its kernel at import time (PROBEGUIDE_FORCE_PYTHON=1 selects the
fallback). Results are wall-clock medians over --repeat runs, printed as a table.
"""

from __future__ import annotations

import argparse
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from probeguide._kernels import get_backend
from probeguide.bodymodel import BodyParams, pose_body
from probeguide.deskmodel import build_desk_model
from probeguide.guidance import SurfaceMesh


def _time(fn, repeat: int) -> float:
    best = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best.append(time.perf_counter() - t0)
    return statistics.median(best)


_FIT_SNIPPET = """
import time
import numpy as np
from probeguide.bodymodel import BodyParams, pose_body
from probeguide.deskmodel import build_desk_model
from probeguide.fitting import Observation, fit_model

model = build_desk_model("surface", "{resolution}")
rng = np.random.default_rng(0)
target = BodyParams(rng.uniform(-1, 1, model.shape_count),
                    rng.uniform(-0.08, 0.08, model.pose_dim),
                    rng.normal(0, 0.05, 3))
body = pose_body(model, target)
obs = Observation(vertices=body.vertices, joints=body.joints, frame="world")
fit_model(model, obs)  # warm caches before timing
t0 = time.perf_counter()
fit_model(model, obs)
print(time.perf_counter() - t0)
"""


def _fit_subprocess(resolution: str, force_python: bool) -> float:
    env = dict(os.environ, PROBEGUIDE_FORCE_PYTHON="1" if force_python else "0")
    out = subprocess.run([sys.executable, "-c", _FIT_SNIPPET.format(resolution=resolution)],
                         env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--resolution", choices=["small", "full"], default="full")
    ap.add_argument("--rays", type=int, default=2000)
    ap.add_argument("--batch", type=int, default=80)
    ap.add_argument("--skip-fit", action="store_true",
                    help="skip the slow end-to-end fit row")
    args = ap.parse_args(argv)

    model = build_desk_model("surface", args.resolution)
    rng = np.random.default_rng(0)
    body = pose_body(model, BodyParams(np.zeros(model.shape_count),
                                       np.zeros(model.pose_dim), np.zeros(3)))
    mesh = SurfaceMesh(body.vertices, model.faces)
    bvh = mesh.bvh

    S, V, J = args.batch, model.vertex_count, model.joint_count
    weights = model.skin_weights
    rel_rot = np.tile(np.eye(3), (S, J, 1, 1)) + rng.normal(0, 0.01, (S, J, 3, 3))
    rel_t = rng.normal(0, 0.01, (S, J, 3))
    verts_batch = np.tile(body.vertices, (S, 1, 1))

    center = body.vertices.mean(axis=0)
    dirs = rng.normal(size=(args.rays, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origins = center + 2.0 * dirs
    cast_dirs = -dirs

    rows = []
    for name in ("python", "cython"):
        try:
            be = get_backend(name)
        except RuntimeError as exc:
            print(f"skipping {name}: {exc}", file=sys.stderr)
            continue
        rows.append((f"lbs_blend {S}x{V}x{J}", name,
                     _time(lambda: be.lbs_blend(weights, rel_rot, rel_t, verts_batch),
                           args.repeat)))
        rows.append((f"ray_cast_brute {args.rays} rays x {model.faces.shape[0]} tris", name,
                     _time(lambda: be.ray_cast_brute(body.vertices, model.faces,
                                                     origins, cast_dirs), args.repeat)))
        rows.append((f"ray_cast_bvh {args.rays} rays", name,
                     _time(lambda: be.ray_cast_bvh(body.vertices, model.faces, bvh,
                                                   origins, cast_dirs), args.repeat)))
        if not args.skip_fit:
            rows.append((f"fit_model ({args.resolution} model)", name,
                         _fit_subprocess(args.resolution, force_python=(name == "python"))))

    width = max(len(r[0]) for r in rows) + 2
    print(f"{'workload':<{width}}{'backend':<10}{'median s':>12}")
    base = {}
    for label, name, secs in rows:
        base.setdefault(label, secs)
        speed = base[label] / secs if secs > 0 else float("inf")
        rel = "" if name == "python" else f"  ({speed:.1f}x vs python)"
        print(f"{label:<{width}}{name:<10}{secs:>12.4f}{rel}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

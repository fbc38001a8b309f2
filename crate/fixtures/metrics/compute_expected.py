"""Recomputes expected.json values for trajectories.json.

Standalone: plain floats, a full DTW cost matrix, no shared code with the
Rust implementation. Run `python3 compute_expected.py` to refresh.
"""
import json
import math
import os

HERE = os.path.dirname(os.path.abspath(__file__))


def length(pts):
    return sum(math.dist(pts[i], pts[i + 1]) for i in range(len(pts) - 1))


def dtw(a, b):
    inf = float("inf")
    d = [[inf] * (len(b) + 1) for _ in range(len(a) + 1)]
    d[0][0] = 0.0
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            c = math.dist(a[i - 1], b[j - 1])
            d[i][j] = c + min(d[i - 1][j], d[i][j - 1], d[i - 1][j - 1])
    return d[len(a)][len(b)]


def metrics(case):
    pts = [(p["x"], p["y"]) for p in case["poses"]]
    ref = [tuple(p) for p in case["reference_path"]]
    goal = tuple(case["goal"])
    r = case["success_radius"]
    ne = math.dist(pts[-1], goal)
    os_ = any(math.dist(p, goal) <= r for p in pts)
    sr = case["stopped"] and ne <= r
    L, P = length(ref), length(pts)
    spl = (L / max(L, P) if max(L, P) > 0 else 1.0) if sr else 0.0
    ndtw = math.exp(-dtw(pts, ref) / (len(ref) * r))
    return {"ne": ne, "os": float(os_), "sr": float(sr), "spl": spl, "ndtw": ndtw,
            "path_length": P, "reference_length": L}


cases = json.load(open(os.path.join(HERE, "trajectories.json")))
out = {c["episode_id"]: metrics(c) for c in cases}
json.dump(out, open(os.path.join(HERE, "expected.json"), "w"), indent=1)
for k, v in out.items():
    print(k, v)

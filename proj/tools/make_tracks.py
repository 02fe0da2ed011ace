#!/usr/bin/env python3
"""Regenerates the fixture tracks under data/tracks/."""
import math
import pathlib

OUT = pathlib.Path(__file__).resolve().parent.parent / "data" / "tracks"


def write(name, pts):
    OUT.mkdir(parents=True, exist_ok=True)
    with open(OUT / f"{name}.csv", "w") as f:
        f.write("x_m,y_m,w_tr_left_m,w_tr_right_m\n")
        for x, y, wl, wr in pts:
            f.write(f"{x:.6f},{y:.6f},{wl:.3f},{wr:.3f}\n")


def oval(straight, radius, half, arc_samples=16):
    pts = []
    h = straight / 2
    segs = max(2, math.ceil(straight))
    pts += [(h * 2 * i / segs, -radius) for i in range(segs // 2)]
    pts += [(h + radius * math.cos(a), radius * math.sin(a))
            for a in (-math.pi / 2 + math.pi * i / arc_samples for i in range(arc_samples))]
    pts += [(h - straight * i / segs, radius) for i in range(segs)]
    pts += [(-h + radius * math.cos(a), radius * math.sin(a))
            for a in (math.pi / 2 + math.pi * i / arc_samples for i in range(arc_samples))]
    pts += [(-h + straight * i / segs, -radius) for i in range(segs - segs // 2)]
    return [(x, y, half, half) for x, y in pts]


def polar(radius_fn, n, half):
    return [(radius_fn(t) * math.cos(t), radius_fn(t) * math.sin(t), half, half)
            for t in (2 * math.pi * i / n for i in range(n))]


def mirror(pts):
    return [(x, -y, wr, wl) for x, y, wl, wr in pts]


write("oval", oval(10.0, 4.0, 1.0))
write("peanut", polar(lambda t: 9.0 * (1.0 + 0.3 * math.cos(2 * t)), 160, 1.2))
write("stadium_cw", mirror(oval(14.0, 5.0, 1.2)))

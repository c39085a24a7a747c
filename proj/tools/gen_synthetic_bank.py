#!/usr/bin/env python3
"""Writes data/synthetic_bank.json: four extruded-profile vehicle models.

Each model is a side profile polygon (x forward, y down) extruded along z
(+z is the vehicle's left). Parts sit on the mesh surface and follow the
36-slot layout listed in include/partlift/shape_bank.hpp / src/shape_bank.cpp.
"""

import json
import math
import pathlib
import sys

# Profile vertices in normalized (u, v) = (x / l, y / h), y down.
# Order: rear-bottom, front-bottom, front-top, windshield base, roof front,
# roof rear, rear window base, rear-top.
MODELS = [
    {
        "id": "sedan",
        "template": {"w": 1.80, "h": 1.45, "l": 4.50},
        "profile": [(-0.5, 0.5), (0.5, 0.5), (0.5, 0.0), (0.15, -0.1),
                    (-0.05, -0.5), (-0.3, -0.5), (-0.42, -0.1), (-0.5, -0.05)],
    },
    {
        "id": "suv",
        "template": {"w": 1.90, "h": 1.75, "l": 4.70},
        "profile": [(-0.5, 0.5), (0.5, 0.5), (0.5, -0.05), (0.22, -0.15),
                    (0.05, -0.5), (-0.45, -0.5), (-0.48, -0.2), (-0.5, -0.15)],
    },
    {
        "id": "hatchback",
        "template": {"w": 1.70, "h": 1.50, "l": 3.90},
        "profile": [(-0.5, 0.5), (0.5, 0.5), (0.5, 0.02), (0.2, -0.1),
                    (0.0, -0.5), (-0.38, -0.5), (-0.47, -0.12), (-0.5, -0.05)],
    },
    {
        "id": "van",
        "template": {"w": 1.95, "h": 2.00, "l": 5.00},
        "profile": [(-0.5, 0.5), (0.5, 0.5), (0.5, 0.0), (0.32, -0.15),
                    (0.15, -0.5), (-0.48, -0.5), (-0.5, -0.35), (-0.5, -0.3)],
    },
]

SIDE_POINTS = [(0.40, 0.12), (0.10, 0.12), (-0.10, 0.12), (-0.40, 0.12)]
WHEELS = [(0.32, 0.28), (-0.32, 0.28)]
LR_Z = 0.3  # fraction of w for left/right points on the profile quads


def lerp(a, b, s):
    return (a[0] + (b[0] - a[0]) * s, a[1] + (b[1] - a[1]) * s)


def cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def inside(poly, p):
    signs = [cross(poly[i], poly[(i + 1) % len(poly)], p) for i in range(len(poly))]
    return all(s > 0 for s in signs) or all(s < 0 for s in signs)


def star_inside(poly, center, p):
    # p inside the fan triangulation around center
    n = len(poly)
    for i in range(n):
        tri = [center, poly[i], poly[(i + 1) % n]]
        if inside(tri, p):
            return True
    return False


def build(model):
    w, h, l = (model["template"][k] for k in ("w", "h", "l"))
    prof = model["profile"]
    n = len(prof)
    center = (0.0, 0.2)
    orient = [cross(center, prof[i], prof[(i + 1) % n]) for i in range(n)]
    assert all(o > 0 for o in orient) or all(o < 0 for o in orient), model["id"]

    def to3(uv, zf):
        return [uv[0] * l, uv[1] * h, zf * w]

    parts = []
    for u, v in WHEELS:  # front then rear, left then right
        parts.append(to3((u, v), 0.5))
        parts.append(to3((u, v), -0.5))
    for i in range(1, n):  # profile edges 1..7, left then right
        mid = lerp(prof[i], prof[(i + 1) % n], 0.5)
        parts.append(to3(mid, LR_Z))
        parts.append(to3(mid, -LR_Z))
    for i in range(n):  # profile edges 0..7 at the center line
        parts.append(to3(lerp(prof[i], prof[(i + 1) % n], 0.5), 0.0))
    mirror = lerp(prof[3], prof[2], 0.08)
    mirror = (mirror[0] - 0.02, mirror[1] + 0.06)
    side = SIDE_POINTS + [mirror]
    for zf in (0.5, -0.5):
        for p in side:
            assert star_inside(prof, center, p), (model["id"], p)
            parts.append(to3(p, zf))
    for u, v in WHEELS:
        assert star_inside(prof, center, (u, v)), (model["id"], (u, v))
    assert len(parts) == 36

    verts = [to3(p, 0.5) for p in prof] + [to3(p, -0.5) for p in prof]
    verts.append(to3(center, 0.5))
    verts.append(to3(center, -0.5))
    cl, cr = 2 * n, 2 * n + 1
    tris = []
    for i in range(n):
        j = (i + 1) % n
        tris.append((i, j, n + j))
        tris.append((i, n + j, n + i))
        tris.append((cl, i, j))
        tris.append((cr, n + j, n + i))

    faces = []
    for t in tris:
        c = [sum(verts[k][a] for k in t) / 3.0 for a in range(3)]
        best = min(range(36), key=lambda k: sum((parts[k][a] - c[a]) ** 2 for a in range(3)))
        faces.append([t[0], t[1], t[2], best + 1])

    rnd = lambda xs: [round(x, 6) + 0.0 for x in xs]
    return {
        "id": model["id"],
        "template": model["template"],
        "parts": [rnd(p) for p in parts],
        "mesh": {"vertices": [rnd(v) for v in verts], "faces": faces},
    }


def main():
    out = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else \
        pathlib.Path(__file__).resolve().parent.parent / "data" / "synthetic_bank.json"
    bank = {"n_parts": 36, "models": [build(m) for m in MODELS]}
    out.write_text(json.dumps(bank, indent=2) + "\n")


if __name__ == "__main__":
    main()

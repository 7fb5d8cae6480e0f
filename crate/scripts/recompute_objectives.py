#!/usr/bin/env python3
"""Recompute the tracking and energy objectives from an exported trace CSV.

Works only from the CSV columns (`t`, `v_ref`, `x:<state>`, `y:<edge>`) and
the weights given on the command line, so it shares no code with the
library that wrote the trace.
"""

import argparse
import csv
import json
import math
import sys


def read_columns(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    return {name: [float(r[k]) for r in body] for k, name in enumerate(header)}


def tracking(cols, wheel, radius, weight, scale):
    x = cols["x:" + wheel]
    ref = cols["v_ref"]
    return scale * weight * math.fsum((a - v / radius) ** 2 for a, v in zip(x, ref))


def energy(cols, edges, scale):
    t = cols["t"]
    total = []
    for name, weight in edges:
        y = cols["y:" + name]
        # trapezoid on the actual time column, not an assumed step
        total.extend(weight * 0.5 * (t[k + 1] - t[k]) * (y[k] + y[k + 1]) for k in range(len(t) - 1))
    return scale * math.fsum(total)


def main(argv):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("trace")
    p.add_argument("--wheel", required=True, help="state id of the wheel speed")
    p.add_argument("--wheel-radius", type=float, required=True)
    p.add_argument("--velocity-weight", type=float, required=True)
    p.add_argument("--tracking-scale", type=float, required=True)
    p.add_argument("--energy-scale", type=float, required=True)
    p.add_argument("--edge", action="append", default=[], metavar="ID=WEIGHT")
    a = p.parse_args(argv)
    edges = []
    for e in a.edge:
        name, _, w = e.rpartition("=")
        edges.append((name, float(w)))
    cols = read_columns(a.trace)
    out = {
        "j_st": tracking(cols, a.wheel, a.wheel_radius, a.velocity_weight, a.tracking_scale),
        "j_en": energy(cols, edges, a.energy_scale),
    }
    json.dump(out, sys.stdout)
    print()


if __name__ == "__main__":
    main(sys.argv[1:])

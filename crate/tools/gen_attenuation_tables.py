#!/usr/bin/env python3
"""Regenerate the shipped mass-attenuation tables.

Anchor values are total mass attenuation coefficients (with coherent
scattering) in cm^2/g at the standard tabulation energies. A monotone
log-log PCHIP through the anchors gives a dense 1 keV curve; the shipped
CSV assets are that curve sampled on a coarse grid. The dense aluminum
curve is kept as a test fixture.
"""
import json
import os
import sys

import numpy as np
from scipy.interpolate import PchipInterpolator

ANCHOR_KEV = [10, 15, 20, 30, 40, 50, 60, 80, 100, 150, 200]

# name -> (density g/cm^3, mu/rho at ANCHOR_KEV)
MATERIALS = {
    "air": (0.001205, [5.120, 1.614, 0.7779, 0.3538, 0.2485, 0.2080, 0.1875, 0.1662, 0.1541, 0.1356, 0.1233]),
    "water": (1.0, [5.329, 1.673, 0.8096, 0.3756, 0.2683, 0.2269, 0.2059, 0.1837, 0.1707, 0.1505, 0.1370]),
    "magnesium": (1.74, [21.05, 6.358, 2.763, 0.9306, 0.4881, 0.3292, 0.2570, 0.1951, 0.1686, 0.1394, 0.1245]),
    "silicon": (2.33, [33.89, 10.34, 4.464, 1.436, 0.7012, 0.4385, 0.3207, 0.2228, 0.1835, 0.1448, 0.1275]),
    "aluminum": (2.699, [26.23, 7.955, 3.441, 1.128, 0.5685, 0.3681, 0.2778, 0.2018, 0.1704, 0.1378, 0.1223]),
    "titanium": (4.54, [110.7, 35.87, 15.85, 4.972, 2.214, 1.213, 0.7661, 0.4052, 0.2721, 0.1649, 0.1314]),
    "iron": (7.874, [170.6, 57.08, 25.68, 8.176, 3.629, 1.958, 1.205, 0.5952, 0.3717, 0.1964, 0.1460]),
    "copper": (8.96, [215.9, 74.05, 33.79, 10.92, 4.862, 2.613, 1.593, 0.7630, 0.4584, 0.2217, 0.1559]),
    # fixed cement/concrete-like mixture (O, Si, Ca, Al, Na, Fe, ...)
    "cement-analog": (2.3, [26.04, 8.195, 3.606, 1.203, 0.6067, 0.3918, 0.2943, 0.2119, 0.1781, 0.1433, 0.1270]),
}

COARSE_KEV = [10, 12, 15, 17.5, 20, 25, 30, 35, 40, 45, 50, 60, 70, 80, 90, 100, 120, 150, 175, 200]
DENSE_KEV = np.arange(10.0, 200.0 + 0.5, 1.0)
VERSION = "1"


def curve(values):
    interp = PchipInterpolator(np.log(ANCHOR_KEV), np.log(values))
    return lambda e: np.exp(interp(np.log(e)))


def write_table(path, energies, values):
    with open(path, "w", newline="\n", encoding="utf-8") as f:
        f.write("energy_keV,mu_over_rho_cm2_per_g\n")
        for e, v in zip(energies, values):
            f.write(f"{e:g},{v:.6g}\n")


def main(root):
    out = os.path.join(root, "crates/core/data/materials")
    fixtures = os.path.join(root, "crates/core/tests/fixtures")
    manifest = {"version": VERSION, "materials": []}
    for name, (density, anchors) in MATERIALS.items():
        f = curve(anchors)
        write_table(os.path.join(out, f"{name}.csv"), COARSE_KEV, f(np.array(COARSE_KEV, dtype=float)))
        manifest["materials"].append({"name": name, "density_g_per_cm3": density, "table": f"{name}.csv"})
        if name == "aluminum":
            write_table(os.path.join(fixtures, "aluminum_dense.csv"), DENSE_KEV, f(DENSE_KEV))
    with open(os.path.join(out, "manifest.json"), "w", newline="\n", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else os.path.join(os.path.dirname(__file__), ".."))

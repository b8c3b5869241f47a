"""Independent oracles for the hand-derived constants frozen into the tests.

Pure standard library (fractions, math); nothing from ``vegtrav`` is
imported, so these numbers cannot inherit a bug from the code under test.
Run it and compare with the literals in ``tests/``.
"""
import math
from fractions import Fraction as F
from itertools import product


def matvec(m, v):
    return [sum(F(a) * F(b) for a, b in zip(row, v)) for row in m]


def otsu_edges(values, bins):
    """Exhaustive between-class variance over every interior bin edge."""
    lo, hi = F(min(values)), F(max(values))
    width = (hi - lo) / bins
    idx = [min(int((F(v) - lo) / width), bins - 1) for v in values]
    best = None
    for k in range(1, bins):
        c0 = [i for i in idx if i < k]
        c1 = [i for i in idx if i >= k]
        if not c0 or not c1:
            continue
        m0, m1 = F(sum(c0), len(c0)), F(sum(c1), len(c1))
        w0, w1 = F(len(c0), len(idx)), F(len(c1), len(idx))
        var = w0 * w1 * (m0 - m1) ** 2
        if best is None or var > best[0]:
            best = (var, k)
    return lo + best[1] * width


def cells_under_square(x0, y0, side, cell):
    """Cells sharing positive area with an axis-aligned square (exhaustive)."""
    hits = []
    for ix, iy in product(range(-2, 10), repeat=2):
        cx0, cy0 = ix * cell, iy * cell
        ox = min(x0 + side, cx0 + cell) - max(x0, cx0)
        oy = min(y0 + side, cy0 + cell) - max(y0, cy0)
        if ox > 0 and oy > 0:
            hits.append((ix, iy))
    return hits


def main():
    print("calibration [[.5,.5]]@(.2,.6):", [float(x) for x in matvec([["0.5", "0.5"]], ["0.2", "0.6"])])
    print("ndvi(nir=.6, red=.2):", float((F("0.6") - F("0.2")) / (F("0.6") + F("0.2"))))
    print("mpri(g=.4, r=.2):", (F("0.4") - F("0.2")) / (F("0.4") + F("0.2")))
    print("bc((2,1),(1,1)):", F(abs(2 - 1) + abs(1 - 1), (2 + 1) + (1 + 1)))
    print("ed((3,0),(0,4)):", math.hypot(3, 4))
    print("otsu 50x0.1 + 50x0.9, 256 bins:", float(otsu_edges(["0.1"] * 50 + ["0.9"] * 50, 256)))
    print("otsu {0,1}, 2 bins:", float(otsu_edges([0, 1], 2)))
    print("pinhole (0.1,0,1) fx=100 c=50:", (100 * 0.1 / 1 + 50, 100 * 0 / 1 + 50))
    print("E[d] (20,2400) at (.5,.5):", float((F(20) * F(1, 2) + F(2400) * F(1, 2)) / 1))
    tp, fp, fn, tn = 1, 1, 1, 1  # pred {a,b}, truth {b,c}, universe {a,b,c,d}
    print("confusion iou/prec/rec/acc:", F(tp, tp + fp + fn), F(tp, tp + fp), F(tp, tp + fn), F(tp + tn, 4))
    print("voxel index floor(1.26/0.5):", math.floor(1.26 / 0.5))
    print("collision 250/(250+750):", F(250, 1000))
    print("single particle 250/270:", 250 / 270)
    print("exp(-20/250):", math.exp(-0.08))
    print("10 cells 20*.25/250 each:", math.exp(-math.fsum([20 * 0.25 / 250] * 10)))
    print("1 cell 2400*.25/250:", math.exp(-2400 * 0.25 / 250))
    print("1 m^2 bush at (2,2)-(3,3) on 0.5 m cells:", cells_under_square(2, 2, 1, 0.5))


if __name__ == "__main__":
    main()

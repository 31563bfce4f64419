"""Worst-case revenue ratio of booking limits with and without grace periods."""

import argparse
import math

from fairrm.adversarial import FAMILIES, empirical_cr
from fairrm.model import make_instance
from fairrm.registry import make_factory


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replications", type=int, default=200)
    ap.add_argument("--scales", type=int, nargs="+", default=[100, 1000])
    args = ap.parse_args()

    for m in args.scales:
        b = [m // 2, m // 2]
        builders = {"bl": make_factory("bl", {"b": b}), "gp_bl": make_factory("gp_bl", {"alpha": 0.5, "b": b})}
        _, cr = empirical_cr(builders, lambda s: make_instance([[1.0], [1.0]], [2, 1], [0.5, 0.5], T=4 * int(s), m=[s]),
                             FAMILIES, [m], replications=args.replications, randomized=["gp_bl"])
        gap = cr[("bl", m)] - cr[("gp_bl", m)]
        print(f"m={m:6d}  CR bl {cr[('bl', m)]:.4f}  gp_bl {cr[('gp_bl', m)]:.4f}  "
              f"gap*m/log m {gap * m / math.log(m):.3f}")


if __name__ == "__main__":
    main()

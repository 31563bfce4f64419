"""Same-type disparity of fluid-plan admission versus grace-period policies.

Runs the audit on a three-type, two-resource scarcity instance and prints the
worst adjacent-customer disparity and verdict of each policy.
"""

import argparse

from fairrm.metrics import fairness_audit
from fairrm.model import make_instance
from fairrm.registry import make_factory
from fairrm.simulate import run_replications


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replications", type=int, default=2000)
    ap.add_argument("--alpha", type=float, default=0.1)
    args = ap.parse_args()

    inst = make_instance([[0.5, 0.5], [0.5, 1.0], [1.0, 1.0]], [3, 2, 1], [0.2, 0.3, 0.3], T=400, m=[100, 100])
    single = make_instance([[1.0], [1.0], [1.0]], [3, 2, 1], [0.1, 0.3, 0.3], T=400, m=[100])
    print(f"{'policy':12s} {'adjacent':>9s} {'depletion':>10s}  verdict")
    for name in ("fcfs", "dlp_pa", "bl", "gp_fcfs", "gp_rdlp", "gp_sbpc", "gp_bl", "gp_nesting"):
        target = single if name == "gp_nesting" else inst
        res = run_replications(make_factory(name, {"alpha": args.alpha}), target, 0, args.replications)
        rep = fairness_audit(res, args.alpha, 1 / target.T)
        print(f"{name:12s} {rep.max_freq(1):9.4f} {rep.depletion_freq:10.4f}  {rep.verdict}")


if __name__ == "__main__":
    main()

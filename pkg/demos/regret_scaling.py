"""Regret of plan-following policies and their grace-period versions as the horizon grows."""

import argparse

from fairrm.metrics import estimate_regret, hindsight_values, loglog_slope
from fairrm.model import StreamBank, make_instance, sample_arrival_matrix
from fairrm.registry import make_factory


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--replications", type=int, default=100)
    ap.add_argument("--alpha", type=float, default=0.9)
    ap.add_argument("--horizons", type=int, nargs="+", default=[1000, 4000, 16000])
    args = ap.parse_args()

    base = make_instance([[1.0]], [1.0], [0.8], T=1000, m=[400])
    names = ["dlp_pa", "gp_dlp", "rdlp_pa", "gp_rdlp"]
    curves = {n: [] for n in names}
    for T in args.horizons:
        inst = base.stretched(T)
        bank = StreamBank.range(0, args.replications)
        arrivals = sample_arrival_matrix(inst.lam, T, bank)
        hind = hindsight_values(inst, arrivals)
        for n in names:
            rep = estimate_regret(make_factory(n, {"alpha": args.alpha}), inst, args.replications, 0,
                                  arrivals=arrivals, hindsight=hind)
            curves[n].append(rep.regret)
            print(f"T={T:6d} {n:8s} regret {rep.regret:8.2f} +- {rep.stderr:.2f}", flush=True)
    for n, vals in curves.items():
        print(f"{n:8s} log-log slope {loglog_slope(args.horizons, vals):.3f}")


if __name__ == "__main__":
    main()

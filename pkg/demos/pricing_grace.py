"""Static posted prices against their grace-period version on coupled customers."""

from fairrm.grace import GraceConfig
from fairrm.model import StreamBank, sample_arrival_matrix
from fairrm.pricing import load_pricing, price_fairness_audit, pricing_loss_bound, simulate_pricing
from pathlib import Path


def main():
    pinst = load_pricing(Path(__file__).parent / "configs" / "pricing.json")
    T, R = pinst.inst.T, 2000
    cfg = GraceConfig.for_horizon(0.1, T)
    bank = StreamBank.range(0, R)
    arrivals = sample_arrival_matrix(pinst.inst.lam, T, bank)
    static = simulate_pricing(pinst, arrivals, bank)
    gp = simulate_pricing(pinst, arrivals, bank, cfg)
    loss = static.revenue - gp.revenue
    print(f"mean revenue static {static.revenue.mean():.1f}, grace {gp.revenue.mean():.1f}")
    print(f"largest per-seed loss {loss.max():.1f} (bound {pricing_loss_bound(pinst, cfg):.1f})")
    for name, res in (("static", static), ("grace", gp)):
        rep = price_fairness_audit(res, 0.1, cfg.delta)
        print(f"{name:6s} adjacent price-change frequency {rep.max_freq(1):.4f}  {rep.verdict}")


if __name__ == "__main__":
    main()

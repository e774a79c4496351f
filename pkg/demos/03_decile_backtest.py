"""Backtest value-weighted decile portfolios on trailing-average forecasts.

Signals average each firm's forecasts over the past 12 months; firms sort
into deciles (cap-weighted within decile) and the spread goes long the top
against the bottom. Turnover uses drifted-weight accounting and costs are
charged on total two-leg trading.
"""

from common import dataset
from narralpha.forecast import expanding_forecasts
from narralpha.portfolio import net_returns, perf_stats, strategy_returns, turnover_summary

ds = dataset()
run = expanding_forecasts(ds, burn_in_months=18)
series = strategy_returns(ds, run.forecasts, lb=12)

print(f"{'portfolio':>10s} {'mean%':>7s} {'sd%':>7s} {'SR':>6s} {'alpha%':>7s} {'t':>6s}")
for key in [f"d{k}" for k in range(1, 11)] + ["hl"]:
    leg = "ls" if key == "hl" else "long"
    stats = perf_stats(series[key].returns, ds.factors, model="ff6", leg=leg)
    print(f"{key:>10s} {stats.mean:7.2f} {stats.sd:7.2f} {stats.sharpe:6.2f} "
          f"{stats.alpha:7.2f} {stats.alpha_t:6.2f}")

monthly = ds.market.monthly_returns()
rf = ds.factors["rf"]
to = turnover_summary(series["d10"], series["d1"], monthly, rf)
print(f"\nmonthly turnover: long {to['long']:.1%}, short {to['short']:.1%}, "
      f"spread (mean of legs) {to['ls_mean_of_legs']:.1%}")

base = (to["series"]["long"] + to["series"]["short"]).dropna()
for bps in (35, 60):
    net = net_returns(series["hl"], base, bps / 1e4, rf)
    print(f"net H-L mean at {bps} bps per dollar traded: {net.returns.mean():.3%}/mo "
          f"(gross {series['hl'].returns.mean():.3%})")

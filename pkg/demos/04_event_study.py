"""Trace abnormal returns around report releases against matched benchmarks.

Every firm is matched monthly to a size x book-to-market x momentum cell;
abnormal performance is the compounded firm return minus the compounded
cell return. Reports sort into deciles by forecast within each release day
and the curves average value-weighted within month, equally across months.
"""

import numpy as np

from common import dataset
from narralpha.eventstudy import EventContext, event_decile_curves
from narralpha.forecast import expanding_forecasts

ds = dataset()
run = expanding_forecasts(ds, burn_in_months=18)

context = EventContext(ds, bins=3)
cells = context.panel.cells
print(f"benchmark grid: 3x3x3, {cells.groupby(level='month').size().iloc[0]} firms matched in the first month")

curves = event_decile_curves(ds, run.forecasts, horizon=252, bins=3, context=context)
hl = curves["hl"]
print(f"\nspread curve built from {hl.n_months} event months")
print(f"{'day':>5s} {'top CAR':>9s} {'bottom CAR':>11s} {'spread':>9s} {'t':>6s}")
for day in (0, 21, 63, 126, 252):
    print(f"{day:5d} {curves['d10'].car[day]:9.3%} {curves['d1'].car[day]:11.3%} "
          f"{hl.car[day]:9.3%} {hl.tstats[day]:6.2f}")

final = hl.car[-1]
print(f"\nspread at one year: {final:.2%} "
      f"(planted drift was 6%; matched benchmarks absorb a little)")
assert np.isfinite(final)

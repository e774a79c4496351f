"""Fit expanding-window ridge forecasts and audit them for lookahead.

Each out-of-sample month refits on the reports whose 12-month label window
has already closed, picks the penalty by time-blocked cross-validation, and
scores that month's reports. The audit then proves no training label window
reaches into any forecast month.
"""

from common import dataset
from narralpha.forecast import audit_no_lookahead, expanding_forecasts

ds = dataset()
print(f"dataset: {len(ds.reports)} reports, {len(ds.rejects)} rejects")

run = expanding_forecasts(ds, burn_in_months=18)
fc = run.forecasts
print(f"\nout-of-sample forecasts: {len(fc)} across {len(run.models)} monthly models")
print(f"skipped months: {len(run.skipped)}")

first_month = sorted(run.models)[0]
model = run.models[first_month]
print(f"\nfirst model (scores {first_month}): penalty {model.penalty:g}, "
      f"train cutoff {model.train_cutoff}, {run.training_counts[first_month]} training rows")

print("\nforecast distribution by year:")
by_year = fc.groupby(fc["release_date"].dt.year)["predicted_return"]
print(by_year.describe()[["count", "mean", "std"]].round(4))

violations = audit_no_lookahead(ds, run)
print(f"\nlookahead audit violations: {violations} (must be 0)")

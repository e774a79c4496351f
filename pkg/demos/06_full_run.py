"""Drive the whole pipeline from one config file, as a reproduction would.

Writes forecasts, backtest statistics (including a post-cutoff style date
window), event curves, attribution, decile profiles, and regressions into
an artifact directory stamped with the config hash.
"""

import json
from pathlib import Path

from common import workspace
from narralpha.cli import main

ws = workspace()
cfg = ws / "demo_run.toml"
outdir = Path(__file__).parent / "artifacts"
cfg.write_text(f"""\
[inputs]
reports = "reports.csv"
embeddings = "embeddings.bin"
market = "market.csv"
chars = "chars.csv"
factors = "factors.csv"
calendar = "calendar.csv"
numerics = "numerics.csv"
earnings = "earnings.csv"

[forecast]
burn_in_months = 18

[backtest]
lookbacks = [9, 12]
cost_bps = [35.0, 60.0]
factor_model = "ff6"

[eventstudy]
horizon_days = 252
bins = 3

[attribution]
partition = "file"
mode = "exact"

[[windows]]
name = "post_cutoff"
start = "2003-01"

[output]
dir = "{outdir.as_posix()}"
seed = 7
""")

rc = main(["run", "--config", str(cfg)])
assert rc == 0

stats = json.loads((outdir / "stats.json").read_text())
print(f"\nconfig hash: {stats['config_hash']}")
for window, per_lb in stats["windows"].items():
    hl = per_lb["12"]["deciles"]["hl"]
    print(f"window {window:12s}: H-L mean {hl['mean']:.2f}%/mo, SR {hl['sharpe']:.2f}, "
          f"alpha {hl['alpha']:.2f}% (t={hl['alpha_t']:.2f}) over {per_lb['12']['months']} months")

shap = json.loads((outdir / "shap.json").read_text())
best = max(zip(shap["share_of_sum"]["sr"], shap["groups"]))
print(f"top attribution group: {best[1]} with {best[0]:.0%} of the Sharpe ratio")
print(f"artifacts: {sorted(p.name for p in outdir.iterdir())}")

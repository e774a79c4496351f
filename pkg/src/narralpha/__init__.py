"""Research engine for narrative-embedding return forecasts.

Subpackages cover the full batch pipeline: file ingestion and joining
(:mod:`narralpha.ingest`), expanding-window ridge forecasting
(:mod:`narralpha.forecast`), decile portfolio backtesting
(:mod:`narralpha.portfolio`), characteristic-adjusted event studies
(:mod:`narralpha.eventstudy`), Shapley attribution over embedding blocks
(:mod:`narralpha.attribution`), shared inference kernels
(:mod:`narralpha.econometrics`), derived report measures
(:mod:`narralpha.signals`), and a synthetic-data generator with
independent oracles (:mod:`narralpha.synth`, :mod:`narralpha.oracles`).
"""

__version__ = "0.1.0"

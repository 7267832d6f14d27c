"""Foreign-currency liquidation agents: baselines, optimal-stopping learners,
top-K future-rate forecasting and adaptive decision thresholds."""

__version__ = "0.1.0"

"""Reference class forecasting, optimism-bias uplifts and Monte Carlo QRA for project cost estimates."""

__version__ = "0.1.0"

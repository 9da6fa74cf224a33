"""newsflow: extract per-article news sentiment, measure information transfer
from sentiment to stock returns, and evaluate economic significance with a
long-short backtest.

The package is organised around the pipeline stages:

- ``corpus``:     load, filter, align, deduplicate and vectorise news articles
- ``sestm``:      supervised two-topic sentiment model (screen / fit / score)
- ``market``:     price ingestion, session-aware return series, hourly binning
- ``infotheory``: symbolic transfer entropy, effective TE, bootstrap p-values,
                  Benjamini-Yekutieli FDR control
- ``backtest``:   sentiment-ranked long-short portfolios and performance stats
- ``cli``:        end-to-end orchestration with a TOML config
"""

__version__ = "0.1.0"

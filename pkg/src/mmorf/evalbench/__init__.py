"""Route reports, metrics, baselines and oracles.

Submodules are imported directly (``mmorf.evalbench.reports`` etc.) so that
the planner can depend on reports without a circular import through the
baselines, which in turn run the planner.
"""

"""Prediction-rationality evaluation toolkit.

Turns exported attention captures into explanation heatmaps, scores them
against ground-truth object masks with the relevant-mass-accuracy metric,
classifies samples into the four accuracy/rationale quadrants, and reports
prediction trustworthiness and inference reliability across methods,
corruption types, and severities.
"""

__version__ = "0.1.0"

REPORT_SCHEMA = "rationality-eval/1"

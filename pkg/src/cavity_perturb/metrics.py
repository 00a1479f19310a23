# metrics.py
from pathlib import Path

from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, write_to_textfile

REGISTRY = CollectorRegistry()

# Define metrics (exported names should be stable)
POINTS_SOLVED = Counter("scan_points_solved_total", "Membrane positions solved", registry=REGISTRY)
POINTS_FAILED = Counter("scan_points_failed_total", "Membrane positions whose solve failed", registry=REGISTRY)
REFINEMENTS = Counter("scan_refinements_total", "Positions inserted by branch-tracking bisection", registry=REGISTRY)
CROSSINGS_FOUND = Counter("scan_avoided_crossings_total", "Avoided crossings detected", registry=REGISTRY)
IN_FLIGHT = Gauge("scan_points_in_flight", "Positions currently being solved", registry=REGISTRY)
SOLVE_TIME = Histogram(
    "scan_point_solve_seconds",
    "Time spent building and solving one perturbation system",
    buckets=(1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 0.1, 0.5, 1.0),
    registry=REGISTRY,
)


def write_metrics(path: Path) -> Path:
    write_to_textfile(str(path), REGISTRY)
    return path

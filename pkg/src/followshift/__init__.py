"""followshift: measure how an event shifts the gender composition of an
account's follower inflow and outflow.

Snapshots of follower IDs are diffed into churn cohorts, cohort members'
profile images are classified with a small from-scratch CNN trained on
weakly labeled data, and before/after composition shifts are tested with a
two-proportion score test.
"""
from . import churn, cnn, imageprep, pipeline, snapshots, stats, weaklabel
from .errors import DataError, FollowshiftError, InvariantError, UsageError

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "FollowshiftError",
    "InvariantError",
    "UsageError",
    "churn",
    "cnn",
    "imageprep",
    "pipeline",
    "snapshots",
    "stats",
    "weaklabel",
]

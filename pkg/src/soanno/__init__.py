"""Annotation pipeline for subjects of anxiety in forum posts.

Subpackages group the pipeline stages: corpus ingestion, text analysis,
sentiment scoring, topic modeling, feature assembly, classifier training,
evaluation protocols, and trend/correlation analysis.
"""

__version__ = "0.1.0"

SOA_LABELS = (
    "finance",
    "restrict",
    "health",
    "guide",
    "work",
    "mental",
    "death",
    "travel",
    "future",
)

INTENSITY_LABEL = "intensity"

"""Event probabilities, extents and their summaries over replicate ensembles."""
from .events import (
    DAILY_KINDS, KINDS, EventSpec, ExtentSample, ReferenceSurface, TrendResult, average_extent,
    average_probability, counted_days, daily_extents, daily_increment, daily_probability,
    empirical_extent, empirical_yearly_extents, event_indicator, event_probability, extent,
    increment_field, reference_mean, slot_count, slot_indicators, station_reference_mean,
    trend_from_extents, yearly_extent_trend, yearly_extents,
)
from .summary import Summary, extent_csv, posterior_summary, surface_csv, write_csv

__all__ = [
    "DAILY_KINDS", "KINDS", "EventSpec", "ExtentSample", "ReferenceSurface", "Summary", "TrendResult",
    "average_extent", "average_probability", "counted_days", "daily_extents", "daily_increment",
    "daily_probability", "empirical_extent", "empirical_yearly_extents", "event_indicator",
    "event_probability", "extent", "extent_csv", "increment_field", "posterior_summary",
    "reference_mean", "slot_count", "slot_indicators", "station_reference_mean", "surface_csv",
    "trend_from_extents", "write_csv", "yearly_extent_trend", "yearly_extents",
]

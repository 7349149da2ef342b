"""Large-margin-distribution nonparallel support tensor machine."""

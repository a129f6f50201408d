"""On-disk storage of systems."""

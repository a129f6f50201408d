"""Input signals, time integration and error reports."""

"""Transfer function evaluation."""

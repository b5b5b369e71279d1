"""Console reporting for experiment runs."""

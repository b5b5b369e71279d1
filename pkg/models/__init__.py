"""Data models for manifolds, graphs, spectra, fields, posteriors and experiments."""

"""Numerical modules: geometry, graphs, spectra, schedules, random fields and posteriors."""

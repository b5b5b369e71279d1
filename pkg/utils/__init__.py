"""Utility modules for errors, seeding and persistence."""

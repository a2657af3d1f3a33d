"""Marks the repository root so tests import the top-level packages."""

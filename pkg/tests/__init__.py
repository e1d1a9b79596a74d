"""Test package for bb84sim."""

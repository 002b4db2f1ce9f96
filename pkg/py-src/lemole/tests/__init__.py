"""Test suite for LeMoLE."""

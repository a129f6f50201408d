"""Test suite for polymor."""

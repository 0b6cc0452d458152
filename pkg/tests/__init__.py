"""Tests for timebin-bell."""

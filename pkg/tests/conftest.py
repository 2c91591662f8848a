"""Keeps the tests directory on sys.path so suites can import helpers."""

"""Visuo-tactile action chunking policies in plain numpy."""

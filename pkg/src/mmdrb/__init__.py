"""Worst-case risk over kernel mean embedding ambiguity sets."""

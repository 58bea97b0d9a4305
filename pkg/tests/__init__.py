"""
Test suite for baggage operations AI agents.
"""

"""Integration tests for baggage handling system"""

"""Load tests for baggage handling system"""

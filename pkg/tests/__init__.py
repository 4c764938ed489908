"""
Test suite for steincc
"""

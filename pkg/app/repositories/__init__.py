"""
Repositories layer - Data access
"""

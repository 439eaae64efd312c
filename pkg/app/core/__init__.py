"""
Core configuration (settings, database, errors)
"""

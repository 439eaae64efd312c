"""
Services layer - Business logic
"""

"""
Conditional random fields: features, exact and approximate inference,
training objectives, optimizers and model assemblies
"""

__version__ = "1.0.0"

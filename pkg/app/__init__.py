"""
rmdgraph - rank-modulated degree graphs for spectral clustering and label propagation
"""
__version__ = "0.1.0"

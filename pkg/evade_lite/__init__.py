# evade-lite package root for 3-layer architecture
__version__ = "0.1.0"

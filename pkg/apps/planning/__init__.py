"""
Scenario-based tactical resource planning: evolution, cross-scenario
evaluation and strategic positioning of asset portfolios
"""
__version__ = '1.0.0'

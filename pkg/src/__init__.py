"""
wtransfer - Hierarchical long-range quantum state transfer simulator
"""

__version__ = "1.0.0"
__author__ = "wtransfer Team"

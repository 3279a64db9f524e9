"""
User Interface module for MiniHAC.
Provides the command-line interface.
"""

from .cli import HACCli, main

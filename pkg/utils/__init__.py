"""
Utility module for MiniHAC.
Point and linkage file formats, run logging and results directories.
"""

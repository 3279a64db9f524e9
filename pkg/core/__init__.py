"""
Core module for MiniHAC.
Contains the spatial index, linkage criteria, caches, the nearest-neighbor-chain
engine, the brute-force oracle and the dataset generators.
"""
from loguru import logger

# Library use is silent; the CLI enables this logger.
logger.disable("core")
